#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "plesim/dynamics.hpp"
#include "plesim/model.hpp"
#include "plesim/synth.hpp"

namespace plesim::fit {

struct ParamSpec {
    std::string name;
    std::string unit;
};

/// A parametric model evaluated on a grid. `jacobian` fills a row-major
/// n_points x n_params matrix; when absent the fitter falls back to
/// central finite differences.
struct ModelFunction {
    std::vector<ParamSpec> parameters;
    std::function<void(std::span<const double> p, std::span<const double> x, std::span<double> y)>
        evaluate;
    std::function<void(std::span<const double> p, std::span<const double> x, std::span<double> jac)>
        jacobian;
};

struct FitOptions {
    int max_iterations = 200;
    double parameter_tolerance = 1e-10;  // relative step size
    double gradient_tolerance = 1e-12;   // infinity norm of J^T W r
    double lambda0_scale = 1e-3;         // damping init relative to max normal-matrix diagonal
};

/// Damped (Levenberg-Marquardt) weighted least squares. Weights are
/// 1/variance per point; pass an empty span for unweighted fits. The
/// damping factor starts at lambda0_scale x the largest normal-matrix
/// diagonal, grows x10 on rejected steps and shrinks /10 on accepted
/// ones. Standard errors come from the inverse normal-equations matrix
/// scaled by the reduced chi-square. Throws AnalysisError when the
/// normal matrix is rank deficient.
FitResult least_squares_fit(const ModelFunction& model, std::span<const double> x,
                            std::span<const double> y, std::span<const double> weights,
                            std::span<const double> initial, const FitOptions& options = {});

// Model parameters, in order:
//   lorentzian_peak:    center, fwhm, amplitude, offset
//   lorentzian_dip:     plateau, depth, center, fwhm
//   single_exponential: amplitude, tau, offset
//   biexponential:      amplitude1, tau1, amplitude2, tau2, offset
ModelFunction lorentzian_peak_model();
ModelFunction lorentzian_dip_model();
ModelFunction single_exponential_model();
ModelFunction biexponential_model();
/// Sum of `peaks` Lorentzians plus a shared offset; parameters run
/// (center_k, fwhm_k, amplitude_k) per peak, offset last.
ModelFunction multi_lorentzian_model(std::size_t peaks);

struct PeakCandidate {
    std::size_t index = 0;        // grid index of the maximum
    double center_hz = 0.0;       // grid frequency at the maximum
    double prominence_cpp = 0.0;  // topographic prominence, counts per pulse
    std::size_t left_base = 0;    // key cols bracketing the peak
    std::size_t right_base = 0;
};

struct PeakDetectOptions {
    double min_prominence_cpp = 0.15;
    /// Boxcar width (grid bins, made odd) applied before the extremum
    /// search; keeps shot noise on top of strong lines from spawning
    /// spurious local maxima.
    int smoothing_bins = 7;
    /// Candidates closer than this to a taller candidate are dropped.
    double min_separation_hz = 2e9;
};

/// Local maxima of the spectrum whose topographic prominence, in counts
/// per pulse, reaches the threshold. Sorted ascending by frequency.
std::vector<PeakCandidate> detect_peaks(const Spectrum& spectrum,
                                        const PeakDetectOptions& options = {});
std::vector<PeakCandidate> detect_peaks(const Spectrum& spectrum, double min_prominence_cpp);

/// Lorentzian-plus-offset fit around one candidate. The window is
/// center +- max(5 x width estimate, 20 steps), clipped at the midpoints
/// toward neighboring candidates. Reported parameters: center_hz,
/// fwhm_hz, amplitude (counts/pulse), offset (counts/pulse). Throws
/// AnalysisError when fewer than 5 points remain in the window.
FitResult fit_lorentzian_peak(const Spectrum& spectrum, const PeakCandidate& candidate,
                              std::span<const PeakCandidate> all_candidates = {});

enum class DecayModel { single, biexponential };

struct DecaySelection {
    DecayModel model = DecayModel::single;
    FitResult fit;         // the selected model's fit
    FitResult single_fit;  // both fits kept for reporting
    FitResult biexp_fit;
    bool biexp_usable = false;
};

/// Fits single and biexponential decays to a (background-subtracted)
/// trace and keeps the biexponential only when its corrected Akaike
/// score improves on the single fit by more than 10; ties keep the
/// single model. Variances default to max(counts, 1) when not given.
/// Throws AnalysisError when neither fit converges.
DecaySelection select_decay_model(std::span<const double> t_s, std::span<const double> counts,
                                  std::span<const double> variance = {});
DecaySelection select_decay_model(const TimeTrace& trace);

}  // namespace plesim::fit
