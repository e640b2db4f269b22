#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plesim/dynamics.hpp"
#include "plesim/fit.hpp"
#include "plesim/model.hpp"
#include "plesim/synth.hpp"

namespace plesim::analysis {

struct SurveyLine {
    fit::PeakCandidate candidate;
    FitResult fit;
    std::string status;  // "ok" or the reason the line was dropped
};

struct SurveyResult {
    Catalog catalog;  // fitted lines, lifetimes unset
    std::vector<SurveyLine> lines;
};

/// Peak detection plus per-candidate Lorentzian fits. A failed fit is
/// recorded in its SurveyLine and skipped; the pipeline itself never
/// throws on a bad peak.
SurveyResult survey_pipeline(const Spectrum& spectrum, const fit::PeakDetectOptions& options = {});

struct LifetimeResult {
    fit::DecaySelection selection;
    bool no_signal = false;
    bool background_mismatch = false;

    double lifetime_s() const;        // slowest component of the selected model
    double lifetime_error_s() const;
};

/// Bin-wise subtraction of the off-resonant trace followed by decay-model
/// selection. The fit starts at the first bin at or after 10 us.
LifetimeResult extract_lifetime(const TimeTrace& on_res, const TimeTrace& off_res);

struct HoleAnalysis {
    double hole_fwhm_hz = 0.0;
    double homogeneous_bound_hz = 0.0;  // FWHM / 2
    FitResult fit;                      // inverted-Lorentzian dip parameters
};

/// Fits plateau - depth * L(detuning) and returns the hole FWHM together
/// with the homogeneous-linewidth upper bound FWHM/2. Throws
/// AnalysisError when the dip is shallower than 3 x the plateau noise.
HoleAnalysis hole_to_homogeneous(std::span<const double> detunings_hz,
                                 std::span<const double> signal);
HoleAnalysis hole_to_homogeneous(const HoleProfile& profile);

struct MatchPair {
    double optical_hz = 0.0;
    double electrical_hz = 0.0;
    double separation_hz = 0.0;
};

struct MatchReport {
    std::vector<MatchPair> pairs;  // ascending optical frequency
    double matched_fraction = 0.0;
    double tolerance_hz = 1e9;
};

/// Greedy nearest-first one-to-one matching of optical lines against an
/// electrical line list; ties break toward lower frequency.
MatchReport match_resonances(const Catalog& optical, std::span<const double> electrical_hz,
                             double tolerance_hz = 1e9);

struct BackgroundStudyEntry {
    double offset_hz = 0.0;
    LifetimeResult result;
    bool included = false;  // excluded entries did not converge
    std::string note;
};

struct BackgroundStudy {
    std::vector<BackgroundStudyEntry> entries;
    double mean_fit_error_s = 0.0;       // mean lifetime standard error
    double lifetime_spread_s = 0.0;      // sample standard deviation of lifetimes
    double spread_to_error_ratio = 0.0;
};

/// Lifetime fits of one on-resonant trace against six off-resonant
/// references; reports the mean fitting error, the spread of the fitted
/// lifetimes and their ratio.
BackgroundStudy background_choice_study(const TimeTrace& on_res,
                                        std::span<const TimeTrace> off_res,
                                        std::span<const double> offsets_hz);

struct StudyAggregate {
    double mean_of_ratios = 0.0;
    double ratio_of_means = 0.0;  // mean spread / mean error
};
StudyAggregate aggregate_studies(std::span<const BackgroundStudy> studies);

/// (count rate - dark rate) / expected photon rate.
double detection_efficiency(double count_rate_hz, double dark_rate_hz,
                            double expected_photon_rate_hz);

/// Loads a two-column wavelength-pair CSV
/// (`on_wavelength_nm,off_wavelength_nm`) such as the bundled
/// off-resonant reference list.
std::vector<std::pair<double, double>> load_wavelength_pairs(std::istream& in);
std::vector<std::pair<double, double>> load_wavelength_pairs_file(const std::string& path);

/// Off-resonant reference wavelength for a catalog line: the explicit
/// pair whose on-wavelength lies within 2 pm of the line, else the
/// default at 2 x FWHM to the side.
double off_resonant_wavelength_nm(const SiteResonance& site,
                                  std::span<const std::pair<double, double>> pairs);

}  // namespace plesim::analysis
