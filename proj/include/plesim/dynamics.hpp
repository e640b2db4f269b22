#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "plesim/model.hpp"

namespace plesim {

/// Binned post-pulse photon counts. Time origin is the end of the
/// excitation pulse; bin i covers [i*w, (i+1)*w). Counts are summed over
/// the protocol's repetitions.
struct TimeTrace {
    double bin_width_s = 10e-6;
    std::vector<double> counts;
    ScanProtocol protocol;

    std::size_t size() const { return counts.size(); }
    double bin_start_s(std::size_t i) const { return bin_width_s * static_cast<double>(i); }
    double bin_center_s(std::size_t i) const { return bin_width_s * (static_cast<double>(i) + 0.5); }
    void validate() const;
};

/// Expected decay trace of one line on top of the detector background,
/// bin-integrated analytically. The site's photon flux is normalized so
/// that its counts inside the protocol's counting window equal the
/// catalog amplitude (per pulse, before efficiency).
TimeTrace decay_trace(const SiteResonance& site, const DetectorModel& detector,
                      const ScanProtocol& protocol, double duration_s, double bin_width_s = 10e-6);

/// Background-only trace (dark counts plus the biexponential afterglow).
TimeTrace background_trace(const DetectorModel& detector, const ScanProtocol& protocol,
                           double duration_s, double bin_width_s = 10e-6);

/// Poisson draw per bin, deterministic in (seed, bin index).
TimeTrace sample_trace(const TimeTrace& expected, std::uint64_t seed);

/// Two-level rate-equation occupation at zero detuning under a constant
/// pump rate: rho(t) = rho_ss (1 - exp(-t/T)) with
/// rho_ss = R/(2R + 1/tau) and 1/T = 2R + 1/tau.
double rho_res(double t_s, double pump_rate_hz, double lifetime_s);

/// Closed-form pump+probe reference for the excited-state occupation at
/// the end of equal pump and probe pulses. The on-resonance branch is
/// the rate-equation value rho_res(2 t_p); the far-detuned branch
/// (detuning > 20 x homogeneous width) is the textbook-style expression
/// 2 rho_res(t_p) (1 - exp(-t_p/tau)/2), kept verbatim as a cross-check
/// even though it disagrees with the rate equation in the short-pulse
/// limit (see HoleEndpoints). Between the branches, the two-subset
/// rate-equation sum is returned.
double eq1_reference(double pump_duration_s, double detuning_hz, double lifetime_s,
                     double pump_rate_hz, double homogeneous_fwhm_hz);

struct HoleBurnConfig {
    double pump_duration_s = 20e-6;
    double probe_duration_s = 20e-6;
    double pump_probe_delay_s = 0.0;
    std::vector<double> detunings_hz;     // probe-minus-pump frequency grid
    double repetition_period_s = 3e-3;
    double sideband_separation_hz = 5e9;  // informational
    double pump_rate_hz = 1000.0;         // peak pump rate R0; default keeps saturation weak
    double homogeneous_fwhm_hz = 0.75e6;
    double lifetime_s = 0.764e-3;
    double detection_window_s = 1e-3;     // counting window after the probe

    void validate() const;
    /// Uniform symmetric detuning grid, +-span_hz with `points` samples.
    static std::vector<double> symmetric_grid(double span_hz, std::size_t points);
};

/// Analytic endpoint cross-checks carried with every simulated hole.
struct HoleEndpoints {
    double resonant_occupation = 0.0;  // chained rate equation, on-resonance ion, detuning 0
    double reference_resonant = 0.0;   // rho_res(2 t_p)
    double far_occupation_sum = 0.0;   // rate-equation pumped + probed subsets, far detuned
    double reference_far = 0.0;        // the verbatim far-detuned reference expression
    double far_discrepancy = 0.0;      // |far_occupation_sum - reference_far| / far_occupation_sum
};

struct HoleProfile {
    std::vector<double> detunings_hz;
    std::vector<double> signal;  // normalized so the far-detuned plateau is 1
    double plateau_raw = 0.0;    // unnormalized plateau (occupation integral, Hz)
    HoleEndpoints endpoints;
    bool repetition_warning = false;  // repetition period below twice the lifetime
};

/// Pump-probe transient hole burning over a locally flat inhomogeneous
/// ensemble: each ion at detuning d evolves through pump (rate
/// R0 L(d)), optional free decay, and probe (rate R0 L(d - detuning)),
/// with L a unit-peak Lorentzian of the homogeneous FWHM. The signal is
/// the photon count in the post-probe window, integrated over ions.
HoleProfile simulate_hole(const HoleBurnConfig& config, int threads = 1);

/// Branch intensity weight as a function of the excitation polarization
/// angle: base + modulation * cos(2 (angle - phase)).
struct BranchWeight {
    double base = 1.0;
    double modulation = 0.0;
    double phase_rad = 0.0;

    double at(double polarization_rad) const;
};

/// One magnetically inequivalent subsite: effective ground/excited
/// g-factors along the field axis and the four optical branch weights in
/// offset order (+(ge-gg), +(ge+gg), -(ge+gg), -(ge-gg)) / 2 * muB B / h.
struct ZeemanSubsite {
    double g_ground = 0.0;
    double g_excited = 0.0;
    std::array<BranchWeight, 4> weights{};
};

struct ZeemanSite {
    double center_frequency_hz = 0.0;
    std::vector<ZeemanSubsite> subsites;

    void validate() const;
};

struct ZeemanLine {
    double offset_hz = 0.0;
    double intensity = 0.0;
};

/// Zeeman pattern at the given (signed) field. Lines closer than 1 kHz
/// merge with summed intensity; output is sorted ascending by offset.
std::vector<ZeemanLine> zeeman_lines(const ZeemanSite& site, double field_t,
                                     double polarization_rad, double max_field_t = 0.060);

/// The same pattern at +B and -B, for field-reversal comparisons.
std::pair<std::vector<ZeemanLine>, std::vector<ZeemanLine>> reverse_field_check(
    const ZeemanSite& site, double field_t, double polarization_rad, double max_field_t = 0.060);

}  // namespace plesim
