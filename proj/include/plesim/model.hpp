#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plesim/constants.hpp"

namespace plesim {

/// One optical line of the resonance catalog. Frequencies and times are
/// stored in SI units (Hz, s); the vacuum wavelength in nm is kept as the
/// I/O-facing identity of the line.
struct SiteResonance {
    double center_wavelength_nm = 0.0;
    double inhomogeneous_fwhm_hz = 0.0;
    /// Net peak height above background, in detected-photon counts per
    /// excitation pulse before detector efficiency, integrated over the
    /// scan protocol's counting window.
    double amplitude_cpp = 0.0;
    std::optional<double> lifetime_s;
    /// Second decay component for biexponential lines; `second_fraction`
    /// is that component's share of the total emitted photons.
    std::optional<double> second_lifetime_s;
    double second_fraction = 0.0;
    std::optional<double> homogeneous_fwhm_hz;
    bool biexp_flag = false;  // catalog "biexp" flag; informational until fitted
    bool weiss_flag = false;  // catalog "weiss" flag (previously reported line)

    double center_frequency_hz() const {
        return wavelength_nm_to_frequency_hz(center_wavelength_nm);
    }

    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
};

struct Catalog {
    std::vector<SiteResonance> resonances;  // sorted descending by wavelength
    std::string provenance;

    std::size_t size() const { return resonances.size(); }
    bool empty() const { return resonances.empty(); }

    /// Sorts descending by wavelength, validates every entry and the
    /// 1 MHz center-uniqueness rule.
    static Catalog from_rows(std::vector<SiteResonance> rows, std::string provenance);

    /// Index of the entry nearest to `wavelength_nm`, or nullopt if none
    /// lies within `tolerance_nm`.
    std::optional<std::size_t> nearest(double wavelength_nm, double tolerance_nm) const;

    void validate() const;
};

/// Laser stepping and gated-counting parameters of a pulsed scan.
struct ScanProtocol {
    double start_wavelength_nm = 1516.0;
    double stop_wavelength_nm = 1550.0;
    double step_hz = 50e6;
    double fm_broadening_hz = 60e6;  // full width of the laser FM smearing
    double pulse_duration_s = 100e-6;
    double window_start_s = 10e-6;  // counting window, measured from pulse end
    double window_end_s = 1e-3;
    long repetitions = 1000;

    double window_length_s() const { return window_end_s - window_start_s; }
    void validate() const;
};

/// Single-photon detector plus the pulse-correlated background it sees.
/// Background amplitudes are total expected counts per pulse (integrated
/// over all time after the pulse) in each exponential component.
struct DetectorModel {
    double system_detection_efficiency = 0.6627;
    double dark_count_rate_hz = 10.0;
    double background_fast_cpp = 0.05;
    double background_fast_tau_s = 200e-6;
    double background_slow_cpp = 0.05;
    double background_slow_tau_s = 800e-6;

    void validate() const;

    /// Background counts per pulse inside [t0, t1] after the pulse,
    /// including dark counts.
    double background_window_cpp(double t0_s, double t1_s) const;
};

struct FitParameter {
    std::string name;
    std::string unit;
    double value = 0.0;
    double std_error = 0.0;
};

struct FitResult {
    std::vector<FitParameter> parameters;
    double residual_sum_of_squares = 0.0;  // weighted
    double aicc = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::string convergence_reason;  // "parameter_change", "gradient" or "max_iterations"

    double value(std::string_view name) const;
    double error(std::string_view name) const;
    bool has(std::string_view name) const;
};

/// Reads the catalog CSV (`wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags`).
/// The lifetime field may be empty for survey-derived catalogs. Throws
/// ParseError with the offending row index.
Catalog load_catalog(std::istream& in, std::string provenance = "");
Catalog load_catalog_file(const std::string& path);

void save_catalog(const Catalog& catalog, std::ostream& out);
void save_catalog_file(const Catalog& catalog, const std::string& path);

}  // namespace plesim
