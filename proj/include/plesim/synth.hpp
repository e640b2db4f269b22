#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plesim/model.hpp"

namespace plesim {

/// Binned counts versus optical frequency on a uniform ascending grid.
struct Spectrum {
    double f0_hz = 0.0;
    double step_hz = 0.0;
    std::vector<double> counts;  // expected (real) or sampled (integral) per step
    ScanProtocol protocol;
    DetectorModel detector;
    std::optional<std::uint64_t> seed;  // set on sampled spectra
    bool sampled = false;

    std::size_t size() const { return counts.size(); }
    bool empty() const { return counts.empty(); }
    double frequency_at(std::size_t i) const { return f0_hz + step_hz * static_cast<double>(i); }

    /// Counts normalized to counts per excitation pulse before detector
    /// efficiency, i.e. counts / (repetitions * efficiency).
    double counts_per_pulse(std::size_t i) const;
    double counts_to_cpp() const;  // the conversion factor 1/(reps*eta)
};

/// Unit-peak Lorentzian of the given FWHM convolved with a rectangular
/// kernel of full width `fm_width_hz` (closed form). fm_width_hz == 0
/// gives the bare Lorentzian.
double smeared_lorentzian(double f_hz, double center_hz, double fwhm_hz, double fm_width_hz);

/// Expected survey spectrum: per-pulse background plus the sum of all
/// catalog lines, times repetitions and detection efficiency. A nonempty
/// catalog with no line inside the scan range yields an empty spectrum.
Spectrum expected_spectrum(const Catalog& catalog, const ScanProtocol& protocol,
                           const DetectorModel& detector, int threads = 1);

/// Independent Poisson draw per grid point; deterministic for a given
/// seed regardless of evaluation order or thread count.
Spectrum sample_spectrum(const Spectrum& expected, std::uint64_t seed, int threads = 1);

}  // namespace plesim
