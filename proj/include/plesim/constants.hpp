#pragma once

#include <stdexcept>

namespace plesim {

// CODATA 2018 exact values.
inline constexpr double kSpeedOfLight = 299792458.0;       // m/s
inline constexpr double kPlanck = 6.62607015e-34;          // J s
inline constexpr double kBohrMagneton = 9.2740100783e-24;  // J/T

/// Vacuum wavelength (nm) to optical frequency (Hz).
inline double wavelength_nm_to_frequency_hz(double wavelength_nm) {
    if (!(wavelength_nm > 0.0)) {
        throw std::invalid_argument("model: wavelength must be positive");
    }
    return kSpeedOfLight / (wavelength_nm * 1e-9);
}

/// Optical frequency (Hz) to vacuum wavelength (nm).
inline double frequency_hz_to_wavelength_nm(double frequency_hz) {
    if (!(frequency_hz > 0.0)) {
        throw std::invalid_argument("model: frequency must be positive");
    }
    return kSpeedOfLight / frequency_hz * 1e9;
}

}  // namespace plesim
