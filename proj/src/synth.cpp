#include "plesim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "plesim/parallel.hpp"
#include "plesim/rng.hpp"

namespace plesim {

double Spectrum::counts_to_cpp() const {
    return 1.0 / (static_cast<double>(protocol.repetitions) * detector.system_detection_efficiency);
}

double Spectrum::counts_per_pulse(std::size_t i) const {
    return counts.at(i) * counts_to_cpp();
}

double smeared_lorentzian(double f_hz, double center_hz, double fwhm_hz, double fm_width_hz) {
    const double half = 0.5 * fwhm_hz;
    const double d = f_hz - center_hz;
    if (fm_width_hz <= 0.0) {
        return half * half / (d * d + half * half);
    }
    // Average of the unit-peak Lorentzian over [f - w/2, f + w/2]:
    // (gamma/2w) * [atan((d + w/2)/(gamma/2)) - atan((d - w/2)/(gamma/2))].
    const double w = fm_width_hz;
    return half / w * (std::atan((d + 0.5 * w) / half) - std::atan((d - 0.5 * w) / half));
}

Spectrum expected_spectrum(const Catalog& catalog, const ScanProtocol& protocol,
                           const DetectorModel& detector, int threads) {
    protocol.validate();
    detector.validate();
    catalog.validate();

    Spectrum spectrum;
    spectrum.protocol = protocol;
    spectrum.detector = detector;

    const double f_min = wavelength_nm_to_frequency_hz(protocol.stop_wavelength_nm);
    const double f_max = wavelength_nm_to_frequency_hz(protocol.start_wavelength_nm);
    const auto n = static_cast<std::size_t>(std::floor((f_max - f_min) / protocol.step_hz)) + 1;
    spectrum.f0_hz = f_min;
    spectrum.step_hz = protocol.step_hz;

    if (!catalog.empty()) {
        const bool overlap = std::any_of(
            catalog.resonances.begin(), catalog.resonances.end(), [&](const SiteResonance& r) {
                const double f = r.center_frequency_hz();
                return f >= f_min && f <= f_max;
            });
        if (!overlap) {
            return spectrum;  // empty, by contract
        }
    }

    const double background_cpp =
        detector.background_window_cpp(protocol.window_start_s, protocol.window_end_s);
    const double scale =
        static_cast<double>(protocol.repetitions) * detector.system_detection_efficiency;

    spectrum.counts.assign(n, 0.0);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double f = spectrum.frequency_at(i);
            double cpp = background_cpp;
            for (const auto& r : catalog.resonances) {
                cpp += r.amplitude_cpp * smeared_lorentzian(f, r.center_frequency_hz(),
                                                            r.inhomogeneous_fwhm_hz,
                                                            protocol.fm_broadening_hz);
            }
            spectrum.counts[i] = cpp * scale;
        }
    });
    return spectrum;
}

Spectrum sample_spectrum(const Spectrum& expected, std::uint64_t seed, int threads) {
    for (double c : expected.counts) {
        if (!std::isfinite(c) || c < 0.0) {
            throw std::invalid_argument("synth: expected counts must be finite and nonnegative");
        }
    }
    Spectrum sampled = expected;
    sampled.seed = seed;
    sampled.sampled = true;
    parallel_for(expected.counts.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            CounterRng rng(seed, i);
            sampled.counts[i] = static_cast<double>(poisson_draw(rng, expected.counts[i]));
        }
    });
    return sampled;
}

}  // namespace plesim
