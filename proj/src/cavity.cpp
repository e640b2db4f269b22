#include "plesim/cavity.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "plesim/constants.hpp"

namespace plesim::cavity {

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0.0)) {
        throw std::invalid_argument(std::string("cavity: ") + what + " must be positive");
    }
}

}  // namespace

double mode_volume_m3(double wavelength_m, double refractive_index, double purcell_factor,
                      double bulk_rate_hz) {
    require_positive(wavelength_m, "wavelength");
    require_positive(refractive_index, "refractive index");
    require_positive(purcell_factor, "Purcell factor");
    require_positive(bulk_rate_hz, "bulk emission rate");
    const double n3 = refractive_index * refractive_index * refractive_index;
    return 3.0 * wavelength_m * wavelength_m * kSpeedOfLight /
           (2.0 * std::numbers::pi * n3 * purcell_factor * purcell_factor * bulk_rate_hz);
}

double purcell_from_mode_volume(double wavelength_m, double refractive_index,
                                double mode_volume_m3_in, double bulk_rate_hz) {
    require_positive(mode_volume_m3_in, "mode volume");
    const double n3 = refractive_index * refractive_index * refractive_index;
    return std::sqrt(3.0 * wavelength_m * wavelength_m * kSpeedOfLight /
                     (2.0 * std::numbers::pi * n3 * mode_volume_m3_in * bulk_rate_hz));
}

CavityDesign design_for_purcell(double wavelength_nm, double refractive_index,
                                double purcell_factor, double bulk_rate_hz) {
    CavityDesign d;
    d.wavelength_nm = wavelength_nm;
    d.refractive_index = refractive_index;
    d.purcell_factor = purcell_factor;
    d.bulk_rate_hz = bulk_rate_hz;

    const double wavelength_m = wavelength_nm * 1e-9;
    d.coupling_hz = 0.5 * purcell_factor * bulk_rate_hz;
    d.damping_hz = 4.0 * d.coupling_hz;
    d.quality_factor = kSpeedOfLight / (wavelength_m * d.damping_hz);
    d.mode_volume_m3 = mode_volume_m3(wavelength_m, refractive_index, purcell_factor, bulk_rate_hz);
    const double unit = std::pow(wavelength_m / refractive_index, 3);
    d.mode_volume_rel = d.mode_volume_m3 / unit;
    return d;
}

}  // namespace plesim::cavity
