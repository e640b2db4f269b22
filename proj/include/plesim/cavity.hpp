#pragma once

namespace plesim::cavity {

/// Cavity parameters that reach a target Purcell factor at the
/// weak/strong coupling boundary, where the damping rate is kappa = 4g
/// and F = 2g / gamma_bulk.
struct CavityDesign {
    double wavelength_nm = 1540.0;
    double refractive_index = 3.48;  // Si near 1550 nm
    double bulk_rate_hz = 1e3;
    double purcell_factor = 1e6;

    // Derived quantities.
    double coupling_hz = 0.0;        // g
    double damping_hz = 0.0;         // kappa = 4g
    double quality_factor = 0.0;     // f / kappa
    double mode_volume_m3 = 0.0;
    double mode_volume_rel = 0.0;    // in (lambda/n)^3 units
};

/// Mode volume 3 lambda^2 c / (2 pi n^3 F^2 gamma_bulk), in m^3.
double mode_volume_m3(double wavelength_m, double refractive_index, double purcell_factor,
                      double bulk_rate_hz);

CavityDesign design_for_purcell(double wavelength_nm, double refractive_index,
                                double purcell_factor, double bulk_rate_hz);

/// Purcell factor back-solved from a mode volume (round-trip helper).
double purcell_from_mode_volume(double wavelength_m, double refractive_index,
                                double mode_volume_m3, double bulk_rate_hz);

}  // namespace plesim::cavity
