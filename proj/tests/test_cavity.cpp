#include <cmath>

#include "doctest.h"
#include "plesim/cavity.hpp"
#include "plesim/constants.hpp"
#include "plesim/rng.hpp"

using namespace plesim;
using namespace plesim::cavity;

TEST_CASE("target design reproduces the reference numbers") {
    const CavityDesign d = design_for_purcell(1540.0, 3.48, 1e6, 1e3);
    // Direct arithmetic: V_m = 3 lambda^2 c / (2 pi n^3 F^2 gamma_bulk).
    CHECK(d.mode_volume_m3 == doctest::Approx(8.055004717836092e-21).epsilon(1e-12));
    CHECK(d.mode_volume_rel == doctest::Approx(0.09294828232279759).epsilon(1e-12));
    CHECK(d.mode_volume_rel > 0.085);
    CHECK(d.mode_volume_rel < 0.105);
    CHECK(d.coupling_hz == doctest::Approx(5e8));
    CHECK(d.damping_hz == doctest::Approx(2e9));
    CHECK(d.quality_factor == doctest::Approx(97335.21363636362).epsilon(1e-12));
    // Q = 1e5 corresponds to kappa just below 2 GHz at this wavelength.
    const double kappa = kSpeedOfLight / (1540e-9 * 1e5);
    CHECK(kappa > 1.9e9);
    CHECK(kappa < 2.0e9);
}

TEST_CASE("doubling the Purcell factor quarters the mode volume") {
    const double v1 = mode_volume_m3(1540e-9, 3.48, 1e6, 1e3);
    const double v2 = mode_volume_m3(1540e-9, 3.48, 2e6, 1e3);
    CHECK(v1 / v2 == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("dimensional consistency of the relative volume") {
    CounterRng rng(5, 0);
    for (int i = 0; i < 200; ++i) {
        const double lambda_nm = 1200.0 + 800.0 * rng.next_double();
        const double n = 1.0 + 3.0 * rng.next_double();
        const double f = std::pow(10.0, 4.0 + 3.0 * rng.next_double());
        const double gamma = std::pow(10.0, 2.0 + 2.0 * rng.next_double());
        const CavityDesign d = design_for_purcell(lambda_nm, n, f, gamma);
        const double unit = std::pow(lambda_nm * 1e-9 / n, 3);
        CHECK(std::abs(d.mode_volume_rel * unit - d.mode_volume_m3) <=
              1e-12 * d.mode_volume_m3);
    }
}

TEST_CASE("mode volume round-trips to the Purcell factor") {
    CounterRng rng(6, 0);
    for (int i = 0; i < 200; ++i) {
        const double f = std::pow(10.0, 3.0 + 4.0 * rng.next_double());
        const double v = mode_volume_m3(1540e-9, 3.48, f, 1e3);
        const double back = purcell_from_mode_volume(1540e-9, 3.48, v, 1e3);
        CHECK(std::abs(back - f) / f < 1e-12);
    }
}

TEST_CASE("nonpositive inputs are rejected") {
    CHECK_THROWS_AS(mode_volume_m3(0.0, 3.48, 1e6, 1e3), std::invalid_argument);
    CHECK_THROWS_AS(mode_volume_m3(1540e-9, -1.0, 1e6, 1e3), std::invalid_argument);
    CHECK_THROWS_AS(mode_volume_m3(1540e-9, 3.48, 0.0, 1e3), std::invalid_argument);
    CHECK_THROWS_AS(mode_volume_m3(1540e-9, 3.48, 1e6, 0.0), std::invalid_argument);
}
