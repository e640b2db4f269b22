#include "plesim/reproduce.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <sstream>

#include "plesim/analysis.hpp"
#include "plesim/cavity.hpp"
#include "plesim/constants.hpp"
#include "plesim/dynamics.hpp"
#include "plesim/fit.hpp"
#include "plesim/model.hpp"
#include "plesim/rng.hpp"
#include "plesim/synth.hpp"

namespace plesim::reproduce {

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool condition, const std::string& label) {
        if (!condition) {
            ok = false;
            detail << "[failed: " << label << "] ";
        }
    }
};

std::string finish(Check& c, const std::string& summary) {
    std::string d = c.detail.str();
    return d.empty() ? summary : d + summary;
}

double rel_err(double value, double truth) {
    return std::abs(value - truth) / std::abs(truth);
}

CriterionResult survey_round_trip(const Catalog& table, const Options& options) {
    CriterionResult cr{1, "survey round-trip (70 peaks, centers, widths, runtime)", false, ""};
    Check check;
    const auto t_start = std::chrono::steady_clock::now();

    const ScanProtocol protocol;   // defaults are the survey protocol
    const DetectorModel detector;  // defaults include the 0.6627 efficiency
    const Spectrum expected = expected_spectrum(table, protocol, detector, options.threads);
    const Spectrum sampled = sample_spectrum(expected, options.seed, options.threads);
    const auto survey = analysis::survey_pipeline(sampled);

    check.expect(survey.catalog.size() == 70,
                 "found " + std::to_string(survey.catalog.size()) + " peaks, expected 70");

    double worst_center_hz = 0.0;
    double worst_fwhm_rel = 0.0;
    for (const auto& truth : table.resonances) {
        const double f_true = truth.center_frequency_hz();
        const SiteResonance* best = nullptr;
        double best_d = 1e18;
        for (const auto& fitted : survey.catalog.resonances) {
            const double d = std::abs(fitted.center_frequency_hz() - f_true);
            if (d < best_d) {
                best_d = d;
                best = &fitted;
            }
        }
        if (best == nullptr) {
            check.expect(false, "no fitted line near " + std::to_string(truth.center_wavelength_nm));
            continue;
        }
        const double fwhm_rel = rel_err(best->inhomogeneous_fwhm_hz, truth.inhomogeneous_fwhm_hz);
        worst_center_hz = std::max(worst_center_hz, best_d);
        worst_fwhm_rel = std::max(worst_fwhm_rel, fwhm_rel);

        // Center tolerance: 100 MHz down to amplitude 0.25; weaker lines
        // get a tenth of their own width. Width tolerance: 10% at
        // amplitude >= 1, else 20%.
        const double center_tol =
            truth.amplitude_cpp >= 0.25 ? 100e6 : 0.1 * truth.inhomogeneous_fwhm_hz;
        const double fwhm_tol = truth.amplitude_cpp >= 1.0 ? 0.10 : 0.20;
        const std::string tag = std::to_string(truth.center_wavelength_nm);
        check.expect(best_d <= center_tol, "center error at " + tag);
        check.expect(fwhm_rel <= fwhm_tol, "fwhm error at " + tag);
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    check.expect(elapsed < 300.0, "runtime above 5 minutes");

    std::ostringstream summary;
    summary << survey.catalog.size() << " peaks, worst center err "
            << worst_center_hz / 1e6 << " MHz, worst fwhm err " << worst_fwhm_rel * 100.0
            << " %, " << elapsed << " s";
    cr.passed = check.ok;
    cr.detail = finish(check, summary.str());
    return cr;
}

CriterionResult lifetime_round_trip(const Catalog& table, const Options& options) {
    CriterionResult cr{2, "lifetime round-trip (noiseless 2%, noisy 3 sigma, 20 seeds)", false, ""};
    Check check;

    const DetectorModel detector;
    ScanProtocol protocol;
    const double duration = 5e-3;

    const std::array<double, 2> wavelengths{1527.565, 1538.685};
    std::ostringstream summary;
    for (double wl : wavelengths) {
        const auto idx = table.nearest(wl, 1e-3);
        check.expect(idx.has_value(), "catalog line " + std::to_string(wl));
        if (!idx) {
            continue;
        }
        const SiteResonance& site = table.resonances[*idx];
        const double tau_true = *site.lifetime_s;

        const TimeTrace on = decay_trace(site, detector, protocol, duration);
        const TimeTrace off = background_trace(detector, protocol, duration);

        const auto noiseless = analysis::extract_lifetime(on, off);
        const double tau_hat = noiseless.lifetime_s();
        check.expect(rel_err(tau_hat, tau_true) <= 0.02,
                     "noiseless lifetime at " + std::to_string(wl));
        summary << wl << " nm: noiseless tau " << tau_hat * 1e3 << " ms";

        int within = 0;
        for (int s = 0; s < 20; ++s) {
            const std::uint64_t seed = options.seed + 1000 + 2 * static_cast<std::uint64_t>(s);
            const TimeTrace on_noisy = sample_trace(on, seed);
            const TimeTrace off_noisy = sample_trace(off, seed + 1);
            const auto result = analysis::extract_lifetime(on_noisy, off_noisy);
            const double err = std::abs(result.lifetime_s() - tau_true);
            if (err <= 3.0 * result.lifetime_error_s()) {
                ++within;
            }
        }
        check.expect(within == 20, "noisy 3-sigma coverage at " + std::to_string(wl));
        summary << ", noisy within 3 sigma " << within << "/20; ";
    }
    cr.passed = check.ok;
    cr.detail = finish(check, summary.str());
    return cr;
}

HoleBurnConfig hole_config(double gamma_d_hz, double lifetime_s, double delay_s) {
    HoleBurnConfig cfg;
    cfg.homogeneous_fwhm_hz = gamma_d_hz;
    cfg.lifetime_s = lifetime_s;
    cfg.pump_probe_delay_s = delay_s;
    cfg.detunings_hz = HoleBurnConfig::symmetric_grid(15.0 * gamma_d_hz, 161);
    return cfg;
}

CriterionResult hole_round_trip(const Options& options) {
    CriterionResult cr{3, "hole-burning round-trip (1.5 MHz, 2.8 MHz, 90 us delay)", false, ""};
    Check check;
    std::ostringstream summary;

    const auto analyze = [&](double gamma_d_hz, double lifetime_s, double delay_s) {
        const HoleBurnConfig cfg = hole_config(gamma_d_hz, lifetime_s, delay_s);
        const HoleProfile profile = simulate_hole(cfg, options.threads);
        return analysis::hole_to_homogeneous(profile);
    };

    const auto narrow = analyze(0.75e6, 0.764e-3, 0.0);
    check.expect(rel_err(narrow.hole_fwhm_hz, 1.5e6) <= 0.05, "hole FWHM at 0.75 MHz input");
    check.expect(rel_err(narrow.homogeneous_bound_hz, 0.75e6) <= 0.05, "bound at 0.75 MHz input");
    summary << "fwhm " << narrow.hole_fwhm_hz / 1e6 << " MHz, bound "
            << narrow.homogeneous_bound_hz / 1e6 << " MHz";

    const auto wide = analyze(1.4e6, 0.682e-3, 0.0);
    check.expect(rel_err(wide.hole_fwhm_hz, 2.8e6) <= 0.05, "hole FWHM at 1.4 MHz input");
    summary << "; fwhm " << wide.hole_fwhm_hz / 1e6 << " MHz";

    const auto delayed = analyze(0.75e6, 0.764e-3, 90e-6);
    const double change = rel_err(delayed.hole_fwhm_hz, narrow.hole_fwhm_hz);
    check.expect(change < 0.05, "90 us delay changed the width");
    summary << "; delay change " << change * 100.0 << " %";

    cr.passed = check.ok;
    cr.detail = finish(check, summary.str());
    return cr;
}

CriterionResult eq1_endpoints(const Options& options) {
    CriterionResult cr{4, "rate-equation endpoint checks (resonant 1%, plateau asserted)", false, ""};
    Check check;

    const HoleBurnConfig cfg = hole_config(0.75e6, 0.764e-3, 0.0);
    const HoleProfile profile = simulate_hole(cfg, options.threads);

    const double r0tp = cfg.pump_rate_hz * cfg.pump_duration_s;
    check.expect(r0tp <= 0.1, "operating point should satisfy R0 t_p <= 0.1");
    check.expect(rel_err(profile.endpoints.resonant_occupation,
                         profile.endpoints.reference_resonant) <= 0.01,
                 "resonant occupation vs rho_res(2 t_p)");

    // The normalized plateau is asserted; the far-detuned closed-form
    // reference is only reported (it disagrees with the rate equation in
    // the short-pulse limit).
    const double edge = std::max(std::abs(profile.signal.front() - 1.0),
                                 std::abs(profile.signal.back() - 1.0));
    check.expect(edge <= 0.01, "normalized plateau at the grid edges");

    std::ostringstream summary;
    summary << "R0*t_p " << r0tp << ", resonant rel err "
            << rel_err(profile.endpoints.resonant_occupation,
                       profile.endpoints.reference_resonant)
            << ", plateau edge offset " << edge << ", far-reference discrepancy "
            << profile.endpoints.far_discrepancy * 100.0 << " % (reported, not asserted)";
    cr.passed = check.ok;
    cr.detail = finish(check, summary.str());
    return cr;
}

CriterionResult zeeman_checks(const Options&) {
    CriterionResult cr{5, "Zeeman splitting (4 lines, 6 lines, field reversal)", false, ""};
    Check check;

    ZeemanSite single;
    single.center_frequency_hz = wavelength_nm_to_frequency_hz(1534.194);
    single.subsites.push_back(ZeemanSubsite{0.8, 1.9, {}});
    for (auto& w : single.subsites[0].weights) {
        w = BranchWeight{1.0, 0.0, 0.0};
    }
    const auto four = zeeman_lines(single, 0.050, 0.0);
    check.expect(four.size() == 4, "one subsite should give 4 lines");
    if (four.size() == 4) {
        check.expect(four[0].offset_hz == -four[3].offset_hz &&
                         four[1].offset_hz == -four[2].offset_hz,
                     "4-line pattern should be symmetric about 0");
    }

    ZeemanSite six;
    six.center_frequency_hz = wavelength_nm_to_frequency_hz(1534.194);
    for (double ge : {1.2, 1.2, 1.9, 1.9, 2.6, 2.6}) {
        ZeemanSubsite s{0.0, ge, {}};
        for (auto& w : s.weights) {
            w = BranchWeight{1.0, 0.0, 0.0};
        }
        six.subsites.push_back(s);
    }
    const auto six_lines = zeeman_lines(six, 0.050, 0.0);
    check.expect(six_lines.size() == 6, "six-subsite fixture should give 6 resolved lines");

    // Asymmetric arms that swap under field reversal.
    ZeemanSite arms;
    arms.center_frequency_hz = wavelength_nm_to_frequency_hz(1523.126);
    ZeemanSubsite s{0.0, 2.0, {}};
    s.weights[0] = BranchWeight{0.5, 0.5, 0.0};  // + arm
    s.weights[1] = BranchWeight{0.5, 0.5, 0.0};
    s.weights[2] = BranchWeight{0.5, -0.5, 0.0};  // - arm, opposite modulation
    s.weights[3] = BranchWeight{0.5, -0.5, 0.0};
    arms.subsites.push_back(s);
    const auto [plus, minus] = reverse_field_check(arms, 0.050, 0.0);
    check.expect(plus.size() == 2 && minus.size() == 2, "two-arm fixture should give 2 lines");
    if (plus.size() == 2 && minus.size() == 2) {
        check.expect(plus[0].offset_hz == minus[0].offset_hz &&
                         plus[1].offset_hz == minus[1].offset_hz,
                     "positions must be invariant under reversal");
        check.expect(plus[0].intensity == minus[1].intensity &&
                         plus[1].intensity == minus[0].intensity,
                     "arm intensities must swap under reversal");
        check.expect(plus[0].intensity != plus[1].intensity,
                     "fixture arms should be asymmetric");
    }

    cr.passed = check.ok;
    cr.detail = finish(check, "4/6-line patterns and reversal swap verified exactly");
    return cr;
}

CriterionResult purcell_checks(const Options&) {
    CriterionResult cr{6, "cavity design (mode volume 0.1 (lambda/n)^3, kappa at Q=1e5)", false, ""};
    Check check;

    const auto design = cavity::design_for_purcell(1540.0, 3.48, 1e6, 1e3);
    check.expect(design.mode_volume_rel >= 0.085 && design.mode_volume_rel <= 0.105,
                 "relative mode volume");
    const double kappa_at_q1e5 = kSpeedOfLight / (1540e-9 * 1e5);
    check.expect(kappa_at_q1e5 >= 1.9e9 && kappa_at_q1e5 <= 2.0e9, "kappa at Q = 1e5");

    std::ostringstream summary;
    summary << "V_m " << design.mode_volume_rel << " (lambda/n)^3, kappa(Q=1e5) "
            << kappa_at_q1e5 / 1e9 << " GHz, Q(F=1e6) " << design.quality_factor;
    cr.passed = check.ok;
    cr.detail = finish(check, summary.str());
    return cr;
}

CriterionResult detector_checks(const Options&) {
    CriterionResult cr{7, "detector efficiency formula (66.27% exact, zero at CR=DCR)", false, ""};
    Check check;
    const double n_photons = 1e6;
    const double dark = 250.0;
    const double eta = analysis::detection_efficiency(dark + 0.6627 * n_photons, dark, n_photons);
    check.expect(eta == 0.6627, "efficiency fixture should give 66.27% exactly");
    check.expect(analysis::detection_efficiency(dark, dark, n_photons) == 0.0,
                 "CR = DCR should give zero");
    cr.passed = check.ok;
    cr.detail = finish(check, "(CR-DCR)/N reproduced");
    return cr;
}

CriterionResult property_suite(const Options& options) {
    CriterionResult cr{8, "property suite (fitter, Jacobians, Poisson mean, prominence, matching, conversion)", false, ""};
    Check check;

    // Fitter exact recovery from perturbed starts.
    {
        const auto model = fit::lorentzian_peak_model();
        const std::array<double, 4> truth{1.5, 2.0, 8.0, 1.0};
        std::vector<double> x(101), y(101);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = -10.0 + 0.2 * static_cast<double>(i);
        }
        model.evaluate(truth, x, y);
        CounterRng rng(options.seed, 0xF17);
        bool all_ok = true;
        for (int rep = 0; rep < 10; ++rep) {
            std::array<double, 4> start{};
            for (std::size_t j = 0; j < 4; ++j) {
                start[j] = truth[j] * (1.0 + 0.6 * (rng.next_double() - 0.5));
            }
            const FitResult fr = fit::least_squares_fit(model, x, y, {}, start);
            for (std::size_t j = 0; j < 4; ++j) {
                all_ok = all_ok && rel_err(fr.parameters[j].value, truth[j]) < 1e-6;
            }
        }
        check.expect(all_ok, "fitter exact recovery to 1e-6");
    }

    // Analytic Jacobians against central finite differences.
    {
        bool all_ok = true;
        const auto check_jacobian = [&](const fit::ModelFunction& model,
                                        std::span<const double> p, std::span<const double> x) {
            const std::size_t n = x.size();
            const std::size_t k = p.size();
            std::vector<double> analytic(n * k);
            model.jacobian(p, x, analytic);
            std::vector<double> pw(p.begin(), p.end());
            std::vector<double> hi(n), lo(n);
            for (std::size_t j = 0; j < k; ++j) {
                const double h = 1e-6 * std::max(std::abs(pw[j]), 1e-3);
                const double saved = pw[j];
                pw[j] = saved + h;
                model.evaluate(pw, x, hi);
                pw[j] = saved - h;
                model.evaluate(pw, x, lo);
                pw[j] = saved;
                for (std::size_t i = 0; i < n; ++i) {
                    const double fd = (hi[i] - lo[i]) / (2.0 * h);
                    const double scale = std::max({std::abs(fd), std::abs(analytic[i * k + j]), 1e-9});
                    all_ok = all_ok && std::abs(fd - analytic[i * k + j]) / scale < 1e-6;
                }
            }
        };
        std::vector<double> xg(41);
        for (std::size_t i = 0; i < xg.size(); ++i) {
            xg[i] = -4.0 + 0.2 * static_cast<double>(i);
        }
        std::vector<double> xt(41);
        for (std::size_t i = 0; i < xt.size(); ++i) {
            xt[i] = 0.05 * static_cast<double>(i + 1);
        }
        check_jacobian(fit::lorentzian_peak_model(), std::array<double, 4>{0.3, 1.7, 5.0, 0.4}, xg);
        check_jacobian(fit::lorentzian_dip_model(), std::array<double, 4>{1.0, 0.4, -0.2, 1.1}, xg);
        check_jacobian(fit::single_exponential_model(), std::array<double, 3>{4.0, 0.8, 0.1}, xt);
        check_jacobian(fit::biexponential_model(), std::array<double, 5>{3.0, 0.2, 2.0, 1.1, 0.05},
                       xt);
        check.expect(all_ok, "Jacobian vs finite differences to 1e-6");
    }

    // Poisson sampling preserves the mean at 5 sigma over 1e4 replicates.
    {
        Spectrum expected;
        expected.f0_hz = 1e14;
        expected.step_hz = 50e6;
        expected.counts = {0.0, 7.3, 1234.5};
        const int replicates = 10000;
        std::array<double, 3> sums{};
        for (int r = 0; r < replicates; ++r) {
            const Spectrum s =
                sample_spectrum(expected, options.seed + 77000 + static_cast<std::uint64_t>(r));
            for (std::size_t i = 0; i < 3; ++i) {
                sums[i] += s.counts[i];
            }
        }
        bool all_ok = true;
        for (std::size_t i = 0; i < 3; ++i) {
            const double mean = sums[i] / replicates;
            const double tol = 5.0 * std::sqrt(expected.counts[i] / replicates);
            all_ok = all_ok && std::abs(mean - expected.counts[i]) <= std::max(tol, 1e-12);
        }
        check.expect(all_ok, "Poisson mean preservation at 5 sigma");
    }

    // Prominence scale equivariance.
    {
        ScanProtocol protocol;
        protocol.start_wavelength_nm = 1539.0;
        protocol.stop_wavelength_nm = 1541.0;
        DetectorModel detector;
        std::vector<SiteResonance> rows;
        SiteResonance a;
        a.center_wavelength_nm = 1540.2;
        a.inhomogeneous_fwhm_hz = 2e9;
        a.amplitude_cpp = 0.8;
        rows.push_back(a);
        a.center_wavelength_nm = 1539.7;
        a.amplitude_cpp = 0.3;
        rows.push_back(a);
        const Catalog cat = Catalog::from_rows(rows, "fixture");
        Spectrum spec = expected_spectrum(cat, protocol, detector);
        const auto base = fit::detect_peaks(spec, 0.15);

        const double k = 3.7;
        Spectrum scaled = spec;
        for (auto& c : scaled.counts) {
            c *= k;
        }
        const auto scaled_peaks = fit::detect_peaks(scaled, 0.15 * k);
        bool all_ok = base.size() == 2 && scaled_peaks.size() == base.size();
        if (all_ok) {
            for (std::size_t i = 0; i < base.size(); ++i) {
                all_ok = all_ok && scaled_peaks[i].index == base[i].index &&
                         rel_err(scaled_peaks[i].prominence_cpp, k * base[i].prominence_cpp) < 1e-9;
            }
        }
        check.expect(all_ok, "prominence scale equivariance");
    }

    // Matching fraction monotone in tolerance.
    {
        bool all_ok = true;
        for (int inst = 0; inst < 20; ++inst) {
            CounterRng rng(options.seed, 0xA7C0 + static_cast<std::uint64_t>(inst));
            std::vector<SiteResonance> rows;
            for (int i = 0; i < 12; ++i) {
                SiteResonance r;
                r.center_wavelength_nm = 1520.0 + 20.0 * rng.next_double();
                r.inhomogeneous_fwhm_hz = 1e9;
                r.amplitude_cpp = 1.0;
                rows.push_back(r);
            }
            Catalog cat;
            try {
                cat = Catalog::from_rows(rows, "fixture");
            } catch (const std::invalid_argument&) {
                continue;  // rare near-duplicate draw
            }
            std::vector<double> electrical;
            for (int i = 0; i < 15; ++i) {
                electrical.push_back(
                    wavelength_nm_to_frequency_hz(1520.0 + 20.0 * rng.next_double()));
            }
            double last = -1.0;
            for (double tol_ghz : {0.2, 0.5, 1.0, 2.0, 5.0, 20.0}) {
                const auto report = analysis::match_resonances(cat, electrical, tol_ghz * 1e9);
                all_ok = all_ok && report.matched_fraction >= last;
                last = report.matched_fraction;
            }
        }
        check.expect(all_ok, "matching fraction monotone in tolerance");
    }

    // Wavelength <-> frequency involution.
    {
        bool all_ok = true;
        CounterRng rng(options.seed, 0xC04F);
        for (int i = 0; i < 1000; ++i) {
            const double wl = 1000.0 + 1000.0 * rng.next_double();
            const double back = frequency_hz_to_wavelength_nm(wavelength_nm_to_frequency_hz(wl));
            all_ok = all_ok && std::abs(wl - back) / wl < 1e-12;
        }
        check.expect(all_ok, "conversion involution to 1e-12");
    }

    cr.passed = check.ok;
    cr.detail = finish(check, "all property groups evaluated");
    return cr;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const Options& options) {
    const Catalog table = load_catalog_file(options.data_dir + "/table1.csv");

    std::vector<CriterionResult> results;
    results.push_back(survey_round_trip(table, options));
    results.push_back(lifetime_round_trip(table, options));
    results.push_back(hole_round_trip(options));
    results.push_back(eq1_endpoints(options));
    results.push_back(zeeman_checks(options));
    results.push_back(purcell_checks(options));
    results.push_back(detector_checks(options));
    results.push_back(property_suite(options));
    return results;
}

}  // namespace plesim::reproduce
