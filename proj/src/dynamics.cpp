#include "plesim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "plesim/parallel.hpp"
#include "plesim/rng.hpp"

namespace plesim {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw std::invalid_argument("dynamics: " + what);
    }
}

// Counts inside [t0, t1] of a decaying component holding `total` photons:
// total * (exp(-t0/tau) - exp(-t1/tau)).
double window_counts(double total, double tau, double t0, double t1) {
    return total * (std::exp(-t0 / tau) - std::exp(-t1 / tau));
}

}  // namespace

void TimeTrace::validate() const {
    require(bin_width_s > 0.0, "bin width must be positive");
    for (double c : counts) {
        require(c >= 0.0, "counts must be nonnegative");
    }
}

TimeTrace decay_trace(const SiteResonance& site, const DetectorModel& detector,
                      const ScanProtocol& protocol, double duration_s, double bin_width_s) {
    site.validate();
    detector.validate();
    protocol.validate();
    require(bin_width_s > 0.0, "bin width must be positive");
    require(duration_s >= protocol.window_end_s, "duration must reach the counting window end");
    require(site.lifetime_s.has_value(), "site needs a lifetime to synthesize a decay trace");

    // Total site photons per pulse, fixed by requiring that the counts
    // inside the protocol window equal the catalog amplitude.
    const double tau = *site.lifetime_s;
    double window_fraction = 0.0;
    if (site.second_lifetime_s) {
        window_fraction += (1.0 - site.second_fraction) *
                           window_counts(1.0, tau, protocol.window_start_s, protocol.window_end_s);
        window_fraction += site.second_fraction * window_counts(1.0, *site.second_lifetime_s,
                                                                protocol.window_start_s,
                                                                protocol.window_end_s);
    } else {
        window_fraction = window_counts(1.0, tau, protocol.window_start_s, protocol.window_end_s);
    }
    const double total_cpp = site.amplitude_cpp / window_fraction;

    TimeTrace trace;
    trace.bin_width_s = bin_width_s;
    trace.protocol = protocol;
    const auto bins = static_cast<std::size_t>(std::ceil(duration_s / bin_width_s));
    trace.counts.resize(bins);
    const double scale =
        static_cast<double>(protocol.repetitions) * detector.system_detection_efficiency;
    for (std::size_t i = 0; i < bins; ++i) {
        const double t0 = trace.bin_start_s(i);
        const double t1 = t0 + bin_width_s;
        double cpp = 0.0;
        if (site.second_lifetime_s) {
            cpp += window_counts(total_cpp * (1.0 - site.second_fraction), tau, t0, t1);
            cpp += window_counts(total_cpp * site.second_fraction, *site.second_lifetime_s, t0, t1);
        } else {
            cpp += window_counts(total_cpp, tau, t0, t1);
        }
        cpp += detector.background_window_cpp(t0, t1);
        trace.counts[i] = cpp * scale;
    }
    return trace;
}

TimeTrace background_trace(const DetectorModel& detector, const ScanProtocol& protocol,
                           double duration_s, double bin_width_s) {
    detector.validate();
    protocol.validate();
    require(bin_width_s > 0.0, "bin width must be positive");
    require(duration_s > 0.0, "duration must be positive");

    TimeTrace trace;
    trace.bin_width_s = bin_width_s;
    trace.protocol = protocol;
    const auto bins = static_cast<std::size_t>(std::ceil(duration_s / bin_width_s));
    trace.counts.resize(bins);
    const double scale =
        static_cast<double>(protocol.repetitions) * detector.system_detection_efficiency;
    for (std::size_t i = 0; i < bins; ++i) {
        const double t0 = trace.bin_start_s(i);
        trace.counts[i] = detector.background_window_cpp(t0, t0 + bin_width_s) * scale;
    }
    return trace;
}

TimeTrace sample_trace(const TimeTrace& expected, std::uint64_t seed) {
    TimeTrace sampled = expected;
    for (std::size_t i = 0; i < expected.counts.size(); ++i) {
        CounterRng rng(seed, i);
        sampled.counts[i] = static_cast<double>(poisson_draw(rng, expected.counts[i]));
    }
    return sampled;
}

double rho_res(double t_s, double pump_rate_hz, double lifetime_s) {
    require(t_s >= 0.0, "time must be nonnegative");
    require(pump_rate_hz >= 0.0, "pump rate must be nonnegative");
    require(lifetime_s > 0.0, "lifetime must be positive");
    const double total_rate = 2.0 * pump_rate_hz + 1.0 / lifetime_s;
    const double rho_ss = pump_rate_hz / total_rate;
    return rho_ss * (1.0 - std::exp(-t_s * total_rate));
}

namespace {

// Occupation after a constant-rate segment of length dt, starting from rho0.
double rate_segment(double rho0, double pump_rate_hz, double lifetime_s, double dt_s) {
    const double total_rate = 2.0 * pump_rate_hz + 1.0 / lifetime_s;
    const double rho_ss = pump_rate_hz / total_rate;
    return rho_ss + (rho0 - rho_ss) * std::exp(-dt_s * total_rate);
}

double unit_lorentzian(double detuning_hz, double fwhm_hz) {
    const double half = 0.5 * fwhm_hz;
    return half * half / (detuning_hz * detuning_hz + half * half);
}

// Pump -> free delay -> probe, for one ion at detuning `delta` from the
// pump, probed at `delta - detuning`.
double chained_occupation(const HoleBurnConfig& cfg, double delta_hz, double detuning_hz) {
    const double pump_rate = cfg.pump_rate_hz * unit_lorentzian(delta_hz, cfg.homogeneous_fwhm_hz);
    const double probe_rate =
        cfg.pump_rate_hz * unit_lorentzian(delta_hz - detuning_hz, cfg.homogeneous_fwhm_hz);
    double rho = rate_segment(0.0, pump_rate, cfg.lifetime_s, cfg.pump_duration_s);
    rho = rate_segment(rho, 0.0, cfg.lifetime_s, cfg.pump_probe_delay_s);
    return rate_segment(rho, probe_rate, cfg.lifetime_s, cfg.probe_duration_s);
}

}  // namespace

double eq1_reference(double pump_duration_s, double detuning_hz, double lifetime_s,
                     double pump_rate_hz, double homogeneous_fwhm_hz) {
    require(pump_duration_s > 0.0, "pump duration must be positive");
    require(homogeneous_fwhm_hz > 0.0, "homogeneous width must be positive");
    if (detuning_hz == 0.0) {
        return rho_res(2.0 * pump_duration_s, pump_rate_hz, lifetime_s);
    }
    const double rho_tp = rho_res(pump_duration_s, pump_rate_hz, lifetime_s);
    if (std::abs(detuning_hz) > 20.0 * homogeneous_fwhm_hz) {
        return 2.0 * rho_tp * (1.0 - 0.5 * std::exp(-pump_duration_s / lifetime_s));
    }
    // Between the limiting cases: two-subset rate-equation sum.
    HoleBurnConfig cfg;
    cfg.pump_duration_s = pump_duration_s;
    cfg.probe_duration_s = pump_duration_s;
    cfg.pump_probe_delay_s = 0.0;
    cfg.pump_rate_hz = pump_rate_hz;
    cfg.homogeneous_fwhm_hz = homogeneous_fwhm_hz;
    cfg.lifetime_s = lifetime_s;
    return chained_occupation(cfg, 0.0, detuning_hz) +
           chained_occupation(cfg, detuning_hz, detuning_hz);
}

void HoleBurnConfig::validate() const {
    require(pump_duration_s > 0.0 && probe_duration_s > 0.0, "pulse durations must be positive");
    require(pump_probe_delay_s >= 0.0, "pump-probe delay must be nonnegative");
    require(homogeneous_fwhm_hz > 0.0, "homogeneous width must be positive");
    require(lifetime_s > 0.0, "lifetime must be positive");
    require(pump_rate_hz > 0.0, "pump rate must be positive");
    require(repetition_period_s > 0.0, "repetition period must be positive");
    require(detection_window_s > 0.0, "detection window must be positive");
}

std::vector<double> HoleBurnConfig::symmetric_grid(double span_hz, std::size_t points) {
    if (points < 2 || span_hz <= 0.0) {
        throw std::invalid_argument("dynamics: detuning grid needs span > 0 and >= 2 points");
    }
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = -span_hz + 2.0 * span_hz * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

HoleProfile simulate_hole(const HoleBurnConfig& config, int threads) {
    config.validate();
    require(!config.detunings_hz.empty(), "detuning grid must not be empty");
    const double gamma = config.homogeneous_fwhm_hz;
    const auto [lo_it, hi_it] =
        std::minmax_element(config.detunings_hz.begin(), config.detunings_hz.end());
    if (*lo_it > -10.0 * gamma || *hi_it < 10.0 * gamma) {
        throw std::invalid_argument("dynamics: detuning grid must span at least +-10 homogeneous widths");
    }

    // Saturation widens the addressed packet; the window takes the
    // conservative CW-broadened width while the step resolves the bare
    // homogeneous width.
    const double saturation = 2.0 * config.pump_rate_hz * config.lifetime_s;
    const double gamma_eff = gamma * std::sqrt(1.0 + saturation);
    const double window_half = 60.0 * gamma_eff;
    const double step = gamma / 40.0;

    const auto pump_only = [&](double delta) {
        const double rate = config.pump_rate_hz * unit_lorentzian(delta, gamma);
        double rho = rate_segment(0.0, rate, config.lifetime_s, config.pump_duration_s);
        rho = rate_segment(rho, 0.0, config.lifetime_s,
                           config.pump_probe_delay_s + config.probe_duration_s);
        return rho;
    };
    const auto probe_only = [&](double delta) {
        const double rate = config.pump_rate_hz * unit_lorentzian(delta, gamma);
        return rate_segment(0.0, rate, config.lifetime_s, config.probe_duration_s);
    };

    const auto simpson = [&](double lo, double hi, const std::function<double(double)>& f) {
        auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step));
        n += n % 2;  // Simpson needs an even interval count
        const double h = (hi - lo) / static_cast<double>(n);
        double sum = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            const double delta = lo + h * static_cast<double>(i);
            const double coeff = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            sum += coeff * f(delta);
        }
        return sum * h / 3.0;
    };

    // The signal is written as plateau + hole, where the hole integrand
    // is the difference between the chained evolution and the two
    // independent single-packet evolutions. The difference falls off with
    // the product of both Lorentzian wings, so window truncation is
    // negligible and, crucially, independent of the scan detuning; a
    // direct integral of the chained occupation alone would pick up a
    // detuning-proportional wing contribution that distorts shallow holes.
    const auto hole_excess = [&](double detuning_hz) {
        const double lo = std::min(0.0, detuning_hz) - window_half;
        const double hi = std::max(0.0, detuning_hz) + window_half;
        return simpson(lo, hi, [&](double delta) {
            return chained_occupation(config, delta, detuning_hz) - pump_only(delta) -
                   probe_only(delta - detuning_hz);
        });
    };

    HoleProfile profile;
    profile.detunings_hz = config.detunings_hz;
    profile.signal.assign(config.detunings_hz.size(), 0.0);
    profile.repetition_warning = config.repetition_period_s < 2.0 * config.lifetime_s;

    const double plateau =
        simpson(-window_half, window_half, pump_only) +
        simpson(-window_half, window_half, probe_only);
    profile.plateau_raw = plateau;

    parallel_for(config.detunings_hz.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            profile.signal[i] = 1.0 + hole_excess(config.detunings_hz[i]) / plateau;
        }
    });

    // Analytic endpoint cross-checks (the detection-window factor is
    // common to every ion and cancels in normalized quantities).
    profile.endpoints.resonant_occupation = chained_occupation(config, 0.0, 0.0);
    profile.endpoints.reference_resonant =
        rho_res(config.pump_duration_s + config.probe_duration_s, config.pump_rate_hz,
                config.lifetime_s);
    profile.endpoints.far_occupation_sum = pump_only(0.0) + probe_only(0.0);
    profile.endpoints.reference_far =
        2.0 * rho_res(config.pump_duration_s, config.pump_rate_hz, config.lifetime_s) *
        (1.0 - 0.5 * std::exp(-config.pump_duration_s / config.lifetime_s));
    profile.endpoints.far_discrepancy =
        std::abs(profile.endpoints.far_occupation_sum - profile.endpoints.reference_far) /
        profile.endpoints.far_occupation_sum;
    return profile;
}

double BranchWeight::at(double polarization_rad) const {
    return base + modulation * std::cos(2.0 * (polarization_rad - phase_rad));
}

void ZeemanSite::validate() const {
    require(center_frequency_hz > 0.0, "center frequency must be positive");
    require(!subsites.empty() && subsites.size() <= 24, "subsite count must be in [1, 24]");
    for (const auto& s : subsites) {
        require(s.g_ground >= 0.0 && s.g_excited >= 0.0, "g-factors must be nonnegative");
        for (const auto& w : s.weights) {
            require(w.base >= std::abs(w.modulation), "branch weights must stay nonnegative");
        }
    }
}

std::vector<ZeemanLine> zeeman_lines(const ZeemanSite& site, double field_t,
                                     double polarization_rad, double max_field_t) {
    site.validate();
    require(std::abs(field_t) <= max_field_t, "field exceeds the configured maximum");

    // Four branches per subsite at +-(ge +- gg) muB B / (2h); a signed
    // field moves every branch to the mirrored position, so reversal
    // swaps arm intensities without any special casing.
    const double scale = kBohrMagneton * field_t / (2.0 * kPlanck);
    std::vector<ZeemanLine> lines;
    lines.reserve(site.subsites.size() * 4);
    for (const auto& s : site.subsites) {
        const std::array<double, 4> offsets{
            (s.g_excited - s.g_ground) * scale,
            (s.g_excited + s.g_ground) * scale,
            -(s.g_excited + s.g_ground) * scale,
            -(s.g_excited - s.g_ground) * scale,
        };
        for (std::size_t b = 0; b < 4; ++b) {
            lines.push_back(ZeemanLine{offsets[b], s.weights[b].at(polarization_rad)});
        }
    }
    std::sort(lines.begin(), lines.end(),
              [](const ZeemanLine& a, const ZeemanLine& b) { return a.offset_hz < b.offset_hz; });

    // Merge lines closer than 1 kHz, summing intensities.
    std::vector<ZeemanLine> merged;
    for (const auto& line : lines) {
        if (!merged.empty() && line.offset_hz - merged.back().offset_hz < 1e3) {
            merged.back().intensity += line.intensity;
        } else {
            merged.push_back(line);
        }
    }
    return merged;
}

std::pair<std::vector<ZeemanLine>, std::vector<ZeemanLine>> reverse_field_check(
    const ZeemanSite& site, double field_t, double polarization_rad, double max_field_t) {
    return {zeeman_lines(site, field_t, polarization_rad, max_field_t),
            zeeman_lines(site, -field_t, polarization_rad, max_field_t)};
}

}  // namespace plesim
