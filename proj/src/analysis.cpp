#include "plesim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include "plesim/errors.hpp"

namespace plesim::analysis {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw std::invalid_argument("analysis: " + what);
    }
}

// Subtracts a fitted line (in counts) from a working spectrum.
void subtract_line(Spectrum& spectrum, const FitResult& fit) {
    const double scale = 1.0 / spectrum.counts_to_cpp();
    const double center = fit.value("center_hz");
    const double fwhm = fit.value("fwhm_hz");
    const double amplitude = fit.value("amplitude") * scale;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double d = spectrum.frequency_at(i) - center;
        const double h2 = 0.25 * fwhm * fwhm;
        spectrum.counts[i] -= amplitude * h2 / (d * d + h2);
    }
}

// Chains fitted lines into overlap groups (separation below 2.5 x the
// sum of their widths) and refits each group simultaneously on the raw
// spectrum. Groups of one are left untouched.
void refine_clusters(const Spectrum& spectrum, std::vector<SurveyLine>& lines) {
    std::vector<std::size_t> fitted;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].status == "ok") {
            fitted.push_back(i);
        }
    }
    if (fitted.size() < 2) {
        return;
    }

    std::vector<std::vector<std::size_t>> clusters{{fitted[0]}};
    for (std::size_t n = 1; n < fitted.size(); ++n) {
        const auto& prev = lines[clusters.back().back()].fit;
        const auto& cur = lines[fitted[n]].fit;
        const double gap = std::abs(cur.value("center_hz") - prev.value("center_hz"));
        if (gap < 2.5 * (cur.value("fwhm_hz") + prev.value("fwhm_hz"))) {
            clusters.back().push_back(fitted[n]);
        } else {
            clusters.push_back({fitted[n]});
        }
    }

    const double to_cpp = spectrum.counts_to_cpp();
    for (const auto& cluster : clusters) {
        if (cluster.size() < 2 || cluster.size() > 6) {
            continue;
        }
        // Union window: 4 widths around each member, clipped at midpoints
        // toward the lines flanking the cluster.
        double f_lo = 1e300;
        double f_hi = -1e300;
        for (std::size_t idx : cluster) {
            const auto& fr = lines[idx].fit;
            f_lo = std::min(f_lo, fr.value("center_hz") - 4.0 * fr.value("fwhm_hz"));
            f_hi = std::max(f_hi, fr.value("center_hz") + 4.0 * fr.value("fwhm_hz"));
        }
        for (std::size_t idx : fitted) {
            if (std::find(cluster.begin(), cluster.end(), idx) != cluster.end()) {
                continue;
            }
            const double c = lines[idx].fit.value("center_hz");
            const double first = lines[cluster.front()].fit.value("center_hz");
            const double last = lines[cluster.back()].fit.value("center_hz");
            if (c < first) {
                f_lo = std::max(f_lo, 0.5 * (c + first));
            }
            if (c > last) {
                f_hi = std::min(f_hi, 0.5 * (c + last));
            }
        }
        long lo = static_cast<long>(std::ceil((f_lo - spectrum.f0_hz) / spectrum.step_hz));
        long hi = static_cast<long>(std::floor((f_hi - spectrum.f0_hz) / spectrum.step_hz));
        lo = std::max<long>(lo, 0);
        hi = std::min<long>(hi, static_cast<long>(spectrum.size()) - 1);
        const std::size_t npts = static_cast<std::size_t>(hi - lo + 1);
        if (npts < 3 * cluster.size() + 2) {
            continue;
        }

        const double f_ref = lines[cluster.front()].fit.value("center_hz");
        std::vector<double> x(npts), y(npts), w(npts);
        for (std::size_t i = 0; i < npts; ++i) {
            const std::size_t gi = static_cast<std::size_t>(lo) + i;
            x[i] = (spectrum.frequency_at(gi) - f_ref) / 1e9;
            y[i] = spectrum.counts[gi];
            w[i] = 1.0 / std::max(y[i], 1.0);
        }
        std::vector<double> p0;
        for (std::size_t idx : cluster) {
            const auto& fr = lines[idx].fit;
            p0.push_back((fr.value("center_hz") - f_ref) / 1e9);
            p0.push_back(fr.value("fwhm_hz") / 1e9);
            p0.push_back(fr.value("amplitude") / to_cpp);
        }
        p0.push_back(lines[cluster.front()].fit.value("offset") / to_cpp);

        try {
            const FitResult joint = fit::least_squares_fit(
                fit::multi_lorentzian_model(cluster.size()), x, y, w, p0);
            bool sane = joint.converged;
            for (std::size_t k = 0; k < cluster.size(); ++k) {
                const double fwhm = std::abs(joint.parameters[3 * k + 1].value) * 1e9;
                const double amp = joint.parameters[3 * k + 2].value;
                sane = sane && fwhm > 0.0 && fwhm < (f_hi - f_lo) && amp > 0.0;
            }
            if (!sane) {
                continue;
            }
            for (std::size_t k = 0; k < cluster.size(); ++k) {
                FitResult& fr = lines[cluster[k]].fit;
                const auto set = [&fr](const std::string& name, double v, double e) {
                    for (auto& par : fr.parameters) {
                        if (par.name == name) {
                            par.value = v;
                            par.std_error = e;
                            return;
                        }
                    }
                };
                set("center_hz", f_ref + joint.parameters[3 * k].value * 1e9,
                    joint.parameters[3 * k].std_error * 1e9);
                set("fwhm_hz", std::abs(joint.parameters[3 * k + 1].value) * 1e9,
                    joint.parameters[3 * k + 1].std_error * 1e9);
                set("amplitude", joint.parameters[3 * k + 2].value * to_cpp,
                    joint.parameters[3 * k + 2].std_error * to_cpp);
                set("offset", joint.parameters[3 * cluster.size()].value * to_cpp,
                    joint.parameters[3 * cluster.size()].std_error * to_cpp);
            }
        } catch (const std::exception&) {
            // Keep the per-line fits when the joint fit degenerates.
        }
    }
}

}  // namespace

SurveyResult survey_pipeline(const Spectrum& spectrum, const fit::PeakDetectOptions& options) {
    SurveyResult result;

    const auto near = [&](std::size_t a, std::size_t b) {
        return std::abs(static_cast<double>(a) - static_cast<double>(b)) * spectrum.step_hz <
               options.min_separation_hz;
    };

    // Sub-threshold local maxima are kept as window clips so that an
    // unresolved companion bounds its neighbor's fit without entering the
    // catalog itself.
    const auto collect_guards = [&](const Spectrum& s,
                                    const std::vector<fit::PeakCandidate>& candidates) {
        fit::PeakDetectOptions guard_options = options;
        guard_options.min_prominence_cpp = options.min_prominence_cpp / 3.0;
        std::vector<fit::PeakCandidate> guards;
        for (const auto& g : fit::detect_peaks(s, guard_options)) {
            const bool is_candidate = std::any_of(
                candidates.begin(), candidates.end(),
                [&](const auto& c) { return near(c.index, g.index); });
            if (!is_candidate) {
                guards.push_back(g);
            }
        }
        return guards;
    };

    // A fit accepted for subtraction must look like the peak it claims to
    // describe; a diverged fit would poison every later pass.
    const auto sane_fit = [&](const FitResult& fr, const fit::PeakCandidate& candidate,
                              std::span<const fit::PeakCandidate> clips) {
        double nearest = 1e18;
        for (const auto& c : clips) {
            if (c.index != candidate.index) {
                nearest = std::min(nearest, std::abs(static_cast<double>(c.index) -
                                                     static_cast<double>(candidate.index)) *
                                                spectrum.step_hz);
            }
        }
        const double fwhm = fr.value("fwhm_hz");
        const double center_shift = std::abs(fr.value("center_hz") - candidate.center_hz);
        return fr.value("amplitude") > 0.0 && fwhm > 0.0 && fwhm <= 1.6 * nearest &&
               center_shift <= 0.5 * nearest;
    };

    // Iterative detect-fit-subtract: a weak line sitting on the wing of a
    // strong neighbor only reaches its nominal prominence once the
    // neighbor's fitted profile is peeled off.
    Spectrum working = spectrum;
    std::vector<fit::PeakCandidate> known;
    std::vector<fit::PeakCandidate> guards;
    constexpr int kMaxPasses = 4;
    for (int pass = 0; pass < kMaxPasses; ++pass) {
        const auto candidates = fit::detect_peaks(working, options);
        std::vector<fit::PeakCandidate> fresh;
        for (const auto& c : candidates) {
            const bool seen = std::any_of(known.begin(), known.end(),
                                          [&](const auto& k) { return near(c.index, k.index); });
            if (!seen) {
                fresh.push_back(c);
            }
        }
        if (fresh.empty()) {
            break;
        }

        std::vector<fit::PeakCandidate> all(known);
        all.insert(all.end(), fresh.begin(), fresh.end());
        guards = collect_guards(working, all);

        // Fit new candidates against the working spectrum (previously
        // fitted lines already removed), strongest first so that big
        // peaks are peeled before their weak neighbors are measured.
        std::vector<fit::PeakCandidate> clips(all);
        clips.insert(clips.end(), guards.begin(), guards.end());
        std::sort(clips.begin(), clips.end(),
                  [](const auto& a, const auto& b) { return a.index < b.index; });
        std::sort(fresh.begin(), fresh.end(), [](const auto& a, const auto& b) {
            return a.prominence_cpp > b.prominence_cpp;
        });
        for (const auto& candidate : fresh) {
            SurveyLine line;
            line.candidate = candidate;
            try {
                line.fit = fit::fit_lorentzian_peak(working, candidate, clips);
                if (sane_fit(line.fit, candidate, clips)) {
                    line.status = "ok";
                    subtract_line(working, line.fit);
                } else {
                    line.status = "retry";  // leave the flux in place for later sweeps
                }
            } catch (const std::exception& e) {
                line.status = std::string("retry: ") + e.what();
            }
            result.lines.push_back(std::move(line));
            known.push_back(candidate);
        }
    }

    std::sort(result.lines.begin(), result.lines.end(), [](const auto& a, const auto& b) {
        return a.candidate.index < b.candidate.index;
    });

    // Backfit sweeps: refit every line against the spectrum with all
    // other fitted lines removed (windows still clipped at neighbor
    // midpoints); lines whose first fit was rejected retry on the
    // cleaned residual.
    std::vector<fit::PeakCandidate> clips;
    for (const auto& line : result.lines) {
        clips.push_back(line.candidate);
    }
    std::sort(clips.begin(), clips.end(),
              [](const auto& a, const auto& b) { return a.index < b.index; });
    for (int sweep = 0; sweep < 2; ++sweep) {
        for (auto& line : result.lines) {
            const bool has_model = line.status == "ok";
            Spectrum focus = working;  // residual with every accepted line removed
            if (has_model) {
                const double scale = 1.0 / focus.counts_to_cpp();
                const double center = line.fit.value("center_hz");
                const double fwhm = line.fit.value("fwhm_hz");
                const double amplitude = line.fit.value("amplitude") * scale;
                for (std::size_t i = 0; i < focus.size(); ++i) {
                    const double d = focus.frequency_at(i) - center;
                    const double h2 = 0.25 * fwhm * fwhm;
                    focus.counts[i] += amplitude * h2 / (d * d + h2);
                }
            }
            try {
                FitResult refit = fit::fit_lorentzian_peak(focus, line.candidate, clips);
                if (!sane_fit(refit, line.candidate, clips)) {
                    continue;  // keep the previous state
                }
                subtract_line(focus, refit);
                working = std::move(focus);
                line.fit = std::move(refit);
                line.status = "ok";
            } catch (const std::exception&) {
                // Keep the previous fit if the refit degenerates.
            }
        }
    }

    // Joint refinement of overlapping groups. Midpoint-clipped windows
    // censor exactly the region where an interleaved neighbor is most
    // informative, which leaves a coupled bias that per-line sweeps
    // cannot remove; a small simultaneous fit of the chained group does.
    refine_clusters(spectrum, result.lines);

    std::vector<SiteResonance> rows;
    for (auto& line : result.lines) {
        if (line.status != "ok") {
            continue;
        }
        SiteResonance site;
        site.center_wavelength_nm = frequency_hz_to_wavelength_nm(line.fit.value("center_hz"));
        site.inhomogeneous_fwhm_hz = line.fit.value("fwhm_hz");
        site.amplitude_cpp = line.fit.value("amplitude");
        try {
            site.validate();
        } catch (const std::exception& e) {
            line.status = e.what();
            continue;
        }
        const bool duplicate = std::any_of(rows.begin(), rows.end(), [&](const SiteResonance& r) {
            return std::abs(r.center_frequency_hz() - site.center_frequency_hz()) <= 1e6;
        });
        if (duplicate) {
            line.status = "duplicate center";
        } else {
            rows.push_back(site);
        }
    }
    result.catalog = Catalog::from_rows(std::move(rows), "survey fit");
    return result;
}

double LifetimeResult::lifetime_s() const {
    const FitResult& fr = selection.fit;
    if (selection.model == fit::DecayModel::biexponential) {
        return std::max(fr.value("tau1_s"), fr.value("tau2_s"));
    }
    return fr.value("tau_s");
}

double LifetimeResult::lifetime_error_s() const {
    const FitResult& fr = selection.fit;
    if (selection.model == fit::DecayModel::biexponential) {
        return fr.value("tau1_s") > fr.value("tau2_s") ? fr.error("tau1_s") : fr.error("tau2_s");
    }
    return fr.error("tau_s");
}

LifetimeResult extract_lifetime(const TimeTrace& on_res, const TimeTrace& off_res) {
    require(on_res.size() == off_res.size(), "traces must have the same number of bins");
    require(std::abs(on_res.bin_width_s - off_res.bin_width_s) <=
                1e-12 * on_res.bin_width_s,
            "traces must share the bin width");
    require(on_res.protocol.repetitions == off_res.protocol.repetitions,
            "traces must share the repetition count");

    std::size_t first_bin = 0;
    while (first_bin < on_res.size() && on_res.bin_start_s(first_bin) < 10e-6) {
        ++first_bin;
    }
    require(on_res.size() - first_bin >= 20, "too few bins after the 10 us fit start");

    std::vector<double> t, diff;
    t.reserve(on_res.size() - first_bin);
    diff.reserve(on_res.size() - first_bin);
    bool mismatch = false;
    for (std::size_t i = first_bin; i < on_res.size(); ++i) {
        const double d = on_res.counts[i] - off_res.counts[i];
        const double sigma = std::sqrt(std::max(on_res.counts[i] + off_res.counts[i], 1.0));
        if (d < -5.0 * sigma) {
            mismatch = true;  // systematically negative difference
        }
        t.push_back(on_res.bin_center_s(i));
        diff.push_back(d);
    }

    LifetimeResult result;
    result.background_mismatch = mismatch;

    const bool all_zero = std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; });
    if (all_zero) {
        // Identical traces: no signal to fit, report a null amplitude.
        result.no_signal = true;
        result.selection.model = fit::DecayModel::single;
        result.selection.fit.parameters = {
            FitParameter{"amplitude", "counts", 0.0, 0.0},
            FitParameter{"tau_s", "s", 0.0, 0.0},
            FitParameter{"offset", "counts", 0.0, 0.0},
        };
        result.selection.fit.converged = true;
        result.selection.fit.convergence_reason = "degenerate";
        result.selection.single_fit = result.selection.fit;
        return result;
    }

    // Two-stage weighting: an unweighted preliminary fit supplies
    // model-based variances (signal counts plus a constant noise floor
    // estimated from the tail residuals). Data-driven per-bin Poisson
    // weights would correlate with the noise and bias the lifetime at
    // these count levels; model-based weights do not. Both stages see
    // only the difference trace, so subtraction linearity stays exact.
    std::vector<double> variance(diff.size(), 1.0);
    try {
        const std::vector<double> ones(diff.size(), 1.0);
        const auto preliminary = fit::select_decay_model(t, diff, ones);
        std::vector<double> model_counts(diff.size());
        std::vector<double> p;
        const bool biexp = preliminary.model == fit::DecayModel::biexponential;
        const auto model = biexp ? fit::biexponential_model() : fit::single_exponential_model();
        for (const auto& par : preliminary.fit.parameters) {
            // tau parameters were reported in seconds; the model works in
            // any consistent unit, so seconds throughout.
            p.push_back(par.value);
        }
        model.evaluate(p, t, model_counts);
        double tail_ss = 0.0;
        std::size_t tail_n = 0;
        for (std::size_t i = diff.size() - diff.size() / 5; i < diff.size(); ++i) {
            const double r = diff[i] - model_counts[i];
            tail_ss += r * r;
            ++tail_n;
        }
        const double floor = tail_n > 0 ? tail_ss / static_cast<double>(tail_n) : 0.0;
        for (std::size_t i = 0; i < diff.size(); ++i) {
            variance[i] = std::max(std::max(model_counts[i], 0.0) + floor, 0.25);
        }
    } catch (const std::exception&) {
        // Preliminary fit failed; fall back to unit weights.
    }

    try {
        result.selection = fit::select_decay_model(t, diff, variance);
    } catch (const AnalysisError&) {
        // Nothing decay-like to fit: report a null amplitude with the
        // scatter of the difference as its uncertainty.
        double ss = 0.0;
        for (double d : diff) {
            ss += d * d;
        }
        const double rms = std::sqrt(ss / static_cast<double>(diff.size()));
        result.no_signal = true;
        result.selection.model = fit::DecayModel::single;
        result.selection.fit.parameters = {
            FitParameter{"amplitude", "counts", 0.0,
                         rms / std::sqrt(static_cast<double>(diff.size()))},
            FitParameter{"tau_s", "s", 0.0, 0.0},
            FitParameter{"offset", "counts", 0.0, 0.0},
        };
        result.selection.fit.convergence_reason = "no_signal";
        result.selection.single_fit = result.selection.fit;
        return result;
    }
    const FitResult& fr = result.selection.fit;
    double amplitude = 0.0;
    double amplitude_error = 0.0;
    if (result.selection.model == fit::DecayModel::biexponential) {
        amplitude = fr.value("amplitude1") + fr.value("amplitude2");
        amplitude_error = std::hypot(fr.error("amplitude1"), fr.error("amplitude2"));
    } else {
        amplitude = fr.value("amplitude");
        amplitude_error = fr.error("amplitude");
    }
    result.no_signal = std::abs(amplitude) < 3.0 * amplitude_error;
    return result;
}

HoleAnalysis hole_to_homogeneous(std::span<const double> detunings_hz,
                                 std::span<const double> signal) {
    require(detunings_hz.size() == signal.size(), "detuning and signal arrays differ in size");
    require(detunings_hz.size() >= 8, "hole profile needs at least 8 points");

    // Fit in MHz to keep parameter magnitudes comparable.
    const std::size_t n = detunings_hz.size();
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = detunings_hz[i] * 1e-6;
    }

    // Initial guesses from the outer quartile (plateau) and the minimum.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(x[a]) > std::abs(x[b]); });
    const std::size_t outer = std::max<std::size_t>(2, n / 4);
    double plateau0 = 0.0;
    for (std::size_t i = 0; i < outer; ++i) {
        plateau0 += signal[order[i]];
    }
    plateau0 /= static_cast<double>(outer);

    std::size_t imin = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (signal[i] < signal[imin]) {
            imin = i;
        }
    }
    const double depth0 = std::max(plateau0 - signal[imin], 1e-12);
    const double half_level = plateau0 - 0.5 * depth0;
    double left = x[imin];
    double right = x[imin];
    for (std::size_t i = imin; i-- > 0;) {
        if (signal[i] > half_level) {
            break;
        }
        left = x[i];
    }
    for (std::size_t i = imin + 1; i < n; ++i) {
        if (signal[i] > half_level) {
            break;
        }
        right = x[i];
    }
    const double fwhm0 = std::max(right - left, 2.0 * std::abs(x[1] - x[0]));

    const std::array<double, 4> p0{plateau0, depth0, x[imin], fwhm0};
    FitResult fr;
    try {
        fr = fit::least_squares_fit(fit::lorentzian_dip_model(), x, signal, {}, p0);
    } catch (const AnalysisError&) {
        throw AnalysisError("analysis: no spectral hole found (degenerate dip fit)");
    }

    const double plateau = fr.value("plateau");
    const double depth = fr.value("depth");
    const double fwhm_mhz = std::abs(fr.value("fwhm"));

    // Plateau noise from the outer-quartile residuals.
    std::vector<double> model_y(n);
    fit::lorentzian_dip_model().evaluate(
        std::array<double, 4>{plateau, depth, fr.value("center"), fwhm_mhz}, x, model_y);
    double noise = 0.0;
    for (std::size_t i = 0; i < outer; ++i) {
        const double r = signal[order[i]] - model_y[order[i]];
        noise += r * r;
    }
    noise = std::sqrt(noise / static_cast<double>(outer));
    noise = std::max(noise, 1e-12 * std::max(std::abs(plateau), 1.0));
    if (!(depth >= 3.0 * noise)) {
        throw AnalysisError("analysis: no spectral hole found (dip below 3 x plateau noise)");
    }

    // The grid must extend well past the hole on both sides.
    const double center_mhz = fr.value("center");
    const double span_left = center_mhz - *std::min_element(x.begin(), x.end());
    const double span_right = *std::max_element(x.begin(), x.end()) - center_mhz;
    if (std::min(span_left, span_right) < 2.5 * fwhm_mhz) {
        throw AnalysisError("analysis: hole profile span is too narrow for a reliable width");
    }

    HoleAnalysis out;
    out.fit = fr;
    for (auto& p : out.fit.parameters) {
        if (p.name == "center" || p.name == "fwhm") {
            p.name += "_hz";
            p.unit = "Hz";
            p.value *= 1e6;
            p.std_error *= 1e6;
        }
    }
    out.hole_fwhm_hz = fwhm_mhz * 1e6;
    out.homogeneous_bound_hz = 0.5 * out.hole_fwhm_hz;
    return out;
}

HoleAnalysis hole_to_homogeneous(const HoleProfile& profile) {
    return hole_to_homogeneous(profile.detunings_hz, profile.signal);
}

MatchReport match_resonances(const Catalog& optical, std::span<const double> electrical_hz,
                             double tolerance_hz) {
    require(!optical.empty(), "optical catalog must not be empty");
    require(!electrical_hz.empty(), "electrical line list must not be empty");
    require(tolerance_hz >= 0.0, "tolerance must be nonnegative");

    std::vector<double> optical_hz(optical.size());
    for (std::size_t i = 0; i < optical.size(); ++i) {
        optical_hz[i] = optical.resonances[i].center_frequency_hz();
    }

    struct CandidatePair {
        double separation;
        std::size_t optical;
        std::size_t electrical;
    };
    std::vector<CandidatePair> pairs;
    for (std::size_t i = 0; i < optical_hz.size(); ++i) {
        for (std::size_t j = 0; j < electrical_hz.size(); ++j) {
            const double d = std::abs(optical_hz[i] - electrical_hz[j]);
            if (d <= tolerance_hz) {
                pairs.push_back(CandidatePair{d, i, j});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const CandidatePair& a, const CandidatePair& b) {
        if (a.separation != b.separation) {
            return a.separation < b.separation;
        }
        if (optical_hz[a.optical] != optical_hz[b.optical]) {
            return optical_hz[a.optical] < optical_hz[b.optical];
        }
        return electrical_hz[a.electrical] < electrical_hz[b.electrical];
    });

    std::vector<bool> optical_used(optical_hz.size(), false);
    std::vector<bool> electrical_used(electrical_hz.size(), false);
    MatchReport report;
    report.tolerance_hz = tolerance_hz;
    for (const auto& p : pairs) {
        if (optical_used[p.optical] || electrical_used[p.electrical]) {
            continue;
        }
        optical_used[p.optical] = true;
        electrical_used[p.electrical] = true;
        report.pairs.push_back(
            MatchPair{optical_hz[p.optical], electrical_hz[p.electrical], p.separation});
    }
    std::sort(report.pairs.begin(), report.pairs.end(),
              [](const MatchPair& a, const MatchPair& b) { return a.optical_hz < b.optical_hz; });
    report.matched_fraction =
        static_cast<double>(report.pairs.size()) / static_cast<double>(optical_hz.size());
    return report;
}

BackgroundStudy background_choice_study(const TimeTrace& on_res,
                                        std::span<const TimeTrace> off_res,
                                        std::span<const double> offsets_hz) {
    require(off_res.size() == 6, "background study expects exactly 6 off-resonant traces");
    require(offsets_hz.size() == off_res.size(), "offsets must match the trace count");

    BackgroundStudy study;
    std::vector<double> lifetimes;
    std::vector<double> errors;
    for (std::size_t i = 0; i < off_res.size(); ++i) {
        BackgroundStudyEntry entry;
        entry.offset_hz = offsets_hz[i];
        try {
            entry.result = extract_lifetime(on_res, off_res[i]);
            entry.included = entry.result.selection.fit.converged && !entry.result.no_signal;
            if (!entry.included) {
                entry.note = entry.result.no_signal ? "no signal" : "fit did not converge";
            }
        } catch (const std::exception& e) {
            entry.included = false;
            entry.note = e.what();
        }
        if (entry.included) {
            lifetimes.push_back(entry.result.lifetime_s());
            errors.push_back(entry.result.lifetime_error_s());
        }
        study.entries.push_back(std::move(entry));
    }

    if (!errors.empty()) {
        study.mean_fit_error_s =
            std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    }
    if (lifetimes.size() >= 2) {
        const double mean = std::accumulate(lifetimes.begin(), lifetimes.end(), 0.0) /
                            static_cast<double>(lifetimes.size());
        double ss = 0.0;
        for (double v : lifetimes) {
            ss += (v - mean) * (v - mean);
        }
        study.lifetime_spread_s = std::sqrt(ss / static_cast<double>(lifetimes.size() - 1));
    }
    study.spread_to_error_ratio =
        study.mean_fit_error_s > 0.0 ? study.lifetime_spread_s / study.mean_fit_error_s : 0.0;
    return study;
}

StudyAggregate aggregate_studies(std::span<const BackgroundStudy> studies) {
    require(!studies.empty(), "study aggregate needs at least one study");
    StudyAggregate agg;
    double spread_sum = 0.0;
    double error_sum = 0.0;
    for (const auto& s : studies) {
        agg.mean_of_ratios += s.spread_to_error_ratio;
        spread_sum += s.lifetime_spread_s;
        error_sum += s.mean_fit_error_s;
    }
    agg.mean_of_ratios /= static_cast<double>(studies.size());
    agg.ratio_of_means = error_sum > 0.0 ? spread_sum / error_sum : 0.0;
    return agg;
}

double detection_efficiency(double count_rate_hz, double dark_rate_hz,
                            double expected_photon_rate_hz) {
    require(expected_photon_rate_hz > 0.0, "expected photon rate must be positive");
    require(dark_rate_hz >= 0.0, "dark rate must be nonnegative");
    if (count_rate_hz < dark_rate_hz) {
        throw std::invalid_argument("analysis: count rate below dark rate gives negative efficiency");
    }
    return (count_rate_hz - dark_rate_hz) / expected_photon_rate_hz;
}

std::vector<std::pair<double, double>> load_wavelength_pairs(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("pairs: empty input, expected header");
    }
    std::vector<std::pair<double, double>> pairs;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
            throw ParseError("pairs row " + std::to_string(row) + ": expected two fields");
        }
        try {
            pairs.emplace_back(std::stod(a), std::stod(b));
        } catch (const std::exception&) {
            throw ParseError("pairs row " + std::to_string(row) + ": bad number");
        }
    }
    return pairs;
}

std::vector<std::pair<double, double>> load_wavelength_pairs_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("pairs: cannot open '" + path + "'");
    }
    return load_wavelength_pairs(in);
}

double off_resonant_wavelength_nm(const SiteResonance& site,
                                  std::span<const std::pair<double, double>> pairs) {
    // Explicit pair if one lies within 2 pm of the line center.
    double best_distance = 0.002;
    const double* best = nullptr;
    for (const auto& [on_nm, off_nm] : pairs) {
        const double d = std::abs(on_nm - site.center_wavelength_nm);
        if (d <= best_distance) {
            best_distance = d;
            best = &off_nm;
        }
    }
    if (best != nullptr) {
        return *best;
    }
    // Default: two FWHM to the side (toward shorter wavelength).
    const double f = site.center_frequency_hz() + 2.0 * site.inhomogeneous_fwhm_hz;
    return frequency_hz_to_wavelength_nm(f);
}

}  // namespace plesim::analysis
