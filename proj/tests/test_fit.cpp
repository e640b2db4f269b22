#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "plesim/errors.hpp"
#include "plesim/fit.hpp"
#include "plesim/rng.hpp"
#include "plesim/synth.hpp"

using namespace plesim;
using fit::ModelFunction;

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return x;
}

Spectrum spectrum_from_cpp(const std::vector<double>& cpp, double f0 = 194e12,
                           double step = 50e6) {
    Spectrum s;
    s.f0_hz = f0;
    s.step_hz = step;
    s.protocol.repetitions = 1000;
    // counts = cpp * reps * efficiency
    const double scale = 1000.0 * s.detector.system_detection_efficiency;
    for (double v : cpp) {
        s.counts.push_back(v * scale);
    }
    return s;
}

std::vector<double> two_line_cpp(double a1, double a2, std::size_t n = 4000) {
    // Two grid-resolved Lorentzians (28 and 24 steps FWHM, 120 steps
    // apart, i.e. 6 GHz at the 50 MHz step) on a flat background.
    std::vector<double> cpp(n, 0.05);
    const double c1 = 1800.0;
    const double c2 = 1920.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i);
        cpp[i] += a1 / (1.0 + std::pow(2.0 * (x - c1) / 28.0, 2)) +
                  a2 / (1.0 + std::pow(2.0 * (x - c2) / 24.0, 2));
    }
    return cpp;
}

// O(n^2) reference prominence: walk to the nearest higher point on each
// side, take the minimum en route, prominence above the higher base.
double prominence_oracle(const std::vector<double>& s, std::size_t peak) {
    double left_min = s[peak];
    for (std::size_t i = peak; i-- > 0;) {
        if (s[i] > s[peak]) {
            break;
        }
        left_min = std::min(left_min, s[i]);
    }
    double right_min = s[peak];
    for (std::size_t i = peak + 1; i < s.size(); ++i) {
        if (s[i] > s[peak]) {
            break;
        }
        right_min = std::min(right_min, s[i]);
    }
    return s[peak] - std::max(left_min, right_min);
}

}  // namespace

TEST_CASE("noiseless Lorentzian recovered to 1e-6 from perturbed starts") {
    const auto model = fit::lorentzian_peak_model();
    const std::array<double, 4> truth{0.37, 2.1, 9.0, 0.8};
    const auto x = linspace(-12.0, 12.0, 201);
    std::vector<double> y(x.size());
    model.evaluate(truth, x, y);

    CounterRng rng(11, 0);
    for (int rep = 0; rep < 20; ++rep) {
        std::array<double, 4> start{};
        for (std::size_t j = 0; j < 4; ++j) {
            start[j] = truth[j] * (1.0 + 0.6 * (rng.next_double() - 0.5));
        }
        const FitResult fr = fit::least_squares_fit(model, x, y, {}, start);
        CHECK(fr.converged);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(std::abs(fr.parameters[j].value - truth[j]) / truth[j] < 1e-6);
        }
        // Residuals on exact data vanish to well below the amplitude.
        const double rms = std::sqrt(fr.residual_sum_of_squares / static_cast<double>(x.size()));
        CHECK(rms < 1e-9 * truth[2]);
    }
}

TEST_CASE("noiseless biexponential recovered to 1e-6") {
    const auto model = fit::biexponential_model();
    // Time in ms; constants 0.2 and 0.8 ms with equal amplitudes.
    const std::array<double, 5> truth{50.0, 0.2, 50.0, 0.8, 0.0};
    const auto x = linspace(0.005, 5.0, 500);
    std::vector<double> y(x.size());
    model.evaluate(truth, x, y);
    const std::array<double, 5> start{60.0, 0.15, 40.0, 1.0, 0.1};
    const FitResult fr = fit::least_squares_fit(model, x, y, {}, start);
    CHECK(fr.converged);
    CHECK(std::abs(fr.value("tau1") - 0.2) < 1e-6 * 0.2);
    CHECK(std::abs(fr.value("tau2") - 0.8) < 1e-6 * 0.8);
    CHECK(std::abs(fr.value("amplitude1") - 50.0) < 1e-4);
    CHECK(std::abs(fr.value("amplitude2") - 50.0) < 1e-4);
}

TEST_CASE("Monte Carlo coverage: fitted width within 3 standard errors") {
    // Poisson-noisy Lorentzian at the strongest catalog line's scale:
    // peak 25 counts/pulse x 1000 repetitions.
    const double reps = 1000.0;
    const std::array<double, 4> truth{0.0, 1.43, 25.0 * reps * 0.6627, 60.0};
    const auto model = fit::lorentzian_peak_model();
    const auto x = linspace(-7.0, 7.0, 281);  // GHz
    std::vector<double> clean(x.size());
    model.evaluate(truth, x, clean);

    int covered = 0;
    const int replicates = 500;
    for (int rep = 0; rep < replicates; ++rep) {
        std::vector<double> y(x.size()), w(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CounterRng rng(5000 + static_cast<std::uint64_t>(rep), i);
            y[i] = static_cast<double>(poisson_draw(rng, clean[i]));
            w[i] = 1.0 / std::max(y[i], 1.0);
        }
        const std::array<double, 4> start{0.05, 1.2, 15000.0, 80.0};
        const FitResult fr = fit::least_squares_fit(model, x, y, w, start);
        if (std::abs(fr.value("fwhm") - truth[1]) <= 3.0 * fr.error("fwhm")) {
            ++covered;
        }
    }
    CHECK(covered >= static_cast<int>(0.99 * replicates));
}

TEST_CASE("rank-deficient models are reported") {
    ModelFunction degenerate;
    degenerate.parameters = {{"a", ""}, {"b", ""}};
    degenerate.evaluate = [](std::span<const double> p, std::span<const double> x,
                             std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = (p[0] + p[1]) * x[i];
        }
    };
    const auto x = linspace(0.0, 1.0, 10);
    std::vector<double> y(x.size());
    degenerate.evaluate(std::array<double, 2>{1.0, 2.0}, x, y);
    CHECK_THROWS_AS(
        fit::least_squares_fit(degenerate, x, y, {}, std::array<double, 2>{1.0, 1.0}),
        AnalysisError);
}

TEST_CASE("iteration cap flags a non-converged result") {
    const auto model = fit::lorentzian_peak_model();
    const std::array<double, 4> truth{0.0, 2.0, 10.0, 1.0};
    const auto x = linspace(-10.0, 10.0, 101);
    std::vector<double> y(x.size());
    model.evaluate(truth, x, y);
    fit::FitOptions options;
    options.max_iterations = 2;
    const std::array<double, 4> start{2.0, 4.0, 3.0, 0.0};
    const FitResult fr = fit::least_squares_fit(model, x, y, {}, start, options);
    CHECK_FALSE(fr.converged);
    CHECK(fr.convergence_reason == "max_iterations");
}

TEST_CASE("preconditions") {
    const auto model = fit::lorentzian_peak_model();
    const auto x = linspace(0.0, 1.0, 3);  // fewer points than parameters + 1
    std::vector<double> y(x.size(), 1.0);
    CHECK_THROWS_AS(
        fit::least_squares_fit(model, x, y, {}, std::array<double, 4>{0.0, 1.0, 1.0, 0.0}),
        std::invalid_argument);
    const auto x5 = linspace(0.0, 1.0, 5);
    std::vector<double> y5(x5.size(), 1.0);
    const double nan = std::nan("");
    CHECK_THROWS_AS(
        fit::least_squares_fit(model, x5, y5, {}, std::array<double, 4>{nan, 1.0, 1.0, 0.0}),
        std::invalid_argument);
}

TEST_CASE("peak detection on fixtures") {
    SUBCASE("flat spectrum has no peaks") {
        const Spectrum s = spectrum_from_cpp(std::vector<double>(500, 0.25));
        CHECK(fit::detect_peaks(s, 0.15).empty());
    }
    SUBCASE("grid-resolved pair is found and thresholded") {
        const Spectrum both = spectrum_from_cpp(two_line_cpp(0.2, 0.2));
        const auto peaks = fit::detect_peaks(both, 0.15);
        REQUIRE(peaks.size() == 2);
        CHECK(std::abs(static_cast<double>(peaks[0].index) - 1800.0) <= 3.0);
        CHECK(std::abs(static_cast<double>(peaks[1].index) - 1920.0) <= 3.0);

        const Spectrum one = spectrum_from_cpp(two_line_cpp(0.2, 0.1));
        const auto single = fit::detect_peaks(one, 0.15);
        REQUIRE(single.size() == 1);
        CHECK(std::abs(static_cast<double>(single[0].index) - 1800.0) <= 3.0);
    }
    SUBCASE("reported prominences match the brute-force oracle") {
        fit::PeakDetectOptions options;
        options.smoothing_bins = 1;  // measure on the raw series
        options.min_separation_hz = 0.0;
        const Spectrum s = spectrum_from_cpp(two_line_cpp(0.9, 0.4));
        const auto peaks = fit::detect_peaks(s, options);
        REQUIRE(peaks.size() == 2);
        std::vector<double> cpp(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            cpp[i] = s.counts_per_pulse(i);
        }
        for (const auto& p : peaks) {
            CHECK(p.prominence_cpp ==
                  doctest::Approx(prominence_oracle(cpp, p.index)).epsilon(1e-12));
            CHECK(p.left_base <= p.index);
            CHECK(p.right_base >= p.index);
        }
    }
    SUBCASE("prominence scales with the data") {
        const Spectrum base = spectrum_from_cpp(two_line_cpp(0.6, 0.3));
        const auto reference = fit::detect_peaks(base, 0.15);
        Spectrum scaled = base;
        for (auto& c : scaled.counts) {
            c *= 4.2;
        }
        const auto peaks = fit::detect_peaks(scaled, 0.15 * 4.2);
        REQUIRE(peaks.size() == reference.size());
        for (std::size_t i = 0; i < peaks.size(); ++i) {
            CHECK(peaks[i].index == reference[i].index);
            CHECK(peaks[i].prominence_cpp ==
                  doctest::Approx(4.2 * reference[i].prominence_cpp).epsilon(1e-9));
        }
    }
}

TEST_CASE("Lorentzian peak fit on spectra") {
    SUBCASE("survey-statistics line recovers center and width") {
        // A line like the widest catalog entry: 2.82 GHz FWHM.
        std::vector<double> cpp(6000, 0.09);
        const double c0 = 3000.0;
        for (std::size_t i = 0; i < cpp.size(); ++i) {
            const double x = static_cast<double>(i);
            cpp[i] += 0.59 / (1.0 + std::pow(2.0 * (x - c0) / 56.4, 2));
        }
        Spectrum expected = spectrum_from_cpp(cpp);
        const Spectrum noisy = sample_spectrum(expected, 321);
        const auto peaks = fit::detect_peaks(noisy, 0.15);
        REQUIRE(peaks.size() == 1);
        const FitResult fr = fit::fit_lorentzian_peak(noisy, peaks[0], peaks);
        CHECK(std::abs(fr.value("center_hz") - expected.frequency_at(3000)) < 50e6);
        CHECK(std::abs(fr.value("fwhm_hz") - 2.82e9) / 2.82e9 < 0.05);
        CHECK(fr.value("amplitude") == doctest::Approx(0.59).epsilon(0.10));
    }
    SUBCASE("1.5 GHz fixture comes back within 0.1 GHz") {
        std::vector<double> cpp(4000, 0.09);
        const double c0 = 2000.0;
        for (std::size_t i = 0; i < cpp.size(); ++i) {
            const double x = static_cast<double>(i);
            cpp[i] += 1.13 / (1.0 + std::pow(2.0 * (x - c0) / 30.0, 2));
        }
        const Spectrum noisy = sample_spectrum(spectrum_from_cpp(cpp), 77);
        const auto peaks = fit::detect_peaks(noisy, 0.15);
        REQUIRE(peaks.size() == 1);
        const FitResult fr = fit::fit_lorentzian_peak(noisy, peaks[0], peaks);
        CHECK(std::abs(fr.value("fwhm_hz") - 1.5e9) < 0.1e9);
    }
    SUBCASE("noiseless symmetric line centers on the grid argmax") {
        const Spectrum s = spectrum_from_cpp(two_line_cpp(0.9, 0.4));
        const auto peaks = fit::detect_peaks(s, 0.15);
        REQUIRE(peaks.size() == 2);
        const FitResult fr = fit::fit_lorentzian_peak(s, peaks[0], peaks);
        CHECK(std::abs(fr.value("center_hz") - peaks[0].center_hz) <= s.step_hz);
    }
    SUBCASE("too-small window is an error") {
        const Spectrum s = spectrum_from_cpp(two_line_cpp(0.9, 0.4));
        auto peaks = fit::detect_peaks(s, 0.15);
        REQUIRE(peaks.size() == 2);
        // Surround the candidate with fake neighbors two steps away.
        std::vector<fit::PeakCandidate> crowd = peaks;
        crowd.push_back(fit::PeakCandidate{peaks[0].index - 2, 0.0, 1.0, 0, 0});
        crowd.push_back(fit::PeakCandidate{peaks[0].index + 2, 0.0, 1.0, 0, 0});
        CHECK_THROWS_AS(fit::fit_lorentzian_peak(s, peaks[0], crowd), AnalysisError);
    }
}

TEST_CASE("decay model selection") {
    const double reps_eta = 1000.0 * 0.6627;
    SUBCASE("noiseless single exponential stays single") {
        const auto x = linspace(0.015e-3, 5e-3, 499);
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = 40.0 * std::exp(-x[i] / 0.807e-3);
        }
        const auto sel = fit::select_decay_model(x, y);
        CHECK(sel.model == fit::DecayModel::single);
        CHECK(sel.fit.value("tau_s") == doctest::Approx(0.807e-3).epsilon(1e-9));
    }
    SUBCASE("biexponential chosen on genuinely biexponential counts") {
        const auto x = linspace(0.015e-3, 5e-3, 499);
        std::vector<double> clean(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            clean[i] = reps_eta * 0.1 *
                       (std::exp(-x[i] / 0.3e-3) + std::exp(-x[i] / 1.0e-3));
        }
        int chosen = 0;
        const int replicates = 200;
        for (int rep = 0; rep < replicates; ++rep) {
            std::vector<double> y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                CounterRng rng(9000 + static_cast<std::uint64_t>(rep), i);
                y[i] = static_cast<double>(poisson_draw(rng, clean[i]));
            }
            const auto sel = fit::select_decay_model(x, y);
            chosen += sel.model == fit::DecayModel::biexponential ? 1 : 0;
        }
        CHECK(chosen >= static_cast<int>(0.95 * replicates));
    }
    SUBCASE("starred-line twin with an injected second component flags biexponential") {
        // 1534.195-like strong starred line: tau 0.788 ms with a 35%
        // component injected at 0.25 ms.
        const auto x = linspace(0.015e-3, 5e-3, 499);
        std::vector<double> clean(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            clean[i] = reps_eta * (0.45 * std::exp(-x[i] / 0.788e-3) +
                                   0.24 * std::exp(-x[i] / 0.25e-3));
        }
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CounterRng rng(4242, i);
            y[i] = static_cast<double>(poisson_draw(rng, clean[i]));
        }
        const auto sel = fit::select_decay_model(x, y);
        CHECK(sel.model == fit::DecayModel::biexponential);
        CHECK(sel.fit.value("tau1_s") < sel.fit.value("tau2_s"));
    }
    SUBCASE("too few bins rejected") {
        const auto x = linspace(0.0, 1.0, 10);
        std::vector<double> y(x.size(), 1.0);
        CHECK_THROWS_AS(fit::select_decay_model(x, y), std::invalid_argument);
    }
}

TEST_CASE("standard errors shrink as one over the square root of repetitions") {
    const auto model = fit::lorentzian_peak_model();
    const auto x = linspace(-6.0, 6.0, 241);
    std::vector<double> se(3);
    const std::array<double, 3> reps{1e3, 1e4, 1e5};
    for (std::size_t k = 0; k < reps.size(); ++k) {
        const std::array<double, 4> truth{0.0, 1.5, 2.0 * reps[k], 0.05 * reps[k]};
        std::vector<double> clean(x.size()), y(x.size()), w(x.size());
        model.evaluate(truth, x, clean);
        for (std::size_t i = 0; i < x.size(); ++i) {
            CounterRng rng(31 + k, i);
            y[i] = static_cast<double>(poisson_draw(rng, clean[i]));
            w[i] = 1.0 / std::max(y[i], 1.0);
        }
        const FitResult fr = fit::least_squares_fit(model, x, y, w, truth);
        se[k] = fr.error("fwhm");
    }
    CHECK(se[0] / se[1] == doctest::Approx(std::sqrt(10.0)).epsilon(0.25));
    CHECK(se[1] / se[2] == doctest::Approx(std::sqrt(10.0)).epsilon(0.25));
}
