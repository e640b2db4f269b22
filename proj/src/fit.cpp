#include "plesim/fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "plesim/errors.hpp"

namespace plesim::fit {

namespace {

constexpr double kLambdaCeiling = 1e100;

Eigen::MatrixXd numeric_jacobian(const ModelFunction& model, std::span<const double> p,
                                 std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto k = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd jac(n, k);
    std::vector<double> pw(p.begin(), p.end());
    std::vector<double> hi(x.size()), lo(x.size());
    for (Eigen::Index j = 0; j < k; ++j) {
        const double h = 6e-6 * std::max(std::abs(pw[j]), 1e-6);
        const double saved = pw[j];
        pw[j] = saved + h;
        model.evaluate(pw, x, hi);
        pw[j] = saved - h;
        model.evaluate(pw, x, lo);
        pw[j] = saved;
        for (Eigen::Index i = 0; i < n; ++i) {
            jac(i, j) = (hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]) / (2.0 * h);
        }
    }
    return jac;
}

Eigen::MatrixXd model_jacobian(const ModelFunction& model, std::span<const double> p,
                               std::span<const double> x) {
    if (!model.jacobian) {
        return numeric_jacobian(model, p, x);
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto k = static_cast<Eigen::Index>(p.size());
    std::vector<double> buffer(x.size() * p.size());
    model.jacobian(p, x, buffer);
    Eigen::MatrixXd jac(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            jac(i, j) = buffer[static_cast<std::size_t>(i) * p.size() + static_cast<std::size_t>(j)];
        }
    }
    return jac;
}

double weighted_cost(const Eigen::VectorXd& r, const Eigen::VectorXd& w) {
    return (w.array() * r.array().square()).sum();
}

// AICc for least squares; the RSS is floored relative to the data scale
// so that exact (noiseless) fits of nested models compare as ties.
double corrected_aic(double rss, std::size_t n_points, std::size_t n_params, double data_scale) {
    const double n = static_cast<double>(n_points);
    const double k = static_cast<double>(n_params);
    const double floor = n * std::pow(1e-12 * std::max(data_scale, 1e-300), 2);
    double aicc = n * std::log(std::max(rss, floor) / n) + 2.0 * k;
    if (n - k - 1.0 > 0.0) {
        aicc += 2.0 * k * (k + 1.0) / (n - k - 1.0);
    } else {
        aicc = std::numeric_limits<double>::infinity();
    }
    return aicc;
}

}  // namespace

FitResult least_squares_fit(const ModelFunction& model, std::span<const double> x,
                            std::span<const double> y, std::span<const double> weights,
                            std::span<const double> initial, const FitOptions& options) {
    const std::size_t n = x.size();
    const std::size_t k = model.parameters.size();
    if (y.size() != n) {
        throw std::invalid_argument("fit: x and y sizes differ");
    }
    if (initial.size() != k) {
        throw std::invalid_argument("fit: initial guess size does not match the model");
    }
    if (n < k + 1) {
        throw std::invalid_argument("fit: need at least parameters+1 data points");
    }
    if (!weights.empty() && weights.size() != n) {
        throw std::invalid_argument("fit: weights size does not match the data");
    }
    for (double v : initial) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("fit: initial guess must be finite");
        }
    }

    Eigen::VectorXd w(n);
    if (weights.empty()) {
        w.setOnes();
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            if (!(weights[i] >= 0.0)) {
                throw std::invalid_argument("fit: weights must be nonnegative");
            }
            w(static_cast<Eigen::Index>(i)) = weights[i];
        }
    }

    std::vector<double> p(initial.begin(), initial.end());
    std::vector<double> yhat(n);
    const auto residual = [&](std::span<const double> params) {
        model.evaluate(params, x, yhat);
        Eigen::VectorXd r(n);
        for (std::size_t i = 0; i < n; ++i) {
            r(static_cast<Eigen::Index>(i)) = y[i] - yhat[i];
        }
        return r;
    };

    Eigen::VectorXd r = residual(p);
    double cost = weighted_cost(r, w);

    Eigen::MatrixXd jac = model_jacobian(model, p, x);
    Eigen::MatrixXd normal = jac.transpose() * w.asDiagonal() * jac;
    Eigen::VectorXd gradient = jac.transpose() * (w.array() * r.array()).matrix();

    double lambda = options.lambda0_scale * normal.diagonal().maxCoeff();
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        lambda = options.lambda0_scale;
    }

    FitResult result;
    result.convergence_reason = "max_iterations";
    int iteration = 0;
    for (; iteration < options.max_iterations; ++iteration) {
        if (gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            result.converged = true;
            result.convergence_reason = "gradient";
            break;
        }
        Eigen::MatrixXd damped = normal;
        damped.diagonal().array() += lambda;
        Eigen::VectorXd step = damped.ldlt().solve(gradient);
        if (!step.allFinite()) {
            throw AnalysisError("fit: rank-deficient normal matrix");
        }

        std::vector<double> trial(p);
        for (std::size_t j = 0; j < k; ++j) {
            trial[j] += step(static_cast<Eigen::Index>(j));
        }
        Eigen::VectorXd r_trial = residual(trial);
        const double cost_trial = weighted_cost(r_trial, w);

        if (std::isfinite(cost_trial) && cost_trial <= cost) {
            double p_norm = 0.0;
            for (double v : p) {
                p_norm += v * v;
            }
            p_norm = std::sqrt(p_norm);
            const double step_norm = step.norm();
            p = std::move(trial);
            r = std::move(r_trial);
            cost = cost_trial;
            lambda = std::max(lambda / 10.0, 1e-300);
            jac = model_jacobian(model, p, x);
            normal = jac.transpose() * w.asDiagonal() * jac;
            gradient = jac.transpose() * (w.array() * r.array()).matrix();
            if (step_norm <= options.parameter_tolerance * (p_norm + options.parameter_tolerance)) {
                result.converged = true;
                result.convergence_reason = "parameter_change";
                ++iteration;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > kLambdaCeiling) {
                break;
            }
        }
    }

    result.iterations = iteration;
    result.gradient_norm = gradient.lpNorm<Eigen::Infinity>();
    result.residual_sum_of_squares = cost;

    double data_scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        data_scale = std::max(data_scale, std::abs(y[i]));
    }
    result.aicc = corrected_aic(cost, n, k, data_scale);

    // Covariance from the undamped normal matrix, scaled by reduced chi2.
    const auto identity = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k),
                                                    static_cast<Eigen::Index>(k));
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    bool singular = ldlt.info() != Eigen::Success || !(normal.diagonal().maxCoeff() > 0.0);
    if (!singular) {
        // Pivot spectrum: a vanishing (or negative) pivot relative to the
        // largest one means some parameter combination is unidentifiable.
        const Eigen::VectorXd d = ldlt.vectorD();
        singular = d.minCoeff() <= 1e-13 * d.maxCoeff();
    }
    Eigen::MatrixXd cov;
    if (!singular) {
        cov = ldlt.solve(identity);
        singular = !cov.allFinite() ||
                   (normal * cov - identity).cwiseAbs().maxCoeff() > 1e-6 * static_cast<double>(k);
    }
    if (singular) {
        throw AnalysisError("fit: rank-deficient normal matrix");
    }

    const double reduced_chi2 = n > k ? cost / static_cast<double>(n - k) : 0.0;
    result.parameters.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        result.parameters[j].name = model.parameters[j].name;
        result.parameters[j].unit = model.parameters[j].unit;
        result.parameters[j].value = p[j];
        const double var = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        result.parameters[j].std_error = std::sqrt(std::max(var * reduced_chi2, 0.0));
    }
    return result;
}

ModelFunction lorentzian_peak_model() {
    ModelFunction m;
    m.parameters = {{"center", ""}, {"fwhm", ""}, {"amplitude", ""}, {"offset", ""}};
    m.evaluate = [](std::span<const double> p, std::span<const double> x, std::span<double> y) {
        const double half = 0.5 * p[1];
        const double h2 = half * half;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - p[0];
            y[i] = p[3] + p[2] * h2 / (d * d + h2);
        }
    };
    m.jacobian = [](std::span<const double> p, std::span<const double> x, std::span<double> jac) {
        const double half = 0.5 * p[1];
        const double h2 = half * half;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - p[0];
            const double denom = d * d + h2;
            const double l = h2 / denom;
            jac[i * 4 + 0] = p[2] * 2.0 * d * h2 / (denom * denom);
            jac[i * 4 + 1] = p[2] * half * d * d / (denom * denom);
            jac[i * 4 + 2] = l;
            jac[i * 4 + 3] = 1.0;
        }
    };
    return m;
}

ModelFunction lorentzian_dip_model() {
    ModelFunction m;
    m.parameters = {{"plateau", ""}, {"depth", ""}, {"center", ""}, {"fwhm", ""}};
    m.evaluate = [](std::span<const double> p, std::span<const double> x, std::span<double> y) {
        const double half = 0.5 * p[3];
        const double h2 = half * half;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - p[2];
            y[i] = p[0] - p[1] * h2 / (d * d + h2);
        }
    };
    m.jacobian = [](std::span<const double> p, std::span<const double> x, std::span<double> jac) {
        const double half = 0.5 * p[3];
        const double h2 = half * half;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - p[2];
            const double denom = d * d + h2;
            jac[i * 4 + 0] = 1.0;
            jac[i * 4 + 1] = -h2 / denom;
            jac[i * 4 + 2] = -p[1] * 2.0 * d * h2 / (denom * denom);
            jac[i * 4 + 3] = -p[1] * half * d * d / (denom * denom);
        }
    };
    return m;
}

ModelFunction multi_lorentzian_model(std::size_t peaks) {
    if (peaks == 0) {
        throw std::invalid_argument("fit: multi-Lorentzian model needs at least one peak");
    }
    ModelFunction m;
    for (std::size_t p = 0; p < peaks; ++p) {
        const std::string suffix = std::to_string(p + 1);
        m.parameters.push_back({"center" + suffix, ""});
        m.parameters.push_back({"fwhm" + suffix, ""});
        m.parameters.push_back({"amplitude" + suffix, ""});
    }
    m.parameters.push_back({"offset", ""});
    m.evaluate = [peaks](std::span<const double> p, std::span<const double> x,
                         std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double v = p[3 * peaks];
            for (std::size_t k = 0; k < peaks; ++k) {
                const double half = 0.5 * p[3 * k + 1];
                const double h2 = half * half;
                const double d = x[i] - p[3 * k];
                v += p[3 * k + 2] * h2 / (d * d + h2);
            }
            y[i] = v;
        }
    };
    m.jacobian = [peaks](std::span<const double> p, std::span<const double> x,
                         std::span<double> jac) {
        const std::size_t cols = 3 * peaks + 1;
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t k = 0; k < peaks; ++k) {
                const double half = 0.5 * p[3 * k + 1];
                const double h2 = half * half;
                const double d = x[i] - p[3 * k];
                const double denom = d * d + h2;
                jac[i * cols + 3 * k + 0] = p[3 * k + 2] * 2.0 * d * h2 / (denom * denom);
                jac[i * cols + 3 * k + 1] = p[3 * k + 2] * half * d * d / (denom * denom);
                jac[i * cols + 3 * k + 2] = h2 / denom;
            }
            jac[i * cols + 3 * peaks] = 1.0;
        }
    };
    return m;
}

ModelFunction single_exponential_model() {
    ModelFunction m;
    m.parameters = {{"amplitude", ""}, {"tau", ""}, {"offset", ""}};
    m.evaluate = [](std::span<const double> p, std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = p[2] + p[0] * std::exp(-x[i] / p[1]);
        }
    };
    m.jacobian = [](std::span<const double> p, std::span<const double> x, std::span<double> jac) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = std::exp(-x[i] / p[1]);
            jac[i * 3 + 0] = e;
            jac[i * 3 + 1] = p[0] * e * x[i] / (p[1] * p[1]);
            jac[i * 3 + 2] = 1.0;
        }
    };
    return m;
}

ModelFunction biexponential_model() {
    ModelFunction m;
    m.parameters = {{"amplitude1", ""}, {"tau1", ""}, {"amplitude2", ""}, {"tau2", ""}, {"offset", ""}};
    m.evaluate = [](std::span<const double> p, std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = p[4] + p[0] * std::exp(-x[i] / p[1]) + p[2] * std::exp(-x[i] / p[3]);
        }
    };
    m.jacobian = [](std::span<const double> p, std::span<const double> x, std::span<double> jac) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e1 = std::exp(-x[i] / p[1]);
            const double e2 = std::exp(-x[i] / p[3]);
            jac[i * 5 + 0] = e1;
            jac[i * 5 + 1] = p[0] * e1 * x[i] / (p[1] * p[1]);
            jac[i * 5 + 2] = e2;
            jac[i * 5 + 3] = p[2] * e2 * x[i] / (p[3] * p[3]);
            jac[i * 5 + 4] = 1.0;
        }
    };
    return m;
}

namespace {

std::vector<double> boxcar(const std::vector<double>& v, int width) {
    if (width <= 1) {
        return v;
    }
    const int half = width / 2;
    const auto n = static_cast<long>(v.size());
    std::vector<double> out(v.size());
    for (long i = 0; i < n; ++i) {
        const long lo = std::max<long>(0, i - half);
        const long hi = std::min<long>(n - 1, i + half);
        double sum = 0.0;
        for (long j = lo; j <= hi; ++j) {
            sum += v[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

struct RawPeak {
    std::size_t index;
    double value;
    double prominence;
    std::size_t left_base;
    std::size_t right_base;
};

// Local maxima with plateau handling: a run of equal values flanked by
// strictly lower neighbors counts once, at the run midpoint.
std::vector<std::size_t> local_maxima(const std::vector<double>& s) {
    std::vector<std::size_t> maxima;
    const std::size_t n = s.size();
    std::size_t i = 1;
    while (i + 1 < n) {
        if (s[i] > s[i - 1]) {
            std::size_t j = i;
            while (j + 1 < n && s[j + 1] == s[i]) {
                ++j;
            }
            if (j + 1 < n && s[j + 1] < s[i]) {
                maxima.push_back((i + j) / 2);
            }
            i = j + 1;
        } else {
            ++i;
        }
    }
    return maxima;
}

// Topographic prominence: on each side, the minimum between the peak and
// the nearest strictly higher point (or the series end); the prominence
// is the peak height above the higher of the two minima.
RawPeak measure_prominence(const std::vector<double>& s, std::size_t peak) {
    const double v = s[peak];
    double left_min = v;
    std::size_t left_base = peak;
    for (std::size_t i = peak; i-- > 0;) {
        if (s[i] > v) {
            break;
        }
        if (s[i] < left_min) {
            left_min = s[i];
            left_base = i;
        }
    }
    double right_min = v;
    std::size_t right_base = peak;
    for (std::size_t i = peak + 1; i < s.size(); ++i) {
        if (s[i] > v) {
            break;
        }
        if (s[i] < right_min) {
            right_min = s[i];
            right_base = i;
        }
    }
    return RawPeak{peak, v, v - std::max(left_min, right_min), left_base, right_base};
}

}  // namespace

std::vector<PeakCandidate> detect_peaks(const Spectrum& spectrum, const PeakDetectOptions& options) {
    if (spectrum.empty()) {
        return {};
    }
    const double to_cpp = spectrum.counts_to_cpp();
    std::vector<double> cpp(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        cpp[i] = spectrum.counts[i] * to_cpp;
    }
    const int width = std::max(1, options.smoothing_bins | 1);
    const std::vector<double> smooth = boxcar(cpp, width);

    std::vector<RawPeak> peaks;
    for (std::size_t idx : local_maxima(smooth)) {
        RawPeak p = measure_prominence(smooth, idx);
        if (p.prominence >= options.min_prominence_cpp) {
            peaks.push_back(p);
        }
    }

    // Suppress smaller candidates crowding a taller one.
    std::vector<RawPeak> by_height(peaks);
    std::sort(by_height.begin(), by_height.end(), [](const RawPeak& a, const RawPeak& b) {
        return a.value != b.value ? a.value > b.value : a.index < b.index;
    });
    std::vector<RawPeak> kept;
    for (const RawPeak& p : by_height) {
        const bool crowded = std::any_of(kept.begin(), kept.end(), [&](const RawPeak& q) {
            const double df = (static_cast<double>(p.index) - static_cast<double>(q.index)) *
                              spectrum.step_hz;
            return std::abs(df) < options.min_separation_hz;
        });
        if (!crowded) {
            kept.push_back(p);
        }
    }
    std::sort(kept.begin(), kept.end(),
              [](const RawPeak& a, const RawPeak& b) { return a.index < b.index; });

    std::vector<PeakCandidate> out;
    out.reserve(kept.size());
    for (const RawPeak& p : kept) {
        out.push_back(PeakCandidate{p.index, spectrum.frequency_at(p.index), p.prominence,
                                    p.left_base, p.right_base});
    }
    return out;
}

std::vector<PeakCandidate> detect_peaks(const Spectrum& spectrum, double min_prominence_cpp) {
    PeakDetectOptions options;
    options.min_prominence_cpp = min_prominence_cpp;
    return detect_peaks(spectrum, options);
}

namespace {

// Half-maximum crossing width, in grid steps, measured on the smoothed
// slice between the given bounds. The baseline is the in-bounds minimum,
// so wing pedestals from neighbors raise the half level instead of
// breaking the crossing search.
double estimate_width_steps(const std::vector<double>& smooth, std::size_t peak, std::size_t lo,
                            std::size_t hi) {
    std::size_t anchor = peak;
    for (std::size_t i = peak >= 3 ? peak - 3 : 0; i <= std::min(peak + 3, hi); ++i) {
        if (i >= lo && smooth[i] > smooth[anchor]) {
            anchor = i;
        }
    }
    const double v = smooth[anchor];
    double baseline = v;
    for (std::size_t i = lo; i <= hi; ++i) {
        baseline = std::min(baseline, smooth[i]);
    }
    const double half_level = 0.5 * (v + baseline);
    std::size_t left = anchor;
    while (left > lo && smooth[left - 1] > half_level) {
        --left;
    }
    std::size_t right = anchor;
    while (right < hi && smooth[right + 1] > half_level) {
        ++right;
    }
    return std::max(static_cast<double>(right - left), 2.0);
}

}  // namespace

FitResult fit_lorentzian_peak(const Spectrum& spectrum, const PeakCandidate& candidate,
                              std::span<const PeakCandidate> all_candidates) {
    if (candidate.index >= spectrum.size()) {
        throw std::invalid_argument("fit: peak candidate index out of range");
    }
    const double to_cpp = spectrum.counts_to_cpp();
    std::vector<double> cpp(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        cpp[i] = spectrum.counts[i] * to_cpp;
    }
    const std::vector<double> smooth = boxcar(cpp, 5);

    // Hard bounds: midpoints toward neighboring candidates.
    long bound_lo = 0;
    long bound_hi = static_cast<long>(spectrum.size()) - 1;
    for (const PeakCandidate& other : all_candidates) {
        if (other.index == candidate.index) {
            continue;
        }
        const long mid = static_cast<long>(
            (static_cast<double>(other.index) + static_cast<double>(candidate.index)) / 2.0);
        if (other.index < candidate.index) {
            bound_lo = std::max(bound_lo, mid + 1);
        } else {
            bound_hi = std::min(bound_hi, mid - 1);
        }
    }
    if (bound_hi - bound_lo + 1 < 5) {
        throw AnalysisError("fit: window around peak has fewer than 5 points");
    }

    const double width_steps =
        estimate_width_steps(smooth, candidate.index, static_cast<std::size_t>(bound_lo),
                             static_cast<std::size_t>(bound_hi));

    const double half_window_steps = std::max(5.0 * width_steps, 20.0);
    const long lo = std::max(bound_lo,
                             static_cast<long>(candidate.index) -
                                 static_cast<long>(half_window_steps));
    const long hi = std::min(bound_hi,
                             static_cast<long>(candidate.index) +
                                 static_cast<long>(half_window_steps));
    if (hi - lo + 1 < 5) {
        throw AnalysisError("fit: window around peak has fewer than 5 points");
    }

    const auto n = static_cast<std::size_t>(hi - lo + 1);
    // Fit in shifted/scaled coordinates (GHz from the candidate) to keep
    // the normal matrix well conditioned.
    const double f_ref = candidate.center_hz;
    std::vector<double> x(n), y(n), w(n);
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t gi = static_cast<std::size_t>(lo) + i;
        x[i] = (spectrum.frequency_at(gi) - f_ref) / 1e9;
        y[i] = spectrum.counts[gi];
        w[i] = 1.0 / std::max(y[i], 1.0);
        if (y[i] > y[argmax]) {
            argmax = i;
        }
    }

    double edge_lo = 0.0;
    double edge_hi = 0.0;
    const std::size_t edge = std::max<std::size_t>(1, n / 20);
    for (std::size_t i = 0; i < edge; ++i) {
        edge_lo += y[i];
        edge_hi += y[n - 1 - i];
    }
    const double offset0 = std::min(edge_lo, edge_hi) / static_cast<double>(edge);
    const double amp0 = std::max(y[argmax] - offset0, 1.0);
    const double fwhm0 = width_steps * spectrum.step_hz / 1e9;
    const std::array<double, 4> p0{x[argmax], fwhm0, amp0, offset0};

    FitResult raw = least_squares_fit(lorentzian_peak_model(), x, y, w, p0);

    FitResult out = raw;
    out.parameters.clear();
    const double reps_eta = 1.0 / to_cpp;
    const auto push = [&](const std::string& name, const std::string& unit, double value,
                          double error) {
        out.parameters.push_back(FitParameter{name, unit, value, error});
    };
    push("center_hz", "Hz", f_ref + raw.value("center") * 1e9, raw.error("center") * 1e9);
    push("fwhm_hz", "Hz", std::abs(raw.value("fwhm")) * 1e9, raw.error("fwhm") * 1e9);
    push("amplitude", "counts/pulse", raw.value("amplitude") / reps_eta,
         raw.error("amplitude") / reps_eta);
    push("offset", "counts/pulse", raw.value("offset") / reps_eta, raw.error("offset") / reps_eta);
    return out;
}

namespace {

struct LogLinear {
    double amplitude;
    double tau;
};

// Weighted log-linear estimate of a decaying exponential; counts weight
// the regression so early high-count bins dominate.
std::optional<LogLinear> log_linear_estimate(std::span<const double> t,
                                             std::span<const double> c) {
    double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (c[i] > 0.0) {
            const double wi = c[i];
            const double yi = std::log(c[i]);
            sw += wi;
            st += wi * t[i];
            sy += wi * yi;
            stt += wi * t[i] * t[i];
            sty += wi * t[i] * yi;
            ++used;
        }
    }
    if (used < 3) {
        return std::nullopt;
    }
    const double denom = sw * stt - st * st;
    if (!(std::abs(denom) > 0.0)) {
        return std::nullopt;
    }
    const double slope = (sw * sty - st * sy) / denom;
    const double intercept = (sy - slope * st) / sw;
    if (!(slope < 0.0)) {
        return std::nullopt;
    }
    return LogLinear{std::exp(intercept), -1.0 / slope};
}

}  // namespace

DecaySelection select_decay_model(std::span<const double> t_s, std::span<const double> counts,
                                  std::span<const double> variance) {
    const std::size_t n = t_s.size();
    if (counts.size() != n) {
        throw std::invalid_argument("fit: time and count arrays differ in size");
    }
    if (n < 20) {
        throw std::invalid_argument("fit: decay-model selection needs at least 20 bins");
    }

    // Work in milliseconds so parameter magnitudes stay comparable.
    std::vector<double> t_ms(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        t_ms[i] = t_s[i] * 1e3;
        const double var = variance.empty() ? std::max(counts[i], 1.0) : variance[i];
        w[i] = 1.0 / std::max(var, 1e-300);
    }

    const double span_ms = t_ms.back() - t_ms.front();
    auto init = log_linear_estimate(t_ms, counts);
    const LogLinear single0 = init.value_or(LogLinear{
        std::max(*std::max_element(counts.begin(), counts.end()), 1.0), span_ms / 3.0});

    DecaySelection sel;
    bool single_ok = false;
    try {
        const std::array<double, 3> p0{single0.amplitude, single0.tau, 0.0};
        sel.single_fit = least_squares_fit(single_exponential_model(), t_ms, counts, w, p0);
        single_ok = sel.single_fit.converged && sel.single_fit.value("tau") > 0.0;
    } catch (const AnalysisError&) {
        single_ok = false;
    }

    bool biexp_ok = false;
    try {
        // Peel-off initialization: slow component from the tail, fast
        // from the early residual.
        const std::size_t tail_start = n - n * 2 / 5;
        auto tail = log_linear_estimate(std::span(t_ms).subspan(tail_start),
                                        counts.subspan(tail_start));
        const LogLinear slow0 = tail.value_or(LogLinear{single0.amplitude / 2.0, single0.tau * 2.0});
        std::vector<double> early(counts.begin(), counts.end());
        for (std::size_t i = 0; i < n; ++i) {
            early[i] -= slow0.amplitude * std::exp(-t_ms[i] / slow0.tau);
        }
        const std::size_t early_len = std::max<std::size_t>(5, n * 3 / 10);
        auto fast = log_linear_estimate(std::span(t_ms).first(early_len),
                                        std::span<const double>(early).first(early_len));
        const LogLinear fast0 = fast.value_or(LogLinear{single0.amplitude / 2.0, single0.tau / 3.0});

        const std::array<double, 5> p0{fast0.amplitude, fast0.tau, slow0.amplitude, slow0.tau, 0.0};
        sel.biexp_fit = least_squares_fit(biexponential_model(), t_ms, counts, w, p0);
        const double tau1 = sel.biexp_fit.value("tau1");
        const double tau2 = sel.biexp_fit.value("tau2");
        biexp_ok = sel.biexp_fit.converged && tau1 > 0.0 && tau2 > 0.0 &&
                   std::abs(tau1 - tau2) > 1e-6 * std::max(tau1, tau2);
    } catch (const AnalysisError&) {
        biexp_ok = false;
    }
    sel.biexp_usable = biexp_ok;

    if (!single_ok && !biexp_ok) {
        throw AnalysisError("fit: neither decay model converged");
    }

    const bool prefer_biexp =
        single_ok && biexp_ok ? (sel.single_fit.aicc - sel.biexp_fit.aicc) > 10.0 : biexp_ok && !single_ok;
    sel.model = prefer_biexp ? DecayModel::biexponential : DecayModel::single;
    FitResult chosen = prefer_biexp ? sel.biexp_fit : sel.single_fit;

    // Convert tau parameters back to seconds for reporting.
    for (FitResult* fr : {&sel.single_fit, &sel.biexp_fit, &chosen}) {
        for (auto& par : fr->parameters) {
            if (par.name.rfind("tau", 0) == 0) {
                par.name += "_s";
                par.unit = "s";
                par.value *= 1e-3;
                par.std_error *= 1e-3;
            }
        }
    }
    // Keep the biexponential components ordered fast-then-slow.
    for (FitResult* fr : {&sel.biexp_fit, prefer_biexp ? &chosen : nullptr}) {
        if (fr == nullptr || fr->parameters.size() != 5) {
            continue;
        }
        if (fr->parameters[1].value > fr->parameters[3].value) {
            std::swap(fr->parameters[0], fr->parameters[2]);
            std::swap(fr->parameters[1], fr->parameters[3]);
            fr->parameters[0].name = "amplitude1";
            fr->parameters[1].name = "tau1_s";
            fr->parameters[2].name = "amplitude2";
            fr->parameters[3].name = "tau2_s";
        }
    }
    sel.fit = std::move(chosen);
    return sel;
}

DecaySelection select_decay_model(const TimeTrace& trace) {
    std::vector<double> t(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        t[i] = trace.bin_center_s(i);
    }
    return select_decay_model(t, trace.counts);
}

}  // namespace plesim::fit
