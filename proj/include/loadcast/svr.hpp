#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loadcast/detail/text.hpp"
#include "loadcast/error.hpp"
#include "loadcast/forecast.hpp"
#include "loadcast/forecasters.hpp"
#include "loadcast/kernel.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

inline constexpr std::size_t kSvrMaxTrainPoints = 2000;
inline constexpr std::size_t kSvrDefaultMaxIter = 10'000'000;

struct SvrDualSolution {
    std::vector<double> alpha;       // upper-side multipliers
    std::vector<double> alpha_star;  // lower-side multipliers
    double bias = 0.0;
    double max_violation = 0.0;  // m(a) - M(a) at exit
    std::size_t iterations = 0;

    std::vector<double> dual_coefs() const {
        std::vector<double> out(alpha.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha[i] - alpha_star[i];
        return out;
    }
};

/// Dual objective in maximisation form:
///   -1/2 b'Kb - eps * sum(a + a*) + y'b   with b = a - a*.
inline double svr_dual_objective(const Eigen::MatrixXd& k, std::span<const double> y, double epsilon,
                                 std::span<const double> alpha, std::span<const double> alpha_star) {
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::VectorXd b(n);
    double linear = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        b(i) = alpha[u] - alpha_star[u];
        linear += -epsilon * (alpha[u] + alpha_star[u]) + y[u] * b(i);
    }
    return -0.5 * b.dot(k * b) + linear;
}

namespace detail {

// Doubled-variable form: a[0..n) = alpha, a[n..2n) = alpha*, sign +1 / -1,
// minimise 1/2 a'Qa + p'a with Q_ij = s_i s_j K, p = (eps - y, eps + y).
struct SvrViolation {
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    std::size_t j = 0;
};

inline SvrViolation svr_most_violating(std::span<const double> a, std::span<const double> grad, std::size_t n,
                                       double c) {
    SvrViolation v;
    for (std::size_t t = 0; t < 2 * n; ++t) {
        const double s = t < n ? 1.0 : -1.0;
        const double score = -s * grad[t];
        const bool up = s > 0 ? a[t] < c : a[t] > 0.0;
        const bool low = s > 0 ? a[t] > 0.0 : a[t] < c;
        if (up && score > v.m_up) {
            v.m_up = score;
            v.i = t;
        }
        if (low && score < v.m_low) {
            v.m_low = score;
            v.j = t;
        }
    }
    return v;
}

inline std::vector<double> svr_gradient(const Eigen::MatrixXd& k, std::span<const double> y, double epsilon,
                                        std::span<const double> a) {
    const std::size_t n = y.size();
    std::vector<double> grad(2 * n);
    for (std::size_t t = 0; t < 2 * n; ++t) {
        const double st = t < n ? 1.0 : -1.0;
        const std::size_t rt = t % n;
        double g = t < n ? epsilon - y[rt] : epsilon + y[rt];
        for (std::size_t u = 0; u < n; ++u) {
            const double beta = a[u] - a[u + n];
            if (beta != 0.0) g += st * k(static_cast<Eigen::Index>(rt), static_cast<Eigen::Index>(u)) * beta;
        }
        grad[t] = g;
    }
    return grad;
}

} // namespace detail

/// Largest KKT violation m(a) - M(a) of a dual point, recomputed from scratch.
inline double svr_kkt_violation(const Eigen::MatrixXd& k, std::span<const double> y, double epsilon, double c,
                                std::span<const double> alpha, std::span<const double> alpha_star) {
    const std::size_t n = y.size();
    std::vector<double> a(alpha.begin(), alpha.end());
    a.insert(a.end(), alpha_star.begin(), alpha_star.end());
    const auto grad = detail::svr_gradient(k, y, epsilon, a);
    const auto v = detail::svr_most_violating(a, grad, n, c);
    if (!std::isfinite(v.m_up) || !std::isfinite(v.m_low)) return 0.0;
    return std::max(0.0, v.m_up - v.m_low);
}

/// epsilon-insensitive SVR dual by SMO: each step optimises the maximal
/// violating pair analytically, until m(a) - M(a) < tol.
inline SvrDualSolution solve_svr_dual(const Eigen::MatrixXd& k, std::span<const double> y, double epsilon, double c,
                                      double tol, std::size_t max_iter = kSvrDefaultMaxIter) {
    if (!(epsilon > 0.0) || !(c > 0.0) || !(tol > 0.0)) {
        fail(ErrorKind::InvalidArgument, "SVR needs epsilon, C and tol all positive");
    }
    const std::size_t n = y.size();
    if (n == 0 || static_cast<std::size_t>(k.rows()) != n || static_cast<std::size_t>(k.cols()) != n) {
        fail(ErrorKind::InvalidArgument, "SVR kernel matrix does not match the targets");
    }
    constexpr double tau = 1e-12;
    auto kk = [&](std::size_t s, std::size_t t) {
        return k(static_cast<Eigen::Index>(s % n), static_cast<Eigen::Index>(t % n));
    };
    auto sign = [n](std::size_t t) { return t < n ? 1.0 : -1.0; };

    std::vector<double> a(2 * n, 0.0);
    std::vector<double> grad(2 * n);
    for (std::size_t t = 0; t < n; ++t) {
        grad[t] = epsilon - y[t];
        grad[t + n] = epsilon + y[t];
    }

    std::size_t iter = 0;
    detail::SvrViolation v;
    while (true) {
        v = detail::svr_most_violating(a, grad, n, c);
        if (v.m_up - v.m_low < tol) break;
        if (iter >= max_iter) {
            fail(ErrorKind::NonConvergence, "SMO hit " + std::to_string(max_iter) + " iterations with violation " +
                                                detail::format_shortest(v.m_up - v.m_low));
        }
        ++iter;
        const std::size_t i = v.i;
        const std::size_t j = v.j;
        const double si = sign(i);
        const double sj = sign(j);
        const double qij = si * sj * kk(i, j);
        const double qii = kk(i, i);
        const double qjj = kk(j, j);
        const double old_i = a[i];
        const double old_j = a[j];

        if (si != sj) {
            double quad = qii + qjj + 2.0 * qij;
            if (quad <= 0.0) quad = tau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > c) {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if (a[j] > c) {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            double quad = qii + qjj - 2.0 * qij;
            if (quad <= 0.0) quad = tau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > c) {
                if (a[i] > c) {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if (a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = sum;
            }
            if (sum > c) {
                if (a[j] > c) {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = sum;
            }
        }

        const double di = a[i] - old_i;
        const double dj = a[j] - old_j;
        for (std::size_t t = 0; t < 2 * n; ++t) {
            const double st = sign(t);
            grad[t] += st * si * kk(t, i) * di + st * sj * kk(t, j) * dj;
        }
    }

    // Offset from free multipliers, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < 2 * n; ++t) {
        const double st = sign(t);
        const double yg = st * grad[t];
        if (a[t] >= c) {
            if (st < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (a[t] <= 0.0) {
            if (st > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++free_count;
            free_sum += yg;
        }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2.0;

    SvrDualSolution sol;
    sol.alpha.assign(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n));
    sol.alpha_star.assign(a.begin() + static_cast<std::ptrdiff_t>(n), a.end());
    sol.bias = -rho;
    sol.max_violation = std::max(0.0, v.m_up - v.m_low);
    sol.iterations = iter;
    return sol;
}

// ---------------------------------------------------------------------------
// Load-series SVR over daily lags and time of day.

/// Feature row: loads 1, 2 and 3 days back (standardised) and the time of day
/// on the unit circle.
inline constexpr Eigen::Index kSvrFeatureCount = 5;

struct SVRModel {
    KernelSpec kernel;
    Eigen::MatrixXd support_vectors;  // rows in feature space
    std::vector<double> dual_coefs;   // alpha - alpha*, standardised units, |.| <= C
    std::vector<std::size_t> support_indices;  // rows of the training design they came from
    double bias = 0.0;                // standardised units
    double epsilon = 0.0;             // kW
    double c = 10.0;
    double target_mean = 0.0;
    double target_scale = 1.0;
    int resolution_minutes = 60;
    double kkt_violation = 0.0;
    std::size_t iterations = 0;

    std::size_t steps_per_day() const noexcept { return static_cast<std::size_t>(loadcast::steps_per_day(resolution_minutes)); }

    /// Prediction for an already-built feature row, in kW.
    template <class Row>
    double evaluate(const Row& features) const {
        double f = bias;
        for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) {
            f += dual_coefs[static_cast<std::size_t>(i)] * kernel_value(kernel, support_vectors.row(i), features);
        }
        return target_mean + target_scale * f;
    }
};

struct SvrDesign {
    Eigen::MatrixXd features;
    std::vector<double> targets;  // standardised
};

inline Eigen::Matrix<double, 1, kSvrFeatureCount> svr_features(double lag1, double lag2, double lag3, std::size_t step,
                                                               std::size_t spd, double mean, double scale) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(step) / static_cast<double>(spd);
    Eigen::Matrix<double, 1, kSvrFeatureCount> row;
    row << (lag1 - mean) / scale, (lag2 - mean) / scale, (lag3 - mean) / scale, std::sin(phase), std::cos(phase);
    return row;
}

inline KernelSpec default_svr_kernel() { return {KernelKind::rbf, 2.0, 24.0, 1.0, 0.0}; }

/// Fits on (lag features -> load) pairs drawn from `train`. Epsilon is in kW
/// (default 0.1 x target std); constant training loads give a bias-only model.
inline SVRModel svr_fit(const LoadSeries& train, std::optional<double> epsilon = std::nullopt, double c = 10.0,
                        KernelSpec kernel = default_svr_kernel(), double tol = 1e-3,
                        std::size_t max_iter = kSvrDefaultMaxIter) {
    kernel.validate();
    if ((epsilon && !(*epsilon > 0.0)) || !(c > 0.0) || !(tol > 0.0)) {
        fail(ErrorKind::InvalidArgument, "SVR needs epsilon, C and tol all positive");
    }
    const std::size_t spd = train.steps_per_day();
    const std::size_t first = 3 * spd;
    if (train.size() <= first) {
        fail(ErrorKind::InsufficientContext, "SVR training needs more than 3 days of history in '" + train.series_id() + "'");
    }
    const auto& v = train.values();
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    const double stddev = std::sqrt(var / static_cast<double>(v.size()));

    SVRModel m;
    m.kernel = kernel;
    m.c = c;
    m.resolution_minutes = train.resolution_minutes();
    m.epsilon = epsilon.value_or(0.1 * stddev);
    if (!(stddev > 0.0)) {
        // DegenerateData: constant load, nothing to learn beyond the level.
        m.bias = v.front();
        m.support_vectors.resize(0, kSvrFeatureCount);
        if (!(m.epsilon > 0.0)) m.epsilon = 1e-12;
        return m;
    }
    m.target_mean = mean;
    m.target_scale = stddev;

    const std::size_t available = train.size() - first;
    const std::size_t stride = (available + kSvrMaxTrainPoints - 1) / kSvrMaxTrainPoints;
    const std::size_t n = (available + stride - 1) / stride;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), kSvrFeatureCount);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t t = first + r * stride;
        x.row(static_cast<Eigen::Index>(r)) =
            svr_features(v[t - spd], v[t - 2 * spd], v[t - 3 * spd], step_of_day(train.timestamp(t), m.resolution_minutes),
                         spd, mean, stddev);
        y[r] = (v[t] - mean) / stddev;
    }
    const Eigen::MatrixXd k = gram(kernel, x);
    const auto sol = solve_svr_dual(k, y, m.epsilon / stddev, c, tol, max_iter);
    m.bias = sol.bias;
    m.kkt_violation = sol.max_violation;
    m.iterations = sol.iterations;
    const auto beta = sol.dual_coefs();
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (beta[i] != 0.0) {
            rows.push_back(static_cast<Eigen::Index>(i));
            m.dual_coefs.push_back(beta[i]);
            m.support_indices.push_back(i);
        }
    }
    m.support_vectors.resize(static_cast<Eigen::Index>(rows.size()), kSvrFeatureCount);
    for (std::size_t r = 0; r < rows.size(); ++r) m.support_vectors.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    return m;
}

/// Point forecast. Steps more than a day ahead read earlier predictions for
/// their lags.
inline std::vector<double> svr_predict(const SVRModel& m, std::span<const double> context, std::size_t horizon,
                                       Timestamp target_start) {
    const std::size_t spd = m.steps_per_day();
    if (context.size() < 3 * spd) {
        fail(ErrorKind::InsufficientContext, "SVR needs 3 days of context (" + std::to_string(3 * spd) + " steps), got " +
                                                 std::to_string(context.size()));
    }
    std::vector<double> series(context.begin(), context.end());
    const std::size_t c = context.size();
    const double scale = m.target_scale;
    std::vector<double> out;
    out.reserve(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t t = c + h;
        const auto ts = target_start + std::chrono::minutes{static_cast<long long>(h) * m.resolution_minutes};
        const auto row = svr_features(series[t - spd], series[t - 2 * spd], series[t - 3 * spd],
                                      step_of_day(ts, m.resolution_minutes), spd, m.target_mean, scale);
        const double y = m.evaluate(row);
        series.push_back(y);
        out.push_back(y);
    }
    return out;
}

inline void write_svr_model(std::ostream& out, const SVRModel& m) {
    out << "model svr\n";
    out << "kernel " << to_string(m.kernel.kind) << '\n';
    out << "lengthscale " << detail::format_shortest(m.kernel.lengthscale) << '\n';
    out << "period_steps " << detail::format_shortest(m.kernel.period_steps) << '\n';
    out << "signal_variance " << detail::format_shortest(m.kernel.signal_variance) << '\n';
    out << "epsilon " << detail::format_shortest(m.epsilon) << '\n';
    out << "C " << detail::format_shortest(m.c) << '\n';
    out << "bias " << detail::format_shortest(m.bias) << '\n';
    out << "target_mean " << detail::format_shortest(m.target_mean) << '\n';
    out << "target_scale " << detail::format_shortest(m.target_scale) << '\n';
    out << "resolution_minutes " << m.resolution_minutes << '\n';
    out << "kkt_violation " << detail::format_shortest(m.kkt_violation) << '\n';
    out << "support_vectors " << m.support_vectors.rows() << '\n';
    for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i) {
        out << "sv " << detail::format_shortest(m.dual_coefs[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m.support_vectors.cols(); ++j) {
            out << ' ' << detail::format_shortest(m.support_vectors(i, j));
        }
        out << '\n';
    }
}

inline SVRModel read_svr_model(std::istream& in) {
    SVRModel m;
    std::vector<std::vector<double>> rows;
    std::string line;
    auto number = [](std::string_view s) {
        const auto v = detail::parse_double(s);
        if (!v) fail(ErrorKind::MalformedRow, "bad number '" + std::string(s) + "' in SVR dump");
        return *v;
    };
    while (std::getline(in, line)) {
        const auto f = detail::split_fields(detail::trim(line), ' ');
        if (f.empty() || f[0].empty()) continue;
        const auto& key = f[0];
        if (key == "sv") {
            if (f.size() != static_cast<std::size_t>(kSvrFeatureCount) + 2) fail(ErrorKind::MalformedRow, "bad sv line");
            m.dual_coefs.push_back(number(f[1]));
            std::vector<double> row;
            for (std::size_t i = 2; i < f.size(); ++i) row.push_back(number(f[i]));
            rows.push_back(std::move(row));
        } else if (f.size() != 2) {
            fail(ErrorKind::MalformedRow, "unexpected SVR dump line '" + line + "'");
        } else if (key == "model") {
            if (f[1] != "svr") fail(ErrorKind::MalformedRow, "not an SVR dump");
        } else if (key == "kernel") {
            m.kernel.kind = parse_kernel_kind(f[1]);
        } else if (key == "lengthscale") {
            m.kernel.lengthscale = number(f[1]);
        } else if (key == "period_steps") {
            m.kernel.period_steps = number(f[1]);
        } else if (key == "signal_variance") {
            m.kernel.signal_variance = number(f[1]);
        } else if (key == "epsilon") {
            m.epsilon = number(f[1]);
        } else if (key == "C") {
            m.c = number(f[1]);
        } else if (key == "bias") {
            m.bias = number(f[1]);
        } else if (key == "target_mean") {
            m.target_mean = number(f[1]);
        } else if (key == "target_scale") {
            m.target_scale = number(f[1]);
        } else if (key == "resolution_minutes") {
            m.resolution_minutes = detail::parse_int<int>(f[1]).value_or(0);
        } else if (key == "kkt_violation") {
            m.kkt_violation = number(f[1]);
        }
    }
    if (!valid_resolution(m.resolution_minutes)) fail(ErrorKind::MalformedRow, "SVR dump has a bad resolution");
    m.support_vectors.resize(static_cast<Eigen::Index>(rows.size()), kSvrFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m.support_vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

struct SvrOptions {
    std::optional<double> epsilon;  // kW; default 0.1 x target std
    double c = 10.0;
    KernelSpec kernel = default_svr_kernel();
    double tol = 1e-3;
};

class SvrForecaster final : public Forecaster {
public:
    explicit SvrForecaster(SvrOptions options = {}) : options_(options) {}

    std::string name() const override { return "svr"; }
    bool probabilistic() const override { return false; }
    bool zero_shot() const override { return false; }

    void fit(const LoadSeries& train) override {
        model_.emplace(svr_fit(train, options_.epsilon, options_.c, options_.kernel, options_.tol));
    }

    ProbabilisticForecast predict(const ForecastRequest& r) const override {
        if (!model_) fail(ErrorKind::NotFitted, "SVR forecaster used before fit");
        if (r.resolution_minutes != model_->resolution_minutes) {
            fail(ErrorKind::IncompatibleResolution, "SVR was fit at a different resolution");
        }
        return ProbabilisticForecast::point(svr_predict(*model_, r.context, r.horizon, r.target_start()));
    }

    const SVRModel& model() const {
        if (!model_) fail(ErrorKind::NotFitted, "SVR forecaster used before fit");
        return *model_;
    }

private:
    SvrOptions options_;
    std::optional<SVRModel> model_;
};

} // namespace loadcast
