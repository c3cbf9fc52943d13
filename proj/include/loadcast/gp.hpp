#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
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

inline constexpr std::size_t kGpMaxTrainPoints = 2000;

namespace detail {

struct Factorization {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};

/// Cholesky of `a`, retrying with diagonal jitter 1e-8, 1e-7, ..., 1e-4.
inline Factorization cholesky_with_jitter(const Eigen::MatrixXd& a) {
    double jitter = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
        Eigen::MatrixXd m = a;
        if (jitter > 0.0) m.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd lower = llt.matrixL();
            if (lower.diagonal().allFinite() && (lower.diagonal().array() > 0.0).all()) return {std::move(lower), jitter};
        }
        jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
    }
    fail(ErrorKind::FactorizationFailure, "matrix is not positive definite even with 1e-4 jitter");
}

} // namespace detail

/// Exact GP regression on feature rows. Targets are used as given (no centring).
class GaussianProcess {
public:
    GaussianProcess(KernelSpec kernel, Eigen::MatrixXd inputs, Eigen::VectorXd targets)
        : kernel_(kernel), x_(std::move(inputs)), y_(std::move(targets)) {
        kernel_.validate();
        if (x_.rows() == 0 || x_.rows() != y_.size()) {
            fail(ErrorKind::InvalidArgument, "GP needs matching, non-empty inputs and targets");
        }
        Eigen::MatrixXd k = gram(kernel_, x_);
        k.diagonal().array() += kernel_.noise_variance;
        auto f = detail::cholesky_with_jitter(k);
        chol_ = std::move(f.lower);
        jitter_ = f.jitter;
        alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_);
        chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
    }

    const KernelSpec& kernel() const noexcept { return kernel_; }
    const Eigen::MatrixXd& inputs() const noexcept { return x_; }
    const Eigen::VectorXd& targets() const noexcept { return y_; }
    /// Lower factor of K + (noise + jitter) I.
    const Eigen::MatrixXd& chol_factor() const noexcept { return chol_; }
    const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
    double jitter() const noexcept { return jitter_; }

    double log_marginal_likelihood() const {
        const double n = static_cast<double>(y_.size());
        return -0.5 * y_.dot(alpha_) - chol_.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
    }

    /// Gradient of the log marginal likelihood with respect to
    /// (log lengthscale, log signal_variance, log noise_variance).
    Eigen::Vector3d log_marginal_likelihood_gradient() const {
        const Eigen::Index n = x_.rows();
        Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
        chol_.triangularView<Eigen::Lower>().solveInPlace(kinv);
        chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(kinv);
        const Eigen::MatrixXd w = alpha_ * alpha_.transpose() - kinv;
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto t = detail::kernel_terms(kernel_, x_.row(i), x_.row(j));
                g(0) += w(i, j) * t.d_log_scale;
                g(1) += w(i, j) * t.value;
            }
        }
        g(2) = w.trace() * kernel_.noise_variance;
        return 0.5 * g;
    }

    struct Posterior {
        Eigen::VectorXd mean;
        Eigen::MatrixXd covariance;  // latent function, without observation noise
    };

    Posterior posterior(const Eigen::MatrixXd& queries) const {
        const Eigen::MatrixXd ks = gram(kernel_, x_, queries);
        Posterior p;
        p.mean = ks.transpose() * alpha_;
        const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(ks);
        p.covariance = gram(kernel_, queries) - v.transpose() * v;
        for (Eigen::Index i = 0; i < p.covariance.rows(); ++i) {
            double& var = p.covariance(i, i);
            if (var < -1e-10) {
                fail(ErrorKind::FactorizationFailure, "negative posterior variance " + detail::format_shortest(var));
            }
            var = std::max(var, 0.0);
        }
        return p;
    }

private:
    KernelSpec kernel_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

inline double log_marginal_likelihood(const KernelSpec& kernel, const Eigen::MatrixXd& inputs,
                                      const Eigen::VectorXd& targets) {
    return GaussianProcess(kernel, inputs, targets).log_marginal_likelihood();
}

/// Draws joint samples of a Gaussian. The covariance is factored through its
/// eigendecomposition so rank-deficient (e.g. zero) covariances sample exactly.
inline std::vector<double> sample_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                                           std::size_t num_samples, std::uint64_t seed) {
    const Eigen::Index h = mean.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
    if (eig.info() != Eigen::Success) fail(ErrorKind::FactorizationFailure, "eigendecomposition did not converge");
    Eigen::VectorXd lambda = eig.eigenvalues();
    const double floor = -1e-8 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (h > 0 && lambda.minCoeff() < floor) {
        fail(ErrorKind::FactorizationFailure, "covariance is indefinite (eigenvalue " +
                                                  detail::format_shortest(lambda.minCoeff()) + ")");
    }
    lambda = lambda.cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd factor = eig.eigenvectors() * lambda.asDiagonal();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(num_samples * static_cast<std::size_t>(h));
    Eigen::VectorXd z(h);
    for (std::size_t s = 0; s < num_samples; ++s) {
        for (Eigen::Index i = 0; i < h; ++i) z(i) = normal(rng);
        const Eigen::VectorXd draw = mean + factor * z;
        for (Eigen::Index i = 0; i < h; ++i) out[s * static_cast<std::size_t>(h) + static_cast<std::size_t>(i)] = draw(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Load-series GP baseline over calendar features.

/// Feature row for a timestamp: (step within the day, day of week in steps).
/// Expressing the weekday in steps keeps one lengthscale meaningful for both.
inline Eigen::RowVector2d calendar_features(Timestamp t, int resolution_minutes) {
    const double spd = steps_per_day(resolution_minutes);
    return {static_cast<double>(step_of_day(t, resolution_minutes)), day_of_week(t) * spd};
}

struct GPModel {
    GaussianProcess gp;
    double target_mean = 0.0;
    int resolution_minutes = 60;
    std::vector<KernelSpec> grid;
    std::vector<double> grid_log_likelihoods;  // NaN where the grid point failed to factor
    std::size_t selected = 0;

    const KernelSpec& kernel() const noexcept { return gp.kernel(); }
};

/// A small grid around the training data's scale: sum kernel, lengthscales of
/// 1, 2 and 4 hours, noise at 10% and 30% of the target variance.
inline std::vector<KernelSpec> default_gp_grid(const LoadSeries& train) {
    double mean = 0.0;
    for (const double v : train.values()) mean += v;
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (const double v : train.values()) var += (v - mean) * (v - mean);
    var = std::max(var / static_cast<double>(train.size()), 1e-6);
    std::vector<KernelSpec> grid;
    const double sph = static_cast<double>(train.steps_per_hour());
    for (const double hours : {1.0, 2.0, 4.0}) {
        for (const double noise : {0.1, 0.3}) {
            grid.push_back({KernelKind::sum_rbf_periodic, hours * sph, static_cast<double>(train.steps_per_day()), var,
                            noise * var});
        }
    }
    return grid;
}

/// Fits on calendar features of `train` (strided down to at most
/// kGpMaxTrainPoints) and keeps the grid point with the highest log marginal
/// likelihood. Grid points that cannot be factored are skipped.
inline GPModel gp_fit(const LoadSeries& train, const std::vector<KernelSpec>& kernel_grid) {
    if (kernel_grid.empty()) fail(ErrorKind::InvalidArgument, "GP kernel grid is empty");
    const std::size_t stride = (train.size() + kGpMaxTrainPoints - 1) / kGpMaxTrainPoints;
    const std::size_t n = (train.size() + stride - 1) / stride;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        x.row(static_cast<Eigen::Index>(i)) = calendar_features(train.timestamp(i * stride), train.resolution_minutes());
        y(static_cast<Eigen::Index>(i)) = train[i * stride];
    }
    const double mean = y.mean();
    y.array() -= mean;

    std::vector<double> lml(kernel_grid.size(), std::numeric_limits<double>::quiet_NaN());
    std::size_t best = kernel_grid.size();
    for (std::size_t g = 0; g < kernel_grid.size(); ++g) {
        try {
            lml[g] = log_marginal_likelihood(kernel_grid[g], x, y);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::FactorizationFailure) throw;
            continue;
        }
        if (best == kernel_grid.size() || lml[g] > lml[best]) best = g;
    }
    if (best == kernel_grid.size()) {
        fail(ErrorKind::FactorizationFailure, "no grid point of '" + train.series_id() + "' could be factored");
    }
    return GPModel{GaussianProcess(kernel_grid[best], std::move(x), std::move(y)), mean, train.resolution_minutes(),
                   kernel_grid, std::move(lml), best};
}

/// Predictive mean and covariance (including observation noise) at the
/// horizon's calendar features.
inline GaussianProcess::Posterior gp_predictive(const GPModel& model, Timestamp target_start, std::size_t horizon) {
    Eigen::MatrixXd q(static_cast<Eigen::Index>(horizon), 2);
    for (std::size_t h = 0; h < horizon; ++h) {
        const auto t = target_start + std::chrono::minutes{static_cast<long long>(h) * model.resolution_minutes};
        q.row(static_cast<Eigen::Index>(h)) = calendar_features(t, model.resolution_minutes);
    }
    auto p = model.gp.posterior(q);
    p.mean.array() += model.target_mean;
    p.covariance.diagonal().array() += model.kernel().noise_variance;
    return p;
}

/// Joint samples from the predictive distribution. Negative values are kept.
inline ProbabilisticForecast gp_predict(const GPModel& model, Timestamp target_start, std::size_t horizon,
                                        std::size_t num_samples, std::uint64_t seed) {
    if (num_samples == 0) fail(ErrorKind::InvalidArgument, "num_samples must be positive");
    const auto p = gp_predictive(model, target_start, horizon);
    return ProbabilisticForecast(num_samples, horizon, sample_gaussian(p.mean, p.covariance, num_samples, seed));
}

// Plain-text dump: kernel, centring offset and the (strided) training set.
// Loading refactors, so the restored model predicts identically.
inline void write_gp_model(std::ostream& out, const GPModel& m) {
    const auto& k = m.kernel();
    out << "model gp\n";
    out << "kernel " << to_string(k.kind) << '\n';
    out << "lengthscale " << detail::format_shortest(k.lengthscale) << '\n';
    out << "period_steps " << detail::format_shortest(k.period_steps) << '\n';
    out << "signal_variance " << detail::format_shortest(k.signal_variance) << '\n';
    out << "noise_variance " << detail::format_shortest(k.noise_variance) << '\n';
    out << "resolution_minutes " << m.resolution_minutes << '\n';
    out << "target_mean " << detail::format_shortest(m.target_mean) << '\n';
    out << "jitter " << detail::format_shortest(m.gp.jitter()) << '\n';
    out << "log_marginal_likelihood " << detail::format_shortest(m.gp.log_marginal_likelihood()) << '\n';
    const auto& x = m.gp.inputs();
    const auto& y = m.gp.targets();
    out << "points " << x.rows() << '\n';
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out << "point " << detail::format_shortest(x(i, 0)) << ' ' << detail::format_shortest(x(i, 1)) << ' '
            << detail::format_shortest(y(i)) << '\n';
    }
}

inline GPModel read_gp_model(std::istream& in) {
    KernelSpec k;
    int resolution = 60;
    double target_mean = 0.0;
    std::vector<std::array<double, 3>> points;
    std::string line;
    auto number = [](std::string_view s) {
        const auto v = detail::parse_double(s);
        if (!v) fail(ErrorKind::MalformedRow, "bad number '" + std::string(s) + "' in GP dump");
        return *v;
    };
    while (std::getline(in, line)) {
        const auto f = detail::split_fields(detail::trim(line), ' ');
        if (f.empty() || f[0].empty()) continue;
        const auto& key = f[0];
        if (key == "point" && f.size() == 4) {
            points.push_back({number(f[1]), number(f[2]), number(f[3])});
        } else if (f.size() != 2) {
            fail(ErrorKind::MalformedRow, "unexpected GP dump line '" + line + "'");
        } else if (key == "model") {
            if (f[1] != "gp") fail(ErrorKind::MalformedRow, "not a GP dump");
        } else if (key == "kernel") {
            k.kind = parse_kernel_kind(f[1]);
        } else if (key == "lengthscale") {
            k.lengthscale = number(f[1]);
        } else if (key == "period_steps") {
            k.period_steps = number(f[1]);
        } else if (key == "signal_variance") {
            k.signal_variance = number(f[1]);
        } else if (key == "noise_variance") {
            k.noise_variance = number(f[1]);
        } else if (key == "resolution_minutes") {
            resolution = detail::parse_int<int>(f[1]).value_or(0);
        } else if (key == "target_mean") {
            target_mean = number(f[1]);
        }
    }
    if (points.empty()) fail(ErrorKind::MalformedRow, "GP dump holds no training points");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = points[i][0];
        x(static_cast<Eigen::Index>(i), 1) = points[i][1];
        y(static_cast<Eigen::Index>(i)) = points[i][2];
    }
    GaussianProcess gp(k, std::move(x), std::move(y));
    const double lml = gp.log_marginal_likelihood();
    return GPModel{std::move(gp), target_mean, resolution, {k}, {lml}, 0};
}

class GpForecaster final : public Forecaster {
public:
    /// An empty grid means default_gp_grid() of the training series.
    explicit GpForecaster(std::vector<KernelSpec> grid = {}) : grid_(std::move(grid)) {}

    std::string name() const override { return "gp"; }
    bool probabilistic() const override { return true; }
    bool zero_shot() const override { return false; }

    void fit(const LoadSeries& train) override {
        model_.emplace(gp_fit(train, grid_.empty() ? default_gp_grid(train) : grid_));
    }

    ProbabilisticForecast predict(const ForecastRequest& r) const override {
        if (!model_) fail(ErrorKind::NotFitted, "GP forecaster used before fit");
        if (r.resolution_minutes != model_->resolution_minutes) {
            fail(ErrorKind::IncompatibleResolution, "GP was fit at a different resolution");
        }
        return gp_predict(*model_, r.target_start(), r.horizon, r.num_samples, r.seed);
    }

    const GPModel& model() const {
        if (!model_) fail(ErrorKind::NotFitted, "GP forecaster used before fit");
        return *model_;
    }

private:
    std::vector<KernelSpec> grid_;
    std::optional<GPModel> model_;
};

} // namespace loadcast
