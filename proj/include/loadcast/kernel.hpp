#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "loadcast/error.hpp"

namespace loadcast {

enum class KernelKind { rbf, periodic, sum_rbf_periodic, linear };

constexpr std::string_view to_string(KernelKind k) noexcept {
    switch (k) {
    case KernelKind::rbf: return "rbf";
    case KernelKind::periodic: return "periodic";
    case KernelKind::sum_rbf_periodic: return "sum_rbf_periodic";
    case KernelKind::linear: return "linear";
    }
    return "?";
}

inline KernelKind parse_kernel_kind(std::string_view s) {
    if (s == "rbf") return KernelKind::rbf;
    if (s == "periodic") return KernelKind::periodic;
    if (s == "sum_rbf_periodic") return KernelKind::sum_rbf_periodic;
    if (s == "linear") return KernelKind::linear;
    fail(ErrorKind::InvalidArgument, "unknown kernel kind '" + std::string(s) + "'");
}

/// Covariance function over feature rows.
///
/// The RBF term uses every feature; the periodic term only feature 0 (the
/// within-day step), with period `period_steps`. Both read `lengthscale` in
/// feature units: the periodic term is written so that it matches the RBF
/// for lags much shorter than the period. The sum kernel averages the two,
/// so k(x, x) = signal_variance for every kind except linear.
struct KernelSpec {
    KernelKind kind = KernelKind::sum_rbf_periodic;
    double lengthscale = 1.0;
    double period_steps = 24.0;
    double signal_variance = 1.0;
    double noise_variance = 0.0;

    void validate() const {
        if (!(lengthscale > 0.0) || !(period_steps > 0.0) || !(signal_variance > 0.0) || !(noise_variance >= 0.0) ||
            !std::isfinite(lengthscale) || !std::isfinite(period_steps) || !std::isfinite(signal_variance) ||
            !std::isfinite(noise_variance)) {
            fail(ErrorKind::InvalidArgument, "kernel hyperparameters must be positive and finite");
        }
    }
};

namespace detail {

struct KernelTerms {
    double value;        // k(a, b)
    double d_log_scale;  // dk / d log(lengthscale)
};

template <class A, class B>
KernelTerms kernel_terms(const KernelSpec& k, const A& a, const B& b) {
    const double l2 = k.lengthscale * k.lengthscale;
    auto rbf = [&](double& deriv) {
        const double r2 = (a - b).squaredNorm();
        const double e = std::exp(-0.5 * r2 / l2);
        deriv = e * r2 / l2;
        return e;
    };
    auto periodic = [&](double& deriv) {
        const double s = std::sin(std::numbers::pi * (a(0) - b(0)) / k.period_steps);
        const double u = 2.0 * std::numbers::pi * k.lengthscale / k.period_steps;
        const double q = 2.0 * s * s / (u * u);
        const double e = std::exp(-q);
        deriv = e * 2.0 * q;
        return e;
    };
    double d1 = 0.0;
    double d2 = 0.0;
    switch (k.kind) {
    case KernelKind::rbf: {
        const double e = rbf(d1);
        return {k.signal_variance * e, k.signal_variance * d1};
    }
    case KernelKind::periodic: {
        const double e = periodic(d1);
        return {k.signal_variance * e, k.signal_variance * d1};
    }
    case KernelKind::sum_rbf_periodic: {
        const double e = 0.5 * (rbf(d1) + periodic(d2));
        return {k.signal_variance * e, k.signal_variance * 0.5 * (d1 + d2)};
    }
    case KernelKind::linear:
        return {k.signal_variance * a.dot(b), 0.0};
    }
    return {0.0, 0.0};
}

} // namespace detail

template <class A, class B>
double kernel_value(const KernelSpec& k, const A& a, const B& b) {
    return detail::kernel_terms(k, a, b).value;
}

/// Cross-covariance between the rows of `x1` and `x2` (no noise term).
inline Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2) {
    Eigen::MatrixXd out(x1.rows(), x2.rows());
    for (Eigen::Index i = 0; i < x1.rows(); ++i) {
        for (Eigen::Index j = 0; j < x2.rows(); ++j) out(i, j) = kernel_value(k, x1.row(i), x2.row(j));
    }
    return out;
}

inline Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            out(i, j) = kernel_value(k, x.row(i), x.row(j));
            out(j, i) = out(i, j);
        }
    }
    return out;
}

} // namespace loadcast
