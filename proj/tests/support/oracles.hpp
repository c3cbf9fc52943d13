#pragma once

// Test-only reference computations. Nothing here calls into the library's
// numerical code paths, so agreement with the library is meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Solves a x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(Matrix a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

/// Sample autocorrelation at `lag` (biased estimator, mean-removed).
inline double autocorrelation(std::span<const double> x, std::size_t lag) {
    double mean = 0.0;
    for (const double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        if (i + lag < x.size()) num += (x[i] - mean) * (x[i + lag] - mean);
    }
    return num / den;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// epsilon-SVR dual objective (maximisation form) from first principles.
inline double svr_dual(const Matrix& k, std::span<const double> y, double eps, std::span<const double> a,
                       std::span<const double> as) {
    const std::size_t n = y.size();
    double quad = 0.0;
    double lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) quad += (a[i] - as[i]) * (a[j] - as[j]) * k[i][j];
        lin += -eps * (a[i] + as[i]) + y[i] * (a[i] - as[i]);
    }
    return -0.5 * quad + lin;
}

/// Brute-force maximiser of the SVR dual: repeated sweeps over every pair of
/// multipliers, each moved along the feasible line by a coarse-to-fine grid
/// search, until a full sweep gains nothing.
inline double svr_dual_brute_force(const Matrix& k, std::span<const double> y, double eps, double c) {
    const std::size_t n = y.size();
    // v[0..n) = alpha, v[n..2n) = alpha*; equality: sum(alpha) = sum(alpha*).
    std::vector<double> v(2 * n, 0.0);
    auto objective = [&] {
        return svr_dual(k, y, eps, std::span<const double>(v).first(n), std::span<const double>(v).subspan(n));
    };
    double best = objective();
    for (int sweep = 0; sweep < 2000; ++sweep) {
        const double before = best;
        for (std::size_t p = 0; p < 2 * n; ++p) {
            for (std::size_t q = p + 1; q < 2 * n; ++q) {
                // Same side: move mass from q to p. Opposite sides: raise both.
                const bool same = (p < n) == (q < n);
                double lo = 0.0;
                double hi = 0.0;
                if (same) {
                    lo = -std::min(v[p], c - v[q]);
                    hi = std::min(c - v[p], v[q]);
                } else {
                    lo = -std::min(v[p], v[q]);
                    hi = std::min(c - v[p], c - v[q]);
                }
                if (hi - lo <= 0.0) continue;
                const double vp = v[p];
                const double vq = v[q];
                auto at = [&](double t) {
                    v[p] = vp + t;
                    v[q] = same ? vq - t : vq + t;
                    return objective();
                };
                double best_t = 0.0;
                double best_val = at(0.0);
                double a = lo;
                double b = hi;
                for (int level = 0; level < 12; ++level) {
                    const int steps = 40;
                    for (int s = 0; s <= steps; ++s) {
                        const double t = a + (b - a) * s / steps;
                        const double val = at(t);
                        if (val > best_val) {
                            best_val = val;
                            best_t = t;
                        }
                    }
                    const double w = (b - a) / steps;
                    a = std::max(lo, best_t - w);
                    b = std::min(hi, best_t + w);
                }
                at(best_t);
                best = best_val;
            }
        }
        if (best - before < 1e-13) break;
    }
    return best;
}

} // namespace oracle
