#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loadcast/error.hpp"
#include "loadcast/forecast.hpp"

namespace loadcast {

inline constexpr double kQuantileLevels[] = {0.1, 0.5, 0.9};

namespace detail {

inline void check_pair(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) {
        fail(ErrorKind::LengthMismatch, std::to_string(actual.size()) + " actual vs " +
                                            std::to_string(predicted.size()) + " predicted values");
    }
    if (actual.empty()) fail(ErrorKind::EmptyVector, "metrics need at least one value");
}

} // namespace detail

inline double mae(std::span<const double> actual, std::span<const double> predicted) {
    detail::check_pair(actual, predicted);
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) sum += std::abs(actual[t] - predicted[t]);
    return sum / static_cast<double>(actual.size());
}

inline double rmse(std::span<const double> actual, std::span<const double> predicted) {
    detail::check_pair(actual, predicted);
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double d = actual[t] - predicted[t];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(actual.size()));
}

/// Pinball loss: over-prediction weighs (1 - gamma), under-prediction gamma.
inline double quantile_loss(std::span<const double> actual, std::span<const double> predicted_quantile, double gamma) {
    detail::check_pair(actual, predicted_quantile);
    if (!(gamma > 0.0 && gamma < 1.0)) fail(ErrorKind::GammaOutOfRange, "quantile level must lie in (0, 1)");
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double err = std::abs(actual[t] - predicted_quantile[t]);
        sum += predicted_quantile[t] >= actual[t] ? (1.0 - gamma) * err : gamma * err;
    }
    return sum / static_cast<double>(actual.size());
}

struct WindowScore {
    std::string window_id;
    double mae = 0.0;
    double rmse = 0.0;
    // Absent for point forecasts.
    std::optional<double> q10;
    std::optional<double> q50;
    std::optional<double> q90;

    bool probabilistic() const noexcept { return q10.has_value(); }
};

/// MAE and RMSE against the per-step mean; quantile losses against the
/// per-step empirical quantiles.
inline WindowScore score_window(std::span<const double> target, const ProbabilisticForecast& forecast,
                                std::string window_id = {}) {
    if (forecast.horizon() != target.size()) {
        fail(ErrorKind::HorizonMismatch, "window '" + window_id + "': forecast horizon " +
                                             std::to_string(forecast.horizon()) + " vs target " +
                                             std::to_string(target.size()));
    }
    const auto mean = forecast_mean(forecast);
    WindowScore s;
    s.window_id = std::move(window_id);
    s.mae = mae(target, mean);
    s.rmse = rmse(target, mean);
    s.q10 = quantile_loss(target, forecast_quantile(forecast, 0.1), 0.1);
    s.q50 = quantile_loss(target, forecast_quantile(forecast, 0.5), 0.5);
    s.q90 = quantile_loss(target, forecast_quantile(forecast, 0.9), 0.9);
    return s;
}

inline WindowScore score_window(std::span<const double> target, std::span<const double> point,
                                std::string window_id = {}) {
    if (point.size() != target.size()) {
        fail(ErrorKind::HorizonMismatch, "window '" + window_id + "': forecast horizon " + std::to_string(point.size()) +
                                             " vs target " + std::to_string(target.size()));
    }
    WindowScore s;
    s.window_id = std::move(window_id);
    s.mae = mae(target, point);
    s.rmse = rmse(target, point);
    return s;
}

/// Unweighted mean of every field across windows.
inline WindowScore aggregate_scores(std::span<const WindowScore> scores) {
    if (scores.empty()) fail(ErrorKind::EmptyList, "no window scores to aggregate");
    const bool prob = scores.front().probabilistic();
    WindowScore out;
    out.window_id = "all";
    double q10 = 0.0;
    double q50 = 0.0;
    double q90 = 0.0;
    for (const auto& s : scores) {
        if (s.probabilistic() != prob || s.q50.has_value() != prob || s.q90.has_value() != prob) {
            fail(ErrorKind::InconsistentFields, "cannot mix probabilistic and point window scores");
        }
        out.mae += s.mae;
        out.rmse += s.rmse;
        if (prob) {
            q10 += *s.q10;
            q50 += *s.q50;
            q90 += *s.q90;
        }
    }
    const auto n = static_cast<double>(scores.size());
    out.mae /= n;
    out.rmse /= n;
    if (prob) {
        out.q10 = q10 / n;
        out.q50 = q50 / n;
        out.q90 = q90 / n;
    }
    return out;
}

} // namespace loadcast
