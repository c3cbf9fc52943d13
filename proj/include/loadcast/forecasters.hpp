#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "loadcast/error.hpp"
#include "loadcast/forecast.hpp"
#include "loadcast/timeseries.hpp"
#include "loadcast/tokenization.hpp"

namespace loadcast {

inline constexpr std::size_t kDefaultNumSamples = 100;

struct ForecastRequest {
    std::span<const double> context;
    std::size_t horizon = 0;
    std::size_t num_samples = kDefaultNumSamples;
    std::uint64_t seed = 0;
    Timestamp context_start = kDefaultStart;
    int resolution_minutes = 60;
    std::string window_id;

    Timestamp target_start() const noexcept {
        return context_start + std::chrono::minutes{static_cast<long long>(context.size()) * resolution_minutes};
    }
};

/// Common surface of every model the bench runner evaluates. Implementations
/// must keep `predict` free of side effects so windows can run concurrently.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual std::string name() const = 0;
    /// Whether predictions carry a distribution (quantile losses are scored).
    virtual bool probabilistic() const = 0;
    /// Zero-shot models never look at training data.
    virtual bool zero_shot() const = 0;
    virtual void fit(const LoadSeries& /*train*/) {}
    virtual ProbabilisticForecast predict(const ForecastRequest& request) const = 0;
};

// ---------------------------------------------------------------------------
// Token sampler: quantize the context, estimate token frequencies, draw
// future tokens from them and map back to bin centres.

struct TokenSamplerModel {
    QuantizationCodec codec;
    TokenSequence context_tokens;
    std::vector<int> support;           // distinct context tokens, ascending
    std::vector<double> probabilities;  // aligned with `support`, sums to 1
};

/// `recency_half_life` (in steps) down-weights older tokens by 2^(-age / half_life).
inline TokenSamplerModel fit_token_sampler(std::span<const double> context, int num_bins = kDefaultNumBins,
                                           std::optional<double> recency_half_life = std::nullopt) {
    if (recency_half_life && !(*recency_half_life > 0.0)) {
        fail(ErrorKind::InvalidArgument, "recency half-life must be positive");
    }
    auto codec = fit_quantization_codec(context, num_bins);
    auto tokens = tokenize(codec, context);
    std::map<int, double> weight;
    const std::size_t t = tokens.size();
    for (std::size_t i = 0; i < t; ++i) {
        const double age = static_cast<double>(t - 1 - i);
        weight[tokens.tokens[i]] += recency_half_life ? std::exp2(-age / *recency_half_life) : 1.0;
    }
    double total = 0.0;
    for (const auto& [tok, w] : weight) total += w;
    TokenSamplerModel model{std::move(codec), std::move(tokens), {}, {}};
    for (const auto& [tok, w] : weight) {
        model.support.push_back(tok);
        model.probabilities.push_back(w / total);
    }
    return model;
}

/// Draws S x H tokens i.i.d. from the model's token distribution.
inline ProbabilisticForecast sample_token_sampler(const TokenSamplerModel& model, std::size_t horizon,
                                                  std::size_t num_samples, std::uint64_t seed) {
    if (num_samples == 0) fail(ErrorKind::InvalidArgument, "num_samples must be positive");
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(model.probabilities.begin(), model.probabilities.end());
    std::vector<double> paths(num_samples * horizon);
    for (double& v : paths) v = model.codec.value_of(model.support[pick(rng)]);
    return ProbabilisticForecast(num_samples, horizon, std::move(paths));
}

inline ProbabilisticForecast token_sampler_predict(std::span<const double> context, std::size_t horizon,
                                                   std::size_t num_samples, int num_bins,
                                                   std::optional<double> recency_half_life, std::uint64_t seed) {
    return sample_token_sampler(fit_token_sampler(context, num_bins, recency_half_life), horizon, num_samples, seed);
}

class TokenSamplerForecaster final : public Forecaster {
public:
    explicit TokenSamplerForecaster(int num_bins = kDefaultNumBins, std::optional<double> recency_half_life = {})
        : num_bins_(num_bins), half_life_(recency_half_life) {}

    std::string name() const override { return "token-sampler"; }
    bool probabilistic() const override { return true; }
    bool zero_shot() const override { return true; }
    ProbabilisticForecast predict(const ForecastRequest& r) const override {
        return token_sampler_predict(r.context, r.horizon, r.num_samples, num_bins_, half_life_, r.seed);
    }

private:
    int num_bins_;
    std::optional<double> half_life_;
};

// ---------------------------------------------------------------------------
// Segment-distribution head: per horizon step, a parametric distribution fit
// by moments to the context readings at the same time of day.

enum class HeadKind { student_t, exponential };

inline constexpr double kDefaultDof = 3.0;

struct StepDistribution {
    HeadKind kind = HeadKind::student_t;
    double location = 0.0;  // student_t location; point-mass value when degenerate
    double scale = 0.0;     // student_t
    double dof = kDefaultDof;
    double rate = 0.0;      // exponential
    bool degenerate = false;

    double mean() const noexcept {
        if (degenerate) return location;
        return kind == HeadKind::student_t ? location : 1.0 / rate;
    }
    double variance() const noexcept {
        if (degenerate) return 0.0;
        return kind == HeadKind::student_t ? scale * scale * dof / (dof - 2.0) : 1.0 / (rate * rate);
    }
};

/// Method-of-moments fit. Zero spread (or zero mean for the exponential head)
/// collapses to a point mass.
inline StepDistribution fit_step_distribution(std::span<const double> observations, HeadKind kind,
                                              double dof = kDefaultDof) {
    if (observations.empty()) fail(ErrorKind::EmptyContext, "no observations for a horizon step");
    if (kind == HeadKind::student_t && !(dof > 2.0)) fail(ErrorKind::InvalidArgument, "student-t dof must exceed 2");
    const auto n = static_cast<double>(observations.size());
    double mean = 0.0;
    for (const double v : observations) mean += v;
    mean /= n;
    StepDistribution d;
    d.kind = kind;
    d.dof = dof;
    if (kind == HeadKind::student_t) {
        double ss = 0.0;
        for (const double v : observations) ss += (v - mean) * (v - mean);
        const double var = observations.size() > 1 ? ss / (n - 1.0) : 0.0;
        d.location = mean;
        if (var > 0.0) {
            d.scale = std::sqrt(var * (dof - 2.0) / dof);
        } else {
            d.degenerate = true;
        }
    } else {
        if (mean > 0.0) {
            d.rate = 1.0 / mean;
        } else {
            d.degenerate = true;
            d.location = mean;
        }
    }
    return d;
}

struct SegmentDistModel {
    SegmentCodec codec;
    HeadKind head_kind = HeadKind::student_t;
    std::vector<StepDistribution> steps;  // one per horizon step
};

inline SegmentDistModel fit_segment_dist(std::span<const double> context, std::size_t horizon, HeadKind head,
                                         int resolution_minutes, double dof = kDefaultDof) {
    if (context.empty()) fail(ErrorKind::EmptyContext, "empty context");
    if (!valid_resolution(resolution_minutes)) {
        fail(ErrorKind::IncompatibleResolution, std::to_string(resolution_minutes) + " minutes does not divide 60");
    }
    const auto spd = static_cast<std::size_t>(steps_per_day(resolution_minutes));
    if (context.size() % spd != 0) {
        fail(ErrorKind::IndivisibleContext, "context of " + std::to_string(context.size()) +
                                                " steps is not a whole number of days");
    }
    for (const double v : context) {
        if (!std::isfinite(v)) fail(ErrorKind::NonFiniteInput, "context holds a non-finite value");
    }
    SegmentDistModel model{SegmentCodec::hourly(resolution_minutes), head, {}};
    const auto segments = segment(model.codec, context);
    const std::size_t b = model.codec.segment_length();
    const std::size_t per_day = spd / b;
    const std::size_t days = context.size() / spd;

    // The context spans whole days, so horizon step h sits at time-of-day h mod spd.
    std::vector<double> same_time(days);
    model.steps.reserve(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t pos = h % spd;
        for (std::size_t d = 0; d < days; ++d) same_time[d] = segments[d * per_day + pos / b][pos % b];
        model.steps.push_back(fit_step_distribution(same_time, head, dof));
    }
    return model;
}

inline ProbabilisticForecast sample_segment_dist(const SegmentDistModel& model, std::size_t num_samples,
                                                 std::uint64_t seed) {
    if (num_samples == 0) fail(ErrorKind::InvalidArgument, "num_samples must be positive");
    const std::size_t horizon = model.steps.size();
    std::mt19937_64 rng(seed);
    std::vector<double> paths(num_samples * horizon);
    if (model.head_kind == HeadKind::student_t) {
        std::vector<std::student_t_distribution<double>> draws;
        for (const auto& st : model.steps) draws.emplace_back(st.dof);
        for (std::size_t s = 0; s < num_samples; ++s) {
            for (std::size_t h = 0; h < horizon; ++h) {
                const auto& st = model.steps[h];
                paths[s * horizon + h] = st.degenerate ? st.location : st.location + st.scale * draws[h](rng);
            }
        }
    } else {
        std::exponential_distribution<double> unit(1.0);
        for (std::size_t s = 0; s < num_samples; ++s) {
            for (std::size_t h = 0; h < horizon; ++h) {
                const auto& st = model.steps[h];
                paths[s * horizon + h] = st.degenerate ? st.location : unit(rng) / st.rate;
            }
        }
    }
    return ProbabilisticForecast(num_samples, horizon, std::move(paths));
}

inline ProbabilisticForecast segment_dist_predict(std::span<const double> context, std::size_t horizon,
                                                  std::size_t num_samples, HeadKind head, std::uint64_t seed,
                                                  int resolution_minutes, double dof = kDefaultDof) {
    return sample_segment_dist(fit_segment_dist(context, horizon, head, resolution_minutes, dof), num_samples, seed);
}

class SegmentDistForecaster final : public Forecaster {
public:
    explicit SegmentDistForecaster(HeadKind head = HeadKind::student_t, double dof = kDefaultDof)
        : head_(head), dof_(dof) {}

    std::string name() const override { return "segment-dist"; }
    bool probabilistic() const override { return true; }
    bool zero_shot() const override { return true; }
    ProbabilisticForecast predict(const ForecastRequest& r) const override {
        return segment_dist_predict(r.context, r.horizon, r.num_samples, head_, r.seed, r.resolution_minutes, dof_);
    }

private:
    HeadKind head_;
    double dof_;
};

// ---------------------------------------------------------------------------

/// Replays forecasts produced elsewhere, keyed by window id.
class ExternalForecaster final : public Forecaster {
public:
    ExternalForecaster(std::vector<ExternalForecast> forecasts, bool probabilistic)
        : probabilistic_(probabilistic) {
        for (auto& f : forecasts) by_window_.insert_or_assign(f.window_id, std::move(f.forecast));
    }

    std::string name() const override { return "external"; }
    bool probabilistic() const override { return probabilistic_; }
    bool zero_shot() const override { return true; }
    ProbabilisticForecast predict(const ForecastRequest& r) const override {
        const auto it = by_window_.find(r.window_id);
        if (it == by_window_.end()) fail(ErrorKind::InvalidArgument, "no external forecast for window '" + r.window_id + "'");
        if (it->second.horizon() != r.horizon) {
            fail(ErrorKind::HorizonMismatch, "window '" + r.window_id + "' has horizon " +
                                                 std::to_string(it->second.horizon()) + ", expected " +
                                                 std::to_string(r.horizon));
        }
        return it->second;
    }

private:
    bool probabilistic_;
    std::map<std::string, ProbabilisticForecast> by_window_;
};

} // namespace loadcast
