#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "loadcast/detail/text.hpp"
#include "loadcast/error.hpp"

namespace loadcast {

/// S sample paths over an H-step horizon, stored row-major (one row per path).
class ProbabilisticForecast {
public:
    ProbabilisticForecast(std::size_t num_samples, std::size_t horizon, std::vector<double> paths)
        : samples_(num_samples), horizon_(horizon), paths_(std::move(paths)) {
        if (samples_ == 0) fail(ErrorKind::InvalidArgument, "a forecast needs at least one sample path");
        if (paths_.size() != samples_ * horizon_) {
            fail(ErrorKind::InvalidArgument, "sample matrix size does not match S x H");
        }
        for (const double v : paths_) {
            if (!std::isfinite(v)) fail(ErrorKind::NonFiniteInput, "forecast holds a non-finite sample");
        }
    }

    /// Single-path forecast, the shape point forecasters produce.
    static ProbabilisticForecast point(std::vector<double> values) {
        const auto h = values.size();
        return ProbabilisticForecast(1, h, std::move(values));
    }

    std::size_t num_samples() const noexcept { return samples_; }
    std::size_t horizon() const noexcept { return horizon_; }
    double at(std::size_t sample, std::size_t step) const { return paths_[sample * horizon_ + step]; }
    std::span<const double> path(std::size_t sample) const {
        return std::span<const double>(paths_).subspan(sample * horizon_, horizon_);
    }
    const std::vector<double>& data() const noexcept { return paths_; }

    friend bool operator==(const ProbabilisticForecast&, const ProbabilisticForecast&) = default;

private:
    std::size_t samples_;
    std::size_t horizon_;
    std::vector<double> paths_;
};

/// Per-step empirical quantile, interpolating linearly between order
/// statistics at position (S - 1) * gamma.
inline std::vector<double> forecast_quantile(const ProbabilisticForecast& forecast, double gamma) {
    if (forecast.num_samples() < 2) {
        fail(ErrorKind::TooFewSamples, "quantiles need at least 2 sample paths, got " +
                                           std::to_string(forecast.num_samples()));
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorKind::GammaOutOfRange, "quantile level outside [0, 1]");
    const std::size_t s = forecast.num_samples();
    const double pos = static_cast<double>(s - 1) * gamma;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s - 1);
    const double frac = pos - static_cast<double>(lo);
    std::vector<double> column(s);
    std::vector<double> out(forecast.horizon());
    for (std::size_t h = 0; h < forecast.horizon(); ++h) {
        for (std::size_t i = 0; i < s; ++i) column[i] = forecast.at(i, h);
        std::sort(column.begin(), column.end());
        out[h] = column[lo] + frac * (column[hi] - column[lo]);
    }
    return out;
}

inline std::vector<double> forecast_mean(const ProbabilisticForecast& forecast) {
    std::vector<double> out(forecast.horizon(), 0.0);
    for (std::size_t i = 0; i < forecast.num_samples(); ++i) {
        for (std::size_t h = 0; h < forecast.horizon(); ++h) out[h] += forecast.at(i, h);
    }
    for (double& v : out) v /= static_cast<double>(forecast.num_samples());
    return out;
}

// ---------------------------------------------------------------------------
// Forecasts produced by other tools, as `window_id,sample_id,step,value`.

struct ExternalForecast {
    std::string window_id;
    ProbabilisticForecast forecast;
};

inline std::vector<ExternalForecast> read_external_forecasts(std::istream& in, std::size_t expected_horizon) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::EmptyFile, "no header line");
    if (detail::trim_cr(line) != "window_id,sample_id,step,value") {
        fail(ErrorKind::MalformedRow, "line 1: expected header 'window_id,sample_id,step,value'");
    }
    // window -> sample -> step -> value; windows keep first-appearance order.
    std::vector<std::string> order;
    std::map<std::string, std::map<long long, std::map<long long, double>>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto row = detail::trim_cr(line);
        if (row.empty()) continue;
        const auto where = "line " + std::to_string(lineno);
        const auto f = detail::split_fields(row);
        if (f.size() != 4) fail(ErrorKind::MalformedRow, where + ": expected 4 fields");
        const auto sample = detail::parse_int<long long>(f[1]);
        const auto step = detail::parse_int<long long>(f[2]);
        const auto value = detail::parse_double(f[3]);
        if (f[0].empty() || !sample || !step || !value || *sample < 0 || *step < 0) {
            fail(ErrorKind::MalformedRow, where + ": cannot parse '" + std::string(row) + "'");
        }
        const std::string window(f[0]);
        auto [it, inserted] = rows.try_emplace(window);
        if (inserted) order.push_back(window);
        if (!it->second[*sample].emplace(*step, *value).second) {
            fail(ErrorKind::MalformedRow, where + ": duplicate step for window '" + window + "'");
        }
    }
    if (order.empty()) fail(ErrorKind::EmptyFile, "no forecast rows");

    std::vector<ExternalForecast> out;
    out.reserve(order.size());
    for (const auto& window : order) {
        const auto& samples = rows.at(window);
        std::size_t horizon = 0;
        bool first = true;
        bool ragged = false;
        for (const auto& [sample, steps] : samples) {
            // Complete paths number their steps 0..n-1 with no holes.
            const bool contiguous = static_cast<std::size_t>(steps.rbegin()->first) + 1 == steps.size();
            if (!contiguous || (!first && steps.size() != horizon)) ragged = true;
            horizon = first ? steps.size() : horizon;
            first = false;
        }
        if (ragged) fail(ErrorKind::RaggedPaths, "window '" + window + "' has sample paths of unequal or gapped length");
        if (horizon != expected_horizon) {
            fail(ErrorKind::HorizonMismatch, "window '" + window + "' has horizon " + std::to_string(horizon) +
                                                 ", expected " + std::to_string(expected_horizon));
        }
        std::vector<double> paths;
        paths.reserve(samples.size() * horizon);
        for (const auto& [sample, steps] : samples) {
            for (const auto& [step, value] : steps) paths.push_back(value);
        }
        out.push_back({window, ProbabilisticForecast(samples.size(), horizon, std::move(paths))});
    }
    return out;
}

inline std::vector<ExternalForecast> ingest_external_forecasts(const std::filesystem::path& path,
                                                               std::size_t expected_horizon) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    try {
        return read_external_forecasts(in, expected_horizon);
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

inline void write_external_forecasts(std::ostream& out, std::span<const ExternalForecast> forecasts) {
    out << "window_id,sample_id,step,value\n";
    for (const auto& f : forecasts) {
        for (std::size_t s = 0; s < f.forecast.num_samples(); ++s) {
            for (std::size_t h = 0; h < f.forecast.horizon(); ++h) {
                out << f.window_id << ',' << s << ',' << h << ',' << detail::format_shortest(f.forecast.at(s, h)) << '\n';
            }
        }
    }
}

} // namespace loadcast
