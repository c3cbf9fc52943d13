#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "loadcast/detail/text.hpp"
#include "loadcast/error.hpp"

namespace loadcast {

using Timestamp = std::chrono::sys_seconds;

inline constexpr Timestamp kDefaultStart = std::chrono::sys_days{std::chrono::year{2013} / 1 / 1};

enum class SeriesKind { individual, aggregated };

inline bool valid_resolution(int minutes) noexcept { return minutes > 0 && 60 % minutes == 0; }

inline int steps_per_day(int resolution_minutes) noexcept { return 24 * 60 / resolution_minutes; }

/// Uniformly sampled, non-negative load readings in kW. Immutable once built;
/// the constructor enforces every invariant.
class LoadSeries {
public:
    LoadSeries(Timestamp start_time, int resolution_minutes, std::vector<double> values,
               std::string series_id = "series", SeriesKind kind = SeriesKind::individual)
        : start_(start_time), resolution_(resolution_minutes), values_(std::move(values)),
          id_(std::move(series_id)), kind_(kind) {
        if (!valid_resolution(resolution_)) {
            fail(ErrorKind::IncompatibleResolution,
                 "resolution of " + std::to_string(resolution_) + " minutes does not divide 60");
        }
        if (values_.empty()) fail(ErrorKind::InvalidArgument, "series '" + id_ + "' has no values");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                fail(ErrorKind::NonFiniteInput, "series '" + id_ + "' index " + std::to_string(i));
            }
            if (values_[i] < 0.0) {
                fail(ErrorKind::NegativeValue, "series '" + id_ + "' index " + std::to_string(i) + " is " +
                                                   detail::format_shortest(values_[i]));
            }
        }
    }

    Timestamp start_time() const noexcept { return start_; }
    int resolution_minutes() const noexcept { return resolution_; }
    const std::vector<double>& values() const noexcept { return values_; }
    const std::string& series_id() const noexcept { return id_; }
    SeriesKind kind() const noexcept { return kind_; }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    std::size_t steps_per_day() const noexcept { return static_cast<std::size_t>(loadcast::steps_per_day(resolution_)); }
    std::size_t steps_per_hour() const noexcept { return static_cast<std::size_t>(60 / resolution_); }
    std::size_t whole_days() const noexcept { return size() / steps_per_day(); }

    Timestamp timestamp(std::size_t i) const noexcept {
        return start_ + std::chrono::minutes{static_cast<long long>(i) * resolution_};
    }

    LoadSeries slice(std::size_t begin, std::size_t count) const {
        if (begin + count > size()) fail(ErrorKind::InvalidArgument, "slice out of range");
        return LoadSeries(timestamp(begin), resolution_,
                          std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(begin),
                                              values_.begin() + static_cast<std::ptrdiff_t>(begin + count)),
                          id_, kind_);
    }

private:
    Timestamp start_;
    int resolution_;
    std::vector<double> values_;
    std::string id_;
    SeriesKind kind_;
};

/// Step index within the UTC day, in units of `resolution_minutes`.
inline std::size_t step_of_day(Timestamp t, int resolution_minutes) {
    const auto since_midnight = t - std::chrono::floor<std::chrono::days>(t);
    return static_cast<std::size_t>(std::chrono::duration_cast<std::chrono::minutes>(since_midnight).count() /
                                    resolution_minutes);
}

/// 0 = Monday ... 6 = Sunday.
inline int day_of_week(Timestamp t) {
    const std::chrono::weekday wd{std::chrono::floor<std::chrono::days>(t)};
    return static_cast<int>(wd.iso_encoding()) - 1;
}

struct WindowSpec {
    int context_days = 3;
    int horizon_days = 1;
    int stride_days = 1;

    void validate() const {
        if (context_days <= 0 || horizon_days <= 0 || stride_days <= 0) {
            fail(ErrorKind::InvalidArgument, "window context, horizon and stride must all be positive days");
        }
    }
    std::size_t context_steps(int resolution_minutes) const {
        return static_cast<std::size_t>(context_days) * static_cast<std::size_t>(steps_per_day(resolution_minutes));
    }
    std::size_t horizon_steps(int resolution_minutes) const {
        return static_cast<std::size_t>(horizon_days) * static_cast<std::size_t>(steps_per_day(resolution_minutes));
    }
};

struct ForecastWindow {
    std::vector<double> context;
    std::vector<double> target;
    Timestamp window_start;  // first context timestamp
    std::string series_id;
    std::size_t window_index = 0;
    std::size_t start_index = 0;  // offset of context[0] in the source series
    int resolution_minutes = 60;

    Timestamp target_start() const noexcept {
        return window_start + std::chrono::minutes{static_cast<long long>(context.size()) * resolution_minutes};
    }
};

struct TrainTestSplit {
    LoadSeries train;
    LoadSeries test;
    double train_fraction;
};

// ---------------------------------------------------------------------------
// CSV

inline LoadSeries read_load_csv(std::istream& in, int resolution_minutes, std::string series_id = "series",
                                SeriesKind kind = SeriesKind::individual) {
    if (!valid_resolution(resolution_minutes)) {
        fail(ErrorKind::IncompatibleResolution, std::to_string(resolution_minutes) + " minutes does not divide 60");
    }
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::EmptyFile, "no header line");
    if (detail::trim_cr(line) != "timestamp,value") {
        fail(ErrorKind::MalformedRow, "line 1: expected header 'timestamp,value'");
    }
    std::vector<double> values;
    Timestamp start{};
    Timestamp previous{};
    const auto step = std::chrono::minutes{resolution_minutes};
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto row = detail::trim_cr(line);
        if (row.empty()) continue;
        const auto fields = detail::split_fields(row);
        const auto where = "line " + std::to_string(lineno);
        if (fields.size() != 2) fail(ErrorKind::MalformedRow, where + ": expected 2 fields");
        const auto ts = detail::parse_iso8601(fields[0]);
        if (!ts) fail(ErrorKind::MalformedRow, where + ": bad timestamp '" + std::string(fields[0]) + "'");
        const auto value = detail::parse_double(fields[1]);
        if (!value) fail(ErrorKind::MalformedRow, where + ": bad value '" + std::string(fields[1]) + "'");
        if (*value < 0.0) fail(ErrorKind::NegativeValue, where + ": value " + std::string(fields[1]));
        if (values.empty()) {
            start = *ts;
        } else if (*ts - previous != step) {
            fail(ErrorKind::NonUniformSampling, where + ": " + detail::format_iso8601(*ts) + " does not follow " +
                                                    detail::format_iso8601(previous) + " by " +
                                                    std::to_string(resolution_minutes) + " minutes");
        }
        previous = *ts;
        values.push_back(*value);
    }
    if (values.empty()) fail(ErrorKind::EmptyFile, "no data rows");
    return LoadSeries(start, resolution_minutes, std::move(values), std::move(series_id), kind);
}

/// Reads a `timestamp,value` file. The series id defaults to the file stem.
inline LoadSeries ingest_csv(const std::filesystem::path& path, int resolution_minutes,
                             SeriesKind kind = SeriesKind::individual) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    try {
        return read_load_csv(in, resolution_minutes, path.stem().string(), kind);
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

inline void write_load_csv(std::ostream& out, const LoadSeries& series) {
    out << "timestamp,value\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << detail::format_iso8601(series.timestamp(i)) << ',' << detail::format_shortest(series[i]) << '\n';
    }
}

inline void write_load_csv(const std::filesystem::path& path, const LoadSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    write_load_csv(out, series);
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Transformations

/// Downsamples by averaging each block of target/source readings (kW is a rate).
inline LoadSeries resample(const LoadSeries& series, int target_resolution_minutes) {
    const int source = series.resolution_minutes();
    if (target_resolution_minutes < source || target_resolution_minutes % source != 0 ||
        !valid_resolution(target_resolution_minutes)) {
        fail(ErrorKind::IncompatibleResolution, "cannot resample " + std::to_string(source) + "-minute data to " +
                                                    std::to_string(target_resolution_minutes) + " minutes");
    }
    const auto k = static_cast<std::size_t>(target_resolution_minutes / source);
    const std::size_t n = series.size() / k;
    if (n == 0) fail(ErrorKind::SeriesTooShort, "fewer readings than one output step");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += series[i * k + j];
        out[i] = sum / static_cast<double>(k);
    }
    return LoadSeries(series.start_time(), target_resolution_minutes, std::move(out), series.series_id(),
                      series.kind());
}

/// Pointwise sum of aligned series (feeder-level load from households).
inline LoadSeries aggregate(std::span<const LoadSeries> series_list, std::string series_id = "aggregate") {
    if (series_list.empty()) fail(ErrorKind::EmptyList, "nothing to aggregate");
    const auto& first = series_list.front();
    std::vector<double> sum(first.size(), 0.0);
    for (const auto& s : series_list) {
        if (s.start_time() != first.start_time() || s.resolution_minutes() != first.resolution_minutes() ||
            s.size() != first.size()) {
            fail(ErrorKind::MisalignedSeries, "'" + s.series_id() + "' is not aligned with '" + first.series_id() + "'");
        }
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s[i];
    }
    return LoadSeries(first.start_time(), first.resolution_minutes(), std::move(sum), std::move(series_id),
                      SeriesKind::aggregated);
}

/// Chronological split on a whole-day boundary. The train part holds
/// floor(fraction * length) readings rounded down to whole days, kept within
/// [1, days - 1] so both sides hold at least one day.
inline TrainTestSplit chronological_split(const LoadSeries& series, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        fail(ErrorKind::InvalidArgument, "train fraction must lie in (0, 1)");
    }
    const std::size_t spd = series.steps_per_day();
    const std::size_t days = series.whole_days();
    if (days < 2) fail(ErrorKind::SeriesTooShort, "'" + series.series_id() + "' spans fewer than 2 days");
    // The small offset keeps products such as 0.6 * 240 from landing just under an integer.
    const auto train_steps =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(series.size()) + 1e-9));
    const std::size_t train_days = std::clamp<std::size_t>(train_steps / spd, 1, days - 1);
    const std::size_t n_train = train_days * spd;
    return TrainTestSplit{series.slice(0, n_train), series.slice(n_train, series.size() - n_train), train_fraction};
}

inline std::size_t window_count(std::size_t total_days, const WindowSpec& spec) {
    const auto need = static_cast<std::size_t>(spec.context_days + spec.horizon_days);
    if (total_days < need) return 0;
    return (total_days - need) / static_cast<std::size_t>(spec.stride_days) + 1;
}

inline std::vector<ForecastWindow> make_windows(const LoadSeries& series, const WindowSpec& spec) {
    spec.validate();
    const int res = series.resolution_minutes();
    const std::size_t count = window_count(series.whole_days(), spec);
    if (count == 0) {
        fail(ErrorKind::SeriesTooShort, "'" + series.series_id() + "' has " + std::to_string(series.whole_days()) +
                                            " whole days; windows need " +
                                            std::to_string(spec.context_days + spec.horizon_days));
    }
    const std::size_t c = spec.context_steps(res);
    const std::size_t h = spec.horizon_steps(res);
    const std::size_t stride = static_cast<std::size_t>(spec.stride_days) * series.steps_per_day();
    const auto& v = series.values();
    std::vector<ForecastWindow> out;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * stride;
        ForecastWindow win;
        win.context.assign(v.begin() + static_cast<std::ptrdiff_t>(start),
                           v.begin() + static_cast<std::ptrdiff_t>(start + c));
        win.target.assign(v.begin() + static_cast<std::ptrdiff_t>(start + c),
                          v.begin() + static_cast<std::ptrdiff_t>(start + c + h));
        win.window_start = series.timestamp(start);
        win.series_id = series.series_id();
        win.window_index = w;
        win.start_index = start;
        win.resolution_minutes = res;
        out.push_back(std::move(win));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SyntheticProfile { household, feeder };

namespace detail {

inline double bump(double hour, double centre, double width) {
    const double d = (hour - centre) / width;
    return std::exp(-0.5 * d * d);
}

} // namespace detail

/// Deterministic synthetic load with morning and evening peaks, a weekend
/// effect and, for households, short appliance spikes. Starts 2013-01-01 UTC.
inline LoadSeries generate_synthetic(int num_days, int resolution_minutes, SyntheticProfile profile,
                                     std::uint64_t seed, Timestamp start = kDefaultStart) {
    if (num_days < 1) fail(ErrorKind::InvalidArgument, "synthetic series needs at least one day");
    if (!valid_resolution(resolution_minutes)) {
        fail(ErrorKind::IncompatibleResolution, std::to_string(resolution_minutes) + " minutes does not divide 60");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const std::size_t spd = static_cast<std::size_t>(steps_per_day(resolution_minutes));
    const double step_hours = resolution_minutes / 60.0;
    const bool household = profile == SyntheticProfile::household;
    std::vector<double> values(static_cast<std::size_t>(num_days) * spd);

    for (int d = 0; d < num_days; ++d) {
        const Timestamp day_start = start + std::chrono::days{d};
        const bool weekend = day_of_week(day_start) >= 5;
        const double day_level = 1.0 + (household ? 0.12 : 0.04) * normal(rng);
        const double morning_shift = weekend ? 1.5 : 0.0;

        std::vector<double> spikes(spd, 0.0);
        if (household) {
            std::poisson_distribution<int> count(3.0);
            const int n = count(rng);
            for (int k = 0; k < n; ++k) {
                const double begin_h = 6.0 + 17.0 * uniform(rng);
                const double len_h = 0.25 + 0.75 * uniform(rng);
                const double amp = 0.5 + 2.0 * uniform(rng);
                for (std::size_t s = 0; s < spd; ++s) {
                    const double lo = static_cast<double>(s) * step_hours;
                    const double overlap = std::min(lo + step_hours, begin_h + len_h) - std::max(lo, begin_h);
                    if (overlap > 0.0) spikes[s] += amp * overlap / step_hours;
                }
            }
        }

        for (std::size_t s = 0; s < spd; ++s) {
            const double hour = (static_cast<double>(s) + 0.5) * step_hours;
            double v = 0.0;
            if (household) {
                v = 0.25 + 0.6 * detail::bump(hour, 7.5 + morning_shift, 1.0) +
                    1.1 * detail::bump(hour, 19.0, 1.5) + 0.2 * detail::bump(hour, 13.0, 2.0);
                if (weekend) v *= 1.15;
                v = v * day_level * (1.0 + 0.08 * normal(rng)) + spikes[s];
                v = std::max(v, 0.05);
            } else {
                v = 30.0 + 12.0 * detail::bump(hour, 8.0 + morning_shift, 1.5) + 22.0 * detail::bump(hour, 18.5, 2.0) -
                    6.0 * detail::bump(hour, 3.5, 2.0);
                if (weekend) v *= 0.9;
                v = v * day_level * (1.0 + 0.02 * normal(rng));
                v = std::max(v, 0.0);
            }
            values[static_cast<std::size_t>(d) * spd + s] = v;
        }
    }
    const std::string id = std::string("synthetic-") + (household ? "household" : "feeder") + "-" + std::to_string(seed);
    return LoadSeries(start, resolution_minutes, std::move(values), id,
                      household ? SeriesKind::individual : SeriesKind::aggregated);
}

} // namespace loadcast
