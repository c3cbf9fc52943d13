#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "loadcast/detail/text.hpp"
#include "loadcast/error.hpp"
#include "loadcast/forecasters.hpp"
#include "loadcast/gp.hpp"
#include "loadcast/metrics.hpp"
#include "loadcast/svr.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

// ---------------------------------------------------------------------------
// Configuration

struct TokenSamplerSpec {
    int num_bins = kDefaultNumBins;
    std::optional<double> recency_half_life;
};
struct SegmentDistSpec {
    HeadKind head = HeadKind::student_t;
    double dof = kDefaultDof;
};
struct GpSpec {
    std::vector<KernelSpec> grid;  // empty: default_gp_grid()
};
struct SvrSpec {
    SvrOptions options;
};
struct ExternalSpec {
    std::filesystem::path forecasts;
    bool probabilistic = false;
};

using ModelOptions = std::variant<TokenSamplerSpec, SegmentDistSpec, GpSpec, SvrSpec, ExternalSpec>;

struct ModelSpec {
    std::string name;   // registered forecaster
    std::string label;  // row name in the result tables
    ModelOptions options;
};

struct SyntheticSource {
    int days = 28;
    SyntheticProfile profile = SyntheticProfile::household;
    std::uint64_t seed = 0;
    int count = 1;  // independent series, seeds seed, seed + 1, ...
};

struct DataSource {
    std::vector<std::filesystem::path> csv;
    std::optional<int> csv_resolution_minutes;  // defaults to the experiment resolution
    std::optional<SyntheticSource> synthetic;
    bool aggregate = false;  // sum all series into one aggregated series
};

struct OutputSpec {
    std::filesystem::path csv = "results.csv";
    std::filesystem::path markdown = "results.md";
};

struct ExperimentConfig {
    std::string experiment_id;
    DataSource data;
    int resolution_minutes = 60;
    WindowSpec window;
    double train_fraction = 0.6;
    std::vector<ModelSpec> models;
    std::size_t num_samples = kDefaultNumSamples;
    std::uint64_t master_seed = 0;
    OutputSpec output;
};

inline const std::vector<std::string>& registered_models() {
    static const std::vector<std::string> names{"external", "gp", "segment-dist", "svr", "token-sampler"};
    return names;
}

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_error(const std::string& msg) { fail(ErrorKind::ConfigError, msg); }

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> keys) {
    if (!j.is_object()) config_error(where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            config_error("unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        config_error(where + "." + key + " has the wrong type");
    }
}

inline KernelSpec parse_kernel(const json& j, const std::string& where, KernelSpec k) {
    allow_keys(j, where, {"kind", "lengthscale", "period_steps", "signal_variance", "noise_variance"});
    try {
        if (j.contains("kind")) k.kind = parse_kernel_kind(j.at("kind").get<std::string>());
    } catch (const Error&) {
        config_error(where + ".kind is not a known kernel");
    }
    k.lengthscale = get_or(j, "lengthscale", k.lengthscale, where);
    k.period_steps = get_or(j, "period_steps", k.period_steps, where);
    k.signal_variance = get_or(j, "signal_variance", k.signal_variance, where);
    k.noise_variance = get_or(j, "noise_variance", k.noise_variance, where);
    try {
        k.validate();
    } catch (const Error& e) {
        config_error(where + ": " + e.message());
    }
    return k;
}

inline ModelSpec parse_model(const json& j, std::size_t index, const std::filesystem::path& base) {
    const std::string where = "models[" + std::to_string(index) + "]";
    if (!j.is_object() || !j.contains("name") || !j.at("name").is_string()) config_error(where + " needs a string 'name'");
    ModelSpec m;
    m.name = j.at("name").get<std::string>();
    m.label = get_or<std::string>(j, "label", m.name, where);
    if (m.name == "token-sampler") {
        allow_keys(j, where, {"name", "label", "num_bins", "recency_half_life"});
        TokenSamplerSpec s;
        s.num_bins = get_or(j, "num_bins", s.num_bins, where);
        if (j.contains("recency_half_life")) s.recency_half_life = get_or(j, "recency_half_life", 0.0, where);
        if (s.num_bins < 1) config_error(where + ".num_bins must be positive");
        if (s.recency_half_life && !(*s.recency_half_life > 0.0)) config_error(where + ".recency_half_life must be positive");
        m.options = s;
    } else if (m.name == "segment-dist") {
        allow_keys(j, where, {"name", "label", "head", "dof"});
        SegmentDistSpec s;
        const auto head = get_or<std::string>(j, "head", "student_t", where);
        if (head == "student_t") s.head = HeadKind::student_t;
        else if (head == "exponential") s.head = HeadKind::exponential;
        else config_error(where + ".head must be 'student_t' or 'exponential'");
        s.dof = get_or(j, "dof", s.dof, where);
        if (!(s.dof > 2.0)) config_error(where + ".dof must exceed 2");
        m.options = s;
    } else if (m.name == "gp") {
        allow_keys(j, where, {"name", "label", "grid"});
        GpSpec s;
        if (j.contains("grid")) {
            if (!j.at("grid").is_array() || j.at("grid").empty()) config_error(where + ".grid must be a non-empty array");
            for (std::size_t g = 0; g < j.at("grid").size(); ++g) {
                s.grid.push_back(parse_kernel(j.at("grid")[g], where + ".grid[" + std::to_string(g) + "]", KernelSpec{}));
            }
        }
        m.options = s;
    } else if (m.name == "svr") {
        allow_keys(j, where, {"name", "label", "epsilon", "C", "tol", "kernel"});
        SvrSpec s;
        if (j.contains("epsilon")) s.options.epsilon = get_or(j, "epsilon", 0.0, where);
        s.options.c = get_or(j, "C", s.options.c, where);
        s.options.tol = get_or(j, "tol", s.options.tol, where);
        if (j.contains("kernel")) s.options.kernel = parse_kernel(j.at("kernel"), where + ".kernel", default_svr_kernel());
        if ((s.options.epsilon && !(*s.options.epsilon > 0.0)) || !(s.options.c > 0.0) || !(s.options.tol > 0.0)) {
            config_error(where + ": epsilon, C and tol must be positive");
        }
        m.options = s;
    } else if (m.name == "external") {
        allow_keys(j, where, {"name", "label", "forecasts", "probabilistic"});
        ExternalSpec s;
        const auto path = get_or<std::string>(j, "forecasts", "", where);
        if (path.empty()) config_error(where + " needs a 'forecasts' file");
        s.forecasts = base / path;
        s.probabilistic = get_or(j, "probabilistic", false, where);
        m.options = s;
    } else {
        config_error(where + ": '" + m.name + "' is not a registered model");
    }
    return m;
}

} // namespace detail

/// Checks the invariants that do not need the data: id pattern, resolution,
/// split fraction, window, sampling and unique model labels.
inline void validate_config(const ExperimentConfig& c) {
    using detail::config_error;
    static const std::regex id_pattern("^[A-Z]+-[IA]-([0-9]+)$");
    std::smatch match;
    if (!std::regex_match(c.experiment_id, match, id_pattern)) {
        config_error("experiment_id '" + c.experiment_id + "' does not match COUNTRY-{I|A}-RESOLUTION");
    }
    if (!valid_resolution(c.resolution_minutes)) config_error("resolution_minutes must divide 60");
    if (std::stoi(match[1].str()) != c.resolution_minutes) {
        config_error("experiment_id resolution does not match resolution_minutes");
    }
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) config_error("train_fraction must lie in (0, 1)");
    if (c.window.context_days <= 0 || c.window.horizon_days <= 0 || c.window.stride_days <= 0) {
        config_error("window days must all be positive");
    }
    if (c.models.empty()) config_error("no models configured");
    std::set<std::string> labels;
    for (const auto& m : c.models) {
        if (std::find(registered_models().begin(), registered_models().end(), m.name) == registered_models().end()) {
            config_error("'" + m.name + "' is not a registered model");
        }
        if (!labels.insert(m.label).second) config_error("duplicate model label '" + m.label + "'");
    }
    if (c.num_samples < 2) config_error("num_samples must be at least 2 for quantile scoring");
    const bool has_csv = !c.data.csv.empty();
    if (has_csv == c.data.synthetic.has_value()) config_error("data needs exactly one of 'csv' or 'synthetic'");
    if (c.data.synthetic && (c.data.synthetic->days < 1 || c.data.synthetic->count < 1)) {
        config_error("synthetic data needs positive days and count");
    }
    if (c.data.csv_resolution_minutes && !valid_resolution(*c.data.csv_resolution_minutes)) {
        config_error("data.resolution_minutes must divide 60");
    }
}

/// Parses the JSON config document. Relative paths resolve against `base_dir`.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    using detail::config_error;
    using detail::get_or;
    detail::allow_keys(j, "config", {"experiment_id", "data", "resolution_minutes", "window", "train_fraction",
                                     "models", "num_samples", "master_seed", "output"});
    ExperimentConfig c;
    c.experiment_id = get_or<std::string>(j, "experiment_id", "", "config");
    c.resolution_minutes = get_or(j, "resolution_minutes", c.resolution_minutes, "config");
    c.train_fraction = get_or(j, "train_fraction", c.train_fraction, "config");
    c.num_samples = get_or(j, "num_samples", c.num_samples, "config");
    c.master_seed = get_or(j, "master_seed", c.master_seed, "config");

    if (j.contains("window")) {
        const auto& w = j.at("window");
        detail::allow_keys(w, "window", {"context_days", "horizon_days", "stride_days"});
        c.window.context_days = get_or(w, "context_days", c.window.context_days, "window");
        c.window.horizon_days = get_or(w, "horizon_days", c.window.horizon_days, "window");
        c.window.stride_days = get_or(w, "stride_days", c.window.stride_days, "window");
    }

    if (!j.contains("data")) config_error("config needs a 'data' section");
    const auto& d = j.at("data");
    detail::allow_keys(d, "data", {"csv", "resolution_minutes", "synthetic", "aggregate"});
    if (d.contains("csv")) {
        const auto& csv = d.at("csv");
        if (csv.is_string()) {
            c.data.csv.push_back(base_dir / csv.get<std::string>());
        } else if (csv.is_array()) {
            for (const auto& p : csv) {
                if (!p.is_string()) config_error("data.csv entries must be strings");
                c.data.csv.push_back(base_dir / p.get<std::string>());
            }
        } else {
            config_error("data.csv must be a path or a list of paths");
        }
    }
    if (d.contains("resolution_minutes")) c.data.csv_resolution_minutes = get_or(d, "resolution_minutes", 0, "data");
    c.data.aggregate = get_or(d, "aggregate", false, "data");
    if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        detail::allow_keys(s, "data.synthetic", {"days", "profile", "seed", "count"});
        SyntheticSource src;
        src.days = get_or(s, "days", src.days, "data.synthetic");
        src.seed = get_or(s, "seed", src.seed, "data.synthetic");
        src.count = get_or(s, "count", src.count, "data.synthetic");
        const auto profile = get_or<std::string>(s, "profile", "household", "data.synthetic");
        if (profile == "household") src.profile = SyntheticProfile::household;
        else if (profile == "feeder") src.profile = SyntheticProfile::feeder;
        else config_error("data.synthetic.profile must be 'household' or 'feeder'");
        c.data.synthetic = src;
    }

    if (!j.contains("models") || !j.at("models").is_array()) config_error("config needs a 'models' array");
    for (std::size_t i = 0; i < j.at("models").size(); ++i) {
        c.models.push_back(detail::parse_model(j.at("models")[i], i, base_dir));
    }

    if (j.contains("output")) {
        const auto& o = j.at("output");
        detail::allow_keys(o, "output", {"csv", "markdown"});
        if (o.contains("csv")) c.output.csv = get_or<std::string>(o, "csv", "", "output");
        if (o.contains("markdown")) c.output.markdown = get_or<std::string>(o, "markdown", "", "output");
    }
    c.output.csv = base_dir / c.output.csv;
    c.output.markdown = base_dir / c.output.markdown;
    validate_config(c);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Execution

/// Worker count: explicit override, else LOADCAST_WORKERS, else hardware threads.
inline std::size_t resolve_worker_count(std::optional<std::size_t> requested = std::nullopt) {
    if (requested && *requested > 0) return *requested;
    if (const char* env = std::getenv("LOADCAST_WORKERS")) {
        if (const auto n = detail::parse_int<std::size_t>(env); n && *n > 0) return *n;
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. If any call throws,
/// the exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), n);
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline std::uint64_t window_seed(std::uint64_t master_seed, std::string_view series_id, std::size_t window_index) {
    return detail::hash_combine(detail::hash_combine(master_seed, detail::fnv1a64(series_id)), window_index);
}

inline std::string window_id(const ForecastWindow& w) { return w.series_id + ":" + std::to_string(w.window_index); }

struct ResultRow {
    std::string experiment_id;
    std::string model_name;
    std::optional<double> q10;
    std::optional<double> q50;
    std::optional<double> q90;
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t num_windows = 0;
    double wall_time_seconds = 0.0;
};

inline std::unique_ptr<Forecaster> make_forecaster(const ModelSpec& spec, std::size_t horizon) {
    return std::visit(
        [&](const auto& o) -> std::unique_ptr<Forecaster> {
            using T = std::decay_t<decltype(o)>;
            if constexpr (std::is_same_v<T, TokenSamplerSpec>) {
                return std::make_unique<TokenSamplerForecaster>(o.num_bins, o.recency_half_life);
            } else if constexpr (std::is_same_v<T, SegmentDistSpec>) {
                return std::make_unique<SegmentDistForecaster>(o.head, o.dof);
            } else if constexpr (std::is_same_v<T, GpSpec>) {
                return std::make_unique<GpForecaster>(o.grid);
            } else if constexpr (std::is_same_v<T, SvrSpec>) {
                return std::make_unique<SvrForecaster>(o.options);
            } else {
                return std::make_unique<ExternalForecaster>(ingest_external_forecasts(o.forecasts, horizon),
                                                            o.probabilistic);
            }
        },
        spec.options);
}

/// Loads (or generates) every configured series at the experiment resolution.
inline std::vector<LoadSeries> load_experiment_series(const ExperimentConfig& c) {
    std::vector<LoadSeries> out;
    if (c.data.synthetic) {
        const auto& s = *c.data.synthetic;
        const int native = c.data.csv_resolution_minutes.value_or(c.resolution_minutes);
        for (int i = 0; i < s.count; ++i) {
            out.push_back(generate_synthetic(s.days, native, s.profile, s.seed + static_cast<std::uint64_t>(i)));
        }
    } else {
        const int native = c.data.csv_resolution_minutes.value_or(c.resolution_minutes);
        for (const auto& p : c.data.csv) out.push_back(ingest_csv(p, native));
    }
    for (auto& s : out) {
        if (s.resolution_minutes() != c.resolution_minutes) s = resample(s, c.resolution_minutes);
    }
    if (c.data.aggregate && !out.empty()) {
        auto agg = aggregate(out, c.experiment_id);
        out.clear();
        out.push_back(std::move(agg));
    }
    return out;
}

struct RunOptions {
    std::optional<std::size_t> workers;
    /// Replaces the loaded data; used to study what each model observes.
    std::optional<std::vector<LoadSeries>> series_override;
};

/// Scores every configured model on every test window. Rows are sorted by
/// model label and depend only on (config, data), never on scheduling.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& c, const RunOptions& options = {}) {
    validate_config(c);
    const std::size_t workers = resolve_worker_count(options.workers);
    const auto series = options.series_override ? *options.series_override : load_experiment_series(c);

    struct Prepared {
        LoadSeries train;
        std::vector<ForecastWindow> windows;
    };
    std::vector<Prepared> prepared;
    for (const auto& s : series) {
        try {
            auto split = chronological_split(s, c.train_fraction);
            auto windows = make_windows(split.test, c.window);
            prepared.push_back({std::move(split.train), std::move(windows)});
        } catch (const Error& e) {
            throw e.with_context("experiment " + c.experiment_id + ", series '" + s.series_id() + "'");
        }
    }

    auto models = c.models;
    std::sort(models.begin(), models.end(), [](const ModelSpec& a, const ModelSpec& b) { return a.label < b.label; });

    const std::size_t horizon = c.window.horizon_steps(c.resolution_minutes);
    std::vector<ResultRow> rows;
    for (const auto& spec : models) {
        const auto started = std::chrono::steady_clock::now();
        std::vector<WindowScore> scores;
        try {
            for (const auto& p : prepared) {
                auto forecaster = make_forecaster(spec, horizon);
                if (!forecaster->zero_shot()) forecaster->fit(p.train);
                std::vector<WindowScore> local(p.windows.size());
                parallel_for(p.windows.size(), workers, [&](std::size_t i) {
                    const auto& w = p.windows[i];
                    ForecastRequest req;
                    req.context = w.context;
                    req.horizon = w.target.size();
                    req.num_samples = c.num_samples;
                    req.seed = window_seed(c.master_seed, w.series_id, w.window_index);
                    req.context_start = w.window_start;
                    req.resolution_minutes = w.resolution_minutes;
                    req.window_id = window_id(w);
                    const auto forecast = forecaster->predict(req);
                    local[i] = forecaster->probabilistic() ? score_window(w.target, forecast, req.window_id)
                                                           : score_window(w.target, forecast.path(0), req.window_id);
                });
                scores.insert(scores.end(), local.begin(), local.end());
            }
        } catch (const Error& e) {
            throw e.with_context("experiment " + c.experiment_id + ", model " + spec.label);
        }
        const auto agg = aggregate_scores(scores);
        ResultRow row;
        row.experiment_id = c.experiment_id;
        row.model_name = spec.label;
        row.q10 = agg.q10;
        row.q50 = agg.q50;
        row.q90 = agg.q90;
        row.mae = agg.mae;
        row.rmse = agg.rmse;
        row.num_windows = scores.size();
        row.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Result tables

enum class TableFormat { csv, markdown };

inline std::string format_csv_table(std::span<const ResultRow> rows) {
    auto cell = [](const std::optional<double>& v) { return v ? detail::format_fixed(*v, 4) : std::string(); };
    std::ostringstream out;
    out << "experiment_id,model,q10,q50,q90,mae,rmse,num_windows\n";
    for (const auto& r : rows) {
        out << r.experiment_id << ',' << r.model_name << ',' << cell(r.q10) << ',' << cell(r.q50) << ',' << cell(r.q90)
            << ',' << detail::format_fixed(r.mae, 4) << ',' << detail::format_fixed(r.rmse, 4) << ',' << r.num_windows
            << '\n';
    }
    return out.str();
}

/// One section per experiment id, in first-appearance order; point-only
/// models show "/" in the quantile columns.
inline std::string format_markdown_table(std::span<const ResultRow> rows) {
    auto cell = [](const std::optional<double>& v) { return v ? detail::format_fixed(*v, 4) : std::string("/"); };
    std::vector<std::string> experiments;
    for (const auto& r : rows) {
        if (std::find(experiments.begin(), experiments.end(), r.experiment_id) == experiments.end()) {
            experiments.push_back(r.experiment_id);
        }
    }
    std::ostringstream out;
    for (std::size_t e = 0; e < experiments.size(); ++e) {
        if (e > 0) out << '\n';
        out << "### Experiment ID: " << experiments[e] << "\n\n";
        out << "| Model | Q 10% | Q 50% | Q 90% | MAE | RMSE | Windows |\n";
        out << "|:--|--:|--:|--:|--:|--:|--:|\n";
        for (const auto& r : rows) {
            if (r.experiment_id != experiments[e]) continue;
            out << "| " << r.model_name << " | " << cell(r.q10) << " | " << cell(r.q50) << " | " << cell(r.q90) << " | "
                << detail::format_fixed(r.mae, 4) << " | " << detail::format_fixed(r.rmse, 4) << " | " << r.num_windows
                << " |\n";
        }
    }
    return out.str();
}

inline void emit_table(std::span<const ResultRow> rows, TableFormat format, const std::filesystem::path& path) {
    if (rows.empty()) fail(ErrorKind::EmptyList, "no result rows to write");
    const auto text = format == TableFormat::csv ? format_csv_table(rows) : format_markdown_table(rows);
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out << text;
    out.close();
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

} // namespace loadcast
