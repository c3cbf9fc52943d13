#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "loadcast/bench.hpp"
#include "loadcast/error.hpp"
#include "loadcast/forecast.hpp"
#include "loadcast/metrics.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Realised loads for external scoring, as `window_id,step,value`. Every
/// window must cover steps 0..H-1 with the same H.
inline std::map<std::string, std::vector<double>> read_actuals(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::EmptyFile, path.string() + ": no header line");
    if (detail::trim_cr(line) != "window_id,step,value") {
        fail(ErrorKind::MalformedRow, path.string() + ": expected header 'window_id,step,value'");
    }
    std::map<std::string, std::map<long long, double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto row = detail::trim_cr(line);
        if (row.empty()) continue;
        const auto f = detail::split_fields(row);
        const auto step = f.size() == 3 ? detail::parse_int<long long>(f[1]) : std::nullopt;
        const auto value = f.size() == 3 ? detail::parse_double(f[2]) : std::nullopt;
        if (f.size() != 3 || f[0].empty() || !step || *step < 0 || !value) {
            fail(ErrorKind::MalformedRow, path.string() + " line " + std::to_string(lineno));
        }
        if (!rows[std::string(f[0])].emplace(*step, *value).second) {
            fail(ErrorKind::MalformedRow, path.string() + " line " + std::to_string(lineno) + ": duplicate step");
        }
    }
    if (rows.empty()) fail(ErrorKind::EmptyFile, path.string() + ": no rows");
    std::map<std::string, std::vector<double>> out;
    for (auto& [id, steps] : rows) {
        if (static_cast<std::size_t>(steps.rbegin()->first) + 1 != steps.size()) {
            fail(ErrorKind::RaggedPaths, "actuals for window '" + id + "' have gaps");
        }
        std::vector<double> v;
        for (const auto& [step, value] : steps) v.push_back(value);
        if (!out.empty() && out.begin()->second.size() != v.size()) {
            fail(ErrorKind::RaggedPaths, "actuals for window '" + id + "' differ in length from the others");
        }
        out.emplace(id, std::move(v));
    }
    return out;
}

/// Scores externally produced forecasts against actuals into one result row.
inline ResultRow score_external(const std::filesystem::path& actuals_path, const std::filesystem::path& forecasts_path,
                                const std::string& experiment_id, const std::string& model_name) {
    const auto actuals = read_actuals(actuals_path);
    const std::size_t horizon = actuals.begin()->second.size();
    const auto forecasts = ingest_external_forecasts(forecasts_path, horizon);
    std::vector<WindowScore> scores;
    for (const auto& f : forecasts) {
        const auto it = actuals.find(f.window_id);
        if (it == actuals.end()) fail(ErrorKind::InvalidArgument, "no actuals for window '" + f.window_id + "'");
        scores.push_back(f.forecast.num_samples() >= 2 ? score_window(it->second, f.forecast, f.window_id)
                                                       : score_window(it->second, f.forecast.path(0), f.window_id));
    }
    const auto agg = aggregate_scores(scores);
    return ResultRow{experiment_id, model_name, agg.q10, agg.q50, agg.q90, agg.mae, agg.rmse, scores.size(), 0.0};
}

/// Entry point of the `loadcast` tool. Exit 0 on success, 1 on invalid
/// input or configuration, 2 on failures while running.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Probabilistic short-term load forecasting benchmark"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an experiment and write its result tables");
    std::string run_config;
    std::optional<std::uint64_t> run_seed;
    std::string run_out;
    std::optional<std::size_t> run_workers;
    run->add_option("--config", run_config, "Experiment config (JSON)")->required();
    run->add_option("--seed", run_seed, "Override master_seed");
    run->add_option("--out", run_out, "Directory for the result tables");
    run->add_option("--workers", run_workers, "Worker threads (default: LOADCAST_WORKERS or all cores)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic load series as CSV");
    int synth_days = 0;
    int synth_resolution = 60;
    std::string synth_profile = "household";
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--days", synth_days, "Number of days")->required();
    synth->add_option("--resolution", synth_resolution, "Minutes per reading")->required();
    synth->add_option("--profile", synth_profile, "household or feeder")
        ->required()
        ->check(CLI::IsMember({"household", "feeder"}));
    synth->add_option("--seed", synth_seed, "Random seed")->required();
    synth->add_option("--out", synth_out, "Output CSV")->required();

    auto* score = app.add_subcommand("score", "Score external forecasts against actuals");
    std::string score_actuals;
    std::string score_forecasts;
    std::string score_out;
    std::string score_markdown;
    std::string score_id = "EXTERNAL";
    std::string score_model = "external";
    score->add_option("--actuals", score_actuals, "window_id,step,value CSV")->required();
    score->add_option("--forecasts", score_forecasts, "window_id,sample_id,step,value CSV")->required();
    score->add_option("--out", score_out, "Result CSV")->required();
    score->add_option("--markdown", score_markdown, "Also write a markdown table");
    score->add_option("--experiment-id", score_id, "Experiment id for the result row");
    score->add_option("--model", score_model, "Model name for the result row");

    auto* validate = app.add_subcommand("validate", "Check an experiment config");
    std::string validate_config_path;
    validate->add_option("--config", validate_config_path, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*validate) {
            const auto c = load_config(validate_config_path);
            out << "ok: " << c.experiment_id << " with " << c.models.size() << " model(s)\n";
            return kExitOk;
        }
        if (*synth) {
            if (synth_days < 1) fail(ErrorKind::ConfigError, "--days must be positive");
            if (!valid_resolution(synth_resolution)) fail(ErrorKind::ConfigError, "--resolution must divide 60");
            const auto profile = synth_profile == "feeder" ? SyntheticProfile::feeder : SyntheticProfile::household;
            write_load_csv(synth_out, generate_synthetic(synth_days, synth_resolution, profile, synth_seed));
            return kExitOk;
        }
        if (*run) {
            auto c = load_config(run_config);
            if (run_seed) c.master_seed = *run_seed;
            if (!run_out.empty()) {
                std::filesystem::create_directories(run_out);
                c.output.csv = std::filesystem::path(run_out) / c.output.csv.filename();
                c.output.markdown = std::filesystem::path(run_out) / c.output.markdown.filename();
            }
            const auto rows = run_experiment(c, RunOptions{run_workers, std::nullopt});
            for (const auto& r : rows) {
                err << r.experiment_id << ' ' << r.model_name << ": " << r.num_windows << " windows in "
                    << detail::format_fixed(r.wall_time_seconds, 2) << " s\n";
            }
            emit_table(rows, TableFormat::csv, c.output.csv);
            emit_table(rows, TableFormat::markdown, c.output.markdown);
            return kExitOk;
        }
        if (*score) {
            const std::vector<ResultRow> rows{score_external(score_actuals, score_forecasts, score_id, score_model)};
            emit_table(rows, TableFormat::csv, score_out);
            if (!score_markdown.empty()) emit_table(rows, TableFormat::markdown, score_markdown);
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::ConfigError ? kExitValidation : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitValidation;
}

} // namespace loadcast
