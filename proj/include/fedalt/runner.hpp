// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedalt/config.hpp"
#include "fedalt/diagnostics.hpp"
#include "fedalt/metrics.hpp"

namespace fedalt {

namespace fs = std::filesystem;

/// The config fields that determine the generated datasets; runs must agree on
/// these to be comparable.
inline json data_fingerprint(const ExperimentConfig& cfg) {
    json j;
    j["clients"] = cfg.clients;
    j["het"] = het_level_name(cfg.het);
    j["sizes"] = {{"train", cfg.sizes.n_train}, {"eval", cfg.sizes.n_eval}};
    j["noise_std"] = cfg.noise_std;
    j["shared_fraction"] = cfg.shared_fraction;
    j["regression_tasks"] = cfg.regression_tasks;
    j["input_dim"] = cfg.model.input_dim;
    j["classes"] = cfg.model.classes;
    j["seeds"] = cfg.seeds;
    return j;
}

inline FedRunConfig make_fed_run_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    FedRunConfig rc;
    rc.strategy = cfg.strategy;
    rc.fixed_alpha = cfg.resolved_fixed_alpha();
    rc.clients = cfg.clients;
    rc.schedule = {cfg.rounds, cfg.local_epochs, cfg.batch_size, cfg.eval_cadence};
    rc.model = cfg.model;
    rc.lora = cfg.lora;
    rc.opt = cfg.opt;
    rc.loss = cfg.regression_tasks ? Loss::mse : Loss::cross_entropy;
    rc.run_seed = seed;
    rc.jobs = cfg.jobs;
    rc.weighted_averaging = cfg.weighted_averaging;
    return rc;
}

inline std::vector<ClientDataset> make_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
    HeterogeneityConfig het;
    het.level = cfg.het;
    het.clients = cfg.clients;
    het.input_dim = cfg.model.input_dim;
    het.classes = cfg.model.classes;
    het.noise_std = cfg.noise_std;
    het.shared_fraction = cfg.shared_fraction;
    het.regression = cfg.regression_tasks;
    return build_federation_data(het, cfg.sizes, derive_seed(seed, "data"));
}

namespace detail {

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string round_tag(int round) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", round);
    return buf;
}

}  // namespace detail

/// Runs one federation per seed, streaming metrics to <out>/metrics.csv and
/// traces to <out>/traces/seed_<s>.csv, then writes the summary table and
/// final checkpoints. Returns the process exit status.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
    validate_config(cfg);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    fs::create_directories(out / "traces");
    fs::create_directories(out / "checkpoints");
    detail::write_file(out / "config.json", config_to_json(cfg).dump(2) + "\n");

    if (cfg.theory_mode) {
        bool all_pass = true;
        for (std::uint64_t seed : cfg.seeds) {
            TheoryModeConfig tc = cfg.theory;
            tc.seed = seed;
            const TheoryVerdict v = theory_mode_run(tc);
            all_pass = all_pass && v.pass;
            std::ostringstream rep;
            rep << "theory mode, seed " << seed << "\n"
                << "verdict: " << (v.pass ? "PASS" : "FAIL") << "\n"
                << "mu_hat " << detail::fmt_double(v.mu_hat) << ", eta " << detail::fmt_double(v.eta) << "\n"
                << "beta_hat " << detail::fmt_double(v.fit.beta) << ", intercept "
                << detail::fmt_double(v.fit.intercept) << ", epsilon_hat " << detail::fmt_double(v.fit.epsilon)
                << ", residual " << detail::fmt_double(v.fit.residual) << "\n"
                << "delta0 " << detail::fmt_double(v.delta0) << ", delta_last "
                << detail::fmt_double(v.delta_last) << "\n"
                << v.reason << "\n";
            detail::write_file(out / ("theory_seed_" + std::to_string(seed) + ".txt"), rep.str());
            std::ofstream trace(out / "traces" / ("seed_" + std::to_string(seed) + ".csv"), std::ios::binary);
            trace << kTraceHeader << '\n';
            for (const TraceRow& r : v.trace) trace << trace_row_line(r) << '\n';
            log << "[theory seed " << seed << "] " << (v.pass ? "PASS" : "FAIL") << ": " << v.reason << "\n";
        }
        return all_pass ? 0 : 1;
    }

    std::ofstream metrics(out / "metrics.csv", std::ios::binary);
    metrics << kMetricsHeader << '\n';
    std::vector<MetricsLogRow> all_rows;
    const std::string strat = strategy_name(cfg.strategy);

    for (std::uint64_t seed : cfg.seeds) {
        FedRunConfig rc = make_fed_run_config(cfg, seed);
        std::vector<ClientDataset> data = make_datasets(cfg, seed);

        const fs::path payload_dir = out / "payloads" / ("seed_" + std::to_string(seed));
        FederationRun run(std::move(rc), std::move(data));
        if (cfg.dump_all_payloads) fs::create_directories(payload_dir);
        run.on_broadcast = [&](int round, int client, const std::string& text) {
            if (!cfg.dump_all_payloads && round != cfg.rounds) return;
            fs::create_directories(payload_dir);
            detail::write_file(payload_dir / ("round_" + detail::round_tag(round) + "_client_" +
                                              std::to_string(client) + ".payload"),
                               text);
        };

        RunResult result = run_schedule(run);

        for (const MetricRow& r : result.metrics) {
            MetricsLogRow row{seed, strat, r.round, r.client, r.split, r.loss, r.accuracy};
            metrics << metrics_row_line(row) << '\n';
            metrics.flush();
            all_rows.push_back(std::move(row));
        }
        std::ofstream trace(out / "traces" / ("seed_" + std::to_string(seed) + ".csv"), std::ios::binary);
        trace << kTraceHeader << '\n';
        for (const TraceRow& r : result.trace) trace << trace_row_line(r) << '\n';

        const fs::path ck_dir = out / "checkpoints" / ("seed_" + std::to_string(seed));
        fs::create_directories(ck_dir);
        for (int k = 0; k < cfg.clients; ++k)
            detail::write_file(ck_dir / ("client_" + std::to_string(k) + ".adapters"),
                               result.final_checkpoints[k]);
        log << "[" << strat << " seed " << seed << "] done\n";
    }

    const std::vector<SummaryRow> summary = summarize_metrics(all_rows);
    detail::write_file(out / "summary.csv", summary_csv(summary));
    detail::write_file(out / "summary.txt", summary_table(summary));
    log << summary_table(summary);
    return 0;
}

/// Loads a finished run directory back for comparison.
inline StrategyRunData load_run_dir(const std::string& dir) {
    const fs::path p(dir);
    const ExperimentConfig cfg = parse_config_file((p / "config.json").string());
    const std::vector<MetricsLogRow> rows = parse_metrics_csv(detail::read_file(p / "metrics.csv"));
    StrategyRunData d = strategy_run_data(rows, data_fingerprint(cfg));
    if (d.strategy.empty()) d.strategy = strategy_name(cfg.strategy);
    return d;
}

inline CompareReport compare_run_dirs(const std::vector<std::string>& dirs, std::ostream& log = std::cerr) {
    std::vector<StrategyRunData> runs;
    for (const std::string& d : dirs) runs.push_back(load_run_dir(d));
    CompareReport report = compare_strategies(runs);
    log << report.text;
    return report;
}

}  // namespace fedalt
