// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner for the federated LoRA simulator. Subcommands:
//   run       execute a federation experiment (or the theory-mode diagnostic)
//   compare   paired comparison of finished run directories
//   gradcheck backprop-vs-finite-differences sweep

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedalt/runner.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            seeds.push_back(std::stoull(tok));
        } catch (...) {
            throw fedalt::Error("bad seed value '" + tok + "' in --seeds");
        }
    }
    if (seeds.empty()) throw fedalt::Error("--seeds parsed to an empty list");
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedalt: federated LoRA fine-tuning simulator"};
    app.require_subcommand(1);

    // ----- run -----
    auto* run = app.add_subcommand("run", "run one experiment (one strategy, all configured seeds)");
    std::string config_path, strategy, het, model_kind, seeds_csv, out_dir, fixed_alpha;
    std::optional<int> clients, rounds, local_epochs, batch_size, rank, jobs, eval_cadence;
    std::optional<int> hidden, input_dim, classes, tokens, depth, train_size, eval_size;
    std::optional<double> lora_alpha, dropout, lr, noise_std, shared_fraction;
    bool theory_mode = false, dump_all_payloads = false, weighted_avg = false, regression = false;
    run->add_option("--config", config_path, "JSON config file; flags override its values");
    run->add_option("--strategy", strategy,
                    "FedALT | FedIT | FFA | FedSA | LocalOnly | RoWUpdate | FixedWeight | AvgMixer | GlobalAvgRoW");
    run->add_option("--clients", clients, "number of clients K");
    run->add_option("--rounds", rounds, "communication rounds T");
    run->add_option("--local-epochs", local_epochs, "local epochs S per round");
    run->add_option("--batch-size", batch_size, "minibatch size");
    run->add_option("--rank", rank, "LoRA rank r");
    run->add_option("--lora-alpha", lora_alpha, "LoRA alpha (scale = alpha / r)");
    run->add_option("--dropout", dropout, "LoRA dropout on the adapter input path");
    run->add_option("--het", het, "heterogeneity level: high | mild | low");
    run->add_option("--seeds", seeds_csv, "comma-separated run seeds");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--eval-cadence", eval_cadence, "evaluate every N rounds");
    run->add_option("--model", model_kind, "model kind: mlp | attn");
    run->add_option("--jobs", jobs, "parallel clients per round (results are identical for any value)");
    run->add_option("--lr", lr, "optimizer learning rate");
    run->add_option("--noise-std", noise_std, "teacher label noise");
    run->add_option("--shared-fraction", shared_fraction, "shared teacher component weight in [0,1]");
    run->add_option("--fixed-alpha", fixed_alpha, "FixedWeight strategy alpha (number or 1/K)");
    run->add_option("--hidden", hidden, "mlp hidden width");
    run->add_option("--input-dim", input_dim, "input dimension");
    run->add_option("--classes", classes, "class count / regression outputs");
    run->add_option("--tokens", tokens, "attn tokens per example");
    run->add_option("--depth", depth, "mlp hidden layer count");
    run->add_option("--train-size", train_size, "training samples per client");
    run->add_option("--eval-size", eval_size, "eval samples per client");
    run->add_flag("--theory-mode", theory_mode, "run the convex-surrogate convergence diagnostic");
    run->add_flag("--dump-all-payloads", dump_all_payloads, "write every broadcast payload, not just the last round");
    run->add_flag("--weighted-averaging", weighted_avg, "weight aggregation by client dataset size");
    run->add_flag("--regression-tasks", regression, "use regression teachers instead of classification");

    // ----- compare -----
    auto* cmp = app.add_subcommand("compare", "paired per-seed comparison of finished runs");
    std::vector<std::string> cmp_dirs;
    std::string cmp_out;
    cmp->add_option("dirs", cmp_dirs, "run directories; the first is the reference")->expected(-2);
    cmp->add_option("--out", cmp_out, "also write the report to this file");

    // ----- gradcheck -----
    auto* gc = app.add_subcommand("gradcheck", "backprop vs central finite differences");
    int gc_models = 100;
    std::uint64_t gc_seed = 1;
    double gc_tol = 1e-5;
    gc->add_option("--models", gc_models, "number of randomized models");
    gc->add_option("--seed", gc_seed, "suite seed");
    gc->add_option("--tol", gc_tol, "max relative error to pass");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            fedalt::ExperimentConfig cfg;
            if (!config_path.empty()) cfg = fedalt::parse_config_file(config_path);
            if (!strategy.empty()) cfg.strategy = fedalt::parse_strategy(strategy);
            if (clients) cfg.clients = *clients;
            if (rounds) cfg.rounds = *rounds;
            if (local_epochs) cfg.local_epochs = *local_epochs;
            if (batch_size) cfg.batch_size = *batch_size;
            if (rank) cfg.lora.rank = *rank;
            if (lora_alpha) cfg.lora.alpha = *lora_alpha;
            if (dropout) cfg.lora.dropout = *dropout;
            if (!het.empty()) cfg.het = fedalt::parse_het_level(het);
            if (!seeds_csv.empty()) {
                cfg.seeds = parse_seed_list(seeds_csv);
                cfg.seeds_explicit = true;
            }
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            if (eval_cadence) cfg.eval_cadence = *eval_cadence;
            if (!model_kind.empty()) cfg.model.kind = fedalt::parse_model_kind(model_kind);
            if (jobs) cfg.jobs = *jobs;
            if (lr) cfg.opt.lr = *lr;
            if (noise_std) cfg.noise_std = *noise_std;
            if (shared_fraction) cfg.shared_fraction = *shared_fraction;
            if (!fixed_alpha.empty()) {
                if (fixed_alpha == "1/K") {
                    cfg.fixed_alpha_inv_k = true;
                } else {
                    cfg.fixed_alpha_inv_k = false;
                    cfg.fixed_alpha = std::stod(fixed_alpha);
                }
            }
            if (hidden) cfg.model.hidden = *hidden;
            if (input_dim) cfg.model.input_dim = *input_dim;
            if (classes) cfg.model.classes = *classes;
            if (tokens) cfg.model.tokens = *tokens;
            if (depth) cfg.model.depth = *depth;
            if (train_size) cfg.sizes.n_train = *train_size;
            if (eval_size) cfg.sizes.n_eval = *eval_size;
            if (theory_mode) cfg.theory_mode = true;
            if (dump_all_payloads) cfg.dump_all_payloads = true;
            if (weighted_avg) cfg.weighted_averaging = true;
            if (regression) cfg.regression_tasks = true;
            if (!cfg.seeds_explicit) {
                if (const char* env = std::getenv("FEDLORA_SEED")) {
                    try {
                        cfg.seeds = {std::stoull(env)};
                    } catch (...) {
                        throw fedalt::Error("FEDLORA_SEED is not an integer: " + std::string(env));
                    }
                }
            }
            return fedalt::run_experiment(cfg);
        }
        if (cmp->parsed()) {
            const fedalt::CompareReport report = fedalt::compare_run_dirs(cmp_dirs, std::cerr);
            std::cout << report.text;
            if (!cmp_out.empty()) fedalt::detail::write_file(cmp_out, report.text);
            return 0;
        }
        if (gc->parsed()) {
            const fedalt::GradCheckReport report = fedalt::gradient_check_suite(gc_models, gc_seed, gc_tol);
            std::cout << "models " << report.models_checked << ", entries " << report.entries_checked
                      << ", max relative error " << report.max_rel_err << "\n";
            if (!report.worst_case.empty()) std::cout << "worst: " << report.worst_case << "\n";
            std::cout << (report.pass ? "PASS" : "FAIL") << "\n";
            return report.pass ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
