// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedalt/data.hpp"
#include "fedalt/diagnostics.hpp"
#include "fedalt/federation.hpp"

namespace fedalt {

using json = nlohmann::json;

/// Full description of one experiment: a strategy, a federation layout, the
/// model/adapter settings, and the seeds to sweep.
struct ExperimentConfig {
    Strategy strategy = Strategy::FedALT;
    double fixed_alpha = 0.5;
    bool fixed_alpha_inv_k = false;  // "1/K" in the config
    int clients = 8;
    int rounds = 20;
    int local_epochs = 5;
    int batch_size = 32;
    OptimizerConfig opt{OptKind::adamw, 5e-3, 0.0, 0.9, 0.999, 1e-8, 0};
    ModelSpec model;
    LoraSettings lora;
    HetLevel het = HetLevel::high;
    DataSizes sizes;
    double noise_std = 0.2;
    double shared_fraction = 0.4;
    bool regression_tasks = false;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    bool seeds_explicit = false;
    std::string out_dir = "out";
    int eval_cadence = 5;
    bool theory_mode = false;
    TheoryModeConfig theory;
    int jobs = 1;
    bool weighted_averaging = false;
    bool dump_all_payloads = false;

    double resolved_fixed_alpha() const {
        return fixed_alpha_inv_k ? 1.0 / static_cast<double>(clients) : fixed_alpha;
    }
};

namespace detail {

inline void check_known_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw Error("config: unknown key '" + (where.empty() ? it.key() : where + "." + it.key()) + "'");
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("config: invalid value for key '" + std::string(key) + "'");
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw Error("config: top level must be an object");
    detail::check_known_keys(
        j,
        {"strategy", "fixed_alpha", "clients", "rounds", "local_epochs", "batch_size", "optimizer",
         "model", "lora", "het", "sizes", "noise_std", "shared_fraction", "regression_tasks", "seeds",
         "out", "eval_cadence", "theory_mode", "theory", "jobs", "weighted_averaging",
         "dump_all_payloads"},
        "");
    ExperimentConfig cfg;
    if (j.contains("strategy")) {
        std::string s;
        detail::read_field(j, "strategy", s);
        cfg.strategy = parse_strategy(s);
    }
    if (j.contains("fixed_alpha")) {
        if (j.at("fixed_alpha").is_string()) {
            const std::string s = j.at("fixed_alpha").get<std::string>();
            if (s != "1/K") throw Error("config: fixed_alpha string form must be \"1/K\"");
            cfg.fixed_alpha_inv_k = true;
        } else {
            detail::read_field(j, "fixed_alpha", cfg.fixed_alpha);
        }
    }
    detail::read_field(j, "clients", cfg.clients);
    detail::read_field(j, "rounds", cfg.rounds);
    detail::read_field(j, "local_epochs", cfg.local_epochs);
    detail::read_field(j, "batch_size", cfg.batch_size);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        detail::check_known_keys(o, {"kind", "lr", "weight_decay", "beta1", "beta2", "eps", "seed"}, "optimizer");
        std::string kind = opt_kind_name(cfg.opt.kind);
        detail::read_field(o, "kind", kind);
        cfg.opt.kind = parse_opt_kind(kind);
        detail::read_field(o, "lr", cfg.opt.lr);
        detail::read_field(o, "weight_decay", cfg.opt.weight_decay);
        detail::read_field(o, "beta1", cfg.opt.beta1);
        detail::read_field(o, "beta2", cfg.opt.beta2);
        detail::read_field(o, "eps", cfg.opt.eps);
        detail::read_field(o, "seed", cfg.opt.seed);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        detail::check_known_keys(m, {"kind", "input_dim", "hidden", "depth", "tokens", "classes"}, "model");
        std::string kind = model_kind_name(cfg.model.kind);
        detail::read_field(m, "kind", kind);
        cfg.model.kind = parse_model_kind(kind);
        detail::read_field(m, "input_dim", cfg.model.input_dim);
        detail::read_field(m, "hidden", cfg.model.hidden);
        detail::read_field(m, "depth", cfg.model.depth);
        detail::read_field(m, "tokens", cfg.model.tokens);
        detail::read_field(m, "classes", cfg.model.classes);
    }
    if (j.contains("lora")) {
        const json& l = j.at("lora");
        detail::check_known_keys(l, {"rank", "alpha", "dropout"}, "lora");
        detail::read_field(l, "rank", cfg.lora.rank);
        detail::read_field(l, "alpha", cfg.lora.alpha);
        detail::read_field(l, "dropout", cfg.lora.dropout);
    }
    if (j.contains("het")) {
        std::string s;
        detail::read_field(j, "het", s);
        cfg.het = parse_het_level(s);
    }
    if (j.contains("sizes")) {
        const json& s = j.at("sizes");
        detail::check_known_keys(s, {"train", "eval"}, "sizes");
        detail::read_field(s, "train", cfg.sizes.n_train);
        detail::read_field(s, "eval", cfg.sizes.n_eval);
    }
    detail::read_field(j, "noise_std", cfg.noise_std);
    detail::read_field(j, "shared_fraction", cfg.shared_fraction);
    detail::read_field(j, "regression_tasks", cfg.regression_tasks);
    if (j.contains("seeds")) {
        detail::read_field(j, "seeds", cfg.seeds);
        cfg.seeds_explicit = true;
    }
    detail::read_field(j, "out", cfg.out_dir);
    detail::read_field(j, "eval_cadence", cfg.eval_cadence);
    detail::read_field(j, "theory_mode", cfg.theory_mode);
    if (j.contains("theory")) {
        const json& t = j.at("theory");
        detail::check_known_keys(
            t, {"lambda_reg", "fixed_alpha", "dim", "clients", "rounds", "local_steps", "burn_in", "eta",
                "noise_std", "shared_fraction", "train", "eval"},
            "theory");
        detail::read_field(t, "lambda_reg", cfg.theory.lambda_reg);
        detail::read_field(t, "fixed_alpha", cfg.theory.fixed_alpha);
        detail::read_field(t, "dim", cfg.theory.dim);
        detail::read_field(t, "clients", cfg.theory.clients);
        detail::read_field(t, "rounds", cfg.theory.rounds);
        detail::read_field(t, "local_steps", cfg.theory.local_steps);
        detail::read_field(t, "burn_in", cfg.theory.burn_in);
        detail::read_field(t, "eta", cfg.theory.eta_override);
        detail::read_field(t, "noise_std", cfg.theory.noise_std);
        detail::read_field(t, "shared_fraction", cfg.theory.shared_fraction);
        detail::read_field(t, "train", cfg.theory.sizes.n_train);
        detail::read_field(t, "eval", cfg.theory.sizes.n_eval);
    }
    detail::read_field(j, "jobs", cfg.jobs);
    detail::read_field(j, "weighted_averaging", cfg.weighted_averaging);
    detail::read_field(j, "dump_all_payloads", cfg.dump_all_payloads);
    return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["strategy"] = strategy_name(cfg.strategy);
    if (cfg.fixed_alpha_inv_k)
        j["fixed_alpha"] = "1/K";
    else
        j["fixed_alpha"] = cfg.fixed_alpha;
    j["clients"] = cfg.clients;
    j["rounds"] = cfg.rounds;
    j["local_epochs"] = cfg.local_epochs;
    j["batch_size"] = cfg.batch_size;
    j["optimizer"] = {{"kind", opt_kind_name(cfg.opt.kind)}, {"lr", cfg.opt.lr},
                      {"weight_decay", cfg.opt.weight_decay}, {"beta1", cfg.opt.beta1},
                      {"beta2", cfg.opt.beta2}, {"eps", cfg.opt.eps}, {"seed", cfg.opt.seed}};
    j["model"] = {{"kind", model_kind_name(cfg.model.kind)}, {"input_dim", cfg.model.input_dim},
                  {"hidden", cfg.model.hidden}, {"depth", cfg.model.depth},
                  {"tokens", cfg.model.tokens}, {"classes", cfg.model.classes}};
    j["lora"] = {{"rank", cfg.lora.rank}, {"alpha", cfg.lora.alpha}, {"dropout", cfg.lora.dropout}};
    j["het"] = het_level_name(cfg.het);
    j["sizes"] = {{"train", cfg.sizes.n_train}, {"eval", cfg.sizes.n_eval}};
    j["noise_std"] = cfg.noise_std;
    j["shared_fraction"] = cfg.shared_fraction;
    j["regression_tasks"] = cfg.regression_tasks;
    j["seeds"] = cfg.seeds;
    j["out"] = cfg.out_dir;
    j["eval_cadence"] = cfg.eval_cadence;
    j["theory_mode"] = cfg.theory_mode;
    j["theory"] = {{"lambda_reg", cfg.theory.lambda_reg}, {"fixed_alpha", cfg.theory.fixed_alpha},
                   {"dim", cfg.theory.dim}, {"clients", cfg.theory.clients},
                   {"rounds", cfg.theory.rounds}, {"local_steps", cfg.theory.local_steps},
                   {"burn_in", cfg.theory.burn_in}, {"eta", cfg.theory.eta_override},
                   {"noise_std", cfg.theory.noise_std}, {"shared_fraction", cfg.theory.shared_fraction},
                   {"train", cfg.theory.sizes.n_train}, {"eval", cfg.theory.sizes.n_eval}};
    j["jobs"] = cfg.jobs;
    j["weighted_averaging"] = cfg.weighted_averaging;
    j["dump_all_payloads"] = cfg.dump_all_payloads;
    return j;
}

/// Validation errors always name the offending key.
inline void validate_config(const ExperimentConfig& cfg) {
    auto positive = [](long v, const char* key) {
        if (v < 1) throw Error("config: '" + std::string(key) + "' must be >= 1, got " + std::to_string(v));
    };
    positive(cfg.clients, "clients");
    positive(cfg.rounds, "rounds");
    positive(cfg.local_epochs, "local_epochs");
    positive(cfg.batch_size, "batch_size");
    positive(cfg.eval_cadence, "eval_cadence");
    positive(cfg.jobs, "jobs");
    positive(cfg.sizes.n_train, "sizes.train");
    positive(cfg.sizes.n_eval, "sizes.eval");
    positive(cfg.lora.rank, "lora.rank");
    positive(cfg.model.input_dim, "model.input_dim");
    positive(cfg.model.hidden, "model.hidden");
    positive(cfg.model.depth, "model.depth");
    positive(cfg.model.tokens, "model.tokens");
    positive(cfg.model.classes, "model.classes");
    if (cfg.opt.lr <= 0.0) throw Error("config: 'optimizer.lr' must be > 0");
    if (cfg.opt.beta1 < 0.0 || cfg.opt.beta1 >= 1.0) throw Error("config: 'optimizer.beta1' must be in [0,1)");
    if (cfg.opt.beta2 < 0.0 || cfg.opt.beta2 >= 1.0) throw Error("config: 'optimizer.beta2' must be in [0,1)");
    if (cfg.lora.alpha <= 0.0) throw Error("config: 'lora.alpha' must be > 0");
    if (cfg.lora.dropout < 0.0 || cfg.lora.dropout >= 1.0) throw Error("config: 'lora.dropout' must be in [0,1)");
    if (!cfg.fixed_alpha_inv_k && (cfg.fixed_alpha < 0.0 || cfg.fixed_alpha > 1.0))
        throw Error("config: 'fixed_alpha' must be in [0,1] or \"1/K\"");
    if (cfg.seeds.empty()) throw Error("config: 'seeds' must not be empty");
    if (cfg.noise_std < 0.0) throw Error("config: 'noise_std' must be >= 0");
    if (cfg.shared_fraction < 0.0 || cfg.shared_fraction > 1.0)
        throw Error("config: 'shared_fraction' must be in [0,1]");
    if (strategy_traits(cfg.strategy).needs_peers && cfg.clients < 2)
        throw Error("config: strategy " + strategy_name(cfg.strategy) +
                    " with clients=1 is invalid (rest-of-world is undefined for a single client; use LocalOnly)");
    // the rank bound applies to every adapted layer the model will build
    int min_dim = std::min(cfg.model.input_dim, cfg.model.classes);
    if (cfg.model.kind == ModelSpec::Kind::mlp) {
        min_dim = std::min({cfg.model.input_dim, cfg.model.hidden, cfg.model.classes});
    } else {
        if (cfg.model.input_dim % cfg.model.tokens != 0)
            throw Error("config: 'model.input_dim' must be divisible by 'model.tokens'");
        const int dm = cfg.model.input_dim / cfg.model.tokens;
        min_dim = std::min(dm, cfg.model.classes);
    }
    if (cfg.lora.rank > min_dim)
        throw Error("config: 'lora.rank' " + std::to_string(cfg.lora.rank) +
                    " exceeds the smallest adapted-layer dimension " + std::to_string(min_dim));
    if (cfg.theory_mode) {
        positive(cfg.theory.dim, "theory.dim");
        positive(cfg.theory.clients, "theory.clients");
        positive(cfg.theory.rounds, "theory.rounds");
        positive(cfg.theory.local_steps, "theory.local_steps");
        if (cfg.theory.lambda_reg <= 0.0) throw Error("config: 'theory.lambda_reg' must be > 0");
        if (cfg.theory.burn_in < 0) throw Error("config: 'theory.burn_in' must be >= 0");
    }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("config: not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace fedalt
