// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "fedalt/data.hpp"
#include "fedalt/models.hpp"
#include "fedalt/nn.hpp"
#include "fedalt/optim.hpp"
#include "fedalt/serialize.hpp"
#include "fedalt/strategy.hpp"

namespace fedalt {

struct RoundSchedule {
    int rounds = 20;
    int local_epochs = 5;
    int batch_size = 32;
    int eval_cadence = 5;
};

struct ClientState {
    int id = 0;
    Model model;
    std::shared_ptr<const ClientDataset> data;
    OptimizerConfig opt_cfg;
    OptimizerState opt_state;
    Rng stream;  // minibatch shuffling and dropout, persisted across rounds
    Loss loss_kind = Loss::cross_entropy;
    double lambda_reg = 0.0;  // L2 added to the loss on the trainable set when > 0
    double last_train_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> step_losses;  // per-step losses of the last local round

    ClientState() : stream(0) {}
};

// ---------------------------------------------------------------------------
// upload / broadcast payloads
// ---------------------------------------------------------------------------

namespace detail {
inline const Matrix& role_matrix(const AdaptedLayer& L, WireRole role) {
    switch (role) {
        case WireRole::A_L: return L.individual.A;
        case WireRole::B_L: return L.individual.B;
        case WireRole::A_R: return L.row.A;
        case WireRole::B_R: return L.row.B;
        case WireRole::G: return L.mixer.G;
    }
    throw Error("role_matrix: bad role");
}

inline Matrix& role_matrix(AdaptedLayer& L, WireRole role) {
    return const_cast<Matrix&>(role_matrix(static_cast<const AdaptedLayer&>(L), role));
}
}  // namespace detail

/// layer id -> role -> (rows, cols)
using ShapeMap = std::map<int, std::map<WireRole, std::pair<int, int>>>;

inline ShapeMap shape_map(Model& model, const std::vector<WireRole>& roles) {
    ShapeMap shapes;
    for (AdaptedLayer* L : model.adapted_layers())
        for (WireRole r : roles) {
            const Matrix& m = detail::role_matrix(*L, r);
            shapes[L->layer_id][r] = {m.rows(), m.cols()};
        }
    return shapes;
}

/// Rejects any payload whose layers, roles or shapes differ from the schema.
inline void validate_adapter_set(const AdapterSet& set, const ShapeMap& schema, const std::string& what) {
    if (set.layers.size() != schema.size())
        throw Error(what + ": expected " + std::to_string(schema.size()) + " layers, got " +
                    std::to_string(set.layers.size()));
    for (const auto& [layer_id, roles] : schema) {
        auto it = set.layers.find(layer_id);
        if (it == set.layers.end()) throw Error(what + ": missing layer " + std::to_string(layer_id));
        if (it->second.size() != roles.size())
            throw Error(what + ": layer " + std::to_string(layer_id) + " role set does not match the strategy");
        for (const auto& [role, shape] : roles) {
            auto mit = it->second.find(role);
            if (mit == it->second.end())
                throw Error(what + ": layer " + std::to_string(layer_id) + " missing role " + wire_role_name(role));
            if (mit->second.rows() != shape.first || mit->second.cols() != shape.second)
                throw Error(what + ": layer " + std::to_string(layer_id) + " role " + wire_role_name(role) +
                            " has wrong shape");
        }
    }
}

/// The matrices a client shares with the server under the strategy. The mixer
/// never appears here except under the AvgMixer ablation, whose whole point is
/// to average it.
inline AdapterSet extract_upload(ClientState& client, Strategy strategy, int round) {
    const StrategyTraits traits = strategy_traits(strategy);
    AdapterSet set;
    set.client_id = client.id;
    set.round = round;
    for (AdaptedLayer* L : client.model.adapted_layers())
        for (WireRole r : traits.upload_roles) set.layers[L->layer_id][r] = detail::role_matrix(*L, r);
    return set;
}

/// Full adapter state of a client, for checkpoints.
inline AdapterSet extract_checkpoint(ClientState& client, int round) {
    AdapterSet set;
    set.client_id = client.id;
    set.round = round;
    for (AdaptedLayer* L : client.model.adapted_layers()) {
        auto& layer = set.layers[L->layer_id];
        layer[WireRole::A_L] = L->individual.A;
        layer[WireRole::B_L] = L->individual.B;
        if (L->has_row()) {
            layer[WireRole::A_R] = L->row.A;
            layer[WireRole::B_R] = L->row.B;
        }
        if (L->has_mixer()) layer[WireRole::G] = L->mixer.G;
    }
    return set;
}

inline void apply_broadcast(ClientState& client, const AdapterSet& payload, Strategy strategy) {
    const StrategyTraits traits = strategy_traits(strategy);
    validate_adapter_set(payload, shape_map(client.model, traits.broadcast_roles),
                         "broadcast to client " + std::to_string(client.id));
    for (AdaptedLayer* L : client.model.adapted_layers())
        for (WireRole r : traits.broadcast_roles)
            detail::role_matrix(*L, r) = payload.layers.at(L->layer_id).at(r);
}

// ---------------------------------------------------------------------------
// server-side aggregation
// ---------------------------------------------------------------------------

namespace detail {
inline const AdapterSet& upload_for(const std::vector<AdapterSet>& uploads, int k) {
    for (const AdapterSet& u : uploads)
        if (u.client_id == k) return u;
    throw Error("aggregate: missing upload from client " + std::to_string(k));
}

/// Entrywise mean of `src_roles` over the selected clients, emitted under
/// `dst_roles`. Weights default to uniform.
inline AdapterSet mean_of(const std::vector<AdapterSet>& uploads, const std::vector<int>& members,
                          const std::vector<WireRole>& src_roles, const std::vector<WireRole>& dst_roles,
                          const std::vector<double>& weights) {
    AdapterSet out;
    double total_w = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) total_w += weights.empty() ? 1.0 : weights[i];
    bool first = true;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const AdapterSet& u = upload_for(uploads, members[i]);
        const double w = (weights.empty() ? 1.0 : weights[i]) / total_w;
        for (const auto& [layer_id, roles] : u.layers) {
            for (std::size_t ri = 0; ri < src_roles.size(); ++ri) {
                auto it = roles.find(src_roles[ri]);
                if (it == roles.end())
                    throw Error("aggregate: client " + std::to_string(u.client_id) + " upload missing role " +
                                wire_role_name(src_roles[ri]));
                Matrix& acc = out.layers[layer_id][dst_roles[ri]];
                if (first && acc.empty()) acc = Matrix(it->second.rows(), it->second.cols());
                if (!acc.same_shape(it->second))
                    throw Error("aggregate: shape mismatch in upload of client " + std::to_string(u.client_id));
                add_inplace(acc, it->second, w);
            }
        }
        first = false;
    }
    return out;
}
}  // namespace detail

/// Rest-of-world adapters for client k: the entrywise mean of every other
/// client's individual adapters.
inline AdapterSet compute_row(const std::vector<AdapterSet>& uploads, int k,
                              const std::vector<double>& weights = {}) {
    const int n = static_cast<int>(uploads.size());
    if (n < 2) throw Error("compute_row: rest-of-world is undefined for a single client; use LocalOnly");
    std::vector<int> members;
    std::vector<double> w;
    for (const AdapterSet& u : uploads)
        if (u.client_id != k) {
            members.push_back(u.client_id);
            if (!weights.empty()) {
                if (u.client_id < 0 || u.client_id >= static_cast<int>(weights.size()))
                    throw Error("compute_row: no weight for client " + std::to_string(u.client_id));
                w.push_back(weights[u.client_id]);
            }
        }
    if (static_cast<int>(members.size()) != n - 1) throw Error("compute_row: duplicate or missing client ids");
    AdapterSet out = detail::mean_of(uploads, members, {WireRole::A_L, WireRole::B_L},
                                     {WireRole::A_R, WireRole::B_R}, w);
    out.client_id = k;
    return out;
}

/// Same quantity through the global average: (K * mean_all - own) / (K - 1).
/// Must agree with compute_row to floating-point accumulation error.
inline AdapterSet compute_row_via_global(const std::vector<AdapterSet>& uploads, int k,
                                         const std::vector<double>& weights = {}) {
    const int n = static_cast<int>(uploads.size());
    if (n < 2) throw Error("compute_row_via_global: rest-of-world is undefined for a single client");
    std::vector<int> all;
    std::vector<double> w;
    double total_w = 0.0, own_w = 1.0;
    for (const AdapterSet& u : uploads) {
        all.push_back(u.client_id);
        const double wi = weights.empty() ? 1.0 : weights[u.client_id];
        w.push_back(wi);
        total_w += wi;
        if (u.client_id == k) own_w = wi;
    }
    AdapterSet mean_all = detail::mean_of(uploads, all, {WireRole::A_L, WireRole::B_L},
                                          {WireRole::A_R, WireRole::B_R}, weights.empty() ? std::vector<double>{} : w);
    const AdapterSet& own = detail::upload_for(uploads, k);
    AdapterSet out;
    out.client_id = k;
    for (auto& [layer_id, roles] : mean_all.layers) {
        for (auto& [role, m] : roles) {
            const WireRole src = role == WireRole::A_R ? WireRole::A_L : WireRole::B_L;
            Matrix v = scaled(m, total_w);
            add_inplace(v, own.layers.at(layer_id).at(src), -own_w);
            scale_inplace(v, 1.0 / (total_w - own_w));
            out.layers[layer_id][role] = std::move(v);
        }
    }
    return out;
}

/// Turns one round of uploads into per-client broadcast payloads.
inline std::map<int, AdapterSet> aggregate(Strategy strategy, const std::vector<AdapterSet>& uploads,
                                           int expected_clients, const std::vector<double>& weights = {}) {
    std::map<int, AdapterSet> out;
    std::vector<int> all;
    for (int k = 0; k < expected_clients; ++k) {
        detail::upload_for(uploads, k);  // errors name the missing client
        all.push_back(k);
    }
    if (strategy == Strategy::LocalOnly) {
        return out;  // nothing to share
    }
    if (expected_clients < 2)
        throw Error("aggregate: strategy " + strategy_name(strategy) + " needs at least 2 clients");
    switch (strategy) {
        case Strategy::FedALT:
        case Strategy::FixedWeight:
            for (int k = 0; k < expected_clients; ++k) out[k] = compute_row(uploads, k, weights);
            break;
        case Strategy::AvgMixer: {
            for (int k = 0; k < expected_clients; ++k) out[k] = compute_row(uploads, k, weights);
            // the ablated part: one shared mixer, averaged over every client
            AdapterSet g = detail::mean_of(uploads, all, {WireRole::G}, {WireRole::G}, weights);
            for (int k = 0; k < expected_clients; ++k)
                for (const auto& [layer_id, roles] : g.layers)
                    out[k].layers[layer_id][WireRole::G] = roles.at(WireRole::G);
            break;
        }
        case Strategy::GlobalAvgRoW: {
            AdapterSet g = detail::mean_of(uploads, all, {WireRole::A_L, WireRole::B_L},
                                           {WireRole::A_R, WireRole::B_R}, weights);
            for (int k = 0; k < expected_clients; ++k) out[k] = g;
            break;
        }
        case Strategy::RoWUpdate:
            // the locally updated rest-of-world adapters are averaged over the peers
            for (int k = 0; k < expected_clients; ++k) {
                std::vector<int> members;
                for (int m = 0; m < expected_clients; ++m)
                    if (m != k) members.push_back(m);
                out[k] = detail::mean_of(uploads, members, {WireRole::A_R, WireRole::B_R},
                                         {WireRole::A_R, WireRole::B_R}, {});
                out[k].client_id = k;
            }
            break;
        case Strategy::FedIT: {
            AdapterSet g = detail::mean_of(uploads, all, {WireRole::A_L, WireRole::B_L},
                                           {WireRole::A_L, WireRole::B_L}, weights);
            for (int k = 0; k < expected_clients; ++k) out[k] = g;
            break;
        }
        case Strategy::FFA: {
            AdapterSet g = detail::mean_of(uploads, all, {WireRole::B_L}, {WireRole::B_L}, weights);
            for (int k = 0; k < expected_clients; ++k) out[k] = g;
            break;
        }
        case Strategy::FedSA: {
            AdapterSet g = detail::mean_of(uploads, all, {WireRole::A_L}, {WireRole::A_L}, weights);
            for (int k = 0; k < expected_clients; ++k) out[k] = g;
            break;
        }
        default:
            throw Error("aggregate: unhandled strategy");
    }
    for (auto& [k, set] : out) {
        set.client_id = k;
        set.round = uploads.front().round;
    }
    return out;
}

// ---------------------------------------------------------------------------
// client local training
// ---------------------------------------------------------------------------

struct EvalResult {
    double loss = 0.0;
    double accuracy = std::numeric_limits<double>::quiet_NaN();
};

inline EvalResult evaluate(Model& model, const Batch& batch, Loss loss, bool classification) {
    TrainContext ctx;
    const Matrix pred = model.forward(batch.inputs, ctx);
    EvalResult r;
    r.loss = loss_value(loss, pred, batch.targets);
    if (classification) {
        int hits = 0;
        for (int i = 0; i < pred.rows(); ++i) {
            auto row = pred.row(i);
            int best = 0;
            for (int c = 1; c < pred.cols(); ++c)
                if (row[c] > row[best]) best = c;
            if (best == static_cast<int>(batch.targets(i, 0))) ++hits;
        }
        r.accuracy = static_cast<double>(hits) / pred.rows();
    }
    return r;
}

namespace detail {
inline Batch slice_batch(const Batch& full, const std::vector<int>& idx, int begin, int count) {
    Batch b;
    b.inputs = Matrix(count, full.inputs.cols());
    b.targets = Matrix(count, full.targets.cols());
    for (int i = 0; i < count; ++i) {
        const int src = idx[begin + i];
        for (int j = 0; j < full.inputs.cols(); ++j) b.inputs(i, j) = full.inputs(src, j);
        for (int j = 0; j < full.targets.cols(); ++j) b.targets(i, j) = full.targets(src, j);
    }
    return b;
}

inline double l2_regularize(ClientState& c, GradMap& grads) {
    if (c.lambda_reg <= 0.0) return 0.0;
    double penalty = 0.0;
    std::map<ParamRef, Matrix*> params;
    for (auto& e : c.model.params())
        if (e.trainable) params[e.ref] = e.mat;
    for (auto& [ref, g] : grads) {
        const Matrix& p = *params.at(ref);
        for (std::size_t i = 0; i < p.size(); ++i) {
            penalty += p.data()[i] * p.data()[i];
            g.data()[i] += c.lambda_reg * p.data()[i];
        }
    }
    return 0.5 * c.lambda_reg * penalty;
}
}  // namespace detail

/// Applies the broadcast payload (when given), then runs S epochs of minibatch
/// training on the client's own data and returns the serialized upload. The
/// upload holds exactly the strategy's shared role set.
inline std::string client_local_round(ClientState& client, const std::string* payload_text,
                                      const RoundSchedule& schedule, Strategy strategy) {
    if (schedule.local_epochs < 1) throw Error("client_local_round: local_epochs must be >= 1");
    const StrategyTraits traits = strategy_traits(strategy);
    if (payload_text != nullptr) {
        if (traits.broadcast_roles.empty())
            throw Error("client " + std::to_string(client.id) + ": strategy " + strategy_name(strategy) +
                        " expects no broadcast payload");
        apply_broadcast(client, read_adapter_set(*payload_text), strategy);
    }

    const Batch& train = client.data->train;
    const int n = train.inputs.rows();
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;

    TrainContext ctx;
    ctx.training = true;
    ctx.rng = &client.stream;

    client.step_losses.clear();
    double loss_acc = 0.0;
    int steps = 0;
    std::map<ParamRef, Matrix*> params;
    for (auto& e : client.model.params()) params[e.ref] = e.mat;

    for (int epoch = 0; epoch < schedule.local_epochs; ++epoch) {
        if (schedule.batch_size < n) client.stream.shuffle(idx);  // full-batch training needs no order
        for (int begin = 0; begin < n; begin += schedule.batch_size) {
            const int count = std::min(schedule.batch_size, n - begin);
            const Batch mini = detail::slice_batch(train, idx, begin, count);
            auto [loss, grads] = backprop(client.model, mini, client.loss_kind, ctx);
            loss += detail::l2_regularize(client, grads);
            optimizer_step(params, grads, client.opt_cfg, client.opt_state);
            client.step_losses.push_back(loss);
            loss_acc += loss;
            ++steps;
        }
    }
    client.last_train_loss = loss_acc / steps;
    return write_adapter_set(extract_upload(client, strategy, schedule.rounds));
}

// ---------------------------------------------------------------------------
// full federation run
// ---------------------------------------------------------------------------

struct FedRunConfig {
    Strategy strategy = Strategy::FedALT;
    double fixed_alpha = 0.5;  // FixedWeight composition weight
    int clients = 8;
    RoundSchedule schedule;
    ModelSpec model;
    LoraSettings lora;
    OptimizerConfig opt;
    Loss loss = Loss::cross_entropy;
    bool theory_model = false;  // use the convex surrogate model
    double lambda_reg = 0.0;
    std::uint64_t run_seed = 1;
    int jobs = 1;
    bool weighted_averaging = false;
    bool record_step_losses = false;
};

struct TraceRow {
    int round = 0;
    int client = 0;
    double displacement = 0.0;
    double delta_max = 0.0;
    double train_loss = 0.0;
    double eval_metric = std::numeric_limits<double>::quiet_NaN();
};

struct MetricRow {
    int round = 0;
    int client = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
    std::vector<MetricRow> metrics;
    std::vector<TraceRow> trace;
    std::vector<std::string> final_checkpoints;
    std::map<int, std::string> last_broadcasts;
    std::vector<std::vector<std::vector<double>>> step_losses;  // [round][client][step]
};

struct ServerState {
    Strategy strategy = Strategy::FedALT;
    int round = 0;
    std::map<int, std::string> uploads;  // current round, serialized
};

class FederationRun {
public:
    FedRunConfig cfg;
    std::vector<std::unique_ptr<ClientState>> clients;
    ServerState server;
    std::function<void(int round, int client, const std::string&)> on_upload;
    std::function<void(int round, int client, const std::string&)> on_broadcast;

    FederationRun(FedRunConfig config, std::vector<ClientDataset> data) : cfg(std::move(config)) {
        if (cfg.schedule.rounds < 1) throw Error("federation: rounds must be >= 1");
        if (cfg.schedule.local_epochs < 1) throw Error("federation: local_epochs must be >= 1");
        if (cfg.schedule.batch_size < 1) throw Error("federation: batch_size must be >= 1");
        if (static_cast<int>(data.size()) != cfg.clients) throw Error("federation: dataset count != clients");
        if (cfg.clients < 2 && strategy_traits(cfg.strategy).needs_peers)
            throw Error("strategy " + strategy_name(cfg.strategy) +
                        " needs at least 2 clients (rest-of-world is undefined for K=1); use LocalOnly");
        server.strategy = cfg.strategy;
        for (int k = 0; k < cfg.clients; ++k) {
            auto c = std::make_unique<ClientState>();
            c->id = k;
            c->data = std::make_shared<const ClientDataset>(std::move(data[k]));
            c->opt_cfg = cfg.opt;
            c->loss_kind = cfg.loss;
            c->lambda_reg = cfg.lambda_reg;
            c->stream = Rng(derive_seed(cfg.run_seed + cfg.opt.seed, "client_stream", static_cast<std::uint64_t>(k)));
            ModelSeeds seeds;
            seeds.base = derive_seed(cfg.run_seed, "base_model");
            seeds.adapter = derive_seed(cfg.run_seed, "adapter", static_cast<std::uint64_t>(k));
            seeds.shared_adapter = derive_seed(cfg.run_seed, "ffa_shared");
            c->model = cfg.theory_model
                           ? build_theory_model(cfg.model.input_dim, cfg.fixed_alpha, seeds.base)
                           : build_model(cfg.model, cfg.lora, cfg.strategy, cfg.fixed_alpha, seeds);
            clients.push_back(std::move(c));
        }
    }

    /// One communication round: parallel local training, aggregation, and the
    /// broadcast swap. Bit-identical regardless of the job count.
    std::map<int, AdapterSet> round() {
        server.round += 1;
        std::vector<std::string> uploads_text(clients.size());
        std::vector<std::exception_ptr> errors(clients.size());
        auto work = [&](int k) {
            try {
                uploads_text[k] = client_local_round(*clients[k], nullptr, cfg.schedule, cfg.strategy);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        };
        const int jobs = std::max(1, cfg.jobs);
        if (jobs == 1) {
            for (std::size_t k = 0; k < clients.size(); ++k) work(static_cast<int>(k));
        } else {
            std::vector<std::thread> pool;
            for (int j = 0; j < jobs; ++j)
                pool.emplace_back([&, j] {
                    for (std::size_t k = j; k < clients.size(); k += jobs) work(static_cast<int>(k));
                });
            for (auto& t : pool) t.join();
        }
        for (std::size_t k = 0; k < errors.size(); ++k)
            if (errors[k]) {
                try {
                    std::rethrow_exception(errors[k]);
                } catch (const std::exception& e) {
                    throw Error("round " + std::to_string(server.round) + ", client " + std::to_string(k) +
                                ": " + e.what());
                }
            }

        // the wire schema is exercised even in-process: parse + validate every upload
        const StrategyTraits traits = strategy_traits(cfg.strategy);
        std::vector<AdapterSet> uploads;
        ShapeMap upload_schema = shape_map(clients[0]->model, traits.upload_roles);
        for (std::size_t k = 0; k < clients.size(); ++k) {
            server.uploads[static_cast<int>(k)] = uploads_text[k];
            if (on_upload) on_upload(server.round, static_cast<int>(k), uploads_text[k]);
            AdapterSet u = read_adapter_set(uploads_text[k]);
            u.round = server.round;
            if (u.client_id != static_cast<int>(k))
                throw Error("upload claims client " + std::to_string(u.client_id) + ", expected " + std::to_string(k));
            validate_adapter_set(u, upload_schema, "upload from client " + std::to_string(k));
            uploads.push_back(std::move(u));
        }

        std::vector<double> weights;
        if (cfg.weighted_averaging)
            for (auto& c : clients) weights.push_back(static_cast<double>(c->data->train.inputs.rows()));

        std::map<int, AdapterSet> payloads = aggregate(cfg.strategy, uploads, cfg.clients, weights);
        for (auto& [k, payload] : payloads) {
            const std::string text = write_adapter_set(payload);
            if (on_broadcast) on_broadcast(server.round, k, text);
            apply_broadcast(*clients[k], read_adapter_set(text), cfg.strategy);
        }
        return payloads;
    }
};

/// Executes the whole schedule on an existing run, recording metrics at the
/// evaluation cadence, per-round displacement traces, and final checkpoints.
inline RunResult run_schedule(FederationRun& run) {
    const FedRunConfig& c = run.cfg;
    RunResult result;

    std::vector<std::map<ParamRef, Matrix>> prev(c.clients);
    for (int k = 0; k < c.clients; ++k) prev[k] = snapshot_trainable(run.clients[k]->model);

    std::map<int, AdapterSet> last_payloads;
    for (int t = 1; t <= c.schedule.rounds; ++t) {
        last_payloads = run.round();
        if (c.record_step_losses) {
            result.step_losses.emplace_back();
            for (auto& cl : run.clients) result.step_losses.back().push_back(cl->step_losses);
        }

        const bool eval_now = t % c.schedule.eval_cadence == 0 || t == c.schedule.rounds;
        std::vector<EvalResult> eval_results(c.clients);
        if (eval_now) {
            for (int k = 0; k < c.clients; ++k) {
                ClientState& cl = *run.clients[k];
                const EvalResult train_r = evaluate(cl.model, cl.data->train, cl.loss_kind, cl.data->classification);
                eval_results[k] = evaluate(cl.model, cl.data->eval, cl.loss_kind, cl.data->classification);
                result.metrics.push_back({t, k, "train", train_r.loss, train_r.accuracy});
                result.metrics.push_back({t, k, "eval", eval_results[k].loss, eval_results[k].accuracy});
            }
        }

        std::vector<double> disp(c.clients);
        double delta_max = 0.0;
        for (int k = 0; k < c.clients; ++k) {
            auto snap = snapshot_trainable(run.clients[k]->model);
            disp[k] = snapshot_displacement(snap, prev[k]);
            prev[k] = std::move(snap);
            delta_max = std::max(delta_max, disp[k]);
        }
        for (int k = 0; k < c.clients; ++k) {
            ClientState& cl = *run.clients[k];
            const double metric = eval_now ? (cl.data->classification ? eval_results[k].accuracy
                                                                      : eval_results[k].loss)
                                           : std::numeric_limits<double>::quiet_NaN();
            result.trace.push_back({t, k, disp[k], delta_max, cl.last_train_loss, metric});
        }
    }

    for (int k = 0; k < c.clients; ++k)
        result.final_checkpoints.push_back(
            write_adapter_set(extract_checkpoint(*run.clients[k], c.schedule.rounds)));
    for (auto& [k, payload] : last_payloads) result.last_broadcasts[k] = write_adapter_set(payload);
    return result;
}

inline RunResult run_federation(FedRunConfig cfg, std::vector<ClientDataset> data) {
    FederationRun run(std::move(cfg), std::move(data));
    return run_schedule(run);
}

}  // namespace fedalt
