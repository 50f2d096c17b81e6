// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "fedalt/nn.hpp"
#include "fedalt/optim.hpp"

namespace fedalt {

struct ModelSpec {
    enum class Kind { mlp, attn };
    Kind kind = Kind::mlp;
    int input_dim = 16;
    int hidden = 32;
    int depth = 1;   // hidden adapted layers in the mlp
    int tokens = 4;  // attn only; input rows are reshaped to tokens x (input_dim/tokens)
    int classes = 8;
};

inline std::string model_kind_name(ModelSpec::Kind k) { return k == ModelSpec::Kind::mlp ? "mlp" : "attn"; }

inline ModelSpec::Kind parse_model_kind(const std::string& s) {
    if (s == "mlp") return ModelSpec::Kind::mlp;
    if (s == "attn") return ModelSpec::Kind::attn;
    throw Error("unknown model kind '" + s + "' (expected mlp or attn)");
}

struct LoraSettings {
    int rank = 8;
    double alpha = 32.0;
    double dropout = 0.0;

    double scale() const { return alpha / rank; }
};

struct ModelSeeds {
    std::uint64_t base = 0;     // shared by all clients, plays the pretrained weights
    std::uint64_t adapter = 0;  // per client
    std::uint64_t shared_adapter = 0;  // common A init for FFA
};

namespace detail {

inline AdaptedLayer make_adapted_layer(int id, int d, int l, const LoraSettings& lora, Strategy strategy,
                                       double fixed_alpha, const ModelSeeds& seeds) {
    const StrategyTraits traits = strategy_traits(strategy);
    AdaptedLayer L;
    L.layer_id = id;
    L.mode = traits.layer_mode;
    L.fixed_alpha = fixed_alpha;
    L.dropout = lora.dropout;
    {
        Rng rng(derive_seed(seeds.base, "base_w", static_cast<std::uint64_t>(id)));
        L.base = gaussian_matrix(l, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    }
    const std::uint64_t a_seed = strategy == Strategy::FFA ? seeds.shared_adapter : seeds.adapter;
    L.individual = lora_init(d, l, lora.rank, lora.scale(), derive_seed(a_seed, "individual", static_cast<std::uint64_t>(id)));
    if (L.has_row()) {
        // rest-of-world starts at zero and is only ever replaced by aggregation
        L.row.rank = lora.rank;
        L.row.scale = lora.scale();
        L.row.A = Matrix(lora.rank, d);
        L.row.B = Matrix(l, lora.rank);
    }
    if (L.has_mixer()) L.mixer = Mixer::zeros(d);
    L.train_base = false;
    L.train_ind_A = traits.train_A;
    L.train_ind_B = traits.train_B;
    L.train_row_A = traits.train_row;
    L.train_row_B = traits.train_row;
    L.train_mixer = traits.train_mixer;
    return L;
}

}  // namespace detail

/// Builds a fresh client model for the given strategy. All clients share the
/// frozen base weights; adapters are per client except FFA's common A.
inline Model build_model(const ModelSpec& spec, const LoraSettings& lora, Strategy strategy,
                         double fixed_alpha, const ModelSeeds& seeds) {
    Model m;
    m.input_dim = spec.input_dim;
    m.output_dim = spec.classes;
    int next_id = 0;
    if (spec.kind == ModelSpec::Kind::mlp) {
        int d = spec.input_dim;
        for (int i = 0; i < spec.depth; ++i) {
            m.blocks.push_back(std::make_unique<DenseBlock>(
                detail::make_adapted_layer(next_id++, d, spec.hidden, lora, strategy, fixed_alpha, seeds)));
            m.blocks.push_back(std::make_unique<TanhBlock>());
            d = spec.hidden;
        }
        m.blocks.push_back(std::make_unique<DenseBlock>(
            detail::make_adapted_layer(next_id++, d, spec.classes, lora, strategy, fixed_alpha, seeds)));
        return m;
    }
    if (spec.input_dim % spec.tokens != 0)
        throw Error("attn model: input_dim must be divisible by tokens");
    const int dm = spec.input_dim / spec.tokens;
    m.tokens = spec.tokens;
    AdaptedLayer q = detail::make_adapted_layer(next_id++, dm, dm, lora, strategy, fixed_alpha, seeds);
    const int k_id = next_id++;
    Matrix wk;
    {
        Rng rng(derive_seed(seeds.base, "base_w", static_cast<std::uint64_t>(k_id)));
        wk = gaussian_matrix(dm, dm, 1.0 / std::sqrt(static_cast<double>(dm)), rng);
    }
    AdaptedLayer v = detail::make_adapted_layer(next_id++, dm, dm, lora, strategy, fixed_alpha, seeds);
    m.blocks.push_back(std::make_unique<AttentionBlock>(std::move(q), std::move(v), k_id, std::move(wk), spec.tokens));
    m.blocks.push_back(std::make_unique<MeanPoolBlock>(spec.tokens));
    m.blocks.push_back(std::make_unique<DenseBlock>(
        detail::make_adapted_layer(next_id++, dm, spec.classes, lora, strategy, fixed_alpha, seeds)));
    return m;
}

/// Convex surrogate for the convergence diagnostics: one square layer whose
/// individual adapter is a dense additive matrix (A frozen at identity,
/// scale 1, B trainable) mixed with the frozen rest-of-world branch at a
/// constant alpha. With cross-entropy plus L2 the per-client objective is
/// strongly convex in the trainable set.
inline Model build_theory_model(int dim, double fixed_alpha, std::uint64_t base_seed) {
    Model m;
    m.input_dim = dim;
    m.output_dim = dim;
    AdaptedLayer L;
    L.layer_id = 0;
    L.mode = LayerMode::FixedWeight;
    L.fixed_alpha = fixed_alpha;
    {
        Rng rng(derive_seed(base_seed, "base_w", 0));
        L.base = gaussian_matrix(dim, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    }
    L.individual.rank = dim;
    L.individual.scale = 1.0;
    L.individual.A = identity(dim);
    L.individual.B = Matrix(dim, dim);
    L.row.rank = dim;
    L.row.scale = 1.0;
    L.row.A = Matrix(dim, dim);
    L.row.B = Matrix(dim, dim);
    L.train_base = false;
    L.train_ind_A = false;  // frozen identity lift
    L.train_ind_B = true;
    L.train_row_A = false;
    L.train_row_B = false;
    L.train_mixer = false;
    m.blocks.push_back(std::make_unique<DenseBlock>(std::move(L)));
    return m;
}

/// Trainable parameters concatenated per client; the quantity whose round to
/// round displacement the convergence diagnostics track.
inline std::map<ParamRef, Matrix> snapshot_trainable(Model& model) {
    std::map<ParamRef, Matrix> snap;
    for (const auto& e : model.params())
        if (e.trainable) snap[e.ref] = *e.mat;
    return snap;
}

inline double snapshot_displacement(const std::map<ParamRef, Matrix>& a, const std::map<ParamRef, Matrix>& b) {
    if (a.size() != b.size()) throw Error("snapshot_displacement: mismatched snapshot sets");
    double acc = 0.0;
    auto ib = b.begin();
    for (const auto& [ref, ma] : a) {
        if (ib->first != ref) throw Error("snapshot_displacement: mismatched snapshot sets");
        const Matrix& mb = ib->second;
        if (!ma.same_shape(mb)) throw Error("snapshot_displacement: shape mismatch in snapshots");
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const double d = ma.data()[i] - mb.data()[i];
            acc += d * d;
        }
        ++ib;
    }
    return std::sqrt(acc);
}

}  // namespace fedalt
