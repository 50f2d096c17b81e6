// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "fedalt/nn.hpp"

namespace fedalt {

enum class OptKind { sgd, adamw };

struct OptimizerConfig {
    OptKind kind = OptKind::adamw;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;  // stream for stochastic training elements (shuffling, dropout)
};

inline OptKind parse_opt_kind(const std::string& s) {
    if (s == "sgd") return OptKind::sgd;
    if (s == "adamw") return OptKind::adamw;
    throw Error("unknown optimizer '" + s + "'");
}

inline std::string opt_kind_name(OptKind k) { return k == OptKind::sgd ? "sgd" : "adamw"; }

struct ParamSlot {
    Matrix m, v;
    long step = 0;
};

struct OptimizerState {
    std::map<ParamRef, ParamSlot> slots;
};

/// Applies one update to every parameter present in `grads`. SGD is the exact
/// p -= lr * g rule; AdamW uses bias-corrected moments with decoupled decay.
/// Parameters absent from `grads` are left untouched bit for bit, and lr == 0
/// never writes at all.
inline void optimizer_step(const std::map<ParamRef, Matrix*>& params, const GradMap& grads,
                           const OptimizerConfig& cfg, OptimizerState& state) {
    for (const auto& [ref, g] : grads) {
        auto it = params.find(ref);
        if (it == params.end())
            throw Error("optimizer_step: gradient for unknown parameter (layer " +
                        std::to_string(ref.layer) + ", " + role_name(ref.role) + ")");
        Matrix& p = *it->second;
        if (!p.same_shape(g))
            throw Error("optimizer_step: shape mismatch for layer " + std::to_string(ref.layer) +
                        " (" + role_name(ref.role) + ")");
        if (cfg.kind == OptKind::sgd) {
            if (cfg.lr == 0.0) continue;
            for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] -= cfg.lr * g.data()[i];
            continue;
        }
        ParamSlot& slot = state.slots[ref];
        if (slot.m.empty()) {
            slot.m = Matrix(p.rows(), p.cols());
            slot.v = Matrix(p.rows(), p.cols());
        }
        slot.step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.step));
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g.data()[i];
            slot.m.data()[i] = cfg.beta1 * slot.m.data()[i] + (1.0 - cfg.beta1) * gi;
            slot.v.data()[i] = cfg.beta2 * slot.v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
            if (cfg.lr == 0.0) continue;
            const double m_hat = slot.m.data()[i] / bc1;
            const double v_hat = slot.v.data()[i] / bc2;
            p.data()[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p.data()[i]);
        }
    }
}

inline void optimizer_step(Model& model, const GradMap& grads, const OptimizerConfig& cfg,
                           OptimizerState& state) {
    std::map<ParamRef, Matrix*> params;
    for (auto& e : model.params()) params[e.ref] = e.mat;
    optimizer_step(params, grads, cfg, state);
}

}  // namespace fedalt
