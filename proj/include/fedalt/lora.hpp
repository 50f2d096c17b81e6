// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fedalt/matrix.hpp"
#include "fedalt/rng.hpp"

namespace fedalt {

/// Low-rank adapter pair attached to one l x d weight matrix.
/// Effective weight update is scale * B * A with A: r x d, B: l x r.
struct LoRAAdapter {
    Matrix A;  // r x d
    Matrix B;  // l x r
    int rank = 0;
    double scale = 1.0;  // lora_alpha / rank

    bool present() const { return rank > 0; }

    Matrix effective_update() const { return scaled(matmul(B, A), scale); }
};

/// A is Gaussian with std 1/sqrt(r), B starts at zero so the initial update
/// B*A is exactly zero and the layer behaves like its base weight.
inline LoRAAdapter lora_init(int d, int l, int r, double scale, std::uint64_t seed) {
    if (r < 1 || r > std::min(d, l))
        throw Error("lora_init: rank " + std::to_string(r) + " outside [1, min(" +
                    std::to_string(d) + "," + std::to_string(l) + ")]");
    LoRAAdapter ad;
    ad.rank = r;
    ad.scale = scale;
    Rng rng(seed);
    ad.A = gaussian_matrix(r, d, 1.0 / std::sqrt(static_cast<double>(r)), rng);
    ad.B = Matrix(l, r);
    return ad;
}

/// Per-client gating matrix. softmax(G x) yields the weight on the individual
/// branch and its complement on the rest-of-world branch, per input row.
struct Mixer {
    Matrix G;  // 2 x d

    static Mixer zeros(int d) {
        Mixer m;
        m.G = Matrix(2, d);
        return m;
    }
};

namespace detail {
// Keeps both weights strictly inside (0,1) even when one logit dominates so
// hard that the other exponent underflows.
inline constexpr double kMixFloor = 1e-15;
inline double clamp_weight(double w) { return std::clamp(w, kMixFloor, 1.0 - kMixFloor); }
}  // namespace detail

/// Softmax over the two mixer logits with max-subtraction. Returns
/// (individual weight, rest-of-world weight); the pair always sums to 1.
inline std::pair<double, double> mixer_weights(const Mixer& mixer, std::span<const double> x) {
    if (static_cast<int>(x.size()) != mixer.G.cols()) throw Error("mixer_weights: input length mismatch");
    double z0 = 0.0, z1 = 0.0;
    auto g0 = mixer.G.row(0);
    auto g1 = mixer.G.row(1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        z0 += g0[i] * x[i];
        z1 += g1[i] * x[i];
    }
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m);
    const double e1 = std::exp(z1 - m);
    const double alpha = detail::clamp_weight(e0 / (e0 + e1));
    return {alpha, 1.0 - alpha};
}

enum class LayerMode { SingleAdapter, FedAlt, FixedWeight };

/// One adapted weight matrix: frozen base plus an individual adapter, and in
/// fedalt/fixed-weight modes a rest-of-world adapter. The mixer exists only
/// in fedalt mode. Trainability is per matrix; the base never trains during
/// federation but can be enabled for gradient checks.
struct AdaptedLayer {
    int layer_id = 0;
    LayerMode mode = LayerMode::SingleAdapter;
    Matrix base;  // l x d, frozen in every strategy
    LoRAAdapter individual;
    LoRAAdapter row;
    Mixer mixer;
    double fixed_alpha = 0.5;  // used in FixedWeight mode
    double dropout = 0.0;      // inverted dropout on the adapter input path

    bool train_base = false;
    bool train_ind_A = true;
    bool train_ind_B = true;
    bool train_row_A = false;
    bool train_row_B = false;
    bool train_mixer = false;

    int in_dim() const { return base.cols(); }
    int out_dim() const { return base.rows(); }

    bool has_row() const { return mode != LayerMode::SingleAdapter; }
    bool has_mixer() const { return mode == LayerMode::FedAlt; }
};

namespace detail {
inline Matrix adapter_output(const LoRAAdapter& ad, const Matrix& x) {
    // scale * (x A^T) B^T, shape n x l
    return scaled(matmul_nt(matmul_nt(x, ad.A), ad.B), ad.scale);
}
}  // namespace detail

/// y_i = W0 x_i + alpha(x_i) * s_L B_L A_L x_i + (1 - alpha(x_i)) * s_R B_R A_R x_i,
/// gated independently per input row.
inline Matrix fedalt_forward(const AdaptedLayer& layer, const Matrix& x) {
    if (layer.mode != LayerMode::FedAlt) throw Error("fedalt_forward: layer not in fedalt mode");
    if (x.cols() != layer.in_dim()) throw Error("fedalt_forward: input width mismatch");
    Matrix y = matmul_nt(x, layer.base);
    const Matrix o_ind = detail::adapter_output(layer.individual, x);
    const Matrix o_row = detail::adapter_output(layer.row, x);
    for (int i = 0; i < x.rows(); ++i) {
        const auto [a, b] = mixer_weights(layer.mixer, x.row(i));
        auto yi = y.row(i);
        auto oi = o_ind.row(i);
        auto ri = o_row.row(i);
        for (int j = 0; j < y.cols(); ++j) yi[j] += a * oi[j] + b * ri[j];
    }
    return y;
}

/// Same composition with a constant alpha in place of the mixer.
inline Matrix fixed_weight_forward(const AdaptedLayer& layer, const Matrix& x, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw Error("fixed_weight_forward: alpha outside [0,1]");
    if (!layer.has_row()) throw Error("fixed_weight_forward: layer has no rest-of-world adapter");
    if (x.cols() != layer.in_dim()) throw Error("fixed_weight_forward: input width mismatch");
    Matrix y = matmul_nt(x, layer.base);
    add_inplace(y, detail::adapter_output(layer.individual, x), alpha);
    add_inplace(y, detail::adapter_output(layer.row, x), 1.0 - alpha);
    return y;
}

/// Base plus one adapter, the composition used by the FedAvg-family baselines.
inline Matrix single_adapter_forward(const Matrix& base, const LoRAAdapter& ad, const Matrix& x) {
    if (x.cols() != base.cols()) throw Error("single_adapter_forward: input width mismatch");
    Matrix y = matmul_nt(x, base);
    if (ad.present()) add_inplace(y, detail::adapter_output(ad, x));
    return y;
}

inline Matrix adapted_layer_forward(const AdaptedLayer& layer, const Matrix& x) {
    switch (layer.mode) {
        case LayerMode::FedAlt: return fedalt_forward(layer, x);
        case LayerMode::FixedWeight: return fixed_weight_forward(layer, x, layer.fixed_alpha);
        case LayerMode::SingleAdapter: return single_adapter_forward(layer.base, layer.individual, x);
    }
    throw Error("adapted_layer_forward: bad mode");
}

/// Trainable-parameter accounting for one adapted l x d layer.
struct ParamCount {
    long long trainable = 0;
    long long total = 0;
    double ratio() const { return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total); }
};

}  // namespace fedalt
