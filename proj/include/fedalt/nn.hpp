// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fedalt/lora.hpp"
#include "fedalt/matrix.hpp"
#include "fedalt/rng.hpp"
#include "fedalt/strategy.hpp"

namespace fedalt {

enum class Role { base, lora_A, lora_B, row_A, row_B, mixer };

inline std::string role_name(Role r) {
    switch (r) {
        case Role::base: return "base";
        case Role::lora_A: return "lora_A";
        case Role::lora_B: return "lora_B";
        case Role::row_A: return "row_A";
        case Role::row_B: return "row_B";
        case Role::mixer: return "mixer";
    }
    throw Error("role_name: bad role");
}

/// Addresses one matrix inside one layer.
struct ParamRef {
    int layer = 0;
    Role role = Role::base;
    auto operator<=>(const ParamRef&) const = default;
};

using GradMap = std::map<ParamRef, Matrix>;

struct Batch {
    Matrix inputs;   // n x d
    Matrix targets;  // n x out for mse, n x 1 class indices for cross_entropy
};

enum class Loss { mse, cross_entropy };

struct TrainContext {
    bool training = false;
    Rng* rng = nullptr;  // dropout stream, only consulted when training
};

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace detail {
inline void softmax_row(std::span<const double> z, std::span<double> p) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        p[j] = std::exp(z[j] - m);
        sum += p[j];
    }
    for (std::size_t j = 0; j < z.size(); ++j) p[j] /= sum;
}

inline int class_index(const Matrix& targets, int i, int n_classes) {
    const double t = targets(i, 0);
    const int c = static_cast<int>(t);
    if (static_cast<double>(c) != t || c < 0 || c >= n_classes)
        throw Error("cross_entropy: target " + std::to_string(t) + " is not a class index");
    return c;
}
}  // namespace detail

inline double loss_value(Loss kind, const Matrix& pred, const Matrix& targets) {
    const int n = pred.rows();
    if (n == 0) throw Error("loss: empty batch");
    if (kind == Loss::mse) {
        if (!pred.same_shape(targets)) throw Error("mse: prediction/target shape mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.data()[i] - targets.data()[i];
            acc += d * d;
        }
        return acc / (2.0 * n);
    }
    if (targets.rows() != n || targets.cols() != 1) throw Error("cross_entropy: targets must be n x 1");
    std::vector<double> p(pred.cols());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        detail::softmax_row(pred.row(i), p);
        acc -= std::log(p[detail::class_index(targets, i, pred.cols())]);
    }
    return acc / n;
}

inline double loss_and_grad(Loss kind, const Matrix& pred, const Matrix& targets, Matrix& d_pred) {
    const int n = pred.rows();
    if (n == 0) throw Error("loss: empty batch");
    d_pred = Matrix(pred.rows(), pred.cols());
    if (kind == Loss::mse) {
        if (!pred.same_shape(targets)) throw Error("mse: prediction/target shape mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.data()[i] - targets.data()[i];
            acc += d * d;
            d_pred.data()[i] = d / n;
        }
        return acc / (2.0 * n);
    }
    if (targets.rows() != n || targets.cols() != 1) throw Error("cross_entropy: targets must be n x 1");
    std::vector<double> p(pred.cols());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        detail::softmax_row(pred.row(i), p);
        const int c = detail::class_index(targets, i, pred.cols());
        acc -= std::log(p[c]);
        auto di = d_pred.row(i);
        for (int j = 0; j < pred.cols(); ++j) di[j] = p[j] / n;
        di[c] -= 1.0 / n;
    }
    return acc / n;
}

/// [n x l] = W [l x d] applied to each input row.
inline Matrix linear_forward(const Matrix& w, const Matrix& x) {
    if (w.cols() != x.cols()) throw Error("linear_forward: weight expects " + std::to_string(w.cols()) +
                                          " inputs, got " + std::to_string(x.cols()));
    return matmul_nt(x, w);
}

// ---------------------------------------------------------------------------
// adapted-layer forward/backward with caches (shared by dense and attention)
// ---------------------------------------------------------------------------

namespace detail {

struct AdaptedOp {
    AdaptedLayer* layer = nullptr;

    Matrix x, xd;  // xd = adapter-path input after dropout (== x when no dropout)
    Matrix u_ind, o_ind, u_row, o_row;
    Matrix mask;
    std::vector<double> alpha;
    bool have_mask = false;

    Matrix forward(const Matrix& input, TrainContext& ctx) {
        AdaptedLayer& L = *layer;
        if (input.cols() != L.in_dim()) throw Error("adapted layer " + std::to_string(L.layer_id) + ": input width mismatch");
        x = input;
        have_mask = ctx.training && L.dropout > 0.0;
        if (have_mask) {
            if (ctx.rng == nullptr) throw Error("dropout requires an rng in the train context");
            mask = Matrix(x.rows(), x.cols());
            const double keep = 1.0 - L.dropout;
            for (std::size_t i = 0; i < mask.size(); ++i)
                mask.data()[i] = ctx.rng->uniform() < keep ? 1.0 / keep : 0.0;
            xd = x;
            for (std::size_t i = 0; i < xd.size(); ++i) xd.data()[i] *= mask.data()[i];
        } else {
            xd = x;
        }

        Matrix y = matmul_nt(x, L.base);
        u_ind = matmul_nt(xd, L.individual.A);
        o_ind = scaled(matmul_nt(u_ind, L.individual.B), L.individual.scale);
        const bool row = L.has_row();
        if (row) {
            u_row = matmul_nt(xd, L.row.A);
            o_row = scaled(matmul_nt(u_row, L.row.B), L.row.scale);
        }
        alpha.assign(x.rows(), 1.0);
        for (int i = 0; i < x.rows(); ++i) {
            double a = 1.0;
            if (L.mode == LayerMode::FedAlt) a = mixer_weights(L.mixer, x.row(i)).first;
            else if (L.mode == LayerMode::FixedWeight) a = L.fixed_alpha;
            alpha[i] = a;
            auto yi = y.row(i);
            auto oi = o_ind.row(i);
            for (int j = 0; j < y.cols(); ++j) yi[j] += a * oi[j];
            if (row) {
                auto ri = o_row.row(i);
                for (int j = 0; j < y.cols(); ++j) yi[j] += (1.0 - a) * ri[j];
            }
        }
        return y;
    }

    Matrix backward(const Matrix& d_y, GradMap& grads) {
        AdaptedLayer& L = *layer;
        Matrix dx = matmul(d_y, L.base);
        if (L.train_base) grads[{L.layer_id, Role::base}] = matmul_tn(d_y, x);

        const bool row = L.has_row();
        Matrix d_o_ind(d_y.rows(), d_y.cols());
        Matrix d_o_row;
        if (row) d_o_row = Matrix(d_y.rows(), d_y.cols());
        for (int i = 0; i < d_y.rows(); ++i) {
            const double a = alpha[i];
            auto src = d_y.row(i);
            auto di = d_o_ind.row(i);
            for (int j = 0; j < d_y.cols(); ++j) di[j] = a * src[j];
            if (row) {
                auto dr = d_o_row.row(i);
                for (int j = 0; j < d_y.cols(); ++j) dr[j] = (1.0 - a) * src[j];
            }
        }

        Matrix dxd(xd.rows(), xd.cols());
        backward_adapter(L.individual, L.train_ind_A, L.train_ind_B, Role::lora_A, Role::lora_B,
                         d_o_ind, u_ind, dxd, grads);
        if (row)
            backward_adapter(L.row, L.train_row_A, L.train_row_B, Role::row_A, Role::row_B,
                             d_o_row, u_row, dxd, grads);

        if (L.mode == LayerMode::FedAlt) {
            // dL/dalpha_i = dY_i . (O_ind_i - O_row_i); alpha = sigmoid of the
            // logit gap, so the two logits get +/- alpha(1-alpha) times that.
            Matrix g_mix(2, L.in_dim());
            auto g0 = L.mixer.G.row(0);
            auto g1 = L.mixer.G.row(1);
            for (int i = 0; i < d_y.rows(); ++i) {
                double s = 0.0;
                auto dyi = d_y.row(i);
                auto oi = o_ind.row(i);
                auto ri = o_row.row(i);
                for (int j = 0; j < d_y.cols(); ++j) s += dyi[j] * (oi[j] - ri[j]);
                const double a = alpha[i];
                const double dz0 = s * a * (1.0 - a);
                auto xi = x.row(i);
                auto m0 = g_mix.row(0);
                auto m1 = g_mix.row(1);
                auto dxi = dx.row(i);
                for (int j = 0; j < L.in_dim(); ++j) {
                    m0[j] += dz0 * xi[j];
                    m1[j] -= dz0 * xi[j];
                    dxi[j] += dz0 * (g0[j] - g1[j]);
                }
            }
            if (L.train_mixer) grads[{L.layer_id, Role::mixer}] = std::move(g_mix);
        }

        if (have_mask)
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += dxd.data()[i] * mask.data()[i];
        else
            add_inplace(dx, dxd);
        return dx;
    }

private:
    void backward_adapter(const LoRAAdapter& ad, bool train_A, bool train_B, Role role_A, Role role_B,
                          const Matrix& d_o, const Matrix& u, Matrix& dxd, GradMap& grads) {
        AdaptedLayer& L = *layer;
        if (train_B) grads[{L.layer_id, role_B}] = scaled(matmul_tn(d_o, u), ad.scale);
        Matrix du = scaled(matmul(d_o, ad.B), ad.scale);
        if (train_A) grads[{L.layer_id, role_A}] = matmul_tn(du, xd);
        add_inplace(dxd, matmul(du, ad.A));
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// blocks
// ---------------------------------------------------------------------------

struct ParamEntry {
    ParamRef ref;
    Matrix* mat;
    bool trainable;
};

class Block {
public:
    virtual ~Block() = default;
    virtual Matrix forward(const Matrix& x, TrainContext& ctx) = 0;
    virtual Matrix backward(const Matrix& d_y, GradMap& grads) = 0;
    virtual void collect_params(std::vector<ParamEntry>&) {}
    virtual void collect_adapted(std::vector<AdaptedLayer*>&) {}
    virtual std::string name() const = 0;
};

namespace detail {
inline void collect_adapted_params(AdaptedLayer& L, std::vector<ParamEntry>& out) {
    out.push_back({{L.layer_id, Role::base}, &L.base, L.train_base});
    out.push_back({{L.layer_id, Role::lora_A}, &L.individual.A, L.train_ind_A});
    out.push_back({{L.layer_id, Role::lora_B}, &L.individual.B, L.train_ind_B});
    if (L.has_row()) {
        out.push_back({{L.layer_id, Role::row_A}, &L.row.A, L.train_row_A});
        out.push_back({{L.layer_id, Role::row_B}, &L.row.B, L.train_row_B});
    }
    if (L.has_mixer()) out.push_back({{L.layer_id, Role::mixer}, &L.mixer.G, L.train_mixer});
}
}  // namespace detail

class DenseBlock : public Block {
public:
    explicit DenseBlock(AdaptedLayer layer) { op_.layer = &layer_; layer_ = std::move(layer); }

    Matrix forward(const Matrix& x, TrainContext& ctx) override {
        Matrix y = op_.forward(x, ctx);
        if (!y.all_finite()) throw Error("non-finite activations in layer " + std::to_string(layer_.layer_id));
        return y;
    }
    Matrix backward(const Matrix& d_y, GradMap& grads) override { return op_.backward(d_y, grads); }
    void collect_params(std::vector<ParamEntry>& out) override { detail::collect_adapted_params(layer_, out); }
    void collect_adapted(std::vector<AdaptedLayer*>& out) override { out.push_back(&layer_); }
    std::string name() const override { return "dense:" + std::to_string(layer_.layer_id); }

    AdaptedLayer& layer() { return layer_; }

private:
    AdaptedLayer layer_;
    detail::AdaptedOp op_;
};

class TanhBlock : public Block {
public:
    Matrix forward(const Matrix& x, TrainContext&) override {
        y_ = x;
        for (std::size_t i = 0; i < y_.size(); ++i) y_.data()[i] = std::tanh(y_.data()[i]);
        return y_;
    }
    Matrix backward(const Matrix& d_y, GradMap&) override {
        Matrix dx = d_y;
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= 1.0 - y_.data()[i] * y_.data()[i];
        return dx;
    }
    std::string name() const override { return "tanh"; }

private:
    Matrix y_;
};

namespace detail {
// Row-wise softmax over an already scaled score matrix.
inline Matrix softmax_rows(const Matrix& z) {
    Matrix s(z.rows(), z.cols());
    for (int i = 0; i < z.rows(); ++i) softmax_row(z.row(i), s.row(i));
    return s;
}
}  // namespace detail

/// Single-head self-attention over one token sequence:
/// softmax(Q K^T / sqrt(d)) V with the query and value projections adapted.
inline Matrix attention_block_forward(const AdaptedLayer& q_layer, const Matrix& k_weight,
                                      const AdaptedLayer& v_layer, const Matrix& tokens) {
    const int d = tokens.cols();
    if (q_layer.in_dim() != d || q_layer.out_dim() != d || v_layer.in_dim() != d || v_layer.out_dim() != d ||
        k_weight.rows() != d || k_weight.cols() != d)
        throw Error("attention_block_forward: projections must be d x d");
    const Matrix q = adapted_layer_forward(q_layer, tokens);
    const Matrix k = matmul_nt(tokens, k_weight);
    const Matrix v = adapted_layer_forward(v_layer, tokens);
    const Matrix s = detail::softmax_rows(scaled(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))));
    return matmul(s, v);
}

/// Batched attention block: the input carries `tokens` consecutive rows per
/// example and attention is computed independently inside each example.
class AttentionBlock : public Block {
public:
    AttentionBlock(AdaptedLayer q, AdaptedLayer v, int k_layer_id, Matrix k_weight, int tokens)
        : q_(std::move(q)), v_(std::move(v)), k_id_(k_layer_id), wk_(std::move(k_weight)), tokens_(tokens) {
        q_op_.layer = &q_;
        v_op_.layer = &v_;
    }

    Matrix forward(const Matrix& x, TrainContext& ctx) override {
        if (x.rows() % tokens_ != 0) throw Error("attention: row count not a multiple of tokens");
        x_ = x;
        q_cache_ = q_op_.forward(x, ctx);
        k_cache_ = matmul_nt(x, wk_);
        v_cache_ = v_op_.forward(x, ctx);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.cols()));
        const int n_ex = x.rows() / tokens_;
        s_cache_.assign(n_ex, Matrix());
        Matrix out(x.rows(), x.cols());
        for (int e = 0; e < n_ex; ++e) {
            const Matrix qe = block_rows(q_cache_, e);
            const Matrix ke = block_rows(k_cache_, e);
            const Matrix ve = block_rows(v_cache_, e);
            s_cache_[e] = detail::softmax_rows(scaled(matmul_nt(qe, ke), inv_sqrt_d));
            put_block_rows(out, e, matmul(s_cache_[e], ve));
        }
        if (!out.all_finite()) throw Error("non-finite activations in layer " + std::to_string(q_.layer_id));
        return out;
    }

    Matrix backward(const Matrix& d_y, GradMap& grads) override {
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x_.cols()));
        const int n_ex = x_.rows() / tokens_;
        Matrix dq(x_.rows(), x_.cols()), dk(x_.rows(), x_.cols()), dv(x_.rows(), x_.cols());
        for (int e = 0; e < n_ex; ++e) {
            const Matrix dye = block_rows(d_y, e);
            const Matrix& se = s_cache_[e];
            const Matrix ve = block_rows(v_cache_, e);
            put_block_rows(dv, e, matmul_tn(se, dye));
            Matrix ds = matmul_nt(dye, ve);  // tokens x tokens
            // softmax rows backward
            Matrix dz(ds.rows(), ds.cols());
            for (int i = 0; i < ds.rows(); ++i) {
                double dot = 0.0;
                auto dsi = ds.row(i);
                auto si = se.row(i);
                for (int j = 0; j < ds.cols(); ++j) dot += dsi[j] * si[j];
                auto dzi = dz.row(i);
                for (int j = 0; j < ds.cols(); ++j) dzi[j] = si[j] * (dsi[j] - dot);
            }
            put_block_rows(dq, e, scaled(matmul(dz, block_rows(k_cache_, e)), inv_sqrt_d));
            put_block_rows(dk, e, scaled(matmul_tn(dz, block_rows(q_cache_, e)), inv_sqrt_d));
        }
        Matrix dx = q_op_.backward(dq, grads);
        add_inplace(dx, v_op_.backward(dv, grads));
        add_inplace(dx, matmul(dk, wk_));
        if (train_k_) grads[{k_id_, Role::base}] = matmul_tn(dk, x_);
        return dx;
    }

    void collect_params(std::vector<ParamEntry>& out) override {
        detail::collect_adapted_params(q_, out);
        out.push_back({{k_id_, Role::base}, &wk_, train_k_});
        detail::collect_adapted_params(v_, out);
    }
    void collect_adapted(std::vector<AdaptedLayer*>& out) override {
        out.push_back(&q_);
        out.push_back(&v_);
    }
    std::string name() const override { return "attention:" + std::to_string(q_.layer_id); }

    AdaptedLayer& q() { return q_; }
    AdaptedLayer& v() { return v_; }
    Matrix& k_weight() { return wk_; }
    void set_train_k(bool t) { train_k_ = t; }

private:
    Matrix block_rows(const Matrix& m, int e) const {
        Matrix out(tokens_, m.cols());
        for (int i = 0; i < tokens_; ++i)
            for (int j = 0; j < m.cols(); ++j) out(i, j) = m(e * tokens_ + i, j);
        return out;
    }
    void put_block_rows(Matrix& dst, int e, const Matrix& src) const {
        for (int i = 0; i < tokens_; ++i)
            for (int j = 0; j < src.cols(); ++j) dst(e * tokens_ + i, j) = src(i, j);
    }

    AdaptedLayer q_, v_;
    int k_id_;
    Matrix wk_;
    int tokens_;
    bool train_k_ = false;
    detail::AdaptedOp q_op_, v_op_;
    Matrix x_, q_cache_, k_cache_, v_cache_;
    std::vector<Matrix> s_cache_;
};

/// Mean over each example's token rows: (n*tokens) x d -> n x d.
class MeanPoolBlock : public Block {
public:
    explicit MeanPoolBlock(int tokens) : tokens_(tokens) {}

    Matrix forward(const Matrix& x, TrainContext&) override {
        if (x.rows() % tokens_ != 0) throw Error("mean pool: row count not a multiple of tokens");
        rows_in_ = x.rows();
        Matrix y(x.rows() / tokens_, x.cols());
        for (int i = 0; i < x.rows(); ++i) {
            auto xi = x.row(i);
            auto yi = y.row(i / tokens_);
            for (int j = 0; j < x.cols(); ++j) yi[j] += xi[j] / tokens_;
        }
        return y;
    }
    Matrix backward(const Matrix& d_y, GradMap&) override {
        Matrix dx(rows_in_, d_y.cols());
        for (int i = 0; i < rows_in_; ++i) {
            auto di = d_y.row(i / tokens_);
            auto xi = dx.row(i);
            for (int j = 0; j < d_y.cols(); ++j) xi[j] = di[j] / tokens_;
        }
        return dx;
    }
    std::string name() const override { return "meanpool"; }

private:
    int tokens_;
    int rows_in_ = 0;
};

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

class Model {
public:
    int input_dim = 0;
    int output_dim = 0;
    int tokens = 1;  // >1 when example rows are reshaped into token rows at entry
    std::vector<std::unique_ptr<Block>> blocks;

    Matrix forward(const Matrix& inputs, TrainContext& ctx) {
        if (inputs.cols() != input_dim)
            throw Error("model: expected input width " + std::to_string(input_dim) + ", got " +
                        std::to_string(inputs.cols()));
        Matrix h = tokens > 1 ? inputs.reshaped(inputs.rows() * tokens, input_dim / tokens) : inputs;
        for (auto& b : blocks) h = b->forward(h, ctx);
        return h;
    }

    std::vector<ParamEntry> params() {
        std::vector<ParamEntry> out;
        for (auto& b : blocks) b->collect_params(out);
        return out;
    }

    Matrix& param(ParamRef ref) {
        for (auto& e : params())
            if (e.ref == ref) return *e.mat;
        throw Error("model: no parameter (layer " + std::to_string(ref.layer) + ", " + role_name(ref.role) + ")");
    }

    std::vector<AdaptedLayer*> adapted_layers() {
        std::vector<AdaptedLayer*> out;
        for (auto& b : blocks) b->collect_adapted(out);
        return out;
    }
};

/// Runs one forward pass, evaluates the loss and walks the blocks in reverse.
/// The grad map holds exactly the trainable parameter set.
inline std::pair<double, GradMap> backprop(Model& model, const Batch& batch, Loss loss, TrainContext& ctx) {
    if (batch.inputs.rows() == 0) throw Error("backprop: empty batch");
    if (batch.targets.rows() != batch.inputs.rows()) throw Error("backprop: target rows != input rows");
    const Matrix pred = model.forward(batch.inputs, ctx);
    Matrix grad;
    const double loss_val = loss_and_grad(loss, pred, batch.targets, grad);
    if (!std::isfinite(loss_val)) throw Error("non-finite loss at model head");
    GradMap grads;
    for (auto it = model.blocks.rbegin(); it != model.blocks.rend(); ++it) grad = (*it)->backward(grad, grads);
    for (const auto& [ref, g] : grads)
        if (!g.all_finite())
            throw Error("non-finite gradient in layer " + std::to_string(ref.layer) + " (" + role_name(ref.role) + ")");
    return {loss_val, std::move(grads)};
}

inline std::pair<double, GradMap> backprop(Model& model, const Batch& batch, Loss loss) {
    TrainContext ctx;
    ctx.training = true;
    return backprop(model, batch, loss, ctx);
}

/// Central finite differences (L(p+h) - L(p-h)) / 2h entrywise, the oracle the
/// gradient checks compare backprop against.
inline Matrix finite_diff_gradient(Model& model, const Batch& batch, Loss loss, ParamRef ref, double step) {
    if (step <= 0.0) throw Error("finite_diff_gradient: step must be positive");
    Matrix& p = model.param(ref);
    Matrix g(p.rows(), p.cols());
    TrainContext ctx;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p.data()[i];
        p.data()[i] = saved + step;
        const double lp = loss_value(loss, model.forward(batch.inputs, ctx), batch.targets);
        p.data()[i] = saved - step;
        const double lm = loss_value(loss, model.forward(batch.inputs, ctx), batch.targets);
        p.data()[i] = saved;
        g.data()[i] = (lp - lm) / (2.0 * step);
    }
    return g;
}

/// Trainable/total accounting for a model under a strategy. Counts come from
/// the layer shapes, so a model built for one strategy reports correct counts
/// for any other.
inline ParamCount count_params(Model& model, Strategy strategy) {
    ParamCount pc;
    for (AdaptedLayer* L : model.adapted_layers()) {
        const int d = L->in_dim(), l = L->out_dim(), r = L->individual.rank;
        pc.trainable += trainable_per_layer(strategy, d, l, r);
        pc.total += total_per_layer(strategy, d, l, r);
    }
    // frozen weights that carry no adapter (attention key projections)
    std::vector<ParamEntry> entries = model.params();
    std::vector<AdaptedLayer*> adapted = model.adapted_layers();
    for (const auto& e : entries) {
        if (e.ref.role != Role::base) continue;
        bool owned = false;
        for (AdaptedLayer* L : adapted) owned = owned || L->layer_id == e.ref.layer;
        if (!owned) pc.total += static_cast<long long>(e.mat->size());
    }
    return pc;
}

}  // namespace fedalt
