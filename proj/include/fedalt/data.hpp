// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "fedalt/matrix.hpp"
#include "fedalt/nn.hpp"
#include "fedalt/rng.hpp"
#include "fedalt/serialize.hpp"

namespace fedalt {

enum class TaskKind { teacher_mlp_regression, linear_classification, label_permuted_classification };

inline std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::teacher_mlp_regression: return "teacher-mlp-regression";
        case TaskKind::linear_classification: return "linear-classification";
        case TaskKind::label_permuted_classification: return "label-permuted-classification";
    }
    throw Error("task_kind_name: bad kind");
}

inline TaskKind parse_task_kind(const std::string& s) {
    for (TaskKind k : {TaskKind::teacher_mlp_regression, TaskKind::linear_classification,
                       TaskKind::label_permuted_classification})
        if (task_kind_name(k) == s) return k;
    throw Error("unknown task kind '" + s + "'");
}

struct TaskSpec {
    int task_id = 0;
    TaskKind kind = TaskKind::linear_classification;
    int input_dim = 16;
    int out_dim = 8;  // classes for classification, outputs for regression
    std::uint64_t teacher_seed = 0;
    double noise_std = 0.0;
    // Fraction of the input space labeled by a rule shared across all tasks.
    // The shared regime sits on one side of a common hyperplane, mirroring the
    // domain structure a pretrained backbone would expose; the rest of the
    // space is labeled by the task's private teacher.
    double shared_fraction = 0.0;
    std::uint64_t shared_seed = 0;
    int teacher_hidden = 16;  // regression teacher only
};

namespace detail {
/// Upper-tail threshold: P(Z > tau) == p for standard normal Z, by bisection.
inline double gaussian_upper_quantile(double p) {
    if (p <= 0.0) return 1e9;  // regime never triggers
    if (p >= 1.0) return -1e9;
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double tail = 0.5 * std::erfc(mid / std::sqrt(2.0));
        (tail > p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}
}  // namespace detail

/// Frozen labeling function. Classification teachers are piecewise linear:
/// inputs with u.x above a threshold are labeled by the shared rule, the rest
/// by the task's private rule (optionally label-permuted). The regression
/// teacher is a one-hidden-layer tanh network.
struct Teacher {
    TaskKind kind;
    Matrix w;         // out_dim x d, private linear rule
    Matrix w_shared;  // out_dim x d, common rule (classification, shared_fraction > 0)
    Matrix u;         // 1 x d unit regime direction
    double tau = 1e9;  // u.x > tau selects the shared regime
    Matrix w1, w2;     // hidden x d, out x hidden, regression teacher
    std::vector<int> perm;  // private-label permutation, identity unless permuted kind

    bool shared_regime(std::span<const double> x) const {
        if (u.empty()) return false;
        double dot = 0.0;
        auto ur = u.row(0);
        for (std::size_t j = 0; j < x.size(); ++j) dot += ur[j] * x[j];
        return dot > tau;
    }

    /// End-to-end parameters with the permutation folded in, flattened to one
    /// row. Comparable across teachers of the same kind and shape.
    Matrix effective_params() const {
        if (kind == TaskKind::teacher_mlp_regression) {
            Matrix out(1, static_cast<int>(w1.size() + w2.size()));
            std::size_t at = 0;
            for (std::size_t i = 0; i < w1.size(); ++i) out.data()[at++] = w1.data()[i];
            for (std::size_t i = 0; i < w2.size(); ++i) out.data()[at++] = w2.data()[i];
            return out;
        }
        Matrix eff(w.rows(), w.cols());
        for (int c = 0; c < w.rows(); ++c) {
            auto dst = eff.row(perm[c]);
            auto src = w.row(c);
            for (int j = 0; j < w.cols(); ++j) dst[j] = src[j];
        }
        Matrix out(1, static_cast<int>(eff.size() + w_shared.size() + u.size()));
        std::size_t at = 0;
        for (std::size_t i = 0; i < eff.size(); ++i) out.data()[at++] = eff.data()[i];
        for (std::size_t i = 0; i < w_shared.size(); ++i) out.data()[at++] = w_shared.data()[i];
        for (std::size_t i = 0; i < u.size(); ++i) out.data()[at++] = u.data()[i];
        return out;
    }
};

namespace detail {
inline Matrix blended_teacher_matrix(int rows, int cols, const TaskSpec& spec, std::string_view label) {
    Rng priv(derive_seed(spec.teacher_seed, label));
    const double std0 = 1.0 / std::sqrt(static_cast<double>(cols));
    Matrix m = gaussian_matrix(rows, cols, std0, priv);
    if (spec.shared_fraction > 0.0) {
        Rng shared(derive_seed(spec.shared_seed, label));
        const Matrix s = gaussian_matrix(rows, cols, std0, shared);
        const double cp = std::sqrt(1.0 - spec.shared_fraction);
        const double cs = std::sqrt(spec.shared_fraction);
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = cp * m.data()[i] + cs * s.data()[i];
    }
    return m;
}
}  // namespace detail

inline Teacher make_teacher(const TaskSpec& spec) {
    if (spec.input_dim <= 0 || spec.out_dim <= 0) throw Error("make_teacher: nonpositive dimensions");
    Teacher t;
    t.kind = spec.kind;
    t.perm.resize(spec.out_dim);
    std::iota(t.perm.begin(), t.perm.end(), 0);
    if (spec.kind == TaskKind::teacher_mlp_regression) {
        // regression teachers blend a shared component additively
        t.w1 = detail::blended_teacher_matrix(spec.teacher_hidden, spec.input_dim, spec, "teacher_w1");
        t.w2 = detail::blended_teacher_matrix(spec.out_dim, spec.teacher_hidden, spec, "teacher_w2");
        return t;
    }
    {
        Rng priv(derive_seed(spec.teacher_seed, "teacher_w"));
        t.w = gaussian_matrix(spec.out_dim, spec.input_dim, 1.0 / std::sqrt(static_cast<double>(spec.input_dim)), priv);
    }
    if (spec.shared_fraction > 0.0) {
        Rng shared(derive_seed(spec.shared_seed, "teacher_shared_w"));
        t.w_shared = gaussian_matrix(spec.out_dim, spec.input_dim,
                                     1.0 / std::sqrt(static_cast<double>(spec.input_dim)), shared);
        Rng dir(derive_seed(spec.shared_seed, "regime_dir"));
        t.u = gaussian_matrix(1, spec.input_dim, 1.0, dir);
        const double norm = frobenius_norm(t.u);
        scale_inplace(t.u, 1.0 / norm);
        t.tau = detail::gaussian_upper_quantile(spec.shared_fraction);
    }
    if (spec.kind == TaskKind::label_permuted_classification) {
        Rng perm_rng(derive_seed(spec.teacher_seed, "label_perm"));
        perm_rng.shuffle(t.perm);
    }
    return t;
}

/// Frozen teacher plus its sampler. Inputs are i.i.d. N(0, I_d); labels come
/// from the frozen teacher with the configured logit noise.
struct Task {
    TaskSpec spec;
    Teacher teacher;

    Batch sample(int n, Rng& rng) const {
        Batch b;
        b.inputs = gaussian_matrix(n, spec.input_dim, 1.0, rng);
        if (spec.kind == TaskKind::teacher_mlp_regression) {
            Matrix h = matmul_nt(b.inputs, teacher.w1);
            for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = std::tanh(h.data()[i]);
            b.targets = matmul_nt(h, teacher.w2);
            if (spec.noise_std > 0.0)
                for (std::size_t i = 0; i < b.targets.size(); ++i)
                    b.targets.data()[i] += spec.noise_std * rng.normal();
            return b;
        }
        const Matrix private_logits = matmul_nt(b.inputs, teacher.w);
        Matrix shared_logits;
        if (!teacher.w_shared.empty()) shared_logits = matmul_nt(b.inputs, teacher.w_shared);
        b.targets = Matrix(n, 1);
        for (int i = 0; i < n; ++i) {
            const bool in_shared = teacher.shared_regime(b.inputs.row(i));
            auto zi = in_shared ? shared_logits.row(i) : private_logits.row(i);
            int best = 0;
            double best_v = -1e300;
            for (int c = 0; c < spec.out_dim; ++c) {
                const double v = zi[c] + (spec.noise_std > 0.0 ? spec.noise_std * rng.normal() : 0.0);
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            b.targets(i, 0) = static_cast<double>(in_shared ? best : teacher.perm[best]);
        }
        return b;
    }

    bool is_classification() const { return spec.kind != TaskKind::teacher_mlp_regression; }
};

inline Task make_task(const TaskSpec& spec) { return Task{spec, make_teacher(spec)}; }

enum class HetLevel { high, mild, low };

inline std::string het_level_name(HetLevel l) {
    switch (l) {
        case HetLevel::high: return "high";
        case HetLevel::mild: return "mild";
        case HetLevel::low: return "low";
    }
    throw Error("het_level_name: bad level");
}

inline HetLevel parse_het_level(const std::string& s) {
    for (HetLevel l : {HetLevel::high, HetLevel::mild, HetLevel::low})
        if (het_level_name(l) == s) return l;
    throw Error("unknown heterogeneity level '" + s + "' (expected high, mild or low)");
}

struct DataSizes {
    int n_train = 600;
    int n_eval = 300;
};

struct HeterogeneityConfig {
    HetLevel level = HetLevel::high;
    int clients = 8;
    int input_dim = 16;
    int classes = 8;
    double noise_std = 0.2;
    double shared_fraction = 0.4;
    bool regression = false;  // use the regression teacher instead of classifiers
};

/// high: one task per client. mild: roughly ceil(3K/4) tasks, always fewer
/// than the client count, with the remainder of the clients reusing the first
/// tasks. low: two tasks split across the federation.
inline int distinct_task_count(HetLevel level, int clients) {
    switch (level) {
        case HetLevel::high:
            return clients;
        case HetLevel::mild:
            if (clients < 3) throw Error("mild heterogeneity needs at least 3 clients, got " + std::to_string(clients));
            return std::min(clients - 1, std::max(2, (3 * clients + 3) / 4));
        case HetLevel::low:
            if (clients < 2) throw Error("low heterogeneity needs at least 2 clients, got " + std::to_string(clients));
            return 2;
    }
    throw Error("distinct_task_count: bad level");
}

struct ClientDataset {
    int client_id = 0;
    int task_id = 0;
    TaskSpec task;
    Batch train;
    Batch eval;
    bool classification = true;
};

inline std::vector<TaskSpec> build_task_specs(const HeterogeneityConfig& het, std::uint64_t seed) {
    if (het.clients < 1) throw Error("build_federation_data: clients must be >= 1");
    const int n_tasks = distinct_task_count(het.level, het.clients);
    std::vector<TaskSpec> specs(n_tasks);
    for (int t = 0; t < n_tasks; ++t) {
        TaskSpec& s = specs[t];
        s.task_id = t;
        s.kind = het.regression ? TaskKind::teacher_mlp_regression
                                : (t % 2 == 0 ? TaskKind::linear_classification
                                              : TaskKind::label_permuted_classification);
        s.input_dim = het.input_dim;
        s.out_dim = het.classes;
        s.teacher_seed = derive_seed(seed, "teacher", static_cast<std::uint64_t>(t));
        s.noise_std = het.noise_std;
        s.shared_fraction = het.shared_fraction;
        s.shared_seed = derive_seed(seed, "teacher_shared");
    }
    return specs;
}

inline std::vector<ClientDataset> build_federation_data(const HeterogeneityConfig& het,
                                                        const DataSizes& sizes, std::uint64_t seed) {
    if (sizes.n_train < 1 || sizes.n_eval < 1) throw Error("build_federation_data: dataset sizes must be >= 1");
    const std::vector<TaskSpec> specs = build_task_specs(het, seed);
    std::vector<ClientDataset> out(het.clients);
    for (int k = 0; k < het.clients; ++k) {
        const TaskSpec& spec = specs[k % specs.size()];
        const Task task = make_task(spec);
        ClientDataset& ds = out[k];
        ds.client_id = k;
        ds.task_id = spec.task_id;
        ds.task = spec;
        ds.classification = task.is_classification();
        Rng train_rng(derive_seed(seed, "client_train", static_cast<std::uint64_t>(k)));
        Rng eval_rng(derive_seed(seed, "client_eval", static_cast<std::uint64_t>(k)));
        ds.train = task.sample(sizes.n_train, train_rng);
        ds.eval = task.sample(sizes.n_eval, eval_rng);
    }
    return out;
}

/// Mean pairwise Frobenius distance between the clients' effective teachers;
/// the statistic behind the high > mild > low heterogeneity ordering.
inline double mean_teacher_distance(const HeterogeneityConfig& het, std::uint64_t seed) {
    const std::vector<TaskSpec> specs = build_task_specs(het, seed);
    std::vector<Matrix> thetas;
    for (int k = 0; k < het.clients; ++k)
        thetas.push_back(make_teacher(specs[k % specs.size()]).effective_params());
    double acc = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < thetas.size(); ++i)
        for (std::size_t j = i + 1; j < thetas.size(); ++j) {
            acc += frobenius_norm(sub(thetas[i], thetas[j]));
            ++pairs;
        }
    return pairs > 0 ? acc / pairs : 0.0;
}

inline DatasetDump to_dataset_dump(const ClientDataset& ds) {
    DatasetDump d;
    d.client_id = ds.client_id;
    d.task_id = ds.task_id;
    d.blocks["train_inputs"] = ds.train.inputs;
    d.blocks["train_targets"] = ds.train.targets;
    d.blocks["eval_inputs"] = ds.eval.inputs;
    d.blocks["eval_targets"] = ds.eval.targets;
    return d;
}

inline ClientDataset from_dataset_dump(const DatasetDump& d) {
    ClientDataset ds;
    ds.client_id = d.client_id;
    ds.task_id = d.task_id;
    auto need = [&](const std::string& name) {
        auto it = d.blocks.find(name);
        if (it == d.blocks.end()) throw Error("dataset dump: missing block " + name);
        return it->second;
    };
    ds.train.inputs = need("train_inputs");
    ds.train.targets = need("train_targets");
    ds.eval.inputs = need("eval_inputs");
    ds.eval.targets = need("eval_targets");
    ds.classification = ds.train.targets.cols() == 1;
    return ds;
}

}  // namespace fedalt
