// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fedalt/federation.hpp"

namespace fedalt {

/// Per-round parameter displacements. `per_client[t][k]` is the Frobenius norm
/// of client k's trainable-set change over round t+1; `delta[t]` its max over
/// clients.
struct ConvergenceTrace {
    std::vector<std::vector<double>> per_client;
    std::vector<double> delta;

    void push_round(std::vector<double> displacements) {
        double m = 0.0;
        for (double d : displacements) m = std::max(m, d);
        delta.push_back(m);
        per_client.push_back(std::move(displacements));
    }

    static ConvergenceTrace from_rows(const std::vector<TraceRow>& rows) {
        ConvergenceTrace tr;
        std::vector<double> current;
        int round = rows.empty() ? 0 : rows.front().round;
        for (const TraceRow& r : rows) {
            if (r.round != round) {
                tr.push_round(std::move(current));
                current.clear();
                round = r.round;
            }
            current.push_back(r.displacement);
        }
        if (!current.empty()) tr.push_round(std::move(current));
        return tr;
    }
};

/// One trace row per (round, client): the displacement of each client's
/// trainable set between the two snapshots.
inline std::vector<double> record_displacements(const std::vector<std::map<ParamRef, Matrix>>& at_t,
                                                const std::vector<std::map<ParamRef, Matrix>>& at_t1) {
    if (at_t.size() != at_t1.size()) throw Error("record_displacements: mismatched snapshot sets");
    std::vector<double> out(at_t.size());
    for (std::size_t k = 0; k < at_t.size(); ++k) out[k] = snapshot_displacement(at_t1[k], at_t[k]);
    return out;
}

/// Least-squares fit of delta_t ~ c + beta * delta_{t-1}, using pairs with
/// t >= 2 so the zero-initialized first round does not skew the estimate.
struct ContractionFit {
    double beta = 0.0;
    double intercept = 0.0;
    double epsilon = 0.0;  // implied c * (1 - beta) / 2
    double residual = 0.0;
    bool degenerate = false;
    std::string note;
};

inline ContractionFit fit_contraction(const std::vector<double>& delta) {
    if (delta.size() < 4) throw Error("fit_contraction: need at least 4 rounds of data");
    std::vector<double> xs, ys;
    for (std::size_t t = 2; t < delta.size(); ++t) {
        xs.push_back(delta[t - 1]);
        ys.push_back(delta[t]);
    }
    ContractionFit fit;
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    bool all_zero = true;
    for (double d : delta) all_zero = all_zero && d == 0.0;
    if (all_zero) {
        fit.degenerate = true;
        fit.note = "constant-zero trace; beta defined as 0";
        return fit;
    }
    if (sxx == 0.0) {
        fit.degenerate = true;
        fit.intercept = my;
        fit.epsilon = fit.intercept / 2.0;
        fit.note = "zero-variance regressor (constant trace)";
        return fit;
    }
    fit.beta = sxy / sxx;
    fit.intercept = my - fit.beta * mx;
    fit.epsilon = fit.intercept * (1.0 - fit.beta) / 2.0;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ys[i] - (fit.intercept + fit.beta * xs[i]);
        rss += e * e;
    }
    fit.residual = std::sqrt(rss / n);
    return fit;
}

// ---------------------------------------------------------------------------
// theory mode: the convex surrogate under which the contraction is testable
// ---------------------------------------------------------------------------

struct TheoryModeConfig {
    bool convex_surrogate = true;
    double lambda_reg = 0.5;
    double fixed_alpha = 0.5;
    bool freeze_A = true;  // informational; the surrogate always freezes A
    int dim = 8;           // input dim == class count, so the identity lift types
    int clients = 4;
    int rounds = 40;
    int local_steps = 10;
    int burn_in = 3;
    DataSizes sizes{256, 128};
    double noise_std = 0.3;
    double shared_fraction = 0.3;
    double eta_override = -1.0;  // < 0 selects 1 / mu_hat; 0 is honored as a literal zero step
    std::uint64_t seed = 1;
};

struct TheoryVerdict {
    bool pass = false;
    std::string reason;
    ContractionFit fit;
    double delta0 = 0.0;
    double delta_last = 0.0;
    double mu_hat = 0.0;
    double eta = 0.0;
    int fail_round = -1;
    std::vector<TraceRow> trace;
    std::vector<std::vector<std::vector<double>>> step_losses;
};

/// Largest eigenvalue of X^T X / n by power iteration.
inline double power_iteration_bound(const Matrix& x, int iters = 100) {
    const int d = x.cols();
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        // w = X^T (X v) / n
        std::vector<double> xv(x.rows(), 0.0);
        for (int i = 0; i < x.rows(); ++i) {
            auto xi = x.row(i);
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += xi[j] * v[j];
            xv[i] = acc;
        }
        std::vector<double> w(d, 0.0);
        for (int i = 0; i < x.rows(); ++i) {
            auto xi = x.row(i);
            for (int j = 0; j < d; ++j) w[j] += xi[j] * xv[i];
        }
        double norm = 0.0;
        for (int j = 0; j < d; ++j) {
            w[j] /= x.rows();
            norm += w[j] * w[j];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        lambda = norm;
        for (int j = 0; j < d; ++j) v[j] = w[j] / norm;
    }
    return lambda;
}

/// Smoothness bound of the surrogate objective in the trainable adapter: the
/// cross-entropy Hessian in logit space is at most I/2 and the adapter enters
/// the logits as alpha * B x, so mu <= alpha^2 * lambda_max(X^T X / n) / 2
/// plus the L2 strength.
inline double theory_mu_hat(const std::vector<ClientDataset>& data, double fixed_alpha, double lambda_reg) {
    double worst = 0.0;
    for (const ClientDataset& ds : data)
        worst = std::max(worst, power_iteration_bound(ds.train.inputs));
    return fixed_alpha * fixed_alpha * worst / 2.0 + lambda_reg;
}

/// Runs the federation loop on the convex surrogate with full-batch gradient
/// descent and checks the contraction predictions: beta < 1, an eventually
/// nonincreasing displacement trace, and a tail below delta0 / 10.
inline TheoryVerdict theory_mode_run(const TheoryModeConfig& tc) {
    if (!tc.convex_surrogate) throw Error("theory_mode_run: convex surrogate must be enabled");
    HeterogeneityConfig het;
    het.level = HetLevel::high;
    het.clients = tc.clients;
    het.input_dim = tc.dim;
    het.classes = tc.dim;
    het.noise_std = tc.noise_std;
    het.shared_fraction = tc.shared_fraction;
    std::vector<ClientDataset> data = build_federation_data(het, tc.sizes, derive_seed(tc.seed, "data"));

    TheoryVerdict v;
    v.mu_hat = theory_mu_hat(data, tc.fixed_alpha, tc.lambda_reg);
    v.eta = tc.eta_override > 0.0 ? tc.eta_override : 1.0 / v.mu_hat;
    if (tc.eta_override == 0.0) v.eta = 0.0;

    FedRunConfig cfg;
    cfg.strategy = Strategy::FedALT;  // the surrogate layer fixes alpha itself
    cfg.fixed_alpha = tc.fixed_alpha;
    cfg.clients = tc.clients;
    cfg.schedule.rounds = tc.rounds;
    cfg.schedule.local_epochs = tc.local_steps;
    cfg.schedule.batch_size = tc.sizes.n_train;  // full-batch gradient descent
    cfg.schedule.eval_cadence = std::max(1, tc.rounds / 4);
    cfg.model.input_dim = tc.dim;
    cfg.model.classes = tc.dim;
    cfg.opt.kind = OptKind::sgd;
    cfg.opt.lr = v.eta;
    cfg.loss = Loss::cross_entropy;
    cfg.theory_model = true;
    cfg.lambda_reg = tc.lambda_reg;
    cfg.run_seed = tc.seed;
    cfg.record_step_losses = true;

    RunResult result;
    try {
        result = run_federation(cfg, std::move(data));
    } catch (const Error& e) {
        v.pass = false;
        v.reason = std::string("divergence: ") + e.what();
        // round ids are embedded in federation errors
        return v;
    }
    v.trace = result.trace;
    v.step_losses = std::move(result.step_losses);

    ConvergenceTrace tr = ConvergenceTrace::from_rows(result.trace);
    v.delta0 = tr.delta.empty() ? 0.0 : tr.delta.front();
    v.delta_last = tr.delta.empty() ? 0.0 : tr.delta.back();
    v.fit = fit_contraction(tr.delta);

    bool monotone = true;
    int bad_round = -1;
    for (std::size_t t = static_cast<std::size_t>(tc.burn_in) + 1; t < tr.delta.size(); ++t)
        if (tr.delta[t] > tr.delta[t - 1] * (1.0 + 1e-9) + 1e-15) {
            monotone = false;
            bad_round = static_cast<int>(t) + 1;
            break;
        }

    const bool beta_ok = v.fit.degenerate ? true : v.fit.beta < 1.0;
    const bool tail_ok = v.delta_last < v.delta0 / 10.0 || (v.delta0 == 0.0 && v.delta_last == 0.0);
    v.pass = beta_ok && monotone && tail_ok;
    std::ostringstream why;
    why << "beta_hat=" << v.fit.beta << (beta_ok ? " (<1 ok)" : " (>=1 FAIL)")
        << ", monotone after burn-in=" << (monotone ? "yes" : "no (round " + std::to_string(bad_round) + ")")
        << ", delta_last=" << v.delta_last << " vs delta0/10=" << v.delta0 / 10.0
        << (tail_ok ? " (ok)" : " (FAIL)");
    v.reason = why.str();
    return v;
}

// ---------------------------------------------------------------------------
// gradient check suite
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    int models_checked = 0;
    int entries_checked = 0;
    bool pass = false;
    std::string worst_case;
};

/// Relative error with a floor: tiny gradients are compared absolutely at
/// 1e-8, everything else relatively.
inline double grad_rel_err(const Matrix& got, const Matrix& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double a = got.data()[i], b = want.data()[i];
        const double scale = std::max({std::abs(a), std::abs(b), 1e-3});
        worst = std::max(worst, std::abs(a - b) / scale);
    }
    return worst;
}

/// Backprop versus central finite differences over randomized small models
/// covering every trainable role: both adapter matrices, the mixer, the
/// rest-of-world pair, and the base weights.
inline GradCheckReport gradient_check_suite(int n_models, std::uint64_t seed, double tol = 1e-5) {
    GradCheckReport report;
    const double h = 1e-6;
    for (int m = 0; m < n_models; ++m) {
        Rng rng(derive_seed(seed, "gradcheck", static_cast<std::uint64_t>(m)));
        const bool use_attn = m % 3 == 2;
        const Strategy strat = m % 3 == 1 ? Strategy::RoWUpdate : Strategy::FedALT;

        ModelSpec spec;
        spec.kind = use_attn ? ModelSpec::Kind::attn : ModelSpec::Kind::mlp;
        spec.input_dim = use_attn ? 8 : 5;
        spec.tokens = use_attn ? 2 : 1;
        spec.hidden = 6;
        spec.depth = 1;
        spec.classes = use_attn ? 4 : 3;
        LoraSettings lora;
        lora.rank = 2;
        lora.alpha = 4.0;
        ModelSeeds seeds{rng.next_u64(), rng.next_u64(), rng.next_u64()};
        Model model = build_model(spec, lora, strat, 0.5, seeds);

        // randomize everything, including normally zero-initialized matrices,
        // and enable every role so the check covers base weights too
        for (auto& e : model.params()) {
            for (std::size_t i = 0; i < e.mat->size(); ++i) e.mat->data()[i] = 0.7 * rng.normal();
        }
        for (AdaptedLayer* L : model.adapted_layers()) {
            L->train_base = true;
            L->train_ind_A = L->train_ind_B = true;
            if (L->has_row()) L->train_row_A = L->train_row_B = true;
            if (L->has_mixer()) L->train_mixer = true;
        }
        for (auto& b : model.blocks)
            if (auto* attn = dynamic_cast<AttentionBlock*>(b.get())) attn->set_train_k(true);

        const int n = 3;
        Batch batch;
        batch.inputs = gaussian_matrix(n, spec.input_dim, 1.0, rng);
        const Loss loss = m % 2 == 0 ? Loss::cross_entropy : Loss::mse;
        if (loss == Loss::cross_entropy) {
            batch.targets = Matrix(n, 1);
            for (int i = 0; i < n; ++i) batch.targets(i, 0) = rng.below(spec.classes);
        } else {
            batch.targets = gaussian_matrix(n, spec.classes, 1.0, rng);
        }

        auto [loss_val, grads] = backprop(model, batch, loss);
        (void)loss_val;
        for (const auto& [ref, g] : grads) {
            const Matrix fd = finite_diff_gradient(model, batch, loss, ref, h);
            const double err = grad_rel_err(g, fd);
            report.entries_checked += static_cast<int>(g.size());
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_case = "model " + std::to_string(m) + ", layer " + std::to_string(ref.layer) +
                                    ", " + role_name(ref.role);
            }
        }
        report.models_checked += 1;
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace fedalt
