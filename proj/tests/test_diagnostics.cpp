// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedalt/diagnostics.hpp"

using namespace fedalt;
using Catch::Approx;

TEST_CASE("record_displacements basics") {
    std::map<ParamRef, Matrix> a, b;
    a[{0, Role::lora_A}] = Matrix{{1.0, 2.0}};
    b[{0, Role::lora_A}] = Matrix{{1.0, 2.0}};
    CHECK(record_displacements({a}, {b})[0] == 0.0);

    std::map<ParamRef, Matrix> s0, s1;
    s0[{0, Role::lora_B}] = Matrix{{1.0}};
    s1[{0, Role::lora_B}] = Matrix{{3.0}};
    CHECK(record_displacements({s0}, {s1})[0] == Approx(2.0).margin(1e-15));
}

TEST_CASE("record_displacements matches a direct norm computation") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::map<ParamRef, Matrix> a, b;
        double acc = 0.0;
        for (int l = 0; l < 3; ++l) {
            const Matrix ma = gaussian_matrix(2, 3, 1.0, rng);
            const Matrix mb = gaussian_matrix(2, 3, 1.0, rng);
            a[{l, Role::lora_A}] = ma;
            b[{l, Role::lora_A}] = mb;
            for (std::size_t i = 0; i < ma.size(); ++i) {
                const double d = ma.data()[i] - mb.data()[i];
                acc += d * d;
            }
        }
        CHECK(record_displacements({a}, {b})[0] == Approx(std::sqrt(acc)).epsilon(1e-14));
    }
}

TEST_CASE("record_displacements rejects mismatched snapshot sets") {
    std::map<ParamRef, Matrix> a, b;
    a[{0, Role::lora_A}] = Matrix{{1.0}};
    b[{1, Role::lora_A}] = Matrix{{1.0}};
    CHECK_THROWS_AS(record_displacements({a}, {b}), Error);
    std::map<ParamRef, Matrix> c;
    CHECK_THROWS_AS(record_displacements({a}, {a, c}), Error);
}

TEST_CASE("fit_contraction recovers a geometric decay") {
    std::vector<double> delta{1.0};
    for (int t = 1; t < 12; ++t) delta.push_back(0.5 * delta.back());
    const ContractionFit fit = fit_contraction(delta);
    CHECK_FALSE(fit.degenerate);
    CHECK(fit.beta == Approx(0.5).margin(1e-12));
    CHECK(std::abs(fit.intercept) < 1e-12);
    CHECK(fit.residual < 1e-12);
}

TEST_CASE("fit_contraction recovers a planted affine recursion") {
    std::vector<double> delta{1.0};
    for (int t = 1; t < 15; ++t) delta.push_back(0.1 + 0.5 * delta.back());
    const ContractionFit fit = fit_contraction(delta);
    CHECK(fit.beta == Approx(0.5).margin(1e-10));
    CHECK(fit.intercept == Approx(0.1).margin(1e-10));
    CHECK(fit.epsilon == Approx(0.1 * (1.0 - 0.5) / 2.0).margin(1e-10));
}

TEST_CASE("fit_contraction recovers planted constants across parameter draws") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const double beta = 0.05 + 0.9 * rng.uniform();
        const double c = 0.2 * rng.uniform();
        std::vector<double> delta{1.0 + rng.uniform()};
        for (int t = 1; t < 20; ++t) delta.push_back(c + beta * delta.back());
        const ContractionFit fit = fit_contraction(delta);
        CHECK(std::abs(fit.beta - beta) < 1e-10);
        CHECK(std::abs(fit.intercept - c) < 1e-10);
    }
}

TEST_CASE("fit_contraction flags degenerate traces") {
    CHECK_THROWS_AS(fit_contraction({1.0, 0.5, 0.25}), Error);  // too short

    const ContractionFit zero = fit_contraction({0.0, 0.0, 0.0, 0.0, 0.0});
    CHECK(zero.degenerate);
    CHECK(zero.beta == 0.0);
    CHECK_FALSE(zero.note.empty());

    const ContractionFit constant = fit_contraction({0.7, 0.7, 0.7, 0.7, 0.7});
    CHECK(constant.degenerate);
}

TEST_CASE("theory mode passes on the default convex config") {
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        TheoryModeConfig tc;
        tc.seed = seed;
        tc.rounds = 35;
        const TheoryVerdict v = theory_mode_run(tc);
        INFO(v.reason);
        CHECK(v.pass);
        CHECK(v.fit.beta < 1.0);
        CHECK(v.delta_last < v.delta0 / 10.0);
    }
}

TEST_CASE("theory mode with zero step size shows zero displacement everywhere") {
    TheoryModeConfig tc;
    tc.eta_override = 0.0;
    tc.rounds = 6;
    const TheoryVerdict v = theory_mode_run(tc);
    const ConvergenceTrace tr = ConvergenceTrace::from_rows(v.trace);
    for (double d : tr.delta) CHECK(d == 0.0);
    CHECK(v.fit.degenerate);
    CHECK(v.fit.beta == 0.0);
}

TEST_CASE("identical convex clients contract geometrically and in lockstep") {
    TheoryModeConfig tc;
    tc.clients = 3;
    tc.rounds = 14;
    // one dataset copied to every client
    HeterogeneityConfig het;
    het.level = HetLevel::high;
    het.clients = 1;
    het.input_dim = tc.dim;
    het.classes = tc.dim;
    het.noise_std = 0.2;
    auto base = build_federation_data(het, tc.sizes, 5)[0];
    std::vector<ClientDataset> data;
    for (int k = 0; k < 3; ++k) {
        ClientDataset d = base;
        d.client_id = k;
        data.push_back(std::move(d));
    }
    const double mu = theory_mu_hat(data, tc.fixed_alpha, tc.lambda_reg);

    FedRunConfig cfg;
    cfg.strategy = Strategy::FedALT;
    cfg.fixed_alpha = tc.fixed_alpha;
    cfg.clients = 3;
    cfg.schedule = {tc.rounds, tc.local_steps, tc.sizes.n_train, tc.rounds};
    cfg.model.input_dim = tc.dim;
    cfg.model.classes = tc.dim;
    cfg.opt.kind = OptKind::sgd;
    cfg.opt.lr = 1.0 / mu;
    cfg.theory_model = true;
    cfg.lambda_reg = tc.lambda_reg;
    cfg.run_seed = 5;
    const RunResult res = run_federation(cfg, std::move(data));

    const ConvergenceTrace tr = ConvergenceTrace::from_rows(res.trace);
    for (const auto& per_client : tr.per_client)
        for (double d : per_client) CHECK(d == Approx(per_client[0]).margin(0.0));

    // ratios settle to a stable contraction factor < 1
    const ContractionFit fit = fit_contraction(tr.delta);
    CHECK(fit.beta < 1.0);
    CHECK(fit.beta >= 0.0);
    std::vector<double> ratios;
    for (std::size_t t = 3; t < tr.delta.size(); ++t)
        if (tr.delta[t - 1] > 1e-14) ratios.push_back(tr.delta[t] / tr.delta[t - 1]);
    REQUIRE(!ratios.empty());
    for (double r : ratios) CHECK(std::abs(r - ratios.front()) < 0.2);
    CHECK(std::abs(fit.beta - ratios.front()) < 10.0 * (fit.residual + 1e-12) + 0.05);
}

TEST_CASE("descent: per-round local loss is monotone nonincreasing at eta = 1/mu") {
    TheoryModeConfig tc;
    tc.rounds = 8;
    tc.seed = 11;
    const TheoryVerdict v = theory_mode_run(tc);
    REQUIRE(!v.step_losses.empty());
    for (const auto& round_losses : v.step_losses)
        for (const auto& client_losses : round_losses)
            for (std::size_t s = 1; s < client_losses.size(); ++s)
                CHECK(client_losses[s] <= client_losses[s - 1] + 1e-12);
}

TEST_CASE("gradient suite: zero model and zero data match exactly") {
    Model m;
    m.input_dim = 2;
    m.output_dim = 2;
    AdaptedLayer L;
    L.layer_id = 0;
    L.mode = LayerMode::SingleAdapter;
    L.base = Matrix(2, 2);
    L.individual.rank = 0;
    L.train_base = true;
    L.train_ind_A = L.train_ind_B = false;
    m.blocks.push_back(std::make_unique<DenseBlock>(std::move(L)));
    Batch b;
    b.inputs = Matrix(2, 2);
    b.targets = Matrix(2, 2);
    auto [loss, grads] = backprop(m, b, Loss::mse);
    CHECK(loss == 0.0);
    const Matrix fd = finite_diff_gradient(m, b, Loss::mse, {0, Role::base}, 1e-6);
    CHECK(max_abs_diff(grads.at({0, Role::base}), fd) == 0.0);
}

TEST_CASE("gradient suite covers fedalt and attention models under 1e-5") {
    const GradCheckReport report = gradient_check_suite(12, 2024);
    INFO(report.worst_case);
    CHECK(report.models_checked == 12);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("power iteration matches a hand-checkable spectrum") {
    // X with orthogonal rows scaled differently: X^T X / n has known top eigenvalue
    Matrix x(2, 2);
    x(0, 0) = 3.0;
    x(1, 1) = 1.0;
    // X^T X / 2 = diag(4.5, 0.5)
    CHECK(power_iteration_bound(x) == Approx(4.5).epsilon(1e-10));
}
