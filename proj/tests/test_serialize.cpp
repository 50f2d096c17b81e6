// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "fedalt/data.hpp"
#include "fedalt/rng.hpp"
#include "fedalt/serialize.hpp"

using namespace fedalt;

namespace {

AdapterSet random_set(std::uint64_t seed) {
    Rng rng(seed);
    AdapterSet s;
    s.client_id = rng.below(16);
    s.round = rng.below(50);
    const int n_layers = 1 + rng.below(3);
    for (int l = 0; l < n_layers; ++l) {
        s.layers[l][WireRole::A_L] = gaussian_matrix(2, 4, 1.0, rng);
        s.layers[l][WireRole::B_L] = gaussian_matrix(4, 2, 1.0, rng);
        if (rng.below(2)) s.layers[l][WireRole::G] = gaussian_matrix(2, 4, 1.0, rng);
    }
    return s;
}

bool sets_equal(const AdapterSet& a, const AdapterSet& b) {
    if (a.client_id != b.client_id || a.round != b.round || a.layers.size() != b.layers.size()) return false;
    for (const auto& [id, roles] : a.layers) {
        auto it = b.layers.find(id);
        if (it == b.layers.end() || it->second.size() != roles.size()) return false;
        for (const auto& [role, m] : roles) {
            auto mit = it->second.find(role);
            if (mit == it->second.end() || !(mit->second == m)) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("adapter container round-trips bit-exactly") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const AdapterSet s = random_set(seed);
        const AdapterSet back = read_adapter_set(write_adapter_set(s));
        CHECK(sets_equal(s, back));
    }
}

TEST_CASE("awkward doubles survive the text encoding") {
    AdapterSet s;
    s.client_id = 0;
    s.round = 1;
    Matrix m(1, 6);
    m(0, 0) = 0.1;
    m(0, 1) = 1.0 / 3.0;
    m(0, 2) = -0.0;
    m(0, 3) = 5e-324;  // smallest subnormal
    m(0, 4) = std::numeric_limits<double>::max();
    m(0, 5) = -1.2345678901234567e-300;
    s.layers[0][WireRole::B_L] = m;
    const AdapterSet back = read_adapter_set(write_adapter_set(s));
    const Matrix& r = back.layers.at(0).at(WireRole::B_L);
    CHECK(r == m);
    CHECK(std::signbit(r(0, 2)));
}

TEST_CASE("reader rejects malformed containers") {
    const AdapterSet s = random_set(7);
    const std::string good = write_adapter_set(s);

    CHECK_THROWS_AS(read_adapter_set("fedalt-adapters v2\nclient 0\nround 0\nlayers\nend\n"), Error);
    CHECK_THROWS_AS(read_adapter_set(good.substr(0, good.size() - 4)), Error);  // missing end

    std::string dup = "fedalt-adapters v1\nclient 0\nround 0\nlayers 0\nlayer 0\n";
    dup += "mat A_L 1 1\n0x1p+0\nmat A_L 1 1\n0x1p+0\nend\n";
    CHECK_THROWS_AS(read_adapter_set(dup), Error);

    std::string wrong_decl = "fedalt-adapters v1\nclient 0\nround 0\nlayers 0 1\nlayer 0\nend\n";
    CHECK_THROWS_AS(read_adapter_set(wrong_decl), Error);

    std::string garbage = "fedalt-adapters v1\nclient 0\nround 0\nlayers 0\nlayer 0\n";
    garbage += "mat A_L 1 2\n0x1p+0 pelican\nend\n";
    CHECK_THROWS_AS(read_adapter_set(garbage), Error);

    std::string nonfinite = "fedalt-adapters v1\nclient 0\nround 0\nlayers 0\nlayer 0\n";
    nonfinite += "mat A_L 1 1\ninf\nend\n";
    CHECK_THROWS_AS(read_adapter_set(nonfinite), Error);

    std::string bad_role = "fedalt-adapters v1\nclient 0\nround 0\nlayers 0\nlayer 0\n";
    bad_role += "mat W_Q 1 1\n0x1p+0\nend\n";
    CHECK_THROWS_AS(read_adapter_set(bad_role), Error);
}

TEST_CASE("dataset dumps round-trip") {
    Rng rng(3);
    DatasetDump d;
    d.client_id = 5;
    d.task_id = 2;
    d.blocks["train_inputs"] = gaussian_matrix(6, 3, 1.0, rng);
    d.blocks["train_targets"] = gaussian_matrix(6, 1, 1.0, rng);
    d.blocks["eval_inputs"] = gaussian_matrix(4, 3, 1.0, rng);
    d.blocks["eval_targets"] = gaussian_matrix(4, 1, 1.0, rng);
    const DatasetDump back = read_dataset_dump(write_dataset_dump(d));
    CHECK(back.client_id == 5);
    CHECK(back.task_id == 2);
    REQUIRE(back.blocks.size() == 4);
    for (const auto& [name, m] : d.blocks) CHECK(back.blocks.at(name) == m);
}

TEST_CASE("client datasets survive dump/load through the container") {
    HeterogeneityConfig het;
    het.clients = 3;
    het.level = HetLevel::high;
    const auto data = build_federation_data(het, {20, 10}, 77);
    for (const ClientDataset& ds : data) {
        const ClientDataset back = from_dataset_dump(read_dataset_dump(write_dataset_dump(to_dataset_dump(ds))));
        CHECK(back.train.inputs == ds.train.inputs);
        CHECK(back.train.targets == ds.train.targets);
        CHECK(back.eval.inputs == ds.eval.inputs);
        CHECK(back.eval.targets == ds.eval.targets);
    }
}
