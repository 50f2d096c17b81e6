// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

#include "fedalt/matrix.hpp"

namespace fedalt {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed, a purpose label and up
/// to two indices. Every random stream in a run is named this way so that
/// clients, tasks and splits never share a stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ base;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = h;
    std::uint64_t out = splitmix64(s);
    s ^= a * 0x9e3779b97f4a7c15ULL;
    out ^= splitmix64(s);
    s ^= b * 0xd1342543de82ef95ULL;
    out ^= splitmix64(s);
    return out;
}

/// Deterministic stream. Gaussian draws use a stateless Box-Muller so the
/// sequence depends only on the seed and call count, never on library
/// distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// uniform integer in [0, n), rejection-sampled
    int below(int n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    void shuffle(std::vector<int>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[below(i + 1)]);
    }

private:
    std::mt19937_64 gen_;
};

inline Matrix gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) p[i] = stddev * rng.normal();
    return m;
}

}  // namespace fedalt
