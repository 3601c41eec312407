// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/rng.hpp"

#include <cmath>

namespace hlab {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Rng Rng::stream(std::uint64_t master_seed, std::string_view label, std::uint64_t entity) {
    std::uint64_t h = fnv1a(label);
    h ^= master_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= entity * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull;
    // one warmup step decorrelates nearby entity ids
    splitmix64(h);
    return Rng(h);
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

Matrix Rng::gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, double mean) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = mean + stddev * normal();
    return m;
}

}  // namespace hlab
