// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "hlab/matrix.hpp"

namespace hlab {

/// Counter-based deterministic RNG. Streams are derived from
/// (master seed, purpose label, entity id) so independent parts of a run
/// draw from independent, reproducible sequences on every platform.
/// Core generator is splitmix64; normals come from Box-Muller, so no
/// implementation-defined std::distribution is involved.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Derive a child stream from a label and an entity id.
    static Rng stream(std::uint64_t master_seed, std::string_view label, std::uint64_t entity = 0);

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, double mean = 0.0);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// FNV-1a over bytes; used for stream derivation and content hashing.
std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull);

}  // namespace hlab
