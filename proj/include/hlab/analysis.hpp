// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hlab/model.hpp"

namespace hlab {

/// Orthonormal basis for the column space of W: the left singular vectors of
/// the top-k singular values. When k is absent, k is the numerical rank at
/// sigma_i >= tol * sigma_max.
Matrix orth_basis(const Matrix& w, std::optional<std::size_t> k = std::nullopt,
                  double tol = 1e-6);

/// Principal angles (degrees, ascending) between the spans of two orthonormal
/// bases in the same ambient dimension. Non-orthonormal input (checked at
/// 1e-6) is a contract error.
std::vector<double> principal_angles(const Matrix& q1, const Matrix& q2);

struct SsaEntry {
    ParamAddress address;
    std::size_t k = 0;                // basis dimension compared
    std::vector<double> angles_deg;   // ascending
    double mean_angle_deg = 0.0;
};

/// Per-address subspace rotation between a base model and its adaptation, in
/// two truncation modes: full numerical rank (angles vanish for full-rank
/// square hosts, by column-space invariance) and dominant top-k subspaces.
struct SsaReport {
    std::vector<SsaEntry> full_rank;
    std::vector<SsaEntry> top_k;
    std::size_t top_k_used = 0;
    double tol = 1e-6;
};

/// Deltas are dense per-address ΔW; addresses absent from the map count as
/// unchanged. Covers the six matrix kinds K/Q/V/O/W1/W2.
SsaReport ssa_report(const ModelParams& base, const DeltaMap& deltas,
                     std::optional<std::size_t> top_k = std::nullopt, double tol = 1e-6);

/// Adapted-checkpoint form; the address sets must match exactly.
SsaReport ssa_report(const ModelParams& base, const ModelParams& adapted,
                     std::optional<std::size_t> top_k = std::nullopt, double tol = 1e-6);

/// Heat-map CSV: component, layer, attn, kind, k, mean_angle_deg, angles_json;
/// full-rank rows first, then top-k rows.
void write_ssa_csv(const SsaReport& report, const std::string& path);

/// Rows of `points` centered and projected onto the top-2 principal
/// components; returns points.rows() x 2.
Matrix pca_2d(const Matrix& points);

}  // namespace hlab
