// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hlab/matrix.hpp"

namespace hlab {

/// Binary tensor container shared by model checkpoints, LoRA deltas, and
/// hypernetwork weights. Layout (all little-endian):
///   "HLAB" | u32 version=1 | u32 tensor count |
///   per tensor: u16 name length | name bytes | u8 ndim | u64 dims... | f64 payload
struct NamedTensor {
    std::string name;
    Matrix value;
};

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

/// Writes to <path>.tmp then renames, so partial files never shadow results.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

/// FNV-1a content hash of a file, hex-encoded; used by run manifests.
std::string file_hash_hex(const std::string& path);

}  // namespace hlab
