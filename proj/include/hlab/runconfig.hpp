// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlab/adapt.hpp"
#include "hlab/hypernet.hpp"
#include "hlab/model.hpp"
#include "hlab/speechgen.hpp"

namespace hlab {

/// Bad flags, bad config, bad schema: anything the caller must fix. The CLI
/// maps this to exit code 2; every other exception to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The resolved experiment description. Every field has a default, so an
/// empty JSON document is a valid config; unknown keys anywhere are rejected.
struct RunConfig {
    ModelConfig model;
    GenConfig corpus;
    TrainHyper pretrain;
    AdaptationSpec adaptation;
    TrainHyper adapt_train;
    HypernetConfig hypernet;  // targets resolved against `model`
    TrainHyper hyper_train;
    bool eval_verbatim_reference = false;
    std::uint64_t master_seed = 42;
    bool seed_from_env = false;  // HLAB_SEED override was applied
    std::string out_dir = "runs";
};

/// Parse and validate a config document. The HLAB_SEED environment variable,
/// when set, overrides seeds.master (recorded in the manifest).
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical serialization of the resolved config; its hash ties artifacts
/// to the exact settings that produced them.
std::string run_config_json(const RunConfig& cfg);
std::string hash_hex(const std::string& bytes);

/// Sidecar written next to every artifact: enough to audit and reproduce.
struct RunManifest {
    std::string run_id;
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string seed_source = "config";  // or "env"
    std::map<std::string, std::string> input_hashes;  // path -> content hash
    std::vector<std::string> artifacts;
    double wall_clock_sec = 0.0;
    std::vector<std::string> training_speakers;  // train runs; zero-shot audit
    std::string method;
    std::string scope;
    std::string cohort;   // cohort-scope train runs
    std::string speaker;  // individual-scope train runs
    double trainable_pct = -1.0;  // train runs only
    // eval runs: one row per (group, statistic set)
    struct SummaryRow {
        std::string group;
        std::string method;
        std::string scope;
        double p50 = 0.0;
        double iqr = 0.0;
        std::size_t n_speakers = 0;
        double trainable_pct = -1.0;
    };
    std::vector<SummaryRow> summary;
};

std::string manifest_path_for(const std::string& artifact);
void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace hlab
