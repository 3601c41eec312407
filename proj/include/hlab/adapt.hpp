// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hlab/adam.hpp"
#include "hlab/evalmetrics.hpp"
#include "hlab/model.hpp"
#include "hlab/speechgen.hpp"

namespace hlab {

/// One low-rank augmentation W' = W + B*A bound to a host address.
/// A is r x n, B is m x r for an m x n host.
struct LoraDelta {
    ParamAddress address;
    std::size_t rank = 0;
    Matrix A;
    Matrix B;

    Matrix delta() const { return matmul(B, A); }
};

enum class AdaptMethod { Full, Partial, Lora };

AdaptMethod adapt_method_from_string(const std::string& s);
const char* to_string(AdaptMethod m);

struct AdaptationSpec {
    AdaptMethod method = AdaptMethod::Lora;
    Selector selector = Selector::All;                      // full / partial
    std::vector<ParamKind> target_kinds = {ParamKind::W1};  // lora
    Component target_component = Component::Decoder;        // lora
    std::size_t rank = 2;
    double sigma_a = 0.02;

    void validate() const;
};

/// Addresses a LoRA spec matches, in canonical order.
std::vector<ParamAddress> lora_target_addresses(const ModelConfig& cfg,
                                                const AdaptationSpec& spec);

/// A ~ N(0, sigma_a^2), B = 0, so the initial adaptation is a no-op.
std::vector<LoraDelta> init_lora(const ModelParams& params, const AdaptationSpec& spec, Rng& rng);

/// Dense ΔW = B*A per address; duplicate addresses are a contract error.
DeltaMap materialize_deltas(const std::vector<LoraDelta>& deltas);

struct TrainHyper {
    std::size_t max_steps = 2000;
    AdamConfig adam;
    std::uint64_t seed = 42;
    std::size_t eval_every = 100;         // early-stop cadence; 0 disables
    std::size_t patience = 3;             // evals without val improvement
    std::size_t eval_utts_per_speaker = 8;
};

struct TrainHistory {
    std::vector<double> losses;                          // per step
    std::vector<std::pair<std::size_t, double>> val_wers;  // (step, median WER)
    std::size_t steps_run = 0;
    std::size_t best_step = 0;
    std::size_t trainable_entries = 0;
    double trainable_pct = 0.0;  // of total base entries
};

struct AdaptResult {
    std::optional<ModelParams> params;  // full / partial
    std::vector<LoraDelta> deltas;      // lora
    TrainHistory history;

    DeltaMap effective_deltas(const ModelParams& base) const;
};

/// Teacher-forced training of the spec'd parameter subset (or LoRA factors)
/// on a corpus slice, with optional early stopping on validation
/// speaker-median WER. The base model is never mutated.
AdaptResult train_adaptation(const ModelParams& base, const AdaptationSpec& spec,
                             const Corpus& corpus, const std::vector<const Utterance*>& train_slice,
                             const std::vector<const Utterance*>& val_slice,
                             const TrainHyper& hyper);

/// Full-model training on typical speech; the stand-in for large-scale
/// pre-training. Returns the trained model and per-step losses.
std::pair<ModelParams, TrainHistory> pretrain(const ModelParams& init, const Corpus& corpus,
                                              const TrainHyper& hyper);

/// Deterministic 70/30 split of one speaker's utterances by id hash.
struct IndividualSplit {
    std::vector<const Utterance*> train;
    std::vector<const Utterance*> eval;
};
IndividualSplit individual_split(const Corpus& corpus, const std::string& speaker_id);

/// LoRA checkpoint round trip; tensor names are "lora.<address>.A" / ".B".
void save_lora(const std::string& path, const std::vector<LoraDelta>& deltas);
std::vector<LoraDelta> load_lora(const std::string& path, const ModelParams& base);

// ---------------------------------------------------------------------------
// scoring helpers shared by early stopping, the CLI, and the test suites
// ---------------------------------------------------------------------------

using Transcriber = std::function<std::vector<std::uint32_t>(const Utterance&)>;

/// Transcribe and score a slice; returns per-speaker edit counts.
std::map<std::string, std::vector<EditCounts>> score_slice(
    const Corpus& corpus, const std::vector<const Utterance*>& slice,
    const Transcriber& transcribe, std::size_t max_utts_per_speaker = SIZE_MAX);

double median_speaker_wer(const std::map<std::string, std::vector<EditCounts>>& by_speaker);

}  // namespace hlab
