// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlab/adapt.hpp"
#include "hlab/model.hpp"
#include "hlab/speechgen.hpp"

namespace hlab {

enum class HypernetForm { Linear, Mlp };
enum class SpeakerSource { AsrEncoder, SvEncoder };

HypernetForm hypernet_form_from_string(const std::string& s);
SpeakerSource speaker_source_from_string(const std::string& s);
const char* to_string(HypernetForm f);
const char* to_string(SpeakerSource s);

struct HypernetConfig {
    HypernetForm form = HypernetForm::Mlp;
    std::size_t d_s = 32;   // speaker vector width
    std::size_t d_c = 8;    // location embedding width
    std::size_t hidden = 64;  // mlp form only
    std::size_t rank = 2;
    std::vector<ParamAddress> targets;  // ordered generation locations
    double head_a_std = 0.01;
    double trunk_std = 0.02;
    double loc_embed_std = 0.1;
    SpeakerSource speaker_source = SpeakerSource::AsrEncoder;
    std::size_t asr_layer = SIZE_MAX;  // SIZE_MAX = final encoder layer
};

/// Generator of per-utterance LoRA factors: a shared trunk over
/// concat(speaker vector, location embedding) with separate A and B heads.
/// The B head starts at exactly zero so a fresh hypernetwork adapts nothing.
struct Hypernetwork {
    HypernetConfig cfg;
    std::size_t host_rows = 0;  // m of every target host
    std::size_t host_cols = 0;  // n of every target host
    Matrix loc_embed;           // n_targets x d_c
    Matrix trunk_w1;            // hidden x (d_s+d_c)
    Matrix trunk_b1;            // 1 x hidden
    Matrix trunk_w2;            // hidden x hidden, mlp form only
    Matrix trunk_b2;            // 1 x hidden, mlp form only
    Matrix head_a_w;            // (r*n) x hidden
    Matrix head_a_b;            // 1 x (r*n)
    Matrix head_b_w;            // (m*r) x hidden
    Matrix head_b_b;            // 1 x (m*r)

    std::vector<Matrix*> trainable_leaves();
    std::vector<const Matrix*> trainable_leaves() const;
    std::size_t trainable_entries() const;
};

Hypernetwork init_hypernetwork(const ModelConfig& model_cfg, const HypernetConfig& cfg, Rng& rng);

/// Mean over time of the chosen encoder activation under the frozen base.
/// layer 0 is the input projection; layer n_enc_layers the final block.
Matrix speaker_vector_asr(const ModelParams& base, const Matrix& features, std::size_t layer);

/// Small speaker-ID classifier; its penultimate activation is s_SV.
struct SvEncoder {
    std::vector<std::string> speaker_ids;  // label order
    Matrix w1, b1;  // hidden x feature_dim, 1 x hidden
    Matrix w2, b2;  // n_speakers x hidden, 1 x n_speakers

    Matrix embed(const Matrix& features) const;  // 1 x hidden
    std::size_t classify(const Matrix& features) const;
};

struct SvTrainResult {
    SvEncoder encoder;
    double train_accuracy = 0.0;
};

SvTrainResult train_sv_encoder(const Corpus& corpus, std::size_t hidden, std::size_t steps,
                               std::uint64_t seed);

/// Inference-path generation: one delta per target location.
std::vector<LoraDelta> generate_deltas(const Hypernetwork& h, const Matrix& speaker_vec);

/// Tape-path generation for meta-training; the returned map is valid for the
/// lifetime of the tape.
LoraNodeMap generate_deltas_tape(const Hypernetwork& h, Tape& tape, const Matrix& speaker_vec);

/// s for an utterance under the configured source. The sv encoder may be
/// null when the source is the ASR encoder.
Matrix compute_speaker_vector(const Hypernetwork& h, const ModelParams& base,
                              const SvEncoder* sv, const Matrix& features);

/// Speaker-averaged s for the coarser conditioning variant: the mean of the
/// per-utterance vectors.
Matrix mean_speaker_vector(const Hypernetwork& h, const ModelParams& base, const SvEncoder* sv,
                           const std::vector<const Matrix*>& feature_sets);

/// Zero-shot per-utterance adaptation: compute s, generate, insert, decode.
std::vector<std::uint32_t> hyper_transcribe(const ModelParams& base, const Hypernetwork& h,
                                            const SvEncoder* sv, const Matrix& features);

struct HyperTrainResult {
    Hypernetwork hypernet;
    TrainHistory history;
    std::vector<std::string> training_speakers;  // for the zero-shot audit
};

HyperTrainResult train_hypernetwork(const ModelParams& base, const Hypernetwork& init,
                                    const SvEncoder* sv, const Corpus& corpus,
                                    const std::vector<const Utterance*>& train_slice,
                                    const std::vector<const Utterance*>& val_slice,
                                    const TrainHyper& hyper);

/// Per-utterance generated parameters flattened and projected to 2D by PCA;
/// CSV columns: utterance, speaker, cohort, severity, x, y.
void export_param_manifold(const ModelParams& base, const Hypernetwork& h, const SvEncoder* sv,
                           const std::vector<const Utterance*>& sample,
                           const std::string& out_path);

void save_hypernetwork(const std::string& path, const Hypernetwork& h);
Hypernetwork load_hypernetwork(const std::string& path, const ModelConfig& model_cfg);

}  // namespace hlab
