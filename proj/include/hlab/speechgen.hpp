// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlab/matrix.hpp"
#include "hlab/rng.hpp"

namespace hlab {

enum class Cohort { Typical, Stutter, Dysarthria, Parkinsons };
enum class Severity { None, Mild, Moderate, Severe };
enum class Split { Train, Val, Test };

const char* to_string(Cohort c);
const char* to_string(Severity s);
const char* to_string(Split s);
Cohort cohort_from_string(const std::string& s);
Severity severity_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct SpeakerProfile {
    std::string id;
    Cohort cohort = Cohort::Typical;
    Severity severity = Severity::None;
    Split split = Split::Train;
    std::vector<double> voice_offset;
    double rate_factor = 1.0;
    double dysfluency_rate = 0.0;
    std::size_t smear_width = 1;
    double amp_mod_depth = 0.0;
    double channel_gain_std = 0.0;  // dysarthria per-channel distortion spread
};

struct Utterance {
    std::string id;
    std::string speaker;
    Cohort cohort = Cohort::Typical;
    Severity severity = Severity::None;
    Split split = Split::Train;
    std::vector<std::uint32_t> intended;
    std::vector<std::uint32_t> verbatim;
    Matrix features;
};

struct GenConfig {
    std::size_t feature_dim = 16;
    std::size_t vocab_size = 64;          // content tokens are [3, vocab_size)
    std::size_t frames_per_token = 4;
    double noise_std = 0.10;
    double voice_offset_std = 0.25;
    double channel_gain_std = 0.10;       // dysarthria per-channel distortion
    std::size_t phrase_count = 80;
    std::size_t phrase_min_len = 3;
    std::size_t phrase_max_len = 8;
    std::size_t n_typical_speakers = 30;
    std::size_t speakers_per_severity = 6;  // per non-typical cohort and severity
    std::size_t utts_per_speaker = 40;
    bool verbatim_reference = false;  // score against verbatim instead of intended

    void validate() const;
};

// Severity tables: mild / moderate / severe.
double severity_dysfluency_rate(Severity s);
double severity_rate_factor(Severity s);
std::size_t severity_smear_width(Severity s);
double severity_amp_mod_depth(Severity s);

struct Corpus {
    std::vector<SpeakerProfile> speakers;
    std::vector<Utterance> utterances;
    std::uint64_t master_seed = 0;
    GenConfig config;

    const SpeakerProfile& speaker(const std::string& id) const;
    std::vector<const Utterance*> slice(Split split) const;
    std::vector<const Utterance*> slice(Split split, Cohort cohort) const;
    std::vector<const Utterance*> speaker_utterances(const std::string& speaker_id) const;
    /// The transcript an utterance is scored (and trained) against.
    const std::vector<std::uint32_t>& reference(const Utterance& u) const {
        return config.verbatim_reference ? u.verbatim : u.intended;
    }
};

/// Fixed-seed per-token prototype vectors (vocab_size x feature_dim), shared
/// by every corpus so the mapping from features to tokens is stable.
Matrix token_prototypes(const GenConfig& cfg);

/// Clean rendering: each token becomes round(frames_per_token * rate_factor)
/// frames of prototype + voice offset + Gaussian noise.
Matrix synth_typical(const std::vector<std::uint32_t>& tokens, const SpeakerProfile& speaker,
                     const Matrix& prototypes, const GenConfig& cfg, Rng& rng);

struct SynthResult {
    std::vector<std::uint32_t> verbatim;
    Matrix features;
};

SynthResult apply_stutter(const std::vector<std::uint32_t>& tokens, const SpeakerProfile& profile,
                          const Matrix& prototypes, const GenConfig& cfg, Rng& rng);

/// Time stretch (nearest-frame repetition), moving-average smear, and one
/// per-channel multiplicative distortion draw. Input is rate-1.0 rendering.
Matrix apply_dysarthria(const Matrix& features, const SpeakerProfile& profile, Rng& rng);

SynthResult apply_parkinsons(const std::vector<std::uint32_t>& tokens,
                             const SpeakerProfile& profile, const Matrix& prototypes,
                             const GenConfig& cfg, Rng& rng);

/// Cohort dispatch for one utterance.
SynthResult synth_utterance(const std::vector<std::uint32_t>& tokens,
                            const SpeakerProfile& profile, const Matrix& prototypes,
                            const GenConfig& cfg, Rng& rng);

// shared helpers (tested against brute-force oracles)
Matrix time_stretch_rows(const Matrix& x, double rate);
Matrix moving_average_rows(const Matrix& x, std::size_t width);

Corpus gen_corpus(const GenConfig& cfg, std::uint64_t master_seed);

void save_corpus_jsonl(const std::string& path, const Corpus& corpus);
Corpus load_corpus_jsonl(const std::string& path);

}  // namespace hlab
