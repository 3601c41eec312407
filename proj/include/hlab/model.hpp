// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "hlab/matrix.hpp"
#include "hlab/param_address.hpp"
#include "hlab/rng.hpp"
#include "hlab/tape.hpp"

namespace hlab {

// Reserved token ids; content tokens start at FIRST_CONTENT_TOKEN.
inline constexpr std::uint32_t PAD_TOKEN = 0;
inline constexpr std::uint32_t BOS_TOKEN = 1;
inline constexpr std::uint32_t EOS_TOKEN = 2;
inline constexpr std::uint32_t FIRST_CONTENT_TOKEN = 3;

struct ModelConfig {
    std::size_t d_model = 32;
    std::size_t n_heads = 2;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 64;
    std::size_t feature_dim = 16;
    std::size_t max_decode_len = 48;
    std::size_t max_frames = 256;
    double ln_eps = 1e-5;

    void validate() const;
    std::size_t layers(Component c) const {
        return c == Component::Encoder ? n_enc_layers : n_dec_layers;
    }
};

/// The complete set of named weights of the toy encoder-decoder transformer.
/// Pre-norm residual blocks, GELU MLPs, learned absolute positions, bias-free
/// linear maps (only layer norms carry gain/bias).
class ModelParams {
public:
    static ModelParams init(const ModelConfig& cfg, Rng& rng);

    /// Every address the architecture requires, in canonical (sorted) order.
    static std::vector<ParamAddress> address_list(const ModelConfig& cfg);
    /// (rows, cols) of the weight at an address; weights are out-by-in.
    static std::pair<std::size_t, std::size_t> shape_of(const ModelConfig& cfg,
                                                        const ParamAddress& a);

    const ModelConfig& config() const { return cfg_; }
    const Matrix& at(const ParamAddress& a) const;
    Matrix& at_mut(const ParamAddress& a);
    bool has(const ParamAddress& a) const { return weights_.count(a) > 0; }
    const std::map<ParamAddress, Matrix>& weights() const { return weights_; }
    std::map<ParamAddress, Matrix>& weights_mut() { return weights_; }

    void set_frozen(const ParamAddress& a, bool frozen);
    void freeze_all();
    void unfreeze(const std::set<ParamAddress>& addrs);
    bool frozen(const ParamAddress& a) const { return frozen_.count(a) > 0; }

    std::size_t total_entries() const;
    bool bit_equal(const ModelParams& o) const;

private:
    ModelConfig cfg_;
    std::map<ParamAddress, Matrix> weights_;
    std::set<ParamAddress> frozen_;
};

enum class Selector { All, Enc, EncLow, EncHigh, Dec, DecLow, DecHigh, Head };

Selector selector_from_string(const std::string& s);
const char* to_string(Selector s);

/// Address subsets for full/partial tuning. Low halves are layers
/// [0, ceil(L/2)); Enc/Dec cover layered parameters only, so that
/// Enc + Dec + embeddings + Head partition All.
std::set<ParamAddress> select_params(const ModelConfig& cfg, Selector sel);

/// LoRA factors already placed on a tape (generated or leaf nodes).
struct LoraNodes {
    NodeId A;
    NodeId B;
};
using LoraNodeMap = std::map<ParamAddress, LoraNodes>;

/// Tape-recorded forward passes used by every training loop. Weights whose
/// address is in `trainable` become trainable leaves; everything else is
/// frozen. LoRA-augmented addresses compute W' = W + B*A on the tape.
class ModelForward {
public:
    ModelForward(Tape& tape, const ModelParams& params,
                 const std::set<ParamAddress>* trainable = nullptr,
                 const LoraNodeMap* lora = nullptr);

    /// Activations after the input projection (index 0) and after each
    /// encoder layer. features is T x feature_dim, T <= max_frames.
    std::vector<NodeId> encode(const Matrix& features);

    /// Teacher-forced decoder logits; tokens_in must begin with BOS.
    NodeId decode_teacher_forced(NodeId enc_final, const std::vector<std::uint32_t>& tokens_in);

    Tape& tape() { return tape_; }

private:
    NodeId weight(const ParamAddress& a);
    NodeId attention(NodeId x_norm, NodeId kv_src, Component comp, int layer, AttnScope scope,
                     const Matrix* causal_mask);
    NodeId block_ln(NodeId x, Component comp, int layer, AttnScope scope);

    Tape& tape_;
    const ModelParams& params_;
    const std::set<ParamAddress>* trainable_;
    const LoraNodeMap* lora_;
    std::map<ParamAddress, NodeId> weight_cache_;
};

/// Dense ΔW per address, the materialized form of any adaptation.
using DeltaMap = std::map<ParamAddress, Matrix>;

/// Tape-free inference over base weights plus optional dense deltas.
/// Greedy decoding runs incrementally with per-layer KV caches.
class InferModel {
public:
    explicit InferModel(const ModelParams& params, DeltaMap deltas = {});

    const ModelConfig& config() const { return params_.config(); }
    const Matrix& weight(const ParamAddress& a) const;

    std::vector<Matrix> encode(const Matrix& features) const;
    Matrix decode_teacher_forced(const Matrix& enc_final,
                                 const std::vector<std::uint32_t>& tokens_in) const;
    /// Argmax decoding from BOS; EOS/BOS/PAD stripped from the result.
    /// Exact ties pick the lowest token id.
    std::vector<std::uint32_t> greedy_decode(const Matrix& enc_final) const;

    std::vector<std::uint32_t> transcribe(const Matrix& features) const;

private:
    const ModelParams& params_;
    DeltaMap effective_;  // W' for adapted addresses only
};

/// Checkpoint round trip; tensor names are canonical address strings. A load
/// validates the exact address set and every shape against the config.
void save_model(const std::string& path, const ModelParams& params);
ModelParams load_model(const std::string& path, const ModelConfig& cfg);

/// Mean NLL over non-PAD label positions; logits row t scores labels[t].
double cross_entropy_loss(const Matrix& logits, const std::vector<std::uint32_t>& labels);

/// Decoder input [BOS, tokens...] and labels [tokens..., EOS].
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> teacher_forcing_pair(
    const std::vector<std::uint32_t>& tokens);

}  // namespace hlab
