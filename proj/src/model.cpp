// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/model.hpp"

#include "hlab/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hlab {

void ModelConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
        throw std::invalid_argument("ModelConfig: d_model must be a positive multiple of n_heads");
    if (vocab_size < 4) throw std::invalid_argument("ModelConfig: vocab_size must be >= 4");
    if (max_decode_len < 2) throw std::invalid_argument("ModelConfig: max_decode_len must be >= 2");
    if (n_enc_layers == 0 || n_dec_layers == 0)
        throw std::invalid_argument("ModelConfig: layer counts must be positive");
    if (feature_dim == 0 || d_ff == 0 || max_frames == 0)
        throw std::invalid_argument("ModelConfig: widths must be positive");
}

std::vector<ParamAddress> ModelParams::address_list(const ModelConfig& cfg) {
    std::vector<ParamAddress> out;
    auto layered = [&](Component c, int l, AttnScope s, ParamKind k) {
        out.push_back(ParamAddress::layered(c, l, s, k));
    };
    for (Component comp : {Component::Encoder, Component::Decoder}) {
        const int n_layers = static_cast<int>(cfg.layers(comp));
        for (int l = 0; l < n_layers; ++l) {
            std::vector<AttnScope> attn_scopes = {AttnScope::Self};
            if (comp == Component::Decoder) attn_scopes.push_back(AttnScope::Cross);
            for (AttnScope s : attn_scopes) {
                for (ParamKind k : {ParamKind::K, ParamKind::Q, ParamKind::V, ParamKind::O})
                    layered(comp, l, s, k);
                layered(comp, l, s, ParamKind::LnGain);
                layered(comp, l, s, ParamKind::LnBias);
            }
            layered(comp, l, AttnScope::None, ParamKind::W1);
            layered(comp, l, AttnScope::None, ParamKind::W2);
            layered(comp, l, AttnScope::None, ParamKind::LnGain);
            layered(comp, l, AttnScope::None, ParamKind::LnBias);
        }
    }
    out.push_back(ParamAddress::global(Component::Encoder, ParamKind::FeatProj));
    out.push_back(ParamAddress::global(Component::Encoder, ParamKind::PosEmbed));
    out.push_back(ParamAddress::global(Component::Decoder, ParamKind::TokEmbed));
    out.push_back(ParamAddress::global(Component::Decoder, ParamKind::PosEmbed));
    out.push_back(ParamAddress::global(Component::Decoder, ParamKind::Head));
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<std::size_t, std::size_t> ModelParams::shape_of(const ModelConfig& cfg,
                                                          const ParamAddress& a) {
    switch (a.kind) {
        case ParamKind::K:
        case ParamKind::Q:
        case ParamKind::V:
        case ParamKind::O:
            return {cfg.d_model, cfg.d_model};
        case ParamKind::W1:
            return {cfg.d_ff, cfg.d_model};
        case ParamKind::W2:
            return {cfg.d_model, cfg.d_ff};
        case ParamKind::LnGain:
        case ParamKind::LnBias:
            return {1, cfg.d_model};
        case ParamKind::FeatProj:
            return {cfg.d_model, cfg.feature_dim};
        case ParamKind::TokEmbed:
            return {cfg.vocab_size, cfg.d_model};
        case ParamKind::PosEmbed:
            return {a.component == Component::Encoder ? cfg.max_frames : cfg.max_decode_len,
                    cfg.d_model};
        case ParamKind::Head:
            return {cfg.vocab_size, cfg.d_model};
    }
    throw std::logic_error("shape_of: unreachable");
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.cfg_ = cfg;
    for (const ParamAddress& a : address_list(cfg)) {
        auto [r, c] = shape_of(cfg, a);
        if (a.kind == ParamKind::LnGain)
            p.weights_.emplace(a, Matrix(r, c, 1.0));
        else if (a.kind == ParamKind::LnBias)
            p.weights_.emplace(a, Matrix(r, c, 0.0));
        else if (a.kind == ParamKind::PosEmbed)
            p.weights_.emplace(a, rng.gaussian_matrix(r, c, 0.02));
        else
            p.weights_.emplace(a, rng.gaussian_matrix(r, c, 0.08));
    }
    return p;
}

const Matrix& ModelParams::at(const ParamAddress& a) const {
    auto it = weights_.find(a);
    if (it == weights_.end())
        throw std::invalid_argument("ModelParams: no weight at " + a.str());
    return it->second;
}

Matrix& ModelParams::at_mut(const ParamAddress& a) {
    auto it = weights_.find(a);
    if (it == weights_.end())
        throw std::invalid_argument("ModelParams: no weight at " + a.str());
    return it->second;
}

void ModelParams::set_frozen(const ParamAddress& a, bool frozen) {
    if (frozen)
        frozen_.insert(a);
    else
        frozen_.erase(a);
}

void ModelParams::freeze_all() {
    for (const auto& [a, w] : weights_) frozen_.insert(a);
}

void ModelParams::unfreeze(const std::set<ParamAddress>& addrs) {
    for (const ParamAddress& a : addrs) frozen_.erase(a);
}

std::size_t ModelParams::total_entries() const {
    std::size_t n = 0;
    for (const auto& [a, w] : weights_) n += w.size();
    return n;
}

bool ModelParams::bit_equal(const ModelParams& o) const {
    if (weights_.size() != o.weights_.size()) return false;
    for (const auto& [a, w] : weights_) {
        auto it = o.weights_.find(a);
        if (it == o.weights_.end() || !w.bit_equal(it->second)) return false;
    }
    return true;
}

Selector selector_from_string(const std::string& s) {
    if (s == "all") return Selector::All;
    if (s == "enc") return Selector::Enc;
    if (s == "enc_low") return Selector::EncLow;
    if (s == "enc_high") return Selector::EncHigh;
    if (s == "dec") return Selector::Dec;
    if (s == "dec_low") return Selector::DecLow;
    if (s == "dec_high") return Selector::DecHigh;
    if (s == "head") return Selector::Head;
    throw std::invalid_argument("unknown selector '" + s + "'");
}

const char* to_string(Selector s) {
    switch (s) {
        case Selector::All: return "all";
        case Selector::Enc: return "enc";
        case Selector::EncLow: return "enc_low";
        case Selector::EncHigh: return "enc_high";
        case Selector::Dec: return "dec";
        case Selector::DecLow: return "dec_low";
        case Selector::DecHigh: return "dec_high";
        case Selector::Head: return "head";
    }
    return "?";
}

std::set<ParamAddress> select_params(const ModelConfig& cfg, Selector sel) {
    std::set<ParamAddress> out;
    auto low_cut = [](std::size_t layers) { return (layers + 1) / 2; };  // ceil(L/2)
    for (const ParamAddress& a : ModelParams::address_list(cfg)) {
        const bool layered = !is_global_kind(a.kind);
        const std::size_t cut = low_cut(cfg.layers(a.component));
        bool take = false;
        switch (sel) {
            case Selector::All: take = true; break;
            case Selector::Enc: take = layered && a.component == Component::Encoder; break;
            case Selector::EncLow:
                take = layered && a.component == Component::Encoder &&
                       static_cast<std::size_t>(a.layer) < cut;
                break;
            case Selector::EncHigh:
                take = layered && a.component == Component::Encoder &&
                       static_cast<std::size_t>(a.layer) >= cut;
                break;
            case Selector::Dec: take = layered && a.component == Component::Decoder; break;
            case Selector::DecLow:
                take = layered && a.component == Component::Decoder &&
                       static_cast<std::size_t>(a.layer) < cut;
                break;
            case Selector::DecHigh:
                take = layered && a.component == Component::Decoder &&
                       static_cast<std::size_t>(a.layer) >= cut;
                break;
            case Selector::Head: take = a.kind == ParamKind::Head; break;
        }
        if (take) out.insert(a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// tape forward
// ---------------------------------------------------------------------------

ModelForward::ModelForward(Tape& tape, const ModelParams& params,
                           const std::set<ParamAddress>* trainable, const LoraNodeMap* lora)
    : tape_(tape), params_(params), trainable_(trainable), lora_(lora) {}

NodeId ModelForward::weight(const ParamAddress& a) {
    auto it = weight_cache_.find(a);
    if (it != weight_cache_.end()) return it->second;
    const bool train = trainable_ && trainable_->count(a) > 0;
    NodeId w = tape_.leaf(&params_.at(a), train);
    if (lora_) {
        auto lit = lora_->find(a);
        if (lit != lora_->end()) w = tape_.add(w, tape_.matmul(lit->second.B, lit->second.A));
    }
    weight_cache_.emplace(a, w);
    return w;
}

NodeId ModelForward::block_ln(NodeId x, Component comp, int layer, AttnScope scope) {
    return tape_.layer_norm_rows(
        x, weight(ParamAddress::layered(comp, layer, scope, ParamKind::LnGain)),
        weight(ParamAddress::layered(comp, layer, scope, ParamKind::LnBias)),
        params_.config().ln_eps);
}

NodeId ModelForward::attention(NodeId x_norm, NodeId kv_src, Component comp, int layer,
                               AttnScope scope, const Matrix* causal_mask) {
    const ModelConfig& cfg = params_.config();
    const std::size_t dh = cfg.d_model / cfg.n_heads;
    NodeId q = tape_.matmul_nt(x_norm, weight(ParamAddress::layered(comp, layer, scope, ParamKind::Q)));
    NodeId k = tape_.matmul_nt(kv_src, weight(ParamAddress::layered(comp, layer, scope, ParamKind::K)));
    NodeId v = tape_.matmul_nt(kv_src, weight(ParamAddress::layered(comp, layer, scope, ParamKind::V)));
    NodeId mask = -1;
    if (causal_mask) mask = tape_.constant(*causal_mask);
    std::vector<NodeId> ctx_heads;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        NodeId qh = tape_.slice_cols(q, h * dh, dh);
        NodeId kh = tape_.slice_cols(k, h * dh, dh);
        NodeId vh = tape_.slice_cols(v, h * dh, dh);
        NodeId scores = tape_.scale(tape_.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (causal_mask) scores = tape_.add(scores, mask);
        NodeId attn = tape_.softmax_rows(scores);
        ctx_heads.push_back(tape_.matmul(attn, vh));
    }
    NodeId ctx = ctx_heads.size() == 1 ? ctx_heads[0] : tape_.concat_cols(ctx_heads);
    return tape_.matmul_nt(ctx, weight(ParamAddress::layered(comp, layer, scope, ParamKind::O)));
}

std::vector<NodeId> ModelForward::encode(const Matrix& features) {
    const ModelConfig& cfg = params_.config();
    const std::size_t t_frames = features.rows();
    if (t_frames > cfg.max_frames)
        throw std::invalid_argument("encode: input of " + std::to_string(t_frames) +
                                    " frames exceeds max_frames " + std::to_string(cfg.max_frames));
    require_shape(features, t_frames, cfg.feature_dim, "encode features");
    NodeId feats = tape_.constant(features);
    std::vector<std::uint32_t> pos(t_frames);
    for (std::size_t i = 0; i < t_frames; ++i) pos[i] = static_cast<std::uint32_t>(i);
    NodeId x = tape_.add(
        tape_.matmul_nt(feats, weight(ParamAddress::global(Component::Encoder, ParamKind::FeatProj))),
        tape_.embedding_lookup(weight(ParamAddress::global(Component::Encoder, ParamKind::PosEmbed)),
                               pos));
    std::vector<NodeId> acts = {x};
    for (int l = 0; l < static_cast<int>(cfg.n_enc_layers); ++l) {
        NodeId xn = block_ln(x, Component::Encoder, l, AttnScope::Self);
        x = tape_.add(x, attention(xn, xn, Component::Encoder, l, AttnScope::Self, nullptr));
        NodeId mn = block_ln(x, Component::Encoder, l, AttnScope::None);
        NodeId h = tape_.gelu(tape_.matmul_nt(
            mn, weight(ParamAddress::layered(Component::Encoder, l, AttnScope::None, ParamKind::W1))));
        NodeId mlp = tape_.matmul_nt(
            h, weight(ParamAddress::layered(Component::Encoder, l, AttnScope::None, ParamKind::W2)));
        x = tape_.add(x, mlp);
        acts.push_back(x);
    }
    return acts;
}

static Matrix causal_mask_matrix(std::size_t len) {
    Matrix m(len, len);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = i + 1; j < len; ++j) m.at(i, j) = -1e30;
    return m;
}

NodeId ModelForward::decode_teacher_forced(NodeId enc_final,
                                           const std::vector<std::uint32_t>& tokens_in) {
    const ModelConfig& cfg = params_.config();
    if (tokens_in.empty() || tokens_in.front() != BOS_TOKEN)
        throw std::invalid_argument("decode_teacher_forced: targets must begin with BOS");
    if (tokens_in.size() > cfg.max_decode_len)
        throw std::invalid_argument("decode_teacher_forced: length exceeds max_decode_len");
    for (std::uint32_t t : tokens_in)
        if (t >= cfg.vocab_size)
            throw std::invalid_argument("decode_teacher_forced: token id " + std::to_string(t) +
                                        " outside vocabulary of " + std::to_string(cfg.vocab_size));
    const std::size_t len = tokens_in.size();
    std::vector<std::uint32_t> pos(len);
    for (std::size_t i = 0; i < len; ++i) pos[i] = static_cast<std::uint32_t>(i);
    NodeId x = tape_.add(
        tape_.embedding_lookup(weight(ParamAddress::global(Component::Decoder, ParamKind::TokEmbed)),
                               tokens_in),
        tape_.embedding_lookup(weight(ParamAddress::global(Component::Decoder, ParamKind::PosEmbed)),
                               pos));
    const Matrix mask = causal_mask_matrix(len);
    for (int l = 0; l < static_cast<int>(cfg.n_dec_layers); ++l) {
        NodeId xn = block_ln(x, Component::Decoder, l, AttnScope::Self);
        x = tape_.add(x, attention(xn, xn, Component::Decoder, l, AttnScope::Self, &mask));
        NodeId cn = block_ln(x, Component::Decoder, l, AttnScope::Cross);
        x = tape_.add(x, attention(cn, enc_final, Component::Decoder, l, AttnScope::Cross, nullptr));
        NodeId mn = block_ln(x, Component::Decoder, l, AttnScope::None);
        NodeId h = tape_.gelu(tape_.matmul_nt(
            mn, weight(ParamAddress::layered(Component::Decoder, l, AttnScope::None, ParamKind::W1))));
        x = tape_.add(x, tape_.matmul_nt(h, weight(ParamAddress::layered(
                                                Component::Decoder, l, AttnScope::None, ParamKind::W2))));
    }
    return tape_.matmul_nt(x, weight(ParamAddress::global(Component::Decoder, ParamKind::Head)));
}

// ---------------------------------------------------------------------------
// tape-free inference
// ---------------------------------------------------------------------------

InferModel::InferModel(const ModelParams& params, DeltaMap deltas) : params_(params) {
    for (auto& [a, dw] : deltas) {
        const Matrix& w = params_.at(a);
        if (!dw.same_shape(w))
            throw std::invalid_argument("InferModel: delta shape " + dw.shape_str() +
                                        " != host shape " + w.shape_str() + " at " + a.str());
        effective_.emplace(a, add(w, dw));
    }
}

const Matrix& InferModel::weight(const ParamAddress& a) const {
    auto it = effective_.find(a);
    return it != effective_.end() ? it->second : params_.at(a);
}

namespace {

struct AttnWeights {
    const Matrix *k, *q, *v, *o;
};

Matrix multi_head_attention(const Matrix& x_norm, const Matrix& kv_src, const AttnWeights& w,
                            std::size_t n_heads, bool causal) {
    const std::size_t d = x_norm.cols();
    const std::size_t dh = d / n_heads;
    const Matrix q = matmul_nt(x_norm, *w.q);
    const Matrix k = matmul_nt(kv_src, *w.k);
    const Matrix v = matmul_nt(kv_src, *w.v);
    Matrix ctx(x_norm.rows(), d);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < q.rows(); ++i) {
            const std::size_t limit = causal ? i + 1 : k.rows();
            // scores over allowed keys, softmaxed in place
            std::vector<double> s(limit);
            double mx = -1e300;
            for (std::size_t j = 0; j < limit; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dot += q.at(i, off + c) * k.at(j, off + c);
                s[j] = dot * inv_sqrt;
                mx = std::max(mx, s[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < limit; ++j) {
                s[j] = std::exp(s[j] - mx);
                sum += s[j];
            }
            for (std::size_t j = 0; j < limit; ++j) {
                const double a = s[j] / sum;
                for (std::size_t c = 0; c < dh; ++c) ctx.at(i, off + c) += a * v.at(j, off + c);
            }
        }
    }
    return matmul_nt(ctx, *w.o);
}

}  // namespace

std::vector<Matrix> InferModel::encode(const Matrix& features) const {
    const ModelConfig& cfg = params_.config();
    if (features.rows() > cfg.max_frames)
        throw std::invalid_argument("encode: input of " + std::to_string(features.rows()) +
                                    " frames exceeds max_frames " + std::to_string(cfg.max_frames));
    require_shape(features, features.rows(), cfg.feature_dim, "encode features");
    const Matrix& pos = weight(ParamAddress::global(Component::Encoder, ParamKind::PosEmbed));
    Matrix x = matmul_nt(features, weight(ParamAddress::global(Component::Encoder, ParamKind::FeatProj)));
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) x.at(i, j) += pos.at(i, j);
    std::vector<Matrix> acts = {x};
    for (int l = 0; l < static_cast<int>(cfg.n_enc_layers); ++l) {
        auto W = [&](AttnScope s, ParamKind k) -> const Matrix& {
            return weight(ParamAddress::layered(Component::Encoder, l, s, k));
        };
        Matrix xn = layer_norm_rows(x, W(AttnScope::Self, ParamKind::LnGain),
                                    W(AttnScope::Self, ParamKind::LnBias), cfg.ln_eps);
        AttnWeights aw{&W(AttnScope::Self, ParamKind::K), &W(AttnScope::Self, ParamKind::Q),
                       &W(AttnScope::Self, ParamKind::V), &W(AttnScope::Self, ParamKind::O)};
        x = add(x, multi_head_attention(xn, xn, aw, cfg.n_heads, false));
        Matrix mn = layer_norm_rows(x, W(AttnScope::None, ParamKind::LnGain),
                                    W(AttnScope::None, ParamKind::LnBias), cfg.ln_eps);
        Matrix h = matmul_nt(mn, W(AttnScope::None, ParamKind::W1));
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = gelu(h[i]);
        x = add(x, matmul_nt(h, W(AttnScope::None, ParamKind::W2)));
        acts.push_back(x);
    }
    return acts;
}

Matrix InferModel::decode_teacher_forced(const Matrix& enc_final,
                                         const std::vector<std::uint32_t>& tokens_in) const {
    const ModelConfig& cfg = params_.config();
    if (tokens_in.empty() || tokens_in.front() != BOS_TOKEN)
        throw std::invalid_argument("decode_teacher_forced: targets must begin with BOS");
    if (tokens_in.size() > cfg.max_decode_len)
        throw std::invalid_argument("decode_teacher_forced: length exceeds max_decode_len");
    for (std::uint32_t t : tokens_in)
        if (t >= cfg.vocab_size)
            throw std::invalid_argument("decode_teacher_forced: token id " + std::to_string(t) +
                                        " outside vocabulary of " + std::to_string(cfg.vocab_size));
    const Matrix& tok = weight(ParamAddress::global(Component::Decoder, ParamKind::TokEmbed));
    const Matrix& pos = weight(ParamAddress::global(Component::Decoder, ParamKind::PosEmbed));
    Matrix x(tokens_in.size(), cfg.d_model);
    for (std::size_t i = 0; i < tokens_in.size(); ++i)
        for (std::size_t j = 0; j < cfg.d_model; ++j)
            x.at(i, j) = tok.at(tokens_in[i], j) + pos.at(i, j);
    for (int l = 0; l < static_cast<int>(cfg.n_dec_layers); ++l) {
        auto W = [&](AttnScope s, ParamKind k) -> const Matrix& {
            return weight(ParamAddress::layered(Component::Decoder, l, s, k));
        };
        Matrix xn = layer_norm_rows(x, W(AttnScope::Self, ParamKind::LnGain),
                                    W(AttnScope::Self, ParamKind::LnBias), cfg.ln_eps);
        AttnWeights self_w{&W(AttnScope::Self, ParamKind::K), &W(AttnScope::Self, ParamKind::Q),
                           &W(AttnScope::Self, ParamKind::V), &W(AttnScope::Self, ParamKind::O)};
        x = add(x, multi_head_attention(xn, xn, self_w, cfg.n_heads, true));
        Matrix cn = layer_norm_rows(x, W(AttnScope::Cross, ParamKind::LnGain),
                                    W(AttnScope::Cross, ParamKind::LnBias), cfg.ln_eps);
        AttnWeights cross_w{&W(AttnScope::Cross, ParamKind::K), &W(AttnScope::Cross, ParamKind::Q),
                            &W(AttnScope::Cross, ParamKind::V), &W(AttnScope::Cross, ParamKind::O)};
        x = add(x, multi_head_attention(cn, enc_final, cross_w, cfg.n_heads, false));
        Matrix mn = layer_norm_rows(x, W(AttnScope::None, ParamKind::LnGain),
                                    W(AttnScope::None, ParamKind::LnBias), cfg.ln_eps);
        Matrix h = matmul_nt(mn, W(AttnScope::None, ParamKind::W1));
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = gelu(h[i]);
        x = add(x, matmul_nt(h, W(AttnScope::None, ParamKind::W2)));
    }
    return matmul_nt(x, weight(ParamAddress::global(Component::Decoder, ParamKind::Head)));
}

std::vector<std::uint32_t> InferModel::greedy_decode(const Matrix& enc_final) const {
    const ModelConfig& cfg = params_.config();
    const std::size_t d = cfg.d_model;
    const std::size_t dh = d / cfg.n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t n_layers = cfg.n_dec_layers;

    // per-layer KV caches; cross K/V depend only on the encoder output
    std::vector<Matrix> self_k(n_layers), self_v(n_layers), cross_k(n_layers), cross_v(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        self_k[l] = Matrix(cfg.max_decode_len, d);
        self_v[l] = Matrix(cfg.max_decode_len, d);
        cross_k[l] = matmul_nt(enc_final, weight(ParamAddress::layered(
                                              Component::Decoder, static_cast<int>(l),
                                              AttnScope::Cross, ParamKind::K)));
        cross_v[l] = matmul_nt(enc_final, weight(ParamAddress::layered(
                                              Component::Decoder, static_cast<int>(l),
                                              AttnScope::Cross, ParamKind::V)));
    }
    const Matrix& tok = weight(ParamAddress::global(Component::Decoder, ParamKind::TokEmbed));
    const Matrix& pos = weight(ParamAddress::global(Component::Decoder, ParamKind::PosEmbed));
    const Matrix& head = weight(ParamAddress::global(Component::Decoder, ParamKind::Head));

    auto attend_row = [&](const Matrix& q, const Matrix& k, const Matrix& v, std::size_t n_keys,
                          Matrix& ctx) {
        // one query row over the first n_keys cached rows, per head
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t off = h * dh;
            std::vector<double> s(n_keys);
            double mx = -1e300;
            for (std::size_t j = 0; j < n_keys; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dot += q[off + c] * k.at(j, off + c);
                s[j] = dot * inv_sqrt;
                mx = std::max(mx, s[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < n_keys; ++j) {
                s[j] = std::exp(s[j] - mx);
                sum += s[j];
            }
            for (std::size_t j = 0; j < n_keys; ++j) {
                const double a = s[j] / sum;
                for (std::size_t c = 0; c < dh; ++c) ctx[off + c] += a * v.at(j, off + c);
            }
        }
    };

    std::vector<std::uint32_t> out;
    std::uint32_t cur = BOS_TOKEN;
    for (std::size_t t = 0; t < cfg.max_decode_len; ++t) {
        Matrix x(1, d);
        for (std::size_t j = 0; j < d; ++j) x[j] = tok.at(cur, j) + pos.at(t, j);
        for (int l = 0; l < static_cast<int>(n_layers); ++l) {
            auto W = [&](AttnScope s, ParamKind k) -> const Matrix& {
                return weight(ParamAddress::layered(Component::Decoder, l, s, k));
            };
            Matrix xn = layer_norm_rows(x, W(AttnScope::Self, ParamKind::LnGain),
                                        W(AttnScope::Self, ParamKind::LnBias), cfg.ln_eps);
            Matrix q = matmul_nt(xn, W(AttnScope::Self, ParamKind::Q));
            Matrix k = matmul_nt(xn, W(AttnScope::Self, ParamKind::K));
            Matrix v = matmul_nt(xn, W(AttnScope::Self, ParamKind::V));
            for (std::size_t j = 0; j < d; ++j) {
                self_k[l].at(t, j) = k[j];
                self_v[l].at(t, j) = v[j];
            }
            Matrix ctx(1, d);
            attend_row(q, self_k[l], self_v[l], t + 1, ctx);
            x = add(x, matmul_nt(ctx, W(AttnScope::Self, ParamKind::O)));

            Matrix cn = layer_norm_rows(x, W(AttnScope::Cross, ParamKind::LnGain),
                                        W(AttnScope::Cross, ParamKind::LnBias), cfg.ln_eps);
            Matrix qc = matmul_nt(cn, W(AttnScope::Cross, ParamKind::Q));
            Matrix ctxc(1, d);
            attend_row(qc, cross_k[l], cross_v[l], cross_k[l].rows(), ctxc);
            x = add(x, matmul_nt(ctxc, W(AttnScope::Cross, ParamKind::O)));

            Matrix mn = layer_norm_rows(x, W(AttnScope::None, ParamKind::LnGain),
                                        W(AttnScope::None, ParamKind::LnBias), cfg.ln_eps);
            Matrix h = matmul_nt(mn, W(AttnScope::None, ParamKind::W1));
            for (std::size_t i = 0; i < h.size(); ++i) h[i] = gelu(h[i]);
            x = add(x, matmul_nt(h, W(AttnScope::None, ParamKind::W2)));
        }
        Matrix logits = matmul_nt(x, head);
        std::uint32_t best = 0;
        double best_v = logits[0];
        for (std::size_t j = 1; j < logits.size(); ++j)
            if (logits[j] > best_v) {
                best_v = logits[j];
                best = static_cast<std::uint32_t>(j);
            }
        if (best == EOS_TOKEN) break;
        out.push_back(best);
        cur = best;
        if (t + 1 >= cfg.max_decode_len) break;
    }
    // reserved ids never appear in a transcript
    std::erase_if(out, [](std::uint32_t t) { return t == PAD_TOKEN || t == BOS_TOKEN; });
    return out;
}

std::vector<std::uint32_t> InferModel::transcribe(const Matrix& features) const {
    return greedy_decode(encode(features).back());
}

double cross_entropy_loss(const Matrix& logits, const std::vector<std::uint32_t>& labels) {
    if (labels.size() != logits.rows())
        throw std::invalid_argument("cross_entropy_loss: labels length must equal logit rows");
    std::size_t live = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == PAD_TOKEN) continue;
        if (labels[i] >= logits.cols())
            throw std::invalid_argument("cross_entropy_loss: label outside vocabulary");
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits.at(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) lse += std::exp(logits.at(i, j) - mx);
        loss -= logits.at(i, labels[i]) - mx - std::log(lse);
        ++live;
    }
    if (live == 0) throw std::invalid_argument("cross_entropy_loss: all positions masked");
    return loss / static_cast<double>(live);
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> teacher_forcing_pair(
    const std::vector<std::uint32_t>& tokens) {
    std::vector<std::uint32_t> in = {BOS_TOKEN};
    in.insert(in.end(), tokens.begin(), tokens.end());
    std::vector<std::uint32_t> labels = tokens;
    labels.push_back(EOS_TOKEN);
    return {std::move(in), std::move(labels)};
}

void save_model(const std::string& path, const ModelParams& params) {
    std::vector<NamedTensor> tensors;
    for (const auto& [a, w] : params.weights()) tensors.push_back({a.str(), w});
    save_tensors(path, tensors);
}

ModelParams load_model(const std::string& path, const ModelConfig& cfg) {
    cfg.validate();
    std::map<ParamAddress, Matrix> found;
    for (NamedTensor& t : load_tensors(path))
        found.emplace(ParamAddress::parse(t.name), std::move(t.value));
    Rng scratch(0);  // every weight is overwritten below
    ModelParams params = ModelParams::init(cfg, scratch);
    for (const ParamAddress& a : ModelParams::address_list(cfg)) {
        const auto it = found.find(a);
        if (it == found.end())
            throw std::runtime_error("checkpoint " + path + " missing tensor " + a.str());
        const auto [r, c] = ModelParams::shape_of(cfg, a);
        if (it->second.rows() != r || it->second.cols() != c)
            throw std::runtime_error("checkpoint " + path + " shape mismatch at " + a.str() +
                                     ": " + it->second.shape_str());
        params.at_mut(a) = std::move(it->second);
        found.erase(it);
    }
    if (!found.empty())
        throw std::runtime_error("checkpoint " + path + " carries unknown tensor " +
                                 found.begin()->first.str());
    return params;
}

}  // namespace hlab
