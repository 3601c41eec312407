// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/hypernet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hlab/analysis.hpp"
#include "hlab/checkpoint.hpp"

namespace hlab {

HypernetForm hypernet_form_from_string(const std::string& s) {
    if (s == "linear") return HypernetForm::Linear;
    if (s == "mlp") return HypernetForm::Mlp;
    throw std::invalid_argument("unknown hypernetwork form '" + s + "'");
}

SpeakerSource speaker_source_from_string(const std::string& s) {
    if (s == "asr_encoder") return SpeakerSource::AsrEncoder;
    if (s == "sv_encoder") return SpeakerSource::SvEncoder;
    throw std::invalid_argument("unknown speaker source '" + s + "'");
}

const char* to_string(HypernetForm f) {
    return f == HypernetForm::Linear ? "linear" : "mlp";
}

const char* to_string(SpeakerSource s) {
    return s == SpeakerSource::AsrEncoder ? "asr_encoder" : "sv_encoder";
}

std::vector<Matrix*> Hypernetwork::trainable_leaves() {
    std::vector<Matrix*> out = {&loc_embed, &trunk_w1, &trunk_b1};
    if (cfg.form == HypernetForm::Mlp) {
        out.push_back(&trunk_w2);
        out.push_back(&trunk_b2);
    }
    out.push_back(&head_a_w);
    out.push_back(&head_a_b);
    out.push_back(&head_b_w);
    out.push_back(&head_b_b);
    return out;
}

std::vector<const Matrix*> Hypernetwork::trainable_leaves() const {
    auto mut = const_cast<Hypernetwork*>(this)->trainable_leaves();
    return {mut.begin(), mut.end()};
}

std::size_t Hypernetwork::trainable_entries() const {
    std::size_t n = 0;
    for (const Matrix* m : trainable_leaves()) n += m->size();
    return n;
}

Hypernetwork init_hypernetwork(const ModelConfig& model_cfg, const HypernetConfig& cfg, Rng& rng) {
    if (cfg.targets.empty())
        throw std::invalid_argument("init_hypernetwork: no target locations");
    if (cfg.rank == 0) throw std::invalid_argument("init_hypernetwork: rank must be >= 1");
    if (cfg.d_s == 0 || cfg.d_c == 0 || cfg.hidden == 0)
        throw std::invalid_argument("init_hypernetwork: zero width");

    Hypernetwork h;
    h.cfg = cfg;
    auto [m0, n0] = ModelParams::shape_of(model_cfg, cfg.targets.front());
    for (const ParamAddress& a : cfg.targets) {
        auto [m, n] = ModelParams::shape_of(model_cfg, a);
        if (m != m0 || n != n0)
            throw std::invalid_argument(
                "init_hypernetwork: targets must share one host shape; " + a.str() +
                " differs from " + cfg.targets.front().str());
    }
    if (cfg.rank > std::min(m0, n0))
        throw std::invalid_argument("init_hypernetwork: rank exceeds min host dimension");
    h.host_rows = m0;
    h.host_cols = n0;

    const std::size_t d_in = cfg.d_s + cfg.d_c;
    h.loc_embed = rng.gaussian_matrix(cfg.targets.size(), cfg.d_c, cfg.loc_embed_std);
    h.trunk_w1 = rng.gaussian_matrix(cfg.hidden, d_in, cfg.trunk_std);
    h.trunk_b1 = Matrix(1, cfg.hidden);
    if (cfg.form == HypernetForm::Mlp) {
        h.trunk_w2 = rng.gaussian_matrix(cfg.hidden, cfg.hidden, cfg.trunk_std);
        h.trunk_b2 = Matrix(1, cfg.hidden);
    }
    h.head_a_w = rng.gaussian_matrix(cfg.rank * n0, cfg.hidden, cfg.head_a_std);
    h.head_a_b = Matrix(1, cfg.rank * n0);
    // B head exactly zero: a fresh hypernetwork generates ΔW = 0 everywhere.
    h.head_b_w = Matrix(m0 * cfg.rank, cfg.hidden);
    h.head_b_b = Matrix(1, m0 * cfg.rank);
    return h;
}

Matrix speaker_vector_asr(const ModelParams& base, const Matrix& features, std::size_t layer) {
    if (layer > base.config().n_enc_layers)
        throw std::out_of_range("speaker_vector_asr: layer " + std::to_string(layer) +
                                " out of range [0, " +
                                std::to_string(base.config().n_enc_layers) + "]");
    InferModel infer(base);
    const std::vector<Matrix> acts = infer.encode(features);
    const Matrix& act = acts[layer];
    Matrix out(1, act.cols());
    for (std::size_t i = 0; i < act.rows(); ++i)
        for (std::size_t j = 0; j < act.cols(); ++j) out.at(0, j) += act.at(i, j);
    const double inv = 1.0 / static_cast<double>(act.rows());
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(0, j) *= inv;
    return out;
}

namespace {

Matrix mean_pool(const Matrix& x) {
    Matrix out(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(0, j) += x.at(i, j);
    for (std::size_t j = 0; j < out.cols(); ++j)
        out.at(0, j) /= static_cast<double>(x.rows());
    return out;
}

Matrix affine_row(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = matmul_nt(x, w);
    for (std::size_t j = 0; j < y.cols(); ++j) y.at(0, j) += b.at(0, j);
    return y;
}

}  // namespace

Matrix SvEncoder::embed(const Matrix& features) const {
    Matrix h = affine_row(mean_pool(features), w1, b1);
    for (std::size_t j = 0; j < h.cols(); ++j) h.at(0, j) = std::max(0.0, h.at(0, j));
    return h;
}

std::size_t SvEncoder::classify(const Matrix& features) const {
    const Matrix logits = affine_row(embed(features), w2, b2);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits.at(0, j) > logits.at(0, best)) best = j;
    return best;
}

SvTrainResult train_sv_encoder(const Corpus& corpus, std::size_t hidden, std::size_t steps,
                               std::uint64_t seed) {
    if (corpus.speakers.size() < 2)
        throw std::invalid_argument("train_sv_encoder: need at least 2 speakers");
    SvTrainResult result;
    SvEncoder& enc = result.encoder;
    for (const SpeakerProfile& sp : corpus.speakers) enc.speaker_ids.push_back(sp.id);

    const std::size_t feat_dim = corpus.config.feature_dim;
    Rng init_rng = Rng::stream(seed, "sv_init");
    enc.w1 = init_rng.gaussian_matrix(hidden, feat_dim, 0.2);
    enc.b1 = Matrix(1, hidden);
    enc.w2 = init_rng.gaussian_matrix(enc.speaker_ids.size(), hidden, 0.2);
    enc.b2 = Matrix(1, enc.speaker_ids.size());

    std::vector<const Utterance*> train = corpus.slice(Split::Train);
    if (train.empty()) throw std::invalid_argument("train_sv_encoder: empty training split");
    std::vector<std::uint32_t> labels;
    labels.reserve(train.size());
    for (const Utterance* u : train) {
        const auto it = std::find(enc.speaker_ids.begin(), enc.speaker_ids.end(), u->speaker);
        labels.push_back(static_cast<std::uint32_t>(it - enc.speaker_ids.begin()));
    }

    Adam opt;
    opt.add_param(&enc.w1);
    opt.add_param(&enc.b1);
    opt.add_param(&enc.w2);
    opt.add_param(&enc.b2);

    Rng order_rng = Rng::stream(seed, "sv_order");
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    for (std::size_t step = 0; step < steps; ++step) {
        if (cursor >= order.size()) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[order_rng.below(i)]);
            cursor = 0;
        }
        const std::size_t idx = order[cursor++];
        Tape tape;
        NodeId x = tape.constant(mean_pool(train[idx]->features));
        NodeId h = tape.relu(tape.add(tape.matmul_nt(x, tape.leaf(&enc.w1, true)),
                                      tape.leaf(&enc.b1, true)));
        NodeId logits =
            tape.add(tape.matmul_nt(h, tape.leaf(&enc.w2, true)), tape.leaf(&enc.b2, true));
        NodeId loss = tape.cross_entropy(logits, {labels[idx]}, {true});
        tape.backward(loss);
        opt.step(tape.grads());
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (enc.classify(train[i]->features) == labels[i]) ++correct;
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    return result;
}

namespace {

Matrix reshape_row_major(const Matrix& flat, std::size_t rows, std::size_t cols) {
    if (flat.size() != rows * cols)
        throw std::invalid_argument("hypernet reshape: size mismatch");
    Matrix out(rows, cols);
    for (std::size_t k = 0; k < rows * cols; ++k)
        out.at(k / cols, k % cols) = flat.at(k / flat.cols(), k % flat.cols());
    return out;
}

}  // namespace

std::vector<LoraDelta> generate_deltas(const Hypernetwork& h, const Matrix& speaker_vec) {
    if (speaker_vec.rows() != 1 || speaker_vec.cols() != h.cfg.d_s)
        throw std::invalid_argument("generate_deltas: speaker vector must be 1 x d_s");
    std::vector<LoraDelta> deltas;
    deltas.reserve(h.cfg.targets.size());
    for (std::size_t c = 0; c < h.cfg.targets.size(); ++c) {
        Matrix x(1, h.cfg.d_s + h.cfg.d_c);
        for (std::size_t j = 0; j < h.cfg.d_s; ++j) x.at(0, j) = speaker_vec.at(0, j);
        for (std::size_t j = 0; j < h.cfg.d_c; ++j)
            x.at(0, h.cfg.d_s + j) = h.loc_embed.at(c, j);
        Matrix t = affine_row(x, h.trunk_w1, h.trunk_b1);
        if (h.cfg.form == HypernetForm::Mlp) {
            for (std::size_t j = 0; j < t.cols(); ++j) t.at(0, j) = std::max(0.0, t.at(0, j));
            t = affine_row(t, h.trunk_w2, h.trunk_b2);
        }
        LoraDelta d;
        d.address = h.cfg.targets[c];
        d.rank = h.cfg.rank;
        d.A = reshape_row_major(affine_row(t, h.head_a_w, h.head_a_b), h.cfg.rank, h.host_cols);
        d.B = reshape_row_major(affine_row(t, h.head_b_w, h.head_b_b), h.host_rows, h.cfg.rank);
        deltas.push_back(std::move(d));
    }
    return deltas;
}

LoraNodeMap generate_deltas_tape(const Hypernetwork& h, Tape& tape, const Matrix& speaker_vec) {
    if (speaker_vec.rows() != 1 || speaker_vec.cols() != h.cfg.d_s)
        throw std::invalid_argument("generate_deltas_tape: speaker vector must be 1 x d_s");
    Hypernetwork& hm = const_cast<Hypernetwork&>(h);  // leaves need mutable backing
    NodeId s = tape.constant(speaker_vec);
    NodeId loc = tape.leaf(&hm.loc_embed, true);
    NodeId tw1 = tape.leaf(&hm.trunk_w1, true);
    NodeId tb1 = tape.leaf(&hm.trunk_b1, true);
    NodeId tw2 = -1, tb2 = -1;
    if (h.cfg.form == HypernetForm::Mlp) {
        tw2 = tape.leaf(&hm.trunk_w2, true);
        tb2 = tape.leaf(&hm.trunk_b2, true);
    }
    NodeId haw = tape.leaf(&hm.head_a_w, true);
    NodeId hab = tape.leaf(&hm.head_a_b, true);
    NodeId hbw = tape.leaf(&hm.head_b_w, true);
    NodeId hbb = tape.leaf(&hm.head_b_b, true);

    LoraNodeMap out;
    for (std::size_t c = 0; c < h.cfg.targets.size(); ++c) {
        NodeId e = tape.embedding_lookup(loc, {static_cast<std::uint32_t>(c)});
        NodeId x = tape.concat_cols({s, e});
        NodeId t = tape.add(tape.matmul_nt(x, tw1), tb1);
        if (h.cfg.form == HypernetForm::Mlp)
            t = tape.add(tape.matmul_nt(tape.relu(t), tw2), tb2);
        NodeId a = tape.reshape(tape.add(tape.matmul_nt(t, haw), hab), h.cfg.rank, h.host_cols);
        NodeId b = tape.reshape(tape.add(tape.matmul_nt(t, hbw), hbb), h.host_rows, h.cfg.rank);
        out.emplace(h.cfg.targets[c], LoraNodes{a, b});
    }
    return out;
}

Matrix compute_speaker_vector(const Hypernetwork& h, const ModelParams& base,
                              const SvEncoder* sv, const Matrix& features) {
    Matrix s;
    if (h.cfg.speaker_source == SpeakerSource::AsrEncoder) {
        const std::size_t layer = h.cfg.asr_layer == SIZE_MAX
                                      ? base.config().n_enc_layers
                                      : h.cfg.asr_layer;
        s = speaker_vector_asr(base, features, layer);
    } else {
        if (sv == nullptr)
            throw std::invalid_argument("compute_speaker_vector: sv source without an encoder");
        s = sv->embed(features);
    }
    if (s.cols() != h.cfg.d_s)
        throw std::invalid_argument("compute_speaker_vector: source width " +
                                    std::to_string(s.cols()) + " != configured d_s " +
                                    std::to_string(h.cfg.d_s));
    return s;
}

Matrix mean_speaker_vector(const Hypernetwork& h, const ModelParams& base, const SvEncoder* sv,
                           const std::vector<const Matrix*>& feature_sets) {
    if (feature_sets.empty())
        throw std::invalid_argument("mean_speaker_vector: empty feature list");
    Matrix acc(1, h.cfg.d_s);
    for (const Matrix* f : feature_sets) {
        const Matrix s = compute_speaker_vector(h, base, sv, *f);
        for (std::size_t j = 0; j < acc.cols(); ++j) acc.at(0, j) += s.at(0, j);
    }
    for (std::size_t j = 0; j < acc.cols(); ++j)
        acc.at(0, j) /= static_cast<double>(feature_sets.size());
    return acc;
}

std::vector<std::uint32_t> hyper_transcribe(const ModelParams& base, const Hypernetwork& h,
                                            const SvEncoder* sv, const Matrix& features) {
    const Matrix s = compute_speaker_vector(h, base, sv, features);
    InferModel infer(base, materialize_deltas(generate_deltas(h, s)));
    return infer.transcribe(features);
}

HyperTrainResult train_hypernetwork(const ModelParams& base, const Hypernetwork& init,
                                    const SvEncoder* sv, const Corpus& corpus,
                                    const std::vector<const Utterance*>& train_slice,
                                    const std::vector<const Utterance*>& val_slice,
                                    const TrainHyper& hyper) {
    if (train_slice.empty())
        throw std::invalid_argument("train_hypernetwork: empty training slice");
    HyperTrainResult result;
    result.hypernet = init;
    Hypernetwork& h = result.hypernet;
    TrainHistory& history = result.history;

    {
        std::set<std::string> spk;
        for (const Utterance* u : train_slice) spk.insert(u->speaker);
        result.training_speakers.assign(spk.begin(), spk.end());
    }

    Adam opt(hyper.adam);
    for (Matrix* p : h.trainable_leaves()) opt.add_param(p);
    history.trainable_entries = h.trainable_entries();
    history.trainable_pct = 100.0 * static_cast<double>(history.trainable_entries) /
                            static_cast<double>(base.total_entries());

    std::vector<Matrix> best_snapshot;
    double best_wer = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    std::size_t evals_since_best = 0;
    const bool early_stop = hyper.eval_every > 0 && !val_slice.empty();

    auto eval_val = [&]() {
        auto scores = score_slice(
            corpus, val_slice,
            [&](const Utterance& u) { return hyper_transcribe(base, h, sv, u.features); },
            hyper.eval_utts_per_speaker);
        return median_speaker_wer(scores);
    };

    Rng order_rng = Rng::stream(hyper.seed, "train_order");
    std::vector<std::size_t> order(train_slice.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    for (std::size_t step = 0; step < hyper.max_steps; ++step) {
        if (cursor >= order.size()) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[order_rng.below(i)]);
            cursor = 0;
        }
        const Utterance& utt = *train_slice[order[cursor++]];

        // s comes from the frozen base; no gradient flows into the encoder.
        const Matrix s = compute_speaker_vector(h, base, sv, utt.features);
        Tape tape;
        LoraNodeMap lora_nodes = generate_deltas_tape(h, tape, s);
        ModelForward fwd(tape, base, nullptr, &lora_nodes);
        std::vector<NodeId> acts = fwd.encode(utt.features);
        auto [input, labels] = teacher_forcing_pair(corpus.reference(utt));
        NodeId logits = fwd.decode_teacher_forced(acts.back(), input);
        NodeId loss = tape.cross_entropy(logits, labels, std::vector<bool>(labels.size(), true));
        tape.backward(loss);
        history.losses.push_back(tape.value(loss)[0]);
        opt.step(tape.grads());
        history.steps_run = step + 1;

        if (early_stop && (step + 1) % hyper.eval_every == 0) {
            const double val_wer = eval_val();
            history.val_wers.emplace_back(step + 1, val_wer);
            if (val_wer < best_wer) {
                best_wer = val_wer;
                best_step = step + 1;
                evals_since_best = 0;
                best_snapshot.clear();
                for (Matrix* p : h.trainable_leaves()) best_snapshot.push_back(*p);
            } else if (++evals_since_best >= hyper.patience) {
                break;
            }
        }
    }

    if (early_stop && best_step > 0) {
        auto leaves = h.trainable_leaves();
        for (std::size_t i = 0; i < leaves.size(); ++i) *leaves[i] = best_snapshot[i];
        history.best_step = best_step;
    } else {
        history.best_step = history.steps_run;
    }
    return result;
}

void export_param_manifold(const ModelParams& base, const Hypernetwork& h, const SvEncoder* sv,
                           const std::vector<const Utterance*>& sample,
                           const std::string& out_path) {
    if (sample.size() < 3)
        throw std::invalid_argument("export_param_manifold: need at least 3 utterances");
    std::vector<std::vector<double>> flat;
    flat.reserve(sample.size());
    for (const Utterance* u : sample) {
        const Matrix s = compute_speaker_vector(h, base, sv, u->features);
        std::vector<double> row;
        for (const LoraDelta& d : generate_deltas(h, s)) {
            const Matrix dw = d.delta();
            row.insert(row.end(), dw.data().begin(), dw.data().end());
        }
        flat.push_back(std::move(row));
    }
    Matrix points(flat.size(), flat.front().size());
    for (std::size_t i = 0; i < flat.size(); ++i)
        for (std::size_t j = 0; j < flat[i].size(); ++j) points.at(i, j) = flat[i][j];
    const Matrix proj = pca_2d(points);

    std::ostringstream csv;
    csv << "utterance,speaker,cohort,severity,x,y\n";
    csv.precision(12);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const Utterance* u = sample[i];
        csv << u->id << ',' << u->speaker << ',' << to_string(u->cohort) << ','
            << to_string(u->severity) << ',' << proj.at(i, 0) << ',' << proj.at(i, 1) << '\n';
    }
    atomic_write_file(out_path, csv.str());
}

namespace {

NamedTensor nt(std::string name, const Matrix& m) { return NamedTensor{std::move(name), m}; }

}  // namespace

void save_hypernetwork(const std::string& path, const Hypernetwork& h) {
    std::vector<NamedTensor> tensors;
    tensors.push_back(nt("hyper.loc_embed", h.loc_embed));
    tensors.push_back(nt("hyper.trunk.w1", h.trunk_w1));
    tensors.push_back(nt("hyper.trunk.b1", h.trunk_b1));
    if (h.cfg.form == HypernetForm::Mlp) {
        tensors.push_back(nt("hyper.trunk.w2", h.trunk_w2));
        tensors.push_back(nt("hyper.trunk.b2", h.trunk_b2));
    }
    tensors.push_back(nt("hyper.headA.w", h.head_a_w));
    tensors.push_back(nt("hyper.headA.b", h.head_a_b));
    tensors.push_back(nt("hyper.headB.w", h.head_b_w));
    tensors.push_back(nt("hyper.headB.b", h.head_b_b));

    // config rides along as scalar rows so a load needs no side file
    Matrix meta(1, 6);
    meta.at(0, 0) = h.cfg.form == HypernetForm::Mlp ? 1.0 : 0.0;
    meta.at(0, 1) = static_cast<double>(h.cfg.d_s);
    meta.at(0, 2) = static_cast<double>(h.cfg.d_c);
    meta.at(0, 3) = static_cast<double>(h.cfg.rank);
    meta.at(0, 4) = h.cfg.speaker_source == SpeakerSource::SvEncoder ? 1.0 : 0.0;
    meta.at(0, 5) =
        h.cfg.asr_layer == SIZE_MAX ? -1.0 : static_cast<double>(h.cfg.asr_layer);
    tensors.push_back(nt("hyper.meta", meta));
    Matrix targets(h.cfg.targets.size(), 4);
    for (std::size_t i = 0; i < h.cfg.targets.size(); ++i) {
        const ParamAddress& a = h.cfg.targets[i];
        targets.at(i, 0) = a.component == Component::Encoder ? 0.0 : 1.0;
        targets.at(i, 1) = static_cast<double>(a.layer);
        targets.at(i, 2) = static_cast<double>(static_cast<int>(a.attn));
        targets.at(i, 3) = static_cast<double>(static_cast<int>(a.kind));
    }
    tensors.push_back(nt("hyper.targets", targets));
    save_tensors(path, tensors);
}

Hypernetwork load_hypernetwork(const std::string& path, const ModelConfig& model_cfg) {
    std::vector<NamedTensor> tensors = load_tensors(path);
    auto find = [&](const std::string& name) -> const Matrix* {
        for (const NamedTensor& t : tensors)
            if (t.name == name) return &t.value;
        return nullptr;
    };
    auto require = [&](const std::string& name) -> const Matrix& {
        const Matrix* m = find(name);
        if (!m) throw std::runtime_error("hypernetwork checkpoint missing tensor " + name);
        return *m;
    };

    const Matrix& meta = require("hyper.meta");
    const Matrix& targets = require("hyper.targets");
    Hypernetwork h;
    h.cfg.form = meta.at(0, 0) != 0.0 ? HypernetForm::Mlp : HypernetForm::Linear;
    h.cfg.d_s = static_cast<std::size_t>(meta.at(0, 1));
    h.cfg.d_c = static_cast<std::size_t>(meta.at(0, 2));
    h.cfg.rank = static_cast<std::size_t>(meta.at(0, 3));
    h.cfg.speaker_source =
        meta.at(0, 4) != 0.0 ? SpeakerSource::SvEncoder : SpeakerSource::AsrEncoder;
    h.cfg.asr_layer =
        meta.at(0, 5) < 0.0 ? SIZE_MAX : static_cast<std::size_t>(meta.at(0, 5));
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        ParamAddress a;
        a.component = targets.at(i, 0) == 0.0 ? Component::Encoder : Component::Decoder;
        a.layer = static_cast<int>(targets.at(i, 1));
        a.attn = static_cast<AttnScope>(static_cast<int>(targets.at(i, 2)));
        a.kind = static_cast<ParamKind>(static_cast<int>(targets.at(i, 3)));
        h.cfg.targets.push_back(a);
    }
    h.loc_embed = require("hyper.loc_embed");
    h.trunk_w1 = require("hyper.trunk.w1");
    h.trunk_b1 = require("hyper.trunk.b1");
    h.cfg.hidden = h.trunk_w1.rows();
    if (h.cfg.form == HypernetForm::Mlp) {
        h.trunk_w2 = require("hyper.trunk.w2");
        h.trunk_b2 = require("hyper.trunk.b2");
    }
    h.head_a_w = require("hyper.headA.w");
    h.head_a_b = require("hyper.headA.b");
    h.head_b_w = require("hyper.headB.w");
    h.head_b_b = require("hyper.headB.b");
    auto [m0, n0] = ModelParams::shape_of(model_cfg, h.cfg.targets.front());
    h.host_rows = m0;
    h.host_cols = n0;
    return h;
}

}  // namespace hlab
