// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/adapt.hpp"

#include "hlab/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hlab {

AdaptMethod adapt_method_from_string(const std::string& s) {
    if (s == "full") return AdaptMethod::Full;
    if (s == "partial") return AdaptMethod::Partial;
    if (s == "lora") return AdaptMethod::Lora;
    throw std::invalid_argument("unknown adaptation method '" + s + "'");
}

const char* to_string(AdaptMethod m) {
    switch (m) {
        case AdaptMethod::Full: return "full";
        case AdaptMethod::Partial: return "partial";
        case AdaptMethod::Lora: return "lora";
    }
    return "?";
}

void AdaptationSpec::validate() const {
    if (method == AdaptMethod::Full && selector != Selector::All)
        throw std::invalid_argument("AdaptationSpec: full method implies the All selector");
    if (method == AdaptMethod::Lora) {
        if (rank == 0) throw std::invalid_argument("AdaptationSpec: rank must be >= 1");
        for (ParamKind k : target_kinds)
            if (k != ParamKind::K && k != ParamKind::Q && k != ParamKind::V &&
                k != ParamKind::O && k != ParamKind::W1 && k != ParamKind::W2)
                throw std::invalid_argument(
                    std::string("AdaptationSpec: LoRA cannot target kind ") + to_string(k));
    }
}

std::vector<ParamAddress> lora_target_addresses(const ModelConfig& cfg,
                                                const AdaptationSpec& spec) {
    std::vector<ParamAddress> out;
    for (const ParamAddress& a : ModelParams::address_list(cfg)) {
        if (a.component != spec.target_component) continue;
        for (ParamKind k : spec.target_kinds)
            if (a.kind == k) out.push_back(a);
    }
    if (out.empty())
        throw std::invalid_argument("lora_target_addresses: no matching parameters in " +
                                    std::string(to_string(spec.target_component)));
    return out;
}

std::vector<LoraDelta> init_lora(const ModelParams& params, const AdaptationSpec& spec, Rng& rng) {
    spec.validate();
    if (spec.method != AdaptMethod::Lora)
        throw std::invalid_argument("init_lora: spec method is not lora");
    std::vector<LoraDelta> deltas;
    for (const ParamAddress& a : lora_target_addresses(params.config(), spec)) {
        const Matrix& host = params.at(a);
        const std::size_t m = host.rows(), n = host.cols();
        if (spec.rank > std::min(m, n))
            throw std::invalid_argument("init_lora: rank " + std::to_string(spec.rank) +
                                        " exceeds min dim of host " + a.str());
        LoraDelta d;
        d.address = a;
        d.rank = spec.rank;
        d.A = rng.gaussian_matrix(spec.rank, n, spec.sigma_a);
        d.B = Matrix(m, spec.rank);
        deltas.push_back(std::move(d));
    }
    return deltas;
}

DeltaMap materialize_deltas(const std::vector<LoraDelta>& deltas) {
    DeltaMap out;
    for (const LoraDelta& d : deltas) {
        if (out.count(d.address))
            throw std::invalid_argument("materialize_deltas: duplicate address " + d.address.str());
        out.emplace(d.address, d.delta());
    }
    return out;
}

DeltaMap AdaptResult::effective_deltas(const ModelParams& base) const {
    if (params.has_value()) {
        DeltaMap out;
        for (const auto& [a, w] : params->weights()) {
            const Matrix& bw = base.at(a);
            if (!w.bit_equal(bw)) out.emplace(a, sub(w, bw));
        }
        return out;
    }
    return materialize_deltas(deltas);
}

namespace {

double utterance_loss_and_grads(Tape& tape, const ModelParams& params,
                                const std::set<ParamAddress>* trainable,
                                const LoraNodeMap* lora, const Corpus& corpus,
                                const Utterance& utt, bool backward) {
    ModelForward fwd(tape, params, trainable, lora);
    std::vector<NodeId> acts = fwd.encode(utt.features);
    auto [input, labels] = teacher_forcing_pair(corpus.reference(utt));
    NodeId logits = fwd.decode_teacher_forced(acts.back(), input);
    std::vector<bool> mask(labels.size(), true);
    NodeId loss = tape.cross_entropy(logits, labels, mask);
    if (backward) tape.backward(loss);
    return tape.value(loss)[0];
}

}  // namespace

std::map<std::string, std::vector<EditCounts>> score_slice(
    const Corpus& corpus, const std::vector<const Utterance*>& slice,
    const Transcriber& transcribe, std::size_t max_utts_per_speaker) {
    std::map<std::string, std::vector<EditCounts>> by_speaker;
    for (const Utterance* u : slice) {
        auto& counts = by_speaker[u->speaker];
        if (counts.size() >= max_utts_per_speaker) continue;
        counts.push_back(edit_counts(corpus.reference(*u), transcribe(*u)));
    }
    return by_speaker;
}

double median_speaker_wer(const std::map<std::string, std::vector<EditCounts>>& by_speaker) {
    std::vector<double> wers;
    for (const auto& [spk, counts] : by_speaker) wers.push_back(speaker_wer(counts));
    if (wers.empty()) throw std::invalid_argument("median_speaker_wer: no speakers");
    return quantile(std::move(wers), 0.5);
}

namespace {

struct TrainState {
    ModelParams* params = nullptr;             // full / partial target
    std::vector<LoraDelta>* deltas = nullptr;  // lora target
};

// One generic loop drives pretraining and all adaptation baselines.
TrainHistory run_training(const ModelParams& base, TrainState state,
                          const std::set<ParamAddress>& trainable_addrs, const Corpus& corpus,
                          const std::vector<const Utterance*>& train_slice,
                          const std::vector<const Utterance*>& val_slice,
                          const TrainHyper& hyper) {
    if (train_slice.empty()) throw std::invalid_argument("train_adaptation: empty training slice");
    TrainHistory history;

    const ModelParams& fwd_params = state.params ? *state.params : base;
    Adam opt(hyper.adam);
    if (state.params)
        for (const ParamAddress& a : trainable_addrs)
            opt.add_param(&state.params->at_mut(a));
    if (state.deltas)
        for (LoraDelta& d : *state.deltas) {
            opt.add_param(&d.A);
            opt.add_param(&d.B);
        }
    history.trainable_entries = 0;
    for (Matrix* p : opt.params()) history.trainable_entries += p->size();
    history.trainable_pct =
        100.0 * static_cast<double>(history.trainable_entries) /
        static_cast<double>(base.total_entries());

    // best-so-far snapshots for early stopping
    std::optional<ModelParams> best_params;
    std::vector<LoraDelta> best_deltas;
    double best_wer = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    std::size_t evals_since_best = 0;
    const bool early_stop = hyper.eval_every > 0 && !val_slice.empty();

    auto eval_val = [&]() {
        DeltaMap dm;
        if (state.deltas) dm = materialize_deltas(*state.deltas);
        InferModel infer(fwd_params, std::move(dm));
        auto scores = score_slice(
            corpus, val_slice, [&](const Utterance& u) { return infer.transcribe(u.features); },
            hyper.eval_utts_per_speaker);
        return median_speaker_wer(scores);
    };

    Rng order_rng = Rng::stream(hyper.seed, "train_order");
    std::vector<std::size_t> order(train_slice.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // trigger shuffle on first step

    for (std::size_t step = 0; step < hyper.max_steps; ++step) {
        if (cursor >= order.size()) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[order_rng.below(i)]);
            cursor = 0;
        }
        const Utterance& utt = *train_slice[order[cursor++]];

        Tape tape;
        LoraNodeMap lora_nodes;
        if (state.deltas)
            for (LoraDelta& d : *state.deltas)
                lora_nodes.emplace(d.address,
                                   LoraNodes{tape.leaf(&d.A, true), tape.leaf(&d.B, true)});
        const double loss = utterance_loss_and_grads(
            tape, fwd_params, state.params ? &trainable_addrs : nullptr,
            state.deltas ? &lora_nodes : nullptr, corpus, utt, true);
        history.losses.push_back(loss);
        opt.step(tape.grads());
        history.steps_run = step + 1;

        if (early_stop && (step + 1) % hyper.eval_every == 0) {
            const double val_wer = eval_val();
            history.val_wers.emplace_back(step + 1, val_wer);
            if (val_wer < best_wer) {
                best_wer = val_wer;
                best_step = step + 1;
                evals_since_best = 0;
                if (state.params) best_params = *state.params;
                if (state.deltas) best_deltas = *state.deltas;
            } else if (++evals_since_best >= hyper.patience) {
                break;
            }
        }
    }

    if (early_stop && best_step > 0) {
        if (state.params && best_params) *state.params = std::move(*best_params);
        if (state.deltas && !best_deltas.empty()) *state.deltas = std::move(best_deltas);
        history.best_step = best_step;
    } else {
        history.best_step = history.steps_run;
    }
    return history;
}

}  // namespace

AdaptResult train_adaptation(const ModelParams& base, const AdaptationSpec& spec,
                             const Corpus& corpus, const std::vector<const Utterance*>& train_slice,
                             const std::vector<const Utterance*>& val_slice,
                             const TrainHyper& hyper) {
    spec.validate();
    AdaptResult result;
    if (spec.method == AdaptMethod::Lora) {
        Rng init_rng = Rng::stream(hyper.seed, "lora_init");
        result.deltas = init_lora(base, spec, init_rng);
        TrainState state;
        state.deltas = &result.deltas;
        result.history =
            run_training(base, state, {}, corpus, train_slice, val_slice, hyper);
    } else {
        result.params = base;
        const std::set<ParamAddress> trainable = select_params(base.config(), spec.selector);
        TrainState state;
        state.params = &*result.params;
        result.history =
            run_training(base, state, trainable, corpus, train_slice, val_slice, hyper);
        // everything outside the selector must come back bit-identical
        for (const auto& [a, w] : base.weights())
            if (!trainable.count(a) && !w.bit_equal(result.params->at(a)))
                throw std::logic_error("train_adaptation: frozen weight drifted at " + a.str());
    }
    return result;
}

std::pair<ModelParams, TrainHistory> pretrain(const ModelParams& init, const Corpus& corpus,
                                              const TrainHyper& hyper) {
    std::vector<const Utterance*> train_slice;
    for (const Utterance& u : corpus.utterances)
        if (u.split == Split::Train && u.cohort == Cohort::Typical) train_slice.push_back(&u);
    if (train_slice.empty())
        throw std::invalid_argument("pretrain: corpus has no typical training utterances");
    std::vector<const Utterance*> val_slice;
    for (const Utterance& u : corpus.utterances)
        if (u.split == Split::Val && u.cohort == Cohort::Typical) val_slice.push_back(&u);

    ModelParams trained = init;
    const std::set<ParamAddress> all = select_params(init.config(), Selector::All);
    TrainState state;
    state.params = &trained;
    TrainHistory history =
        run_training(init, state, all, corpus, train_slice, val_slice, hyper);
    return {std::move(trained), std::move(history)};
}

void save_lora(const std::string& path, const std::vector<LoraDelta>& deltas) {
    std::vector<NamedTensor> tensors;
    for (const LoraDelta& d : deltas) {
        tensors.push_back({"lora." + d.address.str() + ".A", d.A});
        tensors.push_back({"lora." + d.address.str() + ".B", d.B});
    }
    save_tensors(path, tensors);
}

std::vector<LoraDelta> load_lora(const std::string& path, const ModelParams& base) {
    std::map<std::string, Matrix> by_name;
    for (NamedTensor& t : load_tensors(path)) by_name.emplace(t.name, std::move(t.value));
    std::vector<LoraDelta> deltas;
    for (auto& [name, value] : by_name) {
        if (name.size() < 8 || name.compare(0, 5, "lora.") != 0)
            throw std::runtime_error("lora checkpoint " + path + ": unexpected tensor " + name);
        if (name.compare(name.size() - 2, 2, ".A") != 0) continue;
        const std::string addr_str = name.substr(5, name.size() - 7);
        LoraDelta d;
        d.address = ParamAddress::parse(addr_str);
        d.A = std::move(value);
        const auto b_it = by_name.find("lora." + addr_str + ".B");
        if (b_it == by_name.end())
            throw std::runtime_error("lora checkpoint " + path + ": missing B for " + addr_str);
        d.B = std::move(b_it->second);
        d.rank = d.A.rows();
        const Matrix& host = base.at(d.address);
        if (d.B.rows() != host.rows() || d.A.cols() != host.cols() || d.B.cols() != d.rank)
            throw std::runtime_error("lora checkpoint " + path + ": factor shapes at " +
                                     addr_str + " do not fit host " + host.shape_str());
        deltas.push_back(std::move(d));
    }
    if (deltas.empty())
        throw std::runtime_error("lora checkpoint " + path + ": no factors found");
    return deltas;
}

IndividualSplit individual_split(const Corpus& corpus, const std::string& speaker_id) {
    const SpeakerProfile& sp = corpus.speaker(speaker_id);
    if (sp.split != Split::Test)
        throw std::invalid_argument("individual_split: speaker '" + speaker_id +
                                    "' is not in the test split");
    auto utts = corpus.speaker_utterances(speaker_id);
    if (utts.size() < 10)
        throw std::invalid_argument("individual_split: speaker '" + speaker_id +
                                    "' has fewer than 10 utterances");
    std::sort(utts.begin(), utts.end(), [](const Utterance* a, const Utterance* b) {
        const auto ha = fnv1a(a->id), hb = fnv1a(b->id);
        return ha != hb ? ha < hb : a->id < b->id;
    });
    const auto n_train = static_cast<std::size_t>(
        std::lround(0.7 * static_cast<double>(utts.size())));
    IndividualSplit split;
    split.train.assign(utts.begin(), utts.begin() + n_train);
    split.eval.assign(utts.begin() + n_train, utts.end());
    return split;
}

}  // namespace hlab
