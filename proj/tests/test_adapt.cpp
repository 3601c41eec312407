// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "doctest.h"
#include "hlab/adapt.hpp"
#include "hlab/checkpoint.hpp"

using namespace hlab;

namespace {

ModelConfig model_config() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 2;
    cfg.d_ff = 32;
    cfg.vocab_size = 16;
    cfg.feature_dim = 6;
    cfg.max_decode_len = 16;
    cfg.max_frames = 128;
    return cfg;
}

GenConfig gen_config() {
    GenConfig cfg;
    cfg.feature_dim = 6;
    cfg.vocab_size = 16;
    cfg.phrase_count = 12;
    cfg.phrase_min_len = 3;
    cfg.phrase_max_len = 5;
    cfg.n_typical_speakers = 4;
    cfg.speakers_per_severity = 3;
    cfg.utts_per_speaker = 12;
    return cfg;
}

ModelParams base_model(std::uint64_t seed = 42) {
    Rng rng(seed);
    return ModelParams::init(model_config(), rng);
}

}  // namespace

TEST_CASE("spec validation") {
    AdaptationSpec spec;
    spec.method = AdaptMethod::Full;
    spec.selector = Selector::Dec;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = {};
    spec.method = AdaptMethod::Lora;
    spec.rank = 0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = {};
    spec.target_kinds = {ParamKind::LnGain};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("init_lora counting and zero B") {
    const ModelParams base = base_model();
    AdaptationSpec spec;  // decoder W1, rank 2 defaults
    Rng rng(1);
    const auto deltas = init_lora(base, spec, rng);
    REQUIRE(deltas.size() == model_config().n_dec_layers);
    for (const LoraDelta& d : deltas) {
        CHECK(d.address.kind == ParamKind::W1);
        CHECK(d.address.component == Component::Decoder);
        CHECK(d.A.rows() == 2);
        CHECK(d.A.cols() == model_config().d_model);
        CHECK(d.B.rows() == model_config().d_ff);
        CHECK(d.B.cols() == 2);
        for (std::size_t i = 0; i < d.B.size(); ++i) CHECK(d.B[i] == 0.0);
    }
}

TEST_CASE("init_lora A statistics match sigma_a") {
    // bundled-scale config so the sample comfortably exceeds 10^4 entries
    Rng init_rng(42);
    const ModelParams base = ModelParams::init(ModelConfig{}, init_rng);
    AdaptationSpec spec;
    spec.target_kinds = {ParamKind::K, ParamKind::Q, ParamKind::V,
                         ParamKind::O, ParamKind::W1, ParamKind::W2};
    spec.rank = 32;
    spec.sigma_a = 0.02;
    Rng rng(2);
    const auto deltas = init_lora(base, spec, rng);
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const LoraDelta& d : deltas)
        for (std::size_t i = 0; i < d.A.size(); ++i) {
            sum += d.A[i];
            sq += d.A[i] * d.A[i];
            ++n;
        }
    REQUIRE(n >= 10000);
    const double mean = sum / double(n);
    const double stddev = std::sqrt(sq / double(n) - mean * mean);
    CHECK(std::abs(stddev - 0.02) < 0.001);  // within 5%
}

TEST_CASE("rank above min host dimension is rejected") {
    const ModelParams base = base_model();
    AdaptationSpec spec;
    spec.rank = model_config().d_model + 1;
    Rng rng(3);
    CHECK_THROWS_AS(init_lora(base, spec, rng), std::invalid_argument);
}

TEST_CASE("null adaptation is bit-identical to the base") {
    const ModelParams base = base_model();
    AdaptationSpec spec;
    Rng rng(4);
    const auto deltas = init_lora(base, spec, rng);
    InferModel plain(base);
    InferModel adapted(base, materialize_deltas(deltas));
    Rng data(5);
    for (int i = 0; i < 5; ++i) {
        const Matrix features = data.gaussian_matrix(10, model_config().feature_dim, 1.0);
        const Matrix e0 = plain.encode(features).back();
        const Matrix e1 = adapted.encode(features).back();
        CHECK(e0.bit_equal(e1));
        const std::vector<std::uint32_t> toks = {BOS_TOKEN, 4, 7};
        CHECK(plain.decode_teacher_forced(e0, toks)
                  .bit_equal(adapted.decode_teacher_forced(e1, toks)));
        CHECK(plain.greedy_decode(e0) == adapted.greedy_decode(e1));
    }
}

TEST_CASE("full-rank factors reproduce an arbitrary weight replacement") {
    const ModelConfig cfg = model_config();
    const ModelParams base = base_model();
    const ParamAddress target =
        ParamAddress::layered(Component::Decoder, 0, AttnScope::None, ParamKind::W1);
    Rng rng(6);
    const Matrix w_target = rng.gaussian_matrix(cfg.d_ff, cfg.d_model, 0.1);

    // B*A = W_target - W with A = identity
    LoraDelta d;
    d.address = target;
    d.rank = cfg.d_model;
    d.A = Matrix(cfg.d_model, cfg.d_model);
    for (std::size_t i = 0; i < cfg.d_model; ++i) d.A.at(i, i) = 1.0;
    d.B = sub(w_target, base.at(target));

    ModelParams replaced = base;
    replaced.at_mut(target) = w_target;
    InferModel want(replaced);
    InferModel got(base, materialize_deltas({d}));
    Rng data(7);
    const Matrix features = data.gaussian_matrix(9, cfg.feature_dim, 1.0);
    const Matrix le = want.decode_teacher_forced(want.encode(features).back(), {BOS_TOKEN, 3, 4});
    const Matrix lg = got.decode_teacher_forced(got.encode(features).back(), {BOS_TOKEN, 3, 4});
    CHECK(max_abs_diff(le, lg) < 1e-10);
}

TEST_CASE("dense materialization oracle at 1e-12") {
    const ModelConfig cfg = model_config();
    const ModelParams base = base_model();
    AdaptationSpec spec;
    spec.sigma_a = 0.1;
    Rng rng(8);
    auto deltas = init_lora(base, spec, rng);
    for (LoraDelta& d : deltas) d.B = rng.gaussian_matrix(d.B.rows(), d.B.cols(), 0.1);

    // oracle: bake W + B*A into a copied parameter set
    ModelParams baked = base;
    for (const LoraDelta& d : deltas)
        baked.at_mut(d.address) = add(base.at(d.address), d.delta());

    InferModel via_deltas(base, materialize_deltas(deltas));
    InferModel via_baked(baked);
    Rng data(9);
    const Matrix features = data.gaussian_matrix(11, cfg.feature_dim, 1.0);
    const Matrix a =
        via_deltas.decode_teacher_forced(via_deltas.encode(features).back(), {BOS_TOKEN, 5, 6, 7});
    const Matrix b =
        via_baked.decode_teacher_forced(via_baked.encode(features).back(), {BOS_TOKEN, 5, 6, 7});
    CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("materialize_deltas rejects duplicate addresses") {
    LoraDelta d;
    d.address = ParamAddress::layered(Component::Decoder, 0, AttnScope::None, ParamKind::W1);
    d.rank = 1;
    d.A = Matrix(1, 4);
    d.B = Matrix(8, 1);
    CHECK_THROWS_AS(materialize_deltas({d, d}), std::invalid_argument);
}

TEST_CASE("zero training steps change nothing") {
    const ModelParams base = base_model();
    const Corpus corpus = gen_corpus(gen_config(), 100);
    const auto train_slice = corpus.slice(Split::Train, Cohort::Typical);
    TrainHyper hyper;
    hyper.max_steps = 0;
    hyper.eval_every = 0;

    AdaptationSpec full;
    full.method = AdaptMethod::Full;
    full.selector = Selector::All;
    const AdaptResult r = train_adaptation(base, full, corpus, train_slice, {}, hyper);
    REQUIRE(r.params.has_value());
    CHECK(r.params->bit_equal(base));
    CHECK(r.history.steps_run == 0);
    CHECK(r.effective_deltas(base).empty());
}

TEST_CASE("partial tuning leaves unselected weights bit-identical") {
    const ModelParams base = base_model();
    const Corpus corpus = gen_corpus(gen_config(), 101);
    const auto train_slice = corpus.slice(Split::Train, Cohort::Typical);
    TrainHyper hyper;
    hyper.max_steps = 5;
    hyper.eval_every = 0;

    AdaptationSpec spec;
    spec.method = AdaptMethod::Partial;
    spec.selector = Selector::Dec;
    const AdaptResult r = train_adaptation(base, spec, corpus, train_slice, {}, hyper);
    REQUIRE(r.params.has_value());
    const auto selected = select_params(base.config(), Selector::Dec);
    bool anything_moved = false;
    for (const auto& [a, w] : base.weights()) {
        if (selected.count(a)) {
            if (!w.bit_equal(r.params->at(a))) anything_moved = true;
        } else {
            CHECK(w.bit_equal(r.params->at(a)));
        }
    }
    CHECK(anything_moved);
}

TEST_CASE("lora training never mutates the base") {
    const ModelParams base = base_model();
    const ModelParams snapshot = base;
    const Corpus corpus = gen_corpus(gen_config(), 102);
    const auto train_slice = corpus.slice(Split::Train, Cohort::Stutter);
    TrainHyper hyper;
    hyper.max_steps = 8;
    hyper.eval_every = 0;
    AdaptationSpec spec;
    const AdaptResult r = train_adaptation(base, spec, corpus, train_slice, {}, hyper);
    CHECK(base.bit_equal(snapshot));
    CHECK(r.deltas.size() == base.config().n_dec_layers);
    // training moved B off zero
    double b_norm = 0.0;
    for (const LoraDelta& d : r.deltas)
        for (std::size_t i = 0; i < d.B.size(); ++i) b_norm += std::abs(d.B[i]);
    CHECK(b_norm > 0.0);
}

TEST_CASE("trainable accounting matches brute-force enumeration") {
    const ModelParams base = base_model();
    const Corpus corpus = gen_corpus(gen_config(), 103);
    const auto train_slice = corpus.slice(Split::Train, Cohort::Typical);
    TrainHyper hyper;
    hyper.max_steps = 1;
    hyper.eval_every = 0;

    for (Selector sel : {Selector::Dec, Selector::Head, Selector::EncLow}) {
        AdaptationSpec spec;
        spec.method = AdaptMethod::Partial;
        spec.selector = sel;
        const AdaptResult r = train_adaptation(base, spec, corpus, train_slice, {}, hyper);
        std::size_t expect = 0;
        for (const ParamAddress& a : select_params(base.config(), sel))
            expect += base.at(a).size();
        CHECK(r.history.trainable_entries == expect);
        CHECK(r.history.trainable_pct ==
              doctest::Approx(100.0 * double(expect) / double(base.total_entries())));
    }

    AdaptationSpec lora;
    const AdaptResult r = train_adaptation(base, lora, corpus, train_slice, {}, hyper);
    std::size_t expect = 0;
    for (const LoraDelta& d : r.deltas) expect += d.A.size() + d.B.size();
    CHECK(r.history.trainable_entries == expect);
}

TEST_CASE("training is deterministic given the seed") {
    const ModelParams base = base_model();
    const Corpus corpus = gen_corpus(gen_config(), 104);
    const auto train_slice = corpus.slice(Split::Train, Cohort::Parkinsons);
    TrainHyper hyper;
    hyper.max_steps = 6;
    hyper.eval_every = 0;
    AdaptationSpec spec;
    const AdaptResult r1 = train_adaptation(base, spec, corpus, train_slice, {}, hyper);
    const AdaptResult r2 = train_adaptation(base, spec, corpus, train_slice, {}, hyper);
    REQUIRE(r1.deltas.size() == r2.deltas.size());
    for (std::size_t i = 0; i < r1.deltas.size(); ++i) {
        CHECK(r1.deltas[i].A.bit_equal(r2.deltas[i].A));
        CHECK(r1.deltas[i].B.bit_equal(r2.deltas[i].B));
    }
    CHECK(r1.history.losses == r2.history.losses);
}

TEST_CASE("rank monotonic expressivity at tiny scale") {
    const ModelParams base = base_model();
    const Corpus corpus = gen_corpus(gen_config(), 105);
    // one speaker's utterances: a small set the factors can overfit
    const auto utts = corpus.speaker_utterances(corpus.speakers.front().id);
    std::vector<const Utterance*> slice(utts.begin(), utts.begin() + 4);
    TrainHyper hyper;
    hyper.max_steps = 120;
    hyper.eval_every = 0;

    auto best_loss = [&](std::size_t rank) {
        AdaptationSpec spec;
        spec.rank = rank;
        const AdaptResult r = train_adaptation(base, spec, corpus, slice, {}, hyper);
        return *std::min_element(r.history.losses.begin(), r.history.losses.end());
    };
    const double l1 = best_loss(1);
    const double l2 = best_loss(2);
    const double l4 = best_loss(4);
    CHECK(l2 <= l1 + 0.05);
    CHECK(l4 <= l2 + 0.05);
}

TEST_CASE("individual split determinism and hygiene") {
    const Corpus corpus = gen_corpus(gen_config(), 106);
    std::string test_speaker;
    for (const SpeakerProfile& sp : corpus.speakers)
        if (sp.split == Split::Test) {
            test_speaker = sp.id;
            break;
        }
    REQUIRE(!test_speaker.empty());

    const IndividualSplit s1 = individual_split(corpus, test_speaker);
    const IndividualSplit s2 = individual_split(corpus, test_speaker);
    REQUIRE(s1.train.size() == s2.train.size());
    for (std::size_t i = 0; i < s1.train.size(); ++i)
        CHECK(s1.train[i]->id == s2.train[i]->id);

    std::set<std::string> train_ids;
    for (const Utterance* u : s1.train) train_ids.insert(u->id);
    for (const Utterance* u : s1.eval) CHECK(train_ids.count(u->id) == 0);
    const auto total = s1.train.size() + s1.eval.size();
    CHECK(total == corpus.speaker_utterances(test_speaker).size());
    CHECK(std::abs(double(s1.train.size()) / double(total) - 0.7) < 0.1);

    std::string train_speaker;
    for (const SpeakerProfile& sp : corpus.speakers)
        if (sp.split == Split::Train) train_speaker = sp.id;
    CHECK_THROWS_AS(individual_split(corpus, train_speaker), std::invalid_argument);
}

TEST_CASE("lora checkpoint round trip") {
    const ModelParams base = base_model();
    AdaptationSpec spec;
    spec.sigma_a = 0.05;
    Rng rng(10);
    auto deltas = init_lora(base, spec, rng);
    for (LoraDelta& d : deltas) d.B = rng.gaussian_matrix(d.B.rows(), d.B.cols(), 0.3);

    const std::string path = "/tmp/hlab_lora_ckpt.bin";
    save_lora(path, deltas);
    const auto loaded = load_lora(path, base);
    REQUIRE(loaded.size() == deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        CHECK(loaded[i].address == deltas[i].address);
        CHECK(loaded[i].rank == deltas[i].rank);
        CHECK(loaded[i].A.bit_equal(deltas[i].A));
        CHECK(loaded[i].B.bit_equal(deltas[i].B));
    }
    std::remove(path.c_str());
}

TEST_CASE("empty training slice is rejected") {
    const ModelParams base = base_model();
    const Corpus corpus = gen_corpus(gen_config(), 107);
    AdaptationSpec spec;
    TrainHyper hyper;
    CHECK_THROWS_AS(train_adaptation(base, spec, corpus, {}, {}, hyper), std::invalid_argument);
}
