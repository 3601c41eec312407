// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hlab/checkpoint.hpp"
#include "hlab/hypernet.hpp"

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

HypernetConfig hyper_config() {
    HypernetConfig cfg;
    cfg.d_s = model_config().d_model;
    cfg.hidden = 24;
    cfg.rank = 2;
    for (std::size_t l = 0; l < model_config().n_dec_layers; ++l)
        cfg.targets.push_back(ParamAddress::layered(Component::Decoder, static_cast<int>(l),
                                                    AttnScope::None, ParamKind::W1));
    return cfg;
}

ModelParams base_model(std::uint64_t seed = 42) {
    Rng rng(seed);
    return ModelParams::init(model_config(), rng);
}

}  // namespace

TEST_CASE("init: B head exactly zero, deterministic, A head sized") {
    Rng r1(1), r2(1);
    const Hypernetwork h1 = init_hypernetwork(model_config(), hyper_config(), r1);
    const Hypernetwork h2 = init_hypernetwork(model_config(), hyper_config(), r2);
    for (std::size_t i = 0; i < h1.head_b_w.size(); ++i) CHECK(h1.head_b_w[i] == 0.0);
    for (std::size_t i = 0; i < h1.head_b_b.size(); ++i) CHECK(h1.head_b_b[i] == 0.0);
    CHECK(h1.head_a_w.bit_equal(h2.head_a_w));
    CHECK(h1.trunk_w1.bit_equal(h2.trunk_w1));
    CHECK(h1.loc_embed.bit_equal(h2.loc_embed));
    CHECK(h1.head_a_w.rows() == hyper_config().rank * model_config().d_model);
    CHECK(h1.head_b_w.rows() == model_config().d_ff * hyper_config().rank);
    CHECK(h1.host_rows == model_config().d_ff);
    CHECK(h1.host_cols == model_config().d_model);
}

TEST_CASE("init rejects mixed host shapes and zero rank") {
    HypernetConfig cfg = hyper_config();
    cfg.targets.push_back(
        ParamAddress::layered(Component::Decoder, 0, AttnScope::None, ParamKind::W2));
    Rng rng(2);
    CHECK_THROWS_AS(init_hypernetwork(model_config(), cfg, rng), std::invalid_argument);
    cfg = hyper_config();
    cfg.rank = 0;
    CHECK_THROWS_AS(init_hypernetwork(model_config(), cfg, rng), std::invalid_argument);
    cfg = hyper_config();
    cfg.targets.clear();
    CHECK_THROWS_AS(init_hypernetwork(model_config(), cfg, rng), std::invalid_argument);
}

TEST_CASE("A head init statistics near configured sigma") {
    HypernetConfig cfg = hyper_config();
    cfg.rank = 8;
    cfg.hidden = 64;
    Rng rng(3);
    const Hypernetwork h = init_hypernetwork(model_config(), cfg, rng);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < h.head_a_w.size(); ++i) {
        sum += h.head_a_w[i];
        sq += h.head_a_w[i] * h.head_a_w[i];
    }
    const double n = static_cast<double>(h.head_a_w.size());
    REQUIRE(n >= 8000);
    const double mean = sum / n;
    const double stddev = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(stddev - cfg.head_a_std) < 0.05 * cfg.head_a_std + 5e-4);
}

TEST_CASE("generated deltas: count, zero B, width precondition") {
    Rng rng(4);
    const Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    Rng data(5);
    const Matrix s = data.gaussian_matrix(1, h.cfg.d_s, 1.0);
    const auto deltas = generate_deltas(h, s);
    REQUIRE(deltas.size() == h.cfg.targets.size());
    for (const LoraDelta& d : deltas) {
        for (std::size_t i = 0; i < d.B.size(); ++i) CHECK(d.B[i] == 0.0);
        const Matrix dw = d.delta();
        for (std::size_t i = 0; i < dw.size(); ++i) CHECK(dw[i] == 0.0);
    }
    CHECK_THROWS_AS(generate_deltas(h, data.gaussian_matrix(1, h.cfg.d_s + 1, 1.0)),
                    std::invalid_argument);
}

TEST_CASE("reshape convention matches a row-major flat-index oracle") {
    Rng rng(6);
    Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    // randomize the B head so the oracle exercises both heads
    h.head_b_w = rng.gaussian_matrix(h.head_b_w.rows(), h.head_b_w.cols(), 0.1);
    h.head_b_b = rng.gaussian_matrix(1, h.head_b_b.cols(), 0.1);
    Rng data(7);
    const Matrix s = data.gaussian_matrix(1, h.cfg.d_s, 1.0);
    const auto deltas = generate_deltas(h, s);

    for (std::size_t c = 0; c < h.cfg.targets.size(); ++c) {
        // independent recomputation of the trunk and heads
        std::vector<double> x(h.cfg.d_s + h.cfg.d_c);
        for (std::size_t j = 0; j < h.cfg.d_s; ++j) x[j] = s.at(0, j);
        for (std::size_t j = 0; j < h.cfg.d_c; ++j) x[h.cfg.d_s + j] = h.loc_embed.at(c, j);
        std::vector<double> t(h.cfg.hidden);
        for (std::size_t i = 0; i < h.cfg.hidden; ++i) {
            double v = h.trunk_b1.at(0, i);
            for (std::size_t j = 0; j < x.size(); ++j) v += h.trunk_w1.at(i, j) * x[j];
            t[i] = v;
        }
        if (h.cfg.form == HypernetForm::Mlp) {
            std::vector<double> t2(h.cfg.hidden);
            for (std::size_t i = 0; i < h.cfg.hidden; ++i) {
                double v = h.trunk_b2.at(0, i);
                for (std::size_t j = 0; j < h.cfg.hidden; ++j)
                    v += h.trunk_w2.at(i, j) * std::max(0.0, t[j]);
                t2[i] = v;
            }
            t = std::move(t2);
        }
        auto head_flat = [&](const Matrix& w, const Matrix& b, std::size_t k) {
            double v = b.at(0, k);
            for (std::size_t j = 0; j < t.size(); ++j) v += w.at(k, j) * t[j];
            return v;
        };
        const LoraDelta& d = deltas[c];
        for (std::size_t i = 0; i < d.A.rows(); ++i)
            for (std::size_t j = 0; j < d.A.cols(); ++j)
                CHECK(d.A.at(i, j) ==
                      doctest::Approx(head_flat(h.head_a_w, h.head_a_b, i * d.A.cols() + j))
                          .epsilon(1e-12));
        for (std::size_t i = 0; i < d.B.rows(); ++i)
            for (std::size_t j = 0; j < d.B.cols(); ++j)
                CHECK(d.B.at(i, j) ==
                      doctest::Approx(head_flat(h.head_b_w, h.head_b_b, i * d.B.cols() + j))
                          .epsilon(1e-12));
    }
}

TEST_CASE("tape-route generation agrees with the plain route") {
    Rng rng(8);
    Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    h.head_b_w = rng.gaussian_matrix(h.head_b_w.rows(), h.head_b_w.cols(), 0.1);
    Rng data(9);
    const Matrix s = data.gaussian_matrix(1, h.cfg.d_s, 1.0);
    const auto plain = generate_deltas(h, s);
    Tape tape;
    const LoraNodeMap nodes = generate_deltas_tape(h, tape, s);
    REQUIRE(nodes.size() == plain.size());
    for (const LoraDelta& d : plain) {
        const auto it = nodes.find(d.address);
        REQUIRE(it != nodes.end());
        CHECK(max_abs_diff(tape.value(it->second.A), d.A) < 1e-12);
        CHECK(max_abs_diff(tape.value(it->second.B), d.B) < 1e-12);
    }
}

TEST_CASE("speaker_vector_asr: shapes, mean-pool oracle, range check") {
    const ModelParams base = base_model();
    Rng data(10);
    const Matrix features = data.gaussian_matrix(9, model_config().feature_dim, 1.0);
    InferModel infer(base);
    const auto acts = infer.encode(features);
    for (std::size_t layer = 0; layer <= model_config().n_enc_layers; ++layer) {
        const Matrix s = speaker_vector_asr(base, features, layer);
        CHECK(s.rows() == 1);
        CHECK(s.cols() == model_config().d_model);
        for (std::size_t j = 0; j < s.cols(); ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < acts[layer].rows(); ++i) mean += acts[layer].at(i, j);
            mean /= static_cast<double>(acts[layer].rows());
            CHECK(s.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(speaker_vector_asr(base, features, model_config().n_enc_layers + 1),
                    std::out_of_range);
}

TEST_CASE("null-initialized hypernetwork leaves transcripts bit-identical") {
    const ModelParams base = base_model();
    Rng rng(11);
    const Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    const Corpus corpus = gen_corpus(gen_config(), 200);
    InferModel plain(base);
    int checked = 0;
    for (const Utterance& u : corpus.utterances) {
        if (++checked > 20) break;
        CHECK(hyper_transcribe(base, h, nullptr, u.features) == plain.transcribe(u.features));
    }
}

TEST_CASE("sv encoder: training beats chance, width contract, errors") {
    const Corpus corpus = gen_corpus(gen_config(), 201);
    const SvTrainResult trained = train_sv_encoder(corpus, 24, 800, 42);
    const double chance = 1.0 / static_cast<double>(corpus.speakers.size());
    CHECK(trained.train_accuracy > chance);
    const Matrix emb = trained.encoder.embed(corpus.utterances.front().features);
    CHECK(emb.rows() == 1);
    CHECK(emb.cols() == 24);

    // untrained classifier sits at chance within generous binomial slack
    const SvTrainResult raw = train_sv_encoder(corpus, 24, 0, 42);
    CHECK(raw.train_accuracy < chance + 0.15);

    Corpus single;
    single.speakers.push_back(corpus.speakers.front());
    CHECK_THROWS_AS(train_sv_encoder(single, 8, 10, 1), std::invalid_argument);
}

TEST_CASE("B-head gradient is live at initialization") {
    const ModelParams base = base_model();
    Rng rng(12);
    Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    const Corpus corpus = gen_corpus(gen_config(), 202);
    const Utterance& utt = corpus.utterances.front();

    const Matrix s = compute_speaker_vector(h, base, nullptr, utt.features);
    Tape tape;
    LoraNodeMap nodes = generate_deltas_tape(h, tape, s);
    ModelForward fwd(tape, base, nullptr, &nodes);
    const NodeId enc = fwd.encode(utt.features).back();
    auto [input, labels] = teacher_forcing_pair(utt.intended);
    const NodeId logits = fwd.decode_teacher_forced(enc, input);
    const NodeId loss = tape.cross_entropy(logits, labels, std::vector<bool>(labels.size(), true));
    tape.backward(loss);

    double g_b = 0.0;
    const Matrix& gb = tape.grad_for(&h.head_b_w);
    for (std::size_t i = 0; i < gb.size(); ++i) g_b += std::abs(gb[i]);
    CHECK(g_b > 0.0);
    // base weights stay out of the gradient map entirely
    CHECK(tape.grads().count(&base.at(ParamAddress::global(Component::Decoder,
                                                           ParamKind::Head))) == 0);
}

TEST_CASE("short meta-training run: loss finite, base frozen, deterministic") {
    const ModelParams base = base_model();
    const ModelParams snapshot = base;
    Rng rng(13);
    const Hypernetwork h0 = init_hypernetwork(model_config(), hyper_config(), rng);
    const Corpus corpus = gen_corpus(gen_config(), 203);
    std::vector<const Utterance*> train_slice;
    for (const Utterance& u : corpus.utterances)
        if (u.split == Split::Train && u.cohort != Cohort::Typical) train_slice.push_back(&u);
    TrainHyper hyper;
    hyper.max_steps = 10;
    hyper.eval_every = 0;

    const HyperTrainResult r1 = train_hypernetwork(base, h0, nullptr, corpus, train_slice, {}, hyper);
    CHECK(base.bit_equal(snapshot));
    CHECK(r1.history.steps_run == 10);
    for (double l : r1.history.losses) CHECK(std::isfinite(l));
    CHECK(!r1.training_speakers.empty());

    const HyperTrainResult r2 = train_hypernetwork(base, h0, nullptr, corpus, train_slice, {}, hyper);
    CHECK(r1.history.losses == r2.history.losses);
    CHECK(r1.hypernet.head_b_w.bit_equal(r2.hypernet.head_b_w));

    // training moved the generator off the null solution
    double b_norm = 0.0;
    for (std::size_t i = 0; i < r1.hypernet.head_b_w.size(); ++i)
        b_norm += std::abs(r1.hypernet.head_b_w[i]);
    CHECK(b_norm > 0.0);
}

TEST_CASE("hypernetwork checkpoint round trip") {
    Rng rng(14);
    Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    h.head_b_w = rng.gaussian_matrix(h.head_b_w.rows(), h.head_b_w.cols(), 0.1);
    const std::string path = "/tmp/hlab_hyper_ckpt.bin";
    save_hypernetwork(path, h);
    const Hypernetwork g = load_hypernetwork(path, model_config());
    CHECK(g.cfg.targets == h.cfg.targets);
    CHECK(g.cfg.rank == h.cfg.rank);
    CHECK(g.cfg.d_s == h.cfg.d_s);
    CHECK(g.loc_embed.bit_equal(h.loc_embed));
    CHECK(g.trunk_w1.bit_equal(h.trunk_w1));
    CHECK(g.trunk_w2.bit_equal(h.trunk_w2));
    CHECK(g.head_a_w.bit_equal(h.head_a_w));
    CHECK(g.head_b_w.bit_equal(h.head_b_w));
    CHECK(g.host_rows == h.host_rows);
    std::remove(path.c_str());
}

TEST_CASE("manifold export: shape, degenerate collapse, size guard") {
    const ModelParams base = base_model();
    Rng rng(15);
    const Hypernetwork h = init_hypernetwork(model_config(), hyper_config(), rng);
    const Corpus corpus = gen_corpus(gen_config(), 204);
    std::vector<const Utterance*> sample;
    for (std::size_t i = 0; i < 8; ++i) sample.push_back(&corpus.utterances[i]);

    const std::string path = "/tmp/hlab_manifold.csv";
    export_param_manifold(base, h, nullptr, sample, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "utterance,speaker,cohort,severity,x,y");
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++rows;
        // null-initialized H generates identical (all-zero) parameter vectors,
        // so every projection collapses to the origin
        std::stringstream ss(line);
        std::string field;
        for (int i = 0; i < 4; ++i) std::getline(ss, field, ',');
        std::getline(ss, field, ',');
        CHECK(std::stod(field) == 0.0);
        std::getline(ss, field, ',');
        CHECK(std::stod(field) == 0.0);
    }
    CHECK(rows == sample.size());
    std::remove(path.c_str());

    sample.resize(2);
    CHECK_THROWS_AS(export_param_manifold(base, h, nullptr, sample, path),
                    std::invalid_argument);
}
