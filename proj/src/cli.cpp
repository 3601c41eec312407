// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/cli.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <memory>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "hlab/adapt.hpp"
#include "hlab/analysis.hpp"
#include "hlab/checkpoint.hpp"
#include "hlab/hypernet.hpp"
#include "hlab/model.hpp"
#include "hlab/runconfig.hpp"
#include "hlab/speechgen.hpp"

namespace hlab {

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void refuse_overwrite(const std::string& path, bool force) {
    if (!force && fs::exists(path))
        throw UsageError(path + " exists; pass --force to overwrite");
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::string fmt(double v, int places = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", places, v);
    return buf;
}

enum class CkptKind { Model, Lora, Hyper };

CkptKind detect_ckpt_kind(const std::string& path) {
    const auto tensors = load_tensors(path);
    if (tensors.empty()) throw std::runtime_error("empty checkpoint: " + path);
    const std::string& name = tensors.front().name;
    if (name.rfind("lora.", 0) == 0) return CkptKind::Lora;
    if (name.rfind("hyper.", 0) == 0) return CkptKind::Hyper;
    return CkptKind::Model;
}

/// Transcribe a slice, optionally across threads, and pool per speaker.
std::map<std::string, std::vector<EditCounts>> score_parallel(
    const Corpus& corpus, const std::vector<const Utterance*>& slice,
    const Transcriber& transcribe, std::size_t jobs) {
    std::vector<std::vector<std::uint32_t>> hyps(slice.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < slice.size(); ++i) hyps[i] = transcribe(*slice[i]);
    } else {
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < slice.size(); i = next.fetch_add(1))
                    hyps[i] = transcribe(*slice[i]);
            });
        for (auto& t : workers) t.join();
    }
    std::map<std::string, std::vector<EditCounts>> by_speaker;
    for (std::size_t i = 0; i < slice.size(); ++i)
        by_speaker[slice[i]->speaker].push_back(
            edit_counts(corpus.reference(*slice[i]), hyps[i]));
    return by_speaker;
}

struct GenDataArgs {
    std::string config, out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(a.config);
    if (a.seed_set) cfg.master_seed = a.seed;
    refuse_overwrite(a.out, a.force);
    const Corpus corpus = gen_corpus(cfg.corpus, cfg.master_seed);
    save_corpus_jsonl(a.out, corpus);

    RunManifest m;
    m.command = "gen-data";
    m.config_hash = hash_hex(run_config_json(cfg));
    m.run_id = "gen-" + m.config_hash.substr(0, 8);
    m.seed = cfg.master_seed;
    m.seed_source = a.seed_set ? "flag" : (cfg.seed_from_env ? "env" : "config");
    m.artifacts = {a.out};
    m.wall_clock_sec = seconds_since(t0);
    write_manifest(m, manifest_path_for(a.out));
    std::cout << "wrote " << corpus.utterances.size() << " utterances from "
              << corpus.speakers.size() << " speakers to " << a.out << "\n";
    return 0;
}

struct PretrainArgs {
    std::string config, corpus, out;
    bool force = false;
};

void write_history_csv(const TrainHistory& h, const std::string& path) {
    std::ostringstream csv;
    csv << "step,loss\n";
    for (std::size_t i = 0; i < h.losses.size(); ++i)
        csv << (i + 1) << ',' << fmt(h.losses[i]) << '\n';
    atomic_write_file(path, csv.str());
}

int cmd_pretrain(const PretrainArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(a.config);
    require_file(a.corpus, "corpus");
    refuse_overwrite(a.out, a.force);
    const Corpus corpus = load_corpus_jsonl(a.corpus);
    Rng init_rng = Rng::stream(cfg.master_seed, "model_init");
    const ModelParams init = ModelParams::init(cfg.model, init_rng);
    auto [trained, history] = pretrain(init, corpus, cfg.pretrain);
    save_model(a.out, trained);
    write_history_csv(history, a.out + ".history.csv");

    RunManifest m;
    m.command = "pretrain";
    m.config_hash = hash_hex(run_config_json(cfg));
    m.run_id = "pretrain-" + m.config_hash.substr(0, 8);
    m.seed = cfg.master_seed;
    m.seed_source = cfg.seed_from_env ? "env" : "config";
    m.input_hashes[a.corpus] = file_hash_hex(a.corpus);
    m.artifacts = {a.out, a.out + ".history.csv"};
    m.wall_clock_sec = seconds_since(t0);
    m.method = "pretrain";
    m.trainable_pct = 100.0;
    write_manifest(m, manifest_path_for(a.out));
    std::cout << "pretrained " << history.steps_run << " steps; checkpoint " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config, corpus, base, out;
    std::string method = "lora";
    std::string scope = "global";
    std::string cohort, speaker;
    bool force = false;
};

int cmd_train(const TrainArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(a.config);
    require_file(a.corpus, "corpus");
    require_file(a.base, "base checkpoint");
    refuse_overwrite(a.out, a.force);

    if (a.method != "full" && a.method != "partial" && a.method != "lora" && a.method != "hyper")
        throw UsageError("--method must be one of full|partial|lora|hyper");
    if (a.scope != "global" && a.scope != "cohort" && a.scope != "individual")
        throw UsageError("--scope must be one of global|cohort|individual");
    if (a.scope == "cohort" && a.cohort.empty())
        throw UsageError("--scope cohort requires --cohort");
    if (a.scope == "individual" && a.speaker.empty())
        throw UsageError("--scope individual requires --speaker");
    if (a.method == "hyper" && a.scope == "individual")
        throw UsageError(
            "--method hyper is zero-shot: it never trains on an individual's data, so "
            "--scope individual is contradictory");

    const Corpus corpus = load_corpus_jsonl(a.corpus);
    const ModelParams base = load_model(a.base, cfg.model);

    std::vector<const Utterance*> train_slice, val_slice;
    if (a.scope == "global") {
        train_slice = corpus.slice(Split::Train);
        val_slice = corpus.slice(Split::Val);
    } else if (a.scope == "cohort") {
        Cohort c;
        try {
            c = cohort_from_string(a.cohort);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        train_slice = corpus.slice(Split::Train, c);
        val_slice = corpus.slice(Split::Val, c);
    } else {
        train_slice = individual_split(corpus, a.speaker).train;
    }

    RunManifest m;
    m.command = "train";
    m.config_hash = hash_hex(run_config_json(cfg));
    m.run_id = a.method + "-" + a.scope + "-";
    if (!a.cohort.empty()) m.run_id += a.cohort + "-";
    if (!a.speaker.empty()) m.run_id += a.speaker + "-";
    m.run_id += m.config_hash.substr(0, 8);
    m.seed = cfg.master_seed;
    m.seed_source = cfg.seed_from_env ? "env" : "config";
    m.input_hashes[a.corpus] = file_hash_hex(a.corpus);
    m.input_hashes[a.base] = file_hash_hex(a.base);
    m.method = a.method;
    m.scope = a.scope;
    m.cohort = a.cohort;
    m.speaker = a.speaker;

    std::set<std::string> speakers;
    for (const Utterance* u : train_slice) speakers.insert(u->speaker);
    m.training_speakers.assign(speakers.begin(), speakers.end());

    double trainable_pct = 0.0;
    if (a.method == "hyper") {
        if (cfg.hypernet.speaker_source != SpeakerSource::AsrEncoder)
            throw UsageError("the harness wires only speaker_source \"asr_encoder\"");
        Rng rng = Rng::stream(cfg.master_seed, "hyper_init");
        const Hypernetwork init = init_hypernetwork(cfg.model, cfg.hypernet, rng);
        const HyperTrainResult r =
            train_hypernetwork(base, init, nullptr, corpus, train_slice, val_slice,
                               cfg.hyper_train);
        save_hypernetwork(a.out, r.hypernet);
        write_history_csv(r.history, a.out + ".history.csv");
        trainable_pct = 100.0 * static_cast<double>(r.hypernet.trainable_entries()) /
                        static_cast<double>(base.total_entries());
    } else {
        AdaptationSpec spec = cfg.adaptation;
        spec.method = adapt_method_from_string(a.method);
        if (spec.method == AdaptMethod::Full) spec.selector = Selector::All;
        spec.validate();
        const AdaptResult r =
            train_adaptation(base, spec, corpus, train_slice, val_slice, cfg.adapt_train);
        if (spec.method == AdaptMethod::Lora)
            save_lora(a.out, r.deltas);
        else
            save_model(a.out, *r.params);
        write_history_csv(r.history, a.out + ".history.csv");
        trainable_pct = r.history.trainable_pct;
    }

    m.trainable_pct = trainable_pct;
    m.artifacts = {a.out, a.out + ".history.csv"};
    m.wall_clock_sec = seconds_since(t0);
    write_manifest(m, manifest_path_for(a.out));
    std::cout << "trainable parameters: " << fmt(trainable_pct, 4) << "% of base\n";
    std::cout << "checkpoint " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string config, base, corpus, out;
    std::vector<std::string> adaptations;
    std::string split = "test";
    std::size_t jobs = 1;
    bool force = false;
};

struct EvalTarget {
    std::string path;       // empty for the untuned base
    std::string run_id = "base";
    std::string method = "none";
    std::string scope = "-";
    std::string cohort;
    double trainable_pct = -1.0;
    Transcriber transcribe;
    std::vector<const Utterance*> slice;  // individual runs get a restricted slice
};

int cmd_eval(const EvalArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(a.config);
    require_file(a.corpus, "corpus");
    require_file(a.base, "base checkpoint");
    const std::string results_path = a.out + "_results.csv";
    const std::string summary_path = a.out + "_summary.csv";
    refuse_overwrite(results_path, a.force);
    const Corpus corpus = load_corpus_jsonl(a.corpus);
    const ModelParams base = load_model(a.base, cfg.model);
    Split split;
    try {
        split = split_from_string(a.split);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const std::vector<const Utterance*> eval_slice = corpus.slice(split);
    std::set<std::string> eval_speakers;
    for (const Utterance* u : eval_slice) eval_speakers.insert(u->speaker);

    // shared storage keeping checkpoints alive for the transcriber closures
    std::vector<std::shared_ptr<InferModel>> infer_keep;
    std::vector<std::shared_ptr<Hypernetwork>> hyper_keep;
    std::vector<std::shared_ptr<ModelParams>> params_keep;

    std::vector<EvalTarget> targets;
    {
        EvalTarget t;
        auto infer = std::make_shared<InferModel>(base);
        infer_keep.push_back(infer);
        t.transcribe = [infer](const Utterance& u) { return infer->transcribe(u.features); };
        t.slice = eval_slice;
        targets.push_back(std::move(t));
    }
    for (const std::string& path : a.adaptations) {
        require_file(path, "adaptation checkpoint");
        EvalTarget t;
        t.path = path;
        t.slice = eval_slice;
        t.run_id = fs::path(path).stem().string();

        const std::string mpath = manifest_path_for(path);
        std::vector<std::string> trained_on;
        std::string trained_speaker;
        if (fs::exists(mpath)) {
            const RunManifest tm = read_manifest(mpath);
            t.run_id = tm.run_id.empty() ? t.run_id : tm.run_id;
            t.method = tm.method.empty() ? t.method : tm.method;
            t.scope = tm.scope.empty() ? t.scope : tm.scope;
            t.cohort = tm.cohort;
            t.trainable_pct = tm.trainable_pct;
            trained_on = tm.training_speakers;
            trained_speaker = tm.speaker;
        } else {
            std::cerr << "warning: no manifest next to " << path
                      << "; speaker-overlap audit skipped\n";
        }

        if (t.scope == "individual") {
            // the individual protocol scores the held-out 30% of the target
            // speaker; everything else would mix adapted and foreign voices
            if (trained_speaker.empty())
                throw std::runtime_error("individual checkpoint " + path +
                                         " has no speaker in its manifest");
            t.slice = individual_split(corpus, trained_speaker).eval;
        } else if (!trained_on.empty()) {
            std::vector<std::string> overlap;
            for (const std::string& s : trained_on)
                if (eval_speakers.count(s)) overlap.push_back(s);
            if (!overlap.empty()) {
                std::ostringstream report;
                report << "speaker-overlap audit failed for " << path << ": "
                       << overlap.size() << " evaluation speaker(s) seen in training (";
                for (std::size_t i = 0; i < overlap.size() && i < 5; ++i)
                    report << (i ? ", " : "") << overlap[i];
                report << ")";
                throw std::runtime_error(report.str());
            }
        }

        switch (detect_ckpt_kind(path)) {
            case CkptKind::Model: {
                auto params = std::make_shared<ModelParams>(load_model(path, cfg.model));
                params_keep.push_back(params);
                auto infer = std::make_shared<InferModel>(*params);
                infer_keep.push_back(infer);
                t.transcribe = [infer](const Utterance& u) {
                    return infer->transcribe(u.features);
                };
                break;
            }
            case CkptKind::Lora: {
                auto infer = std::make_shared<InferModel>(
                    base, materialize_deltas(load_lora(path, base)));
                infer_keep.push_back(infer);
                t.transcribe = [infer](const Utterance& u) {
                    return infer->transcribe(u.features);
                };
                break;
            }
            case CkptKind::Hyper: {
                auto h = std::make_shared<Hypernetwork>(load_hypernetwork(path, cfg.model));
                hyper_keep.push_back(h);
                const ModelParams* bp = &base;
                t.transcribe = [h, bp](const Utterance& u) {
                    return hyper_transcribe(*bp, *h, nullptr, u.features);
                };
                break;
            }
        }
        targets.push_back(std::move(t));
    }

    std::ostringstream results;
    results << "run_id,method,scope,cohort,severity,speaker,n_utts,wer,mer\n";
    std::ostringstream summary;
    summary << "run_id,method,scope,group,n_speakers,p50_wer,iqr_wer,p50_mer\n";
    RunManifest m;
    // adaptation cohort -> eval cohort -> speaker WERs, for the transfer matrix
    std::map<std::string, std::map<std::string, std::vector<double>>> transfer;

    for (const EvalTarget& t : targets) {
        const auto by_speaker = score_parallel(corpus, t.slice, t.transcribe, a.jobs);
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
        for (const auto& [speaker, counts] : by_speaker) {
            const SpeakerProfile& prof = corpus.speaker(speaker);
            const double w = speaker_wer(counts);
            const double mr = speaker_mer(counts);
            results << t.run_id << ',' << t.method << ',' << t.scope << ','
                    << to_string(prof.cohort) << ',' << to_string(prof.severity) << ',' << speaker
                    << ',' << counts.size() << ',' << fmt(w) << ',' << fmt(mr) << '\n';
            const std::string group =
                std::string(to_string(prof.cohort)) + "/" + to_string(prof.severity);
            groups[group].first.push_back(w);
            groups[group].second.push_back(mr);
            groups["all"].first.push_back(w);
            groups["all"].second.push_back(mr);
            if (!t.cohort.empty() && t.scope == "cohort")
                transfer[t.cohort][to_string(prof.cohort)].push_back(w);
        }
        for (const GroupStats& g : group_stats(groups)) {
            summary << t.run_id << ',' << t.method << ',' << t.scope << ',' << g.key << ','
                    << g.n_speakers << ',' << fmt(g.p50) << ',' << fmt(g.iqr) << ','
                    << fmt(g.p50_mer) << '\n';
            RunManifest::SummaryRow row;
            row.group = t.run_id + ":" + g.key;
            row.method = t.method;
            row.scope = t.scope;
            row.p50 = g.p50;
            row.iqr = g.iqr;
            row.n_speakers = g.n_speakers;
            row.trainable_pct = t.trainable_pct;
            m.summary.push_back(row);
        }
    }
    atomic_write_file(results_path, results.str());
    atomic_write_file(summary_path, summary.str());
    m.artifacts = {results_path, summary_path};

    if (transfer.size() >= 2) {
        std::set<std::string> eval_cohorts;
        for (const auto& [_, row] : transfer)
            for (const auto& [c, __] : row) eval_cohorts.insert(c);
        std::ostringstream tm;
        tm << "adaptation_cohort";
        for (const auto& c : eval_cohorts) tm << ',' << c;
        tm << '\n';
        for (const auto& [train_c, row] : transfer) {
            tm << train_c;
            for (const auto& c : eval_cohorts) {
                const auto it = row.find(c);
                tm << ',' << (it == row.end() ? "" : fmt(quantile(it->second, 0.5)));
            }
            tm << '\n';
        }
        const std::string transfer_path = a.out + "_transfer.csv";
        atomic_write_file(transfer_path, tm.str());
        m.artifacts.push_back(transfer_path);
    }

    m.command = "eval";
    m.config_hash = hash_hex(run_config_json(cfg));
    m.run_id = "eval-" + m.config_hash.substr(0, 8);
    m.seed = cfg.master_seed;
    m.seed_source = cfg.seed_from_env ? "env" : "config";
    m.input_hashes[a.corpus] = file_hash_hex(a.corpus);
    m.input_hashes[a.base] = file_hash_hex(a.base);
    for (const std::string& p : a.adaptations) m.input_hashes[p] = file_hash_hex(p);
    m.wall_clock_sec = seconds_since(t0);
    write_manifest(m, manifest_path_for(results_path));
    std::cout << "results " << results_path << "\nsummary " << summary_path << "\n";
    return 0;
}

struct SsaArgs {
    std::string config, base, adapted, out;
    std::size_t top_k = 0;
    bool force = false;
};

int cmd_ssa(const SsaArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    require_file(a.base, "base checkpoint");
    require_file(a.adapted, "adapted checkpoint");
    refuse_overwrite(a.out, a.force);
    const ModelParams base = load_model(a.base, cfg.model);
    const std::optional<std::size_t> k =
        a.top_k > 0 ? std::optional<std::size_t>(a.top_k) : std::nullopt;
    SsaReport report;
    switch (detect_ckpt_kind(a.adapted)) {
        case CkptKind::Model:
            report = ssa_report(base, load_model(a.adapted, cfg.model), k);
            break;
        case CkptKind::Lora:
            report = ssa_report(base, materialize_deltas(load_lora(a.adapted, base)), k);
            break;
        case CkptKind::Hyper:
            throw UsageError(
                "hypernetwork checkpoints have per-utterance deltas; materialize one via the "
                "library or compare full/partial/lora checkpoints");
    }
    write_ssa_csv(report, a.out);
    std::cout << "ssa heat map " << a.out << "\n";
    return 0;
}

struct EmbedArgs {
    std::string config, base, corpus, out;
    std::string split = "test";
    std::size_t layer = SIZE_MAX;  // default: final encoder layer
    bool force = false;
};

int cmd_embed(const EmbedArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    require_file(a.base, "base checkpoint");
    require_file(a.corpus, "corpus");
    refuse_overwrite(a.out, a.force);
    const ModelParams base = load_model(a.base, cfg.model);
    const Corpus corpus = load_corpus_jsonl(a.corpus);
    Split split;
    try {
        split = split_from_string(a.split);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const std::size_t layer = a.layer == SIZE_MAX ? cfg.model.n_enc_layers : a.layer;
    const auto slice = corpus.slice(split);
    if (slice.empty()) throw std::runtime_error("embed: empty split");

    Matrix points(slice.size(), cfg.model.d_model);
    for (std::size_t i = 0; i < slice.size(); ++i) {
        const Matrix s = speaker_vector_asr(base, slice[i]->features, layer);
        for (std::size_t j = 0; j < s.cols(); ++j) points.at(i, j) = s.at(0, j);
    }
    const Matrix proj = pca_2d(points);

    std::ostringstream csv;
    csv << "utterance,speaker,cohort,severity,x,y";
    for (std::size_t j = 0; j < cfg.model.d_model; ++j) csv << ",s" << j;
    csv << '\n';
    for (std::size_t i = 0; i < slice.size(); ++i) {
        const Utterance& u = *slice[i];
        csv << u.id << ',' << u.speaker << ',' << to_string(u.cohort) << ','
            << to_string(u.severity) << ',' << fmt(proj.at(i, 0)) << ',' << fmt(proj.at(i, 1));
        for (std::size_t j = 0; j < cfg.model.d_model; ++j) csv << ',' << fmt(points.at(i, j));
        csv << '\n';
    }
    atomic_write_file(a.out, csv.str());
    std::cout << "embeddings (layer " << layer << ") " << a.out << "\n";
    return 0;
}

struct ReportArgs {
    std::string runs, out;
    bool force = false;
};

int cmd_report(const ReportArgs& a) {
    if (!fs::is_directory(a.runs)) throw UsageError("--runs is not a directory: " + a.runs);
    refuse_overwrite(a.out, a.force);
    struct Row {
        std::string method, scope, group, p50_iqr, trainable;
    };
    std::vector<Row> rows;
    std::size_t corrupt = 0, manifests = 0;
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(a.runs))
        if (e.path().string().size() > 14 &&
            e.path().string().rfind(".manifest.json") == e.path().string().size() - 14)
            paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    for (const std::string& p : paths) {
        ++manifests;
        RunManifest m;
        try {
            m = read_manifest(p);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping corrupt manifest " << p << ": " << e.what() << "\n";
            ++corrupt;
            continue;
        }
        for (const auto& s : m.summary) {
            char p50_iqr[64];
            std::snprintf(p50_iqr, sizeof(p50_iqr), "%.1f (%.1f)", s.p50, s.iqr);
            Row r;
            r.method = s.method.empty() ? "none" : s.method;
            r.scope = s.scope.empty() ? "-" : s.scope;
            r.group = s.group;
            r.p50_iqr = p50_iqr;
            r.trainable = s.trainable_pct >= 0.0 ? fmt(s.trainable_pct, 4) : "-";
            rows.push_back(std::move(r));
        }
    }
    if (manifests == 0) throw UsageError("no run manifests under " + a.runs);
    if (rows.empty() && corrupt > 0)
        throw std::runtime_error("all run manifests were corrupt");
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
        return std::tie(x.method, x.scope, x.group) < std::tie(y.method, y.scope, y.group);
    });

    std::ostringstream csv;
    csv << "method,scope,group,p50_iqr,trainable_pct\n";
    for (const Row& r : rows)
        csv << r.method << ',' << r.scope << ',' << r.group << ",\"" << r.p50_iqr << "\","
            << r.trainable << '\n';
    atomic_write_file(a.out, csv.str());

    // aligned plain-text companion
    std::array<std::size_t, 5> w = {6, 5, 5, 10, 9};
    for (const Row& r : rows) {
        w[0] = std::max(w[0], r.method.size());
        w[1] = std::max(w[1], r.scope.size());
        w[2] = std::max(w[2], r.group.size());
        w[3] = std::max(w[3], r.p50_iqr.size());
        w[4] = std::max(w[4], r.trainable.size());
    }
    std::ostringstream txt;
    auto pad = [&](const std::string& s, std::size_t width) {
        txt << s << std::string(width - s.size() + 2, ' ');
    };
    pad("method", w[0]);
    pad("scope", w[1]);
    pad("group", w[2]);
    pad("P50 (IQR)", w[3]);
    txt << "trainable\n";
    for (const Row& r : rows) {
        pad(r.method, w[0]);
        pad(r.scope, w[1]);
        pad(r.group, w[2]);
        pad(r.p50_iqr, w[3]);
        txt << r.trainable << '\n';
    }
    atomic_write_file(a.out + ".txt", txt.str());
    std::cout << txt.str();
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"hyperlab: desk-scale ASR personalization experiments"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--config", gd.config, "run config JSON")->required();
    gen->add_option("--out", gd.out, "corpus JSONL path")->required();
    auto* seed_opt = gen->add_option("--seed", gd.seed, "override the config seed");
    gen->add_flag("--force", gd.force, "overwrite existing output");

    PretrainArgs pt;
    auto* pre = app.add_subcommand("pretrain", "train the base model on typical speech");
    pre->add_option("--config", pt.config)->required();
    pre->add_option("--corpus", pt.corpus)->required();
    pre->add_option("--out", pt.out)->required();
    pre->add_flag("--force", pt.force);

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "train an adaptation");
    train->add_option("--config", tr.config)->required();
    train->add_option("--corpus", tr.corpus)->required();
    train->add_option("--base", tr.base)->required();
    train->add_option("--out", tr.out)->required();
    train->add_option("--method", tr.method, "full|partial|lora|hyper");
    train->add_option("--scope", tr.scope, "global|cohort|individual");
    train->add_option("--cohort", tr.cohort);
    train->add_option("--speaker", tr.speaker);
    train->add_flag("--force", tr.force);

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "transcribe and score a split");
    eval->add_option("--config", ev.config)->required();
    eval->add_option("--base", ev.base)->required();
    eval->add_option("--corpus", ev.corpus)->required();
    eval->add_option("--out", ev.out, "output path prefix")->required();
    eval->add_option("--adaptation", ev.adaptations, "adaptation checkpoint(s)");
    eval->add_option("--split", ev.split);
    eval->add_option("--jobs", ev.jobs);
    eval->add_flag("--force", ev.force);

    SsaArgs ssa;
    auto* ssac = app.add_subcommand("ssa", "subspace angles base vs adapted");
    ssac->add_option("--config", ssa.config)->required();
    ssac->add_option("--base", ssa.base)->required();
    ssac->add_option("--adapted", ssa.adapted)->required();
    ssac->add_option("--out", ssa.out)->required();
    ssac->add_option("--top-k", ssa.top_k);
    ssac->add_flag("--force", ssa.force);

    EmbedArgs em;
    auto* embed = app.add_subcommand("embed", "export speaker vectors + 2D projection");
    embed->add_option("--config", em.config)->required();
    embed->add_option("--base", em.base)->required();
    embed->add_option("--corpus", em.corpus)->required();
    embed->add_option("--out", em.out)->required();
    embed->add_option("--split", em.split);
    embed->add_option("--layer", em.layer);
    embed->add_flag("--force", em.force);

    ReportArgs rp;
    auto* report = app.add_subcommand("report", "consolidate run summaries");
    report->add_option("--runs", rp.runs)->required();
    report->add_option("--out", rp.out)->required();
    report->add_flag("--force", rp.force);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            gd.seed_set = seed_opt->count() > 0;
            return cmd_gen_data(gd);
        }
        if (*pre) return cmd_pretrain(pt);
        if (*train) return cmd_train(tr);
        if (*eval) return cmd_eval(ev);
        if (*ssac) return cmd_ssa(ssa);
        if (*embed) return cmd_embed(em);
        if (*report) return cmd_report(rp);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace hlab
