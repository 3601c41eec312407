// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hlab/checkpoint.hpp"
#include "hlab/rng.hpp"
#include "json.hpp"

namespace hlab {

namespace {

using nlohmann::json;

void expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw UsageError("config: " + where + " must be an object");
}

void reject_unknown(const json& j, const std::string& where,
                    const std::vector<std::string>& allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const auto& a : allowed)
            if (key == a) ok = true;
        if (!ok) throw UsageError("config: unknown key \"" + key + "\" in " + where);
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw UsageError("config: bad value for " + where + "." + key + ": " + e.what());
    }
}

std::vector<ParamKind> parse_kinds(const json& j, const char* key, const std::string& where) {
    std::vector<ParamKind> kinds;
    if (!j.contains(key)) return kinds;
    if (!j.at(key).is_array()) throw UsageError("config: " + where + "." + key + " must be a list");
    for (const auto& v : j.at(key)) {
        const std::string s = v.get<std::string>();
        bool found = false;
        for (ParamKind k : {ParamKind::K, ParamKind::Q, ParamKind::V, ParamKind::O, ParamKind::W1,
                            ParamKind::W2}) {
            if (s == to_string(k)) {
                kinds.push_back(k);
                found = true;
            }
        }
        if (!found)
            throw UsageError("config: " + where + "." + key + ": \"" + s +
                             "\" is not an adaptable kind");
    }
    return kinds;
}

Component parse_component(const std::string& s, const std::string& where) {
    if (s == "encoder") return Component::Encoder;
    if (s == "decoder") return Component::Decoder;
    throw UsageError("config: " + where + " must be \"encoder\" or \"decoder\", got \"" + s + "\"");
}

void parse_hyper(const json& j, TrainHyper& h, const std::string& where) {
    expect_object(j, where);
    reject_unknown(j, where,
                   {"max_steps", "lr", "beta1", "beta2", "eps", "eval_every", "patience",
                    "eval_utts_per_speaker"});
    get_to(j, "max_steps", h.max_steps, where);
    get_to(j, "lr", h.adam.lr, where);
    get_to(j, "beta1", h.adam.beta1, where);
    get_to(j, "beta2", h.adam.beta2, where);
    get_to(j, "eps", h.adam.eps, where);
    get_to(j, "eval_every", h.eval_every, where);
    get_to(j, "patience", h.patience, where);
    get_to(j, "eval_utts_per_speaker", h.eval_utts_per_speaker, where);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: invalid JSON: ") + e.what());
    }
    expect_object(j, "document root");
    reject_unknown(j, "document root",
                   {"model", "corpus", "pretrain", "adaptation", "hypernet", "eval", "seeds",
                    "paths"});

    RunConfig cfg;

    if (j.contains("model")) {
        const json& m = j.at("model");
        expect_object(m, "model");
        reject_unknown(m, "model",
                       {"d_model", "n_heads", "n_enc_layers", "n_dec_layers", "d_ff", "vocab_size",
                        "feature_dim", "max_decode_len", "max_frames", "ln_eps"});
        get_to(m, "d_model", cfg.model.d_model, "model");
        get_to(m, "n_heads", cfg.model.n_heads, "model");
        get_to(m, "n_enc_layers", cfg.model.n_enc_layers, "model");
        get_to(m, "n_dec_layers", cfg.model.n_dec_layers, "model");
        get_to(m, "d_ff", cfg.model.d_ff, "model");
        get_to(m, "vocab_size", cfg.model.vocab_size, "model");
        get_to(m, "feature_dim", cfg.model.feature_dim, "model");
        get_to(m, "max_decode_len", cfg.model.max_decode_len, "model");
        get_to(m, "max_frames", cfg.model.max_frames, "model");
        get_to(m, "ln_eps", cfg.model.ln_eps, "model");
    }

    if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        expect_object(c, "corpus");
        reject_unknown(c, "corpus",
                       {"feature_dim", "vocab_size", "frames_per_token", "noise_std",
                        "voice_offset_std", "channel_gain_std", "phrase_count", "phrase_min_len",
                        "phrase_max_len", "n_typical_speakers", "speakers_per_severity",
                        "utts_per_speaker", "verbatim_reference"});
        get_to(c, "feature_dim", cfg.corpus.feature_dim, "corpus");
        get_to(c, "vocab_size", cfg.corpus.vocab_size, "corpus");
        get_to(c, "frames_per_token", cfg.corpus.frames_per_token, "corpus");
        get_to(c, "noise_std", cfg.corpus.noise_std, "corpus");
        get_to(c, "voice_offset_std", cfg.corpus.voice_offset_std, "corpus");
        get_to(c, "channel_gain_std", cfg.corpus.channel_gain_std, "corpus");
        get_to(c, "phrase_count", cfg.corpus.phrase_count, "corpus");
        get_to(c, "phrase_min_len", cfg.corpus.phrase_min_len, "corpus");
        get_to(c, "phrase_max_len", cfg.corpus.phrase_max_len, "corpus");
        get_to(c, "n_typical_speakers", cfg.corpus.n_typical_speakers, "corpus");
        get_to(c, "speakers_per_severity", cfg.corpus.speakers_per_severity, "corpus");
        get_to(c, "utts_per_speaker", cfg.corpus.utts_per_speaker, "corpus");
        get_to(c, "verbatim_reference", cfg.corpus.verbatim_reference, "corpus");
    }

    if (j.contains("pretrain")) parse_hyper(j.at("pretrain"), cfg.pretrain, "pretrain");

    if (j.contains("adaptation")) {
        const json& a = j.at("adaptation");
        expect_object(a, "adaptation");
        reject_unknown(a, "adaptation",
                       {"selector", "target_component", "target_kinds", "rank", "sigma_a",
                        "train"});
        if (a.contains("selector")) {
            try {
                cfg.adaptation.selector = selector_from_string(a.at("selector").get<std::string>());
            } catch (const std::exception& e) {
                throw UsageError(std::string("config: adaptation.selector: ") + e.what());
            }
        }
        if (a.contains("target_component"))
            cfg.adaptation.target_component = parse_component(
                a.at("target_component").get<std::string>(), "adaptation.target_component");
        const auto kinds = parse_kinds(a, "target_kinds", "adaptation");
        if (!kinds.empty()) cfg.adaptation.target_kinds = kinds;
        get_to(a, "rank", cfg.adaptation.rank, "adaptation");
        get_to(a, "sigma_a", cfg.adaptation.sigma_a, "adaptation");
        if (a.contains("train")) parse_hyper(a.at("train"), cfg.adapt_train, "adaptation.train");
    }

    // hypernet target selection mirrors the lora spec: one component, a kind
    // list, all layers
    Component hyper_component = Component::Decoder;
    std::vector<ParamKind> hyper_kinds = {ParamKind::W1};
    if (j.contains("hypernet")) {
        const json& h = j.at("hypernet");
        expect_object(h, "hypernet");
        reject_unknown(h, "hypernet",
                       {"form", "d_c", "hidden", "rank", "target_component", "target_kinds",
                        "head_a_std", "trunk_std", "loc_embed_std", "speaker_source", "asr_layer",
                        "train"});
        if (h.contains("form")) {
            try {
                cfg.hypernet.form = hypernet_form_from_string(h.at("form").get<std::string>());
            } catch (const std::exception& e) {
                throw UsageError(std::string("config: hypernet.form: ") + e.what());
            }
        }
        get_to(h, "d_c", cfg.hypernet.d_c, "hypernet");
        get_to(h, "hidden", cfg.hypernet.hidden, "hypernet");
        get_to(h, "rank", cfg.hypernet.rank, "hypernet");
        get_to(h, "head_a_std", cfg.hypernet.head_a_std, "hypernet");
        get_to(h, "trunk_std", cfg.hypernet.trunk_std, "hypernet");
        get_to(h, "loc_embed_std", cfg.hypernet.loc_embed_std, "hypernet");
        if (h.contains("speaker_source")) {
            try {
                cfg.hypernet.speaker_source =
                    speaker_source_from_string(h.at("speaker_source").get<std::string>());
            } catch (const std::exception& e) {
                throw UsageError(std::string("config: hypernet.speaker_source: ") + e.what());
            }
        }
        get_to(h, "asr_layer", cfg.hypernet.asr_layer, "hypernet");
        if (h.contains("target_component"))
            hyper_component = parse_component(h.at("target_component").get<std::string>(),
                                              "hypernet.target_component");
        const auto kinds = parse_kinds(h, "target_kinds", "hypernet");
        if (!kinds.empty()) hyper_kinds = kinds;
        if (h.contains("train")) parse_hyper(h.at("train"), cfg.hyper_train, "hypernet.train");
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        expect_object(e, "eval");
        reject_unknown(e, "eval", {"verbatim_reference"});
        get_to(e, "verbatim_reference", cfg.eval_verbatim_reference, "eval");
    }

    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        expect_object(s, "seeds");
        reject_unknown(s, "seeds", {"master"});
        get_to(s, "master", cfg.master_seed, "seeds");
    }

    if (j.contains("paths")) {
        const json& p = j.at("paths");
        expect_object(p, "paths");
        reject_unknown(p, "paths", {"out_dir"});
        get_to(p, "out_dir", cfg.out_dir, "paths");
    }

    if (const char* env = std::getenv("HLAB_SEED"); env != nullptr && *env != '\0') {
        try {
            cfg.master_seed = std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("HLAB_SEED is not an integer: ") + env);
        }
        cfg.seed_from_env = true;
    }

    cfg.model.validate();
    cfg.corpus.validate();

    // resolve hypernet targets against the model
    AdaptationSpec like;
    like.method = AdaptMethod::Lora;
    like.target_component = hyper_component;
    like.target_kinds = hyper_kinds;
    like.rank = cfg.hypernet.rank;
    cfg.hypernet.targets = lora_target_addresses(cfg.model, like);
    cfg.hypernet.d_s = cfg.model.d_model;  // s_ASR width; the CLI's source

    cfg.pretrain.seed = cfg.master_seed;
    cfg.adapt_train.seed = cfg.master_seed;
    cfg.hyper_train.seed = cfg.master_seed;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("config file not found: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["model"] = {{"d_model", cfg.model.d_model},
                  {"n_heads", cfg.model.n_heads},
                  {"n_enc_layers", cfg.model.n_enc_layers},
                  {"n_dec_layers", cfg.model.n_dec_layers},
                  {"d_ff", cfg.model.d_ff},
                  {"vocab_size", cfg.model.vocab_size},
                  {"feature_dim", cfg.model.feature_dim},
                  {"max_decode_len", cfg.model.max_decode_len},
                  {"max_frames", cfg.model.max_frames},
                  {"ln_eps", cfg.model.ln_eps}};
    j["corpus"] = {{"feature_dim", cfg.corpus.feature_dim},
                   {"vocab_size", cfg.corpus.vocab_size},
                   {"frames_per_token", cfg.corpus.frames_per_token},
                   {"noise_std", cfg.corpus.noise_std},
                   {"voice_offset_std", cfg.corpus.voice_offset_std},
                   {"channel_gain_std", cfg.corpus.channel_gain_std},
                   {"phrase_count", cfg.corpus.phrase_count},
                   {"phrase_min_len", cfg.corpus.phrase_min_len},
                   {"phrase_max_len", cfg.corpus.phrase_max_len},
                   {"n_typical_speakers", cfg.corpus.n_typical_speakers},
                   {"speakers_per_severity", cfg.corpus.speakers_per_severity},
                   {"utts_per_speaker", cfg.corpus.utts_per_speaker},
                   {"verbatim_reference", cfg.corpus.verbatim_reference}};
    auto hyper_json = [](const TrainHyper& h) {
        return json{{"max_steps", h.max_steps},        {"lr", h.adam.lr},
                    {"beta1", h.adam.beta1},           {"beta2", h.adam.beta2},
                    {"eps", h.adam.eps},               {"eval_every", h.eval_every},
                    {"patience", h.patience},          {"eval_utts_per_speaker",
                                                        h.eval_utts_per_speaker}};
    };
    j["pretrain"] = hyper_json(cfg.pretrain);
    json kinds = json::array();
    for (ParamKind k : cfg.adaptation.target_kinds) kinds.push_back(to_string(k));
    j["adaptation"] = {{"selector", to_string(cfg.adaptation.selector)},
                       {"target_component",
                        cfg.adaptation.target_component == Component::Encoder ? "encoder"
                                                                              : "decoder"},
                       {"target_kinds", kinds},
                       {"rank", cfg.adaptation.rank},
                       {"sigma_a", cfg.adaptation.sigma_a},
                       {"train", hyper_json(cfg.adapt_train)}};
    json targets = json::array();
    for (const ParamAddress& a : cfg.hypernet.targets) targets.push_back(a.str());
    j["hypernet"] = {{"form", to_string(cfg.hypernet.form)},
                     {"d_s", cfg.hypernet.d_s},
                     {"d_c", cfg.hypernet.d_c},
                     {"hidden", cfg.hypernet.hidden},
                     {"rank", cfg.hypernet.rank},
                     {"targets", targets},
                     {"head_a_std", cfg.hypernet.head_a_std},
                     {"trunk_std", cfg.hypernet.trunk_std},
                     {"loc_embed_std", cfg.hypernet.loc_embed_std},
                     {"speaker_source", to_string(cfg.hypernet.speaker_source)},
                     {"asr_layer", cfg.hypernet.asr_layer},
                     {"train", hyper_json(cfg.hyper_train)}};
    j["eval"] = {{"verbatim_reference", cfg.eval_verbatim_reference}};
    j["seeds"] = {{"master", cfg.master_seed}, {"from_env", cfg.seed_from_env}};
    j["paths"] = {{"out_dir", cfg.out_dir}};
    return j.dump(2) + "\n";
}

std::string hash_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

std::string manifest_path_for(const std::string& artifact) {
    return artifact + ".manifest.json";
}

void write_manifest(const RunManifest& m, const std::string& path) {
    json j;
    j["run_id"] = m.run_id;
    j["command"] = m.command;
    j["tool_version"] = "hyperlab 1.0";
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["seed_source"] = m.seed_source;
    j["inputs"] = m.input_hashes;
    j["artifacts"] = m.artifacts;
    j["wall_clock_sec"] = m.wall_clock_sec;
    if (!m.training_speakers.empty()) j["training_speakers"] = m.training_speakers;
    if (!m.method.empty()) j["method"] = m.method;
    if (!m.scope.empty()) j["scope"] = m.scope;
    if (!m.cohort.empty()) j["cohort"] = m.cohort;
    if (!m.speaker.empty()) j["speaker"] = m.speaker;
    if (m.trainable_pct >= 0.0) j["trainable_pct"] = m.trainable_pct;
    if (!m.summary.empty()) {
        json rows = json::array();
        for (const auto& r : m.summary)
            rows.push_back({{"group", r.group},
                            {"method", r.method},
                            {"scope", r.scope},
                            {"p50", r.p50},
                            {"iqr", r.iqr},
                            {"n_speakers", r.n_speakers},
                            {"trainable_pct", r.trainable_pct}});
        j["summary"] = rows;
    }
    atomic_write_file(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const std::exception& e) {
        throw std::runtime_error("manifest " + path + " unreadable: " + e.what());
    }
    RunManifest m;
    try {
        m.run_id = j.value("run_id", "");
        m.command = j.value("command", "");
        m.config_hash = j.value("config_hash", "");
        m.seed = j.value("seed", std::uint64_t{0});
        m.seed_source = j.value("seed_source", "config");
        if (j.contains("inputs"))
            m.input_hashes = j.at("inputs").get<std::map<std::string, std::string>>();
        if (j.contains("artifacts"))
            m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
        m.wall_clock_sec = j.value("wall_clock_sec", 0.0);
        if (j.contains("training_speakers"))
            m.training_speakers = j.at("training_speakers").get<std::vector<std::string>>();
        m.method = j.value("method", "");
        m.scope = j.value("scope", "");
        m.cohort = j.value("cohort", "");
        m.speaker = j.value("speaker", "");
        m.trainable_pct = j.value("trainable_pct", -1.0);
        if (j.contains("summary")) {
            for (const auto& r : j.at("summary")) {
                RunManifest::SummaryRow row;
                row.group = r.value("group", "");
                row.method = r.value("method", "");
                row.scope = r.value("scope", "");
                row.p50 = r.value("p50", 0.0);
                row.iqr = r.value("iqr", 0.0);
                row.n_speakers = r.value("n_speakers", std::size_t{0});
                row.trainable_pct = r.value("trainable_pct", -1.0);
                m.summary.push_back(row);
            }
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest " + path + " malformed: " + e.what());
    }
    return m;
}

}  // namespace hlab
