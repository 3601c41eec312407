// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/speechgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hlab/checkpoint.hpp"
#include "hlab/model.hpp"

namespace hlab {

using nlohmann::json;

const char* to_string(Cohort c) {
    switch (c) {
        case Cohort::Typical: return "typical";
        case Cohort::Stutter: return "stutter";
        case Cohort::Dysarthria: return "dysarthria";
        case Cohort::Parkinsons: return "parkinsons";
    }
    return "?";
}

const char* to_string(Severity s) {
    switch (s) {
        case Severity::None: return "none";
        case Severity::Mild: return "mild";
        case Severity::Moderate: return "moderate";
        case Severity::Severe: return "severe";
    }
    return "?";
}

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Cohort cohort_from_string(const std::string& s) {
    for (Cohort c : {Cohort::Typical, Cohort::Stutter, Cohort::Dysarthria, Cohort::Parkinsons})
        if (s == to_string(c)) return c;
    throw std::invalid_argument("unknown cohort '" + s + "'");
}

Severity severity_from_string(const std::string& s) {
    for (Severity v : {Severity::None, Severity::Mild, Severity::Moderate, Severity::Severe})
        if (s == to_string(v)) return v;
    throw std::invalid_argument("unknown severity '" + s + "'");
}

Split split_from_string(const std::string& s) {
    for (Split v : {Split::Train, Split::Val, Split::Test})
        if (s == to_string(v)) return v;
    throw std::invalid_argument("unknown split '" + s + "'");
}

void GenConfig::validate() const {
    if (vocab_size <= FIRST_CONTENT_TOKEN)
        throw std::invalid_argument("GenConfig: vocab_size leaves no content tokens");
    if (feature_dim == 0 || frames_per_token == 0 || phrase_count == 0 || utts_per_speaker == 0)
        throw std::invalid_argument("GenConfig: counts must be positive");
    if (phrase_min_len < 1 || phrase_max_len < phrase_min_len)
        throw std::invalid_argument("GenConfig: bad phrase length range");
}

double severity_dysfluency_rate(Severity s) {
    switch (s) {
        case Severity::Mild: return 0.08;
        case Severity::Moderate: return 0.20;
        case Severity::Severe: return 0.45;
        default: return 0.0;
    }
}

double severity_rate_factor(Severity s) {
    switch (s) {
        case Severity::Mild: return 1.2;
        case Severity::Moderate: return 1.6;
        case Severity::Severe: return 2.2;
        default: return 1.0;
    }
}

std::size_t severity_smear_width(Severity s) {
    switch (s) {
        case Severity::Mild: return 2;
        case Severity::Moderate: return 3;
        case Severity::Severe: return 5;
        default: return 1;
    }
}

double severity_amp_mod_depth(Severity s) {
    switch (s) {
        case Severity::Mild: return 0.2;
        case Severity::Moderate: return 0.4;
        case Severity::Severe: return 0.6;
        default: return 0.0;
    }
}

const SpeakerProfile& Corpus::speaker(const std::string& id) const {
    for (const SpeakerProfile& s : speakers)
        if (s.id == id) return s;
    throw std::invalid_argument("Corpus: unknown speaker '" + id + "'");
}

std::vector<const Utterance*> Corpus::slice(Split split) const {
    std::vector<const Utterance*> out;
    for (const Utterance& u : utterances)
        if (u.split == split) out.push_back(&u);
    return out;
}

std::vector<const Utterance*> Corpus::slice(Split split, Cohort cohort) const {
    std::vector<const Utterance*> out;
    for (const Utterance& u : utterances)
        if (u.split == split && u.cohort == cohort) out.push_back(&u);
    return out;
}

std::vector<const Utterance*> Corpus::speaker_utterances(const std::string& speaker_id) const {
    std::vector<const Utterance*> out;
    for (const Utterance& u : utterances)
        if (u.speaker == speaker_id) out.push_back(&u);
    return out;
}

Matrix token_prototypes(const GenConfig& cfg) {
    // fixed seed, independent of the corpus master seed
    Rng rng = Rng::stream(0x70726f746f, "token_prototypes");
    return rng.gaussian_matrix(cfg.vocab_size, cfg.feature_dim, 1.0);
}

static std::size_t token_duration(const GenConfig& cfg, double rate_factor) {
    const auto d = static_cast<std::size_t>(
        std::lround(static_cast<double>(cfg.frames_per_token) * rate_factor));
    return std::max<std::size_t>(1, d);
}

static Matrix render_segment(std::uint32_t token, std::size_t dur,
                             const SpeakerProfile& speaker, const Matrix& prototypes,
                             const GenConfig& cfg, Rng& rng) {
    if (token >= cfg.vocab_size)
        throw std::invalid_argument("synth: token id " + std::to_string(token) +
                                    " outside vocabulary of " + std::to_string(cfg.vocab_size));
    Matrix seg(dur, cfg.feature_dim);
    for (std::size_t i = 0; i < dur; ++i)
        for (std::size_t j = 0; j < cfg.feature_dim; ++j)
            seg.at(i, j) = prototypes.at(token, j) + speaker.voice_offset[j] +
                           cfg.noise_std * rng.normal();
    return seg;
}

static Matrix vstack(const std::vector<Matrix>& parts, std::size_t cols) {
    std::size_t rows = 0;
    for (const Matrix& p : parts) rows += p.rows();
    Matrix out(rows, cols);
    std::size_t r = 0;
    for (const Matrix& p : parts) {
        for (std::size_t i = 0; i < p.rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) out.at(r + i, j) = p.at(i, j);
        r += p.rows();
    }
    return out;
}

Matrix synth_typical(const std::vector<std::uint32_t>& tokens, const SpeakerProfile& speaker,
                     const Matrix& prototypes, const GenConfig& cfg, Rng& rng) {
    if (tokens.empty()) throw std::invalid_argument("synth_typical: no tokens");
    const std::size_t dur = token_duration(cfg, speaker.rate_factor);
    std::vector<Matrix> segs;
    segs.reserve(tokens.size());
    for (std::uint32_t t : tokens) segs.push_back(render_segment(t, dur, speaker, prototypes, cfg, rng));
    return vstack(segs, cfg.feature_dim);
}

SynthResult apply_stutter(const std::vector<std::uint32_t>& tokens, const SpeakerProfile& profile,
                          const Matrix& prototypes, const GenConfig& cfg, Rng& rng) {
    if (profile.cohort != Cohort::Stutter)
        throw std::invalid_argument("apply_stutter: profile cohort is not stutter");
    const std::size_t dur = token_duration(cfg, profile.rate_factor);
    std::vector<Matrix> segs;
    SynthResult result;
    for (std::uint32_t t : tokens) {
        Matrix seg = render_segment(t, dur, profile, prototypes, cfg, rng);
        const bool event = rng.uniform() < profile.dysfluency_rate;
        if (!event) {
            segs.push_back(std::move(seg));
            result.verbatim.push_back(t);
            continue;
        }
        switch (rng.below(3)) {
            case 0: {  // part repetition: k copies of the first half, token doubled
                const std::size_t k = 1 + rng.below(3);
                const std::size_t half = (dur + 1) / 2;
                Matrix prefix(half, cfg.feature_dim);
                for (std::size_t i = 0; i < half; ++i)
                    for (std::size_t j = 0; j < cfg.feature_dim; ++j)
                        prefix.at(i, j) = seg.at(i, j);
                for (std::size_t c = 0; c < k; ++c) segs.push_back(prefix);
                segs.push_back(std::move(seg));
                result.verbatim.push_back(t);
                result.verbatim.push_back(t);
                break;
            }
            case 1: {  // prolongation: each frame held 2x or 3x
                const std::size_t f = 2 + rng.below(2);
                Matrix stretched(dur * f, cfg.feature_dim);
                for (std::size_t i = 0; i < dur * f; ++i)
                    for (std::size_t j = 0; j < cfg.feature_dim; ++j)
                        stretched.at(i, j) = seg.at(i / f, j);
                segs.push_back(std::move(stretched));
                result.verbatim.push_back(t);
                break;
            }
            default: {  // block: near-silent frames before the token
                const std::size_t pause = 2 + rng.below(5);
                Matrix silence(pause, cfg.feature_dim);
                for (std::size_t i = 0; i < silence.size(); ++i) silence[i] = 0.01 * rng.normal();
                segs.push_back(std::move(silence));
                segs.push_back(std::move(seg));
                result.verbatim.push_back(t);
                break;
            }
        }
    }
    result.features = vstack(segs, cfg.feature_dim);
    return result;
}

Matrix time_stretch_rows(const Matrix& x, double rate) {
    if (rate <= 0.0) throw std::invalid_argument("time_stretch_rows: rate must be positive");
    const auto out_rows = static_cast<std::size_t>(
        std::lround(static_cast<double>(x.rows()) * rate));
    Matrix out(out_rows, x.cols());
    for (std::size_t i = 0; i < out_rows; ++i) {
        auto src = static_cast<std::size_t>(static_cast<double>(i) / rate);
        src = std::min(src, x.rows() - 1);
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(src, j);
    }
    return out;
}

Matrix moving_average_rows(const Matrix& x, std::size_t width) {
    if (width == 0) throw std::invalid_argument("moving_average_rows: width must be positive");
    if (width == 1) return x;
    const std::size_t half_lo = (width - 1) / 2;
    const std::size_t half_hi = width / 2;
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const std::size_t lo = i >= half_lo ? i - half_lo : 0;
        const std::size_t hi = std::min(x.rows() - 1, i + half_hi);
        const double inv = 1.0 / static_cast<double>(hi - lo + 1);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) s += x.at(k, j);
            out.at(i, j) = s * inv;
        }
    }
    return out;
}

Matrix apply_dysarthria(const Matrix& features, const SpeakerProfile& profile, Rng& rng) {
    if (profile.cohort != Cohort::Dysarthria)
        throw std::invalid_argument("apply_dysarthria: profile cohort is not dysarthria");
    // channel gains drawn first so the draw count is independent of T
    std::vector<double> gains(features.cols());
    for (double& g : gains) g = 1.0 + profile.channel_gain_std * rng.normal();
    Matrix out = moving_average_rows(time_stretch_rows(features, profile.rate_factor),
                                     profile.smear_width);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) *= gains[j];
    return out;
}

SynthResult apply_parkinsons(const std::vector<std::uint32_t>& tokens,
                             const SpeakerProfile& profile, const Matrix& prototypes,
                             const GenConfig& cfg, Rng& rng) {
    if (profile.cohort != Cohort::Parkinsons)
        throw std::invalid_argument("apply_parkinsons: profile cohort is not parkinsons");
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const std::size_t dur = token_duration(cfg, profile.rate_factor);
    std::vector<Matrix> segs;
    SynthResult result;
    for (std::uint32_t t : tokens) {
        Matrix seg = render_segment(t, dur, profile, prototypes, cfg, rng);
        if (rng.uniform() < profile.dysfluency_rate / 2.0) {
            // rapid 1-frame echoes of the onset, token doubled in verbatim
            Matrix echo(2, cfg.feature_dim);
            for (std::size_t j = 0; j < cfg.feature_dim; ++j)
                echo.at(0, j) = echo.at(1, j) = seg.at(0, j);
            segs.push_back(std::move(echo));
            result.verbatim.push_back(t);
        }
        segs.push_back(std::move(seg));
        result.verbatim.push_back(t);
    }
    Matrix out = moving_average_rows(vstack(segs, cfg.feature_dim), 2);
    constexpr double period = 12.0;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const double f = 1.0 + profile.amp_mod_depth *
                                   std::sin(2.0 * M_PI * static_cast<double>(i) / period + phase);
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) *= f;
    }
    result.features = std::move(out);
    return result;
}

SynthResult synth_utterance(const std::vector<std::uint32_t>& tokens,
                            const SpeakerProfile& profile, const Matrix& prototypes,
                            const GenConfig& cfg, Rng& rng) {
    switch (profile.cohort) {
        case Cohort::Typical: {
            SynthResult r;
            r.verbatim = tokens;
            r.features = synth_typical(tokens, profile, prototypes, cfg, rng);
            return r;
        }
        case Cohort::Stutter:
            return apply_stutter(tokens, profile, prototypes, cfg, rng);
        case Cohort::Dysarthria: {
            // rendered at rate 1.0; the stretch happens in the transform
            SpeakerProfile flat = profile;
            flat.rate_factor = 1.0;
            flat.cohort = Cohort::Typical;
            SynthResult r;
            r.verbatim = tokens;
            Matrix base = synth_typical(tokens, flat, prototypes, cfg, rng);
            r.features = apply_dysarthria(base, profile, rng);
            return r;
        }
        case Cohort::Parkinsons:
            return apply_parkinsons(tokens, profile, prototypes, cfg, rng);
    }
    throw std::logic_error("synth_utterance: unreachable");
}

// ---------------------------------------------------------------------------
// corpus assembly
// ---------------------------------------------------------------------------

Corpus gen_corpus(const GenConfig& cfg, std::uint64_t master_seed) {
    cfg.validate();
    Corpus corpus;
    corpus.master_seed = master_seed;
    corpus.config = cfg;

    // phrase inventory over content tokens
    Rng phrase_rng = Rng::stream(master_seed, "phrases");
    std::vector<std::vector<std::uint32_t>> phrases(cfg.phrase_count);
    for (auto& p : phrases) {
        const std::size_t len =
            cfg.phrase_min_len + phrase_rng.below(cfg.phrase_max_len - cfg.phrase_min_len + 1);
        p.resize(len);
        for (auto& t : p)
            t = FIRST_CONTENT_TOKEN +
                static_cast<std::uint32_t>(phrase_rng.below(cfg.vocab_size - FIRST_CONTENT_TOKEN));
    }

    // speaker roster grouped by (cohort, severity)
    struct Group {
        Cohort cohort;
        Severity severity;
        std::size_t count;
    };
    std::vector<Group> groups = {{Cohort::Typical, Severity::None, cfg.n_typical_speakers}};
    for (Cohort c : {Cohort::Stutter, Cohort::Dysarthria, Cohort::Parkinsons})
        for (Severity s : {Severity::Mild, Severity::Moderate, Severity::Severe})
            groups.push_back({c, s, cfg.speakers_per_severity});

    std::size_t speaker_index = 0;
    std::size_t group_index = 0;
    for (const Group& g : groups) {
        if (g.count < 3)
            throw std::invalid_argument(std::string("gen_corpus: cohort ") + to_string(g.cohort) +
                                        "/" + to_string(g.severity) +
                                        " needs at least 3 speakers for a 70/10/20 split");
        std::vector<SpeakerProfile> members;
        for (std::size_t i = 0; i < g.count; ++i) {
            SpeakerProfile sp;
            std::ostringstream id;
            id << to_string(g.cohort);
            if (g.cohort != Cohort::Typical) id << "_" << to_string(g.severity);
            id << "_" << (i < 10 ? "0" : "") << i;
            sp.id = id.str();
            sp.cohort = g.cohort;
            sp.severity = g.severity;
            Rng voice_rng = Rng::stream(master_seed, "voice", fnv1a(sp.id));
            sp.voice_offset.resize(cfg.feature_dim);
            for (double& v : sp.voice_offset) v = cfg.voice_offset_std * voice_rng.normal();
            sp.rate_factor =
                g.cohort == Cohort::Dysarthria ? severity_rate_factor(g.severity) : 1.0;
            sp.dysfluency_rate = (g.cohort == Cohort::Stutter || g.cohort == Cohort::Parkinsons)
                                     ? severity_dysfluency_rate(g.severity)
                                     : 0.0;
            sp.smear_width =
                g.cohort == Cohort::Dysarthria ? severity_smear_width(g.severity) : 1;
            sp.amp_mod_depth =
                g.cohort == Cohort::Parkinsons ? severity_amp_mod_depth(g.severity) : 0.0;
            sp.channel_gain_std = g.cohort == Cohort::Dysarthria ? cfg.channel_gain_std : 0.0;
            members.push_back(std::move(sp));
            ++speaker_index;
        }
        // deterministic shuffle, then 70/10/20 slices by speaker count
        Rng split_rng = Rng::stream(master_seed, "split", group_index++);
        for (std::size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[split_rng.below(i)]);
        const auto n = members.size();
        auto n_train = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(n)));
        auto n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n))));
        if (n_train + n_val >= n) n_train = n - n_val - 1;
        for (std::size_t i = 0; i < n; ++i)
            members[i].split = i < n_train ? Split::Train
                               : i < n_train + n_val ? Split::Val
                                                     : Split::Test;
        for (auto& m : members) corpus.speakers.push_back(std::move(m));
    }
    std::sort(corpus.speakers.begin(), corpus.speakers.end(),
              [](const SpeakerProfile& a, const SpeakerProfile& b) { return a.id < b.id; });

    const Matrix prototypes = token_prototypes(cfg);
    for (const SpeakerProfile& sp : corpus.speakers) {
        Rng rng = Rng::stream(master_seed, "speaker_utts", fnv1a(sp.id));
        for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
            const auto& phrase = phrases[rng.below(phrases.size())];
            Utterance utt;
            std::ostringstream id;
            id << sp.id << "_u" << (u < 10 ? "0" : "") << u;
            utt.id = id.str();
            utt.speaker = sp.id;
            utt.cohort = sp.cohort;
            utt.severity = sp.severity;
            utt.split = sp.split;
            utt.intended = phrase;
            SynthResult r = synth_utterance(phrase, sp, prototypes, cfg, rng);
            utt.verbatim = std::move(r.verbatim);
            utt.features = std::move(r.features);
            corpus.utterances.push_back(std::move(utt));
        }
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// JSONL serialization
// ---------------------------------------------------------------------------

static json config_to_json(const GenConfig& c) {
    return json{{"feature_dim", c.feature_dim},
                {"vocab_size", c.vocab_size},
                {"frames_per_token", c.frames_per_token},
                {"noise_std", c.noise_std},
                {"voice_offset_std", c.voice_offset_std},
                {"channel_gain_std", c.channel_gain_std},
                {"phrase_count", c.phrase_count},
                {"phrase_min_len", c.phrase_min_len},
                {"phrase_max_len", c.phrase_max_len},
                {"n_typical_speakers", c.n_typical_speakers},
                {"speakers_per_severity", c.speakers_per_severity},
                {"utts_per_speaker", c.utts_per_speaker},
                {"verbatim_reference", c.verbatim_reference}};
}

static GenConfig config_from_json(const json& j) {
    GenConfig c;
    c.feature_dim = j.at("feature_dim");
    c.vocab_size = j.at("vocab_size");
    c.frames_per_token = j.at("frames_per_token");
    c.noise_std = j.at("noise_std");
    c.voice_offset_std = j.at("voice_offset_std");
    c.channel_gain_std = j.at("channel_gain_std");
    c.phrase_count = j.at("phrase_count");
    c.phrase_min_len = j.at("phrase_min_len");
    c.phrase_max_len = j.at("phrase_max_len");
    c.n_typical_speakers = j.at("n_typical_speakers");
    c.speakers_per_severity = j.at("speakers_per_severity");
    c.utts_per_speaker = j.at("utts_per_speaker");
    c.verbatim_reference = j.at("verbatim_reference");
    return c;
}

void save_corpus_jsonl(const std::string& path, const Corpus& corpus) {
    std::ostringstream out;
    json header;
    json speakers = json::array();
    for (const SpeakerProfile& sp : corpus.speakers) {
        speakers.push_back(json{{"id", sp.id},
                                {"cohort", to_string(sp.cohort)},
                                {"severity", to_string(sp.severity)},
                                {"split", to_string(sp.split)},
                                {"voice_offset", sp.voice_offset},
                                {"rate_factor", sp.rate_factor},
                                {"dysfluency_rate", sp.dysfluency_rate},
                                {"smear_width", sp.smear_width},
                                {"amp_mod_depth", sp.amp_mod_depth},
                                {"channel_gain_std", sp.channel_gain_std}});
    }
    header["speakers"] = std::move(speakers);
    header["config"] = config_to_json(corpus.config);
    header["seed"] = corpus.master_seed;
    out << header.dump() << "\n";
    for (const Utterance& u : corpus.utterances) {
        json line{{"id", u.id},
                  {"speaker", u.speaker},
                  {"cohort", to_string(u.cohort)},
                  {"severity", to_string(u.severity)},
                  {"split", to_string(u.split)},
                  {"intended", u.intended},
                  {"verbatim", u.verbatim},
                  {"T", u.features.rows()},
                  {"F", u.features.cols()},
                  {"features", u.features.data()}};
        out << line.dump() << "\n";
    }
    atomic_write_file(path, out.str());
}

Corpus load_corpus_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read corpus " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("corpus file empty: " + path);
    json header = json::parse(line);
    Corpus corpus;
    corpus.master_seed = header.at("seed");
    corpus.config = config_from_json(header.at("config"));
    for (const json& s : header.at("speakers")) {
        SpeakerProfile sp;
        sp.id = s.at("id");
        sp.cohort = cohort_from_string(s.at("cohort"));
        sp.severity = severity_from_string(s.at("severity"));
        sp.split = split_from_string(s.at("split"));
        sp.voice_offset = s.at("voice_offset").get<std::vector<double>>();
        sp.rate_factor = s.at("rate_factor");
        sp.dysfluency_rate = s.at("dysfluency_rate");
        sp.smear_width = s.at("smear_width");
        sp.amp_mod_depth = s.at("amp_mod_depth");
        sp.channel_gain_std = s.at("channel_gain_std");
        corpus.speakers.push_back(std::move(sp));
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Utterance u;
        u.id = j.at("id");
        u.speaker = j.at("speaker");
        u.cohort = cohort_from_string(j.at("cohort"));
        u.severity = severity_from_string(j.at("severity"));
        u.split = split_from_string(j.at("split"));
        u.intended = j.at("intended").get<std::vector<std::uint32_t>>();
        u.verbatim = j.at("verbatim").get<std::vector<std::uint32_t>>();
        const std::size_t rows = j.at("T");
        const std::size_t cols = j.at("F");
        u.features = Matrix(rows, cols, j.at("features").get<std::vector<double>>());
        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

}  // namespace hlab
