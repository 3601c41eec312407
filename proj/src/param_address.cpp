// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/param_address.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace hlab {

const char* to_string(Component c) {
    return c == Component::Encoder ? "encoder" : "decoder";
}

const char* to_string(AttnScope a) {
    switch (a) {
        case AttnScope::Self: return "self";
        case AttnScope::Cross: return "cross";
        case AttnScope::None: return "none";
    }
    return "?";
}

const char* to_string(ParamKind k) {
    switch (k) {
        case ParamKind::K: return "K";
        case ParamKind::Q: return "Q";
        case ParamKind::V: return "V";
        case ParamKind::O: return "O";
        case ParamKind::W1: return "W1";
        case ParamKind::W2: return "W2";
        case ParamKind::LnGain: return "ln_gain";
        case ParamKind::LnBias: return "ln_bias";
        case ParamKind::FeatProj: return "feat_proj";
        case ParamKind::TokEmbed: return "tok_embed";
        case ParamKind::PosEmbed: return "pos_embed";
        case ParamKind::Head: return "head";
    }
    return "?";
}

bool is_global_kind(ParamKind k) {
    return k == ParamKind::FeatProj || k == ParamKind::TokEmbed || k == ParamKind::PosEmbed ||
           k == ParamKind::Head;
}

std::string ParamAddress::str() const {
    if (is_global_kind(kind)) return std::string(to_string(component)) + "." + to_string(kind);
    return std::string(to_string(component)) + "." + std::to_string(layer) + "." +
           to_string(attn) + "." + to_string(kind);
}

static std::vector<std::string> split_dots(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto dot = s.find('.', start);
        parts.push_back(s.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return parts;
}

static ParamKind parse_kind(const std::string& s) {
    static constexpr std::array<ParamKind, 12> kinds = {
        ParamKind::K, ParamKind::Q, ParamKind::V, ParamKind::O, ParamKind::W1, ParamKind::W2,
        ParamKind::LnGain, ParamKind::LnBias, ParamKind::FeatProj, ParamKind::TokEmbed,
        ParamKind::PosEmbed, ParamKind::Head};
    for (ParamKind k : kinds)
        if (s == to_string(k)) return k;
    throw std::invalid_argument("ParamAddress: unknown kind '" + s + "'");
}

ParamAddress ParamAddress::parse(const std::string& s) {
    auto parts = split_dots(s);
    if (parts.size() != 2 && parts.size() != 4)
        throw std::invalid_argument("ParamAddress: malformed '" + s + "'");
    ParamAddress a;
    if (parts[0] == "encoder")
        a.component = Component::Encoder;
    else if (parts[0] == "decoder")
        a.component = Component::Decoder;
    else
        throw std::invalid_argument("ParamAddress: unknown component '" + parts[0] + "'");
    if (parts.size() == 2) {
        a.kind = parse_kind(parts[1]);
        if (!is_global_kind(a.kind))
            throw std::invalid_argument("ParamAddress: kind '" + parts[1] + "' needs layer.attn");
        return a;
    }
    a.layer = std::stoi(parts[1]);
    if (parts[2] == "self")
        a.attn = AttnScope::Self;
    else if (parts[2] == "cross")
        a.attn = AttnScope::Cross;
    else if (parts[2] == "none")
        a.attn = AttnScope::None;
    else
        throw std::invalid_argument("ParamAddress: unknown attn scope '" + parts[2] + "'");
    a.kind = parse_kind(parts[3]);
    if (is_global_kind(a.kind))
        throw std::invalid_argument("ParamAddress: global kind '" + parts[3] + "' takes no layer");
    return a;
}

}  // namespace hlab
