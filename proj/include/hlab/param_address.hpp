// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <string>

namespace hlab {

enum class Component { Encoder, Decoder };
enum class AttnScope { Self, Cross, None };
enum class ParamKind {
    K, Q, V, O, W1, W2, LnGain, LnBias,
    FeatProj, TokEmbed, PosEmbed, Head,
};

const char* to_string(Component c);
const char* to_string(AttnScope a);
const char* to_string(ParamKind k);

bool is_global_kind(ParamKind k);  // feat_proj / tok_embed / pos_embed / head

/// Address of one named weight matrix in the model. Layered parameters
/// print as "decoder.1.self.K"; per-component globals as "encoder.pos_embed".
struct ParamAddress {
    Component component = Component::Encoder;
    int layer = 0;  // 0 for global kinds
    ParamKind kind = ParamKind::K;
    AttnScope attn = AttnScope::None;

    auto operator<=>(const ParamAddress&) const = default;

    std::string str() const;
    static ParamAddress parse(const std::string& s);

    static ParamAddress layered(Component c, int layer, AttnScope a, ParamKind k) {
        return {c, layer, k, a};
    }
    static ParamAddress global(Component c, ParamKind k) { return {c, 0, k, AttnScope::None}; }
};

}  // namespace hlab
