// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hlab {

namespace {

enum class Step : std::uint8_t { Match, Sub, Del, Ins, Start };

}  // namespace

EditCounts edit_counts(const std::vector<std::uint32_t>& ref,
                       const std::vector<std::uint32_t>& hyp) {
    const std::size_t n = ref.size();
    const std::size_t m = hyp.size();
    std::vector<std::size_t> cost((n + 1) * (m + 1));
    std::vector<Step> from((n + 1) * (m + 1), Step::Start);
    auto idx = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
    for (std::size_t i = 1; i <= n; ++i) {
        cost[idx(i, 0)] = i;
        from[idx(i, 0)] = Step::Del;
    }
    for (std::size_t j = 1; j <= m; ++j) {
        cost[idx(0, j)] = j;
        from[idx(0, j)] = Step::Ins;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const bool eq = ref[i - 1] == hyp[j - 1];
            const std::size_t diag = cost[idx(i - 1, j - 1)] + (eq ? 0 : 1);
            const std::size_t del = cost[idx(i - 1, j)] + 1;
            const std::size_t ins = cost[idx(i, j - 1)] + 1;
            // tie preference: match > substitution > deletion > insertion
            std::size_t best = diag;
            Step step = eq ? Step::Match : Step::Sub;
            if (del < best) {
                best = del;
                step = Step::Del;
            }
            if (ins < best) {
                best = ins;
                step = Step::Ins;
            }
            cost[idx(i, j)] = best;
            from[idx(i, j)] = step;
        }
    }
    EditCounts c;
    c.N = n;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        switch (from[idx(i, j)]) {
            case Step::Match: ++c.C; --i; --j; break;
            case Step::Sub: ++c.S; --i; --j; break;
            case Step::Del: ++c.D; --i; break;
            case Step::Ins: ++c.I; --j; break;
            case Step::Start: throw std::logic_error("edit_counts: broken backtrace");
        }
    }
    return c;
}

double wer(const EditCounts& c) {
    const std::size_t errors = c.S + c.D + c.I;
    if (c.N == 0) return errors == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return 100.0 * static_cast<double>(errors) / static_cast<double>(c.N);
}

double mer(const EditCounts& c) {
    const std::size_t errors = c.S + c.D + c.I;
    const std::size_t denom = errors + c.C;
    if (denom == 0) return 0.0;
    return 100.0 * static_cast<double>(errors) / static_cast<double>(denom);
}

double speaker_wer(const std::vector<EditCounts>& utterances) {
    if (utterances.empty()) throw std::invalid_argument("speaker_wer: no scored utterances");
    EditCounts total;
    for (const EditCounts& c : utterances) total += c;
    return wer(total);
}

double speaker_mer(const std::vector<EditCounts>& utterances) {
    if (utterances.empty()) throw std::invalid_argument("speaker_mer: no scored utterances");
    EditCounts total;
    for (const EditCounts& c : utterances) total += c;
    return mer(total);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty input");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: q outside [0,1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return values[lo];
    return (1.0 - frac) * values[lo] + frac * values[lo + 1];
}

std::vector<GroupStats> group_stats(
    const std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>& groups) {
    std::vector<GroupStats> out;
    for (const auto& [key, scores] : groups) {
        const auto& [wers, mers] = scores;
        if (wers.empty()) continue;
        GroupStats g;
        g.key = key;
        g.n_speakers = wers.size();
        g.p50 = quantile(wers, 0.5);
        g.iqr = quantile(wers, 0.75) - quantile(wers, 0.25);
        g.p50_mer = mers.empty() ? 0.0 : quantile(mers, 0.5);
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace hlab
