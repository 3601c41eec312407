// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hlab {

/// Counts from a minimal-cost alignment of reference vs hypothesis tokens.
struct EditCounts {
    std::size_t S = 0;  // substitutions
    std::size_t D = 0;  // deletions
    std::size_t I = 0;  // insertions
    std::size_t C = 0;  // correct matches
    std::size_t N = 0;  // reference length

    EditCounts& operator+=(const EditCounts& o) {
        S += o.S;
        D += o.D;
        I += o.I;
        C += o.C;
        N += o.N;
        return *this;
    }
};

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers match > substitution > deletion > insertion.
EditCounts edit_counts(const std::vector<std::uint32_t>& ref,
                       const std::vector<std::uint32_t>& hyp);

/// 100*(S+D+I)/N; unbounded above. N==0 yields +inf unless the hypothesis
/// was empty too (0 errors), which scores 0.
double wer(const EditCounts& c);

/// 100*(S+D+I)/(S+D+I+C); always within [0, 100]. All-zero counts score 0.
double mer(const EditCounts& c);

/// Pooled speaker score: error and reference totals are summed over the
/// speaker's utterances before dividing.
double speaker_wer(const std::vector<EditCounts>& utterances);
double speaker_mer(const std::vector<EditCounts>& utterances);

/// Quantile by linear interpolation at fractional index q*(n-1) over the
/// sorted values. +inf sentinels sort to the top and propagate.
double quantile(std::vector<double> values, double q);

struct GroupStats {
    std::string key;
    std::size_t n_speakers = 0;
    double p50 = 0.0;
    double iqr = 0.0;
    double p50_mer = 0.0;
};

/// Per-group median and interquartile range over speaker-level scores.
/// Groups arrive as key -> (speaker WERs, speaker MERs); empty groups are
/// skipped. Output ordered by key.
std::vector<GroupStats> group_stats(
    const std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>& groups);

}  // namespace hlab
