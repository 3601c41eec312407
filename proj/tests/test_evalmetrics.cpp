// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "hlab/evalmetrics.hpp"
#include "hlab/rng.hpp"

using namespace hlab;

namespace {

using Seq = std::vector<std::uint32_t>;

// Independent oracle: exhaustive recursion over all alignments, returning the
// minimal total edit cost (no tie preference — cost only).
std::size_t min_cost_oracle(const Seq& ref, const Seq& hyp, std::size_t i, std::size_t j) {
    if (i == ref.size()) return hyp.size() - j;  // remaining hyp -> insertions
    if (j == hyp.size()) return ref.size() - i;  // remaining ref -> deletions
    std::size_t best = (ref[i] == hyp[j] ? 0 : 1) + min_cost_oracle(ref, hyp, i + 1, j + 1);
    best = std::min(best, 1 + min_cost_oracle(ref, hyp, i + 1, j));  // delete ref[i]
    best = std::min(best, 1 + min_cost_oracle(ref, hyp, i, j + 1));  // insert hyp[j]
    return best;
}

}  // namespace

TEST_CASE("edit_counts identity") {
    const EditCounts c = edit_counts({5, 6, 7}, {5, 6, 7});
    CHECK(c.S == 0);
    CHECK(c.D == 0);
    CHECK(c.I == 0);
    CHECK(c.C == 3);
    CHECK(c.N == 3);
}

TEST_CASE("edit_counts forced insertions") {
    // ref "a b", hyp "a x b y": the only 2-cost alignment is two insertions
    const EditCounts c = edit_counts({10, 11}, {10, 99, 11, 98});
    CHECK(c.S == 0);
    CHECK(c.D == 0);
    CHECK(c.I == 2);
    CHECK(c.C == 2);
}

TEST_CASE("edit_counts empty cases") {
    const EditCounts both = edit_counts({}, {});
    CHECK(both.N == 0);
    CHECK(both.S + both.D + both.I + both.C == 0);
    const EditCounts del = edit_counts({1, 2, 3}, {});
    CHECK(del.D == 3);
    CHECK(del.C == 0);
    const EditCounts ins = edit_counts({}, {4, 5});
    CHECK(ins.I == 2);
    CHECK(ins.N == 0);
}

TEST_CASE("edit_counts invariant S+D+C==N and cost vs exhaustive oracle") {
    Rng rng(20260825);
    for (int trial = 0; trial < 500; ++trial) {
        Seq ref(rng.below(7)), hyp(rng.below(7));
        for (auto& t : ref) t = static_cast<std::uint32_t>(rng.below(4));
        for (auto& t : hyp) t = static_cast<std::uint32_t>(rng.below(4));
        const EditCounts c = edit_counts(ref, hyp);
        CHECK(c.S + c.D + c.C == c.N);
        CHECK(c.N == ref.size());
        CHECK(c.C + c.I <= hyp.size());
        CHECK(c.S + c.I + c.C == hyp.size());
        CHECK(c.S + c.D + c.I == min_cost_oracle(ref, hyp, 0, 0));
    }
}

TEST_CASE("wer formula and sentinels") {
    CHECK(wer({0, 0, 0, 3, 3}) == 0.0);
    // ref length 2 fully matched plus 8 insertions: 100*8/2
    CHECK(wer({0, 0, 8, 2, 2}) == 400.0);
    CHECK(wer({0, 0, 0, 0, 0}) == 0.0);  // empty ref, empty hyp
    CHECK(std::isinf(wer({0, 0, 3, 0, 0})));  // errors with no reference
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        EditCounts c;
        c.S = rng.below(5);
        c.D = rng.below(5);
        c.C = rng.below(5);
        c.I = rng.below(5);
        c.N = c.S + c.D + c.C;
        if (c.N == 0) continue;
        CHECK(wer(c) == doctest::Approx(100.0 * double(c.S + c.D + c.I) / double(c.N)));
    }
}

TEST_CASE("mer bounded and formula") {
    CHECK(mer({0, 0, 8, 2, 2}) == 80.0);
    CHECK(mer({0, 0, 0, 5, 5}) == 0.0);
    CHECK(mer({0, 0, 0, 0, 0}) == 0.0);
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        EditCounts c;
        c.S = rng.below(5);
        c.D = rng.below(5);
        c.C = rng.below(5);
        c.I = rng.below(5);
        c.N = c.S + c.D + c.C;
        const double m = mer(c);
        CHECK(m >= 0.0);
        CHECK(m <= 100.0);
        const std::size_t denom = c.S + c.D + c.I + c.C;
        if (denom > 0)
            CHECK(m == doctest::Approx(100.0 * double(c.S + c.D + c.I) / double(denom)));
        // WER >= MER universally (S+D+I+C >= N since S+D+C == N)
        if (c.N > 0) CHECK(wer(c) >= m - 1e-12);
    }
}

TEST_CASE("speaker_wer pools errors before dividing") {
    // utterance A: 0% on N=4; utterance B: 100% on N=4 -> pooled 50%
    const std::vector<EditCounts> utts = {{0, 0, 0, 4, 4}, {4, 0, 0, 0, 4}};
    CHECK(speaker_wer(utts) == 50.0);
    CHECK(speaker_wer({{1, 0, 1, 2, 3}}) == wer({1, 0, 1, 2, 3}));

    Rng rng(9);
    for (int t = 0; t < 100; ++t) {
        std::vector<EditCounts> v;
        EditCounts total;
        const std::size_t n = 1 + rng.below(6);
        for (std::size_t i = 0; i < n; ++i) {
            EditCounts c;
            c.S = rng.below(4);
            c.D = rng.below(4);
            c.C = rng.below(4);
            c.I = rng.below(4);
            c.N = c.S + c.D + c.C;
            total += c;
            v.push_back(c);
        }
        if (total.N == 0) continue;
        CHECK(speaker_wer(v) ==
              doctest::Approx(100.0 * double(total.S + total.D + total.I) / double(total.N)));
    }
}

TEST_CASE("quantile linear interpolation") {
    CHECK(quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
    CHECK(quantile({5, 1, 4, 2, 3}, 0.75) - quantile({5, 1, 4, 2, 3}, 0.25) == 2.0);
    CHECK(quantile({10}, 0.5) == 10.0);
    CHECK(quantile({1, 2}, 0.5) == 1.5);
    // fractional index: q=0.1 over 5 values -> index 0.4 -> 1.4
    CHECK(quantile({1, 2, 3, 4, 5}, 0.1) == doctest::Approx(1.4));
    // +inf sentinels sort last and do not poison lower quantiles
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(quantile({1, 2, 3, 4, inf}, 0.5) == 3.0);
    CHECK(std::isinf(quantile({1, 2, 3, 4, inf}, 1.0)));
}

TEST_CASE("quantile vs sort-and-interpolate oracle") {
    Rng rng(10);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> v(1 + rng.below(12));
        for (double& x : v) x = rng.uniform(0.0, 100.0);
        const double q = rng.uniform();
        std::vector<double> s = v;
        std::sort(s.begin(), s.end());
        const double pos = q * double(s.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - double(lo);
        const double expect =
            frac == 0.0 ? s[lo] : s[lo] * (1.0 - frac) + s[lo + 1] * frac;
        CHECK(quantile(v, q) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("median robust to one outlier speaker") {
    // odd n, replaced value already above the median: P50 unchanged
    std::vector<double> v = {10, 20, 30, 40, 50};
    const double p50 = quantile(v, 0.5);
    v[4] = 1e6;
    CHECK(quantile(v, 0.5) == p50);
}

TEST_CASE("group_stats ordering and content") {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    groups["stutter/mild"] = {{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}};
    groups["dysarthria/severe"] = {{10}, {9}};
    groups["empty"] = {{}, {}};
    const auto stats = group_stats(groups);
    REQUIRE(stats.size() == 2);  // empty group skipped
    CHECK(stats[0].key == "dysarthria/severe");
    CHECK(stats[0].n_speakers == 1);
    CHECK(stats[0].p50 == 10.0);
    CHECK(stats[0].iqr == 0.0);
    CHECK(stats[0].p50_mer == 9.0);
    CHECK(stats[1].key == "stutter/mild");
    CHECK(stats[1].p50 == 3.0);
    CHECK(stats[1].iqr == 2.0);
}

TEST_CASE("statistics are order independent") {
    std::vector<double> a = {4, 1, 3, 2, 8};
    std::vector<double> b = {8, 3, 2, 4, 1};
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) CHECK(quantile(a, q) == quantile(b, q));
}
