// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "speechlm/error.hpp"
#include "speechlm/metrics.hpp"
#include "speechlm/rng.hpp"
#include "speechlm/utf8.hpp"

using namespace speechlm;

namespace {

// Full-table DP oracle, written independently of the rolling-row
// implementation in metrics.cpp.
template <typename Seq>
int64_t dp_oracle(const Seq& a, const Seq& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<std::vector<int64_t>> d(n + 1, std::vector<int64_t>(m + 1, 0));
    for (size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    }
    return d[n][m];
}

std::string random_string(Rng& rng, int max_len) {
    static const std::string alphabet = "abcde ";
    const int len = static_cast<int>(rng.below(max_len + 1));
    std::string s;
    for (int i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    return s;
}

}  // namespace

TEST_CASE("cer basics") {
    CHECK(cer("abc", "abc") == 0.0);
    CHECK(cer("abc", "abd") == doctest::Approx(1.0 / 3.0));
    CHECK(cer("ab", "") == 1.0);
    CHECK(cer("你好", "你坏") == doctest::Approx(0.5));
    CHECK_THROWS_AS(cer("", "abc"), InputError);
    CHECK_THROWS_AS(cer("。！", "x"), InputError);  // empty after normalization
}

TEST_CASE("wer basics") {
    CHECK(wer("the cat sat", "the cat sat") == 0.0);
    CHECK(wer("the cat sat", "the cat") == doctest::Approx(1.0 / 3.0));
    CHECK(wer("a b", "b a") == 1.0);  // two substitutions over two words
    CHECK_THROWS_AS(wer("", "x"), InputError);
}

TEST_CASE("identity property: cer(x,x) = wer(x,x) = 0 (property)") {
    Rng rng(404);
    for (int trial = 0; trial < 40; ++trial) {
        std::string s = random_string(rng, 20);
        if (normalize_text(s).empty()) continue;
        CHECK(cer(s, s) == 0.0);
        if (!normalize_text(s).empty()) {
            CHECK(wer(s, s) == 0.0);
        }
    }
}

TEST_CASE("cer/wer agree with the brute-force DP oracle on random pairs (property)") {
    Rng rng(405);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::string ref = random_string(rng, 20);
        const std::string hyp = random_string(rng, 20);
        const std::string nref = normalize_text(ref);
        if (nref.empty()) continue;
        ++checked;

        const auto rc = utf8_decode(nref);
        const auto hc = utf8_decode(normalize_text(hyp));
        CHECK(cer(ref, hyp) ==
              doctest::Approx(static_cast<double>(dp_oracle(rc, hc)) / rc.size()).epsilon(1e-12));

        std::vector<std::string> rw, hw;
        {
            std::string cur;
            for (char c : nref + " ") {
                if (c == ' ') {
                    if (!cur.empty()) rw.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            cur.clear();
            for (char c : normalize_text(hyp) + " ") {
                if (c == ' ') {
                    if (!cur.empty()) hw.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
        }
        if (!rw.empty()) {
            CHECK(wer(ref, hyp) ==
                  doctest::Approx(static_cast<double>(dp_oracle(rw, hw)) / rw.size())
                      .epsilon(1e-12));
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("normalization rules") {
    CHECK(normalize_text("Hello, World!") == "hello world");
    CHECK(normalize_text("你好。") == "你好");
    CHECK(normalize_text("  a   b\tc \n") == "a b c");
    CHECK(normalize_text("！？。，、") == "");
}

TEST_CASE("bleu: identity corpus scores exactly 100") {
    const std::vector<std::string> refs = {"the cat sat on the mat", "a b c d"};
    CHECK(bleu(refs, refs) == 100.0);
}

TEST_CASE("bleu: hand-derived single-substitution example") {
    // p = (4/5)(3/4)(2/3)(1/2) = 0.2, BP = 1 -> 100 * 0.2^(1/4) = 66.87
    const double score = bleu({"a b c d e"}, {"a b c d f"});
    CHECK(score == doctest::Approx(66.87).epsilon(0.0002));
}

TEST_CASE("bleu: zero 4-gram overlap scores 0 without smoothing") {
    CHECK(bleu({"a b c d e"}, {"a x b y c"}) == 0.0);
    // smoothing lifts it above zero
    CHECK(bleu({"a b c d e"}, {"a x b y c"}, true) > 0.0);
}

TEST_CASE("bleu: brevity penalty applies when hypotheses are shorter") {
    const double full = bleu({"a b c d e a b c d e"}, {"a b c d e a b c d e"});
    const double shorter = bleu({"a b c d e a b c d e"}, {"a b c d e"});
    CHECK(full == 100.0);
    CHECK(shorter < 100.0);
    CHECK(shorter == doctest::Approx(100.0 * std::exp(1.0 - 2.0)).epsilon(1e-6));
}

TEST_CASE("bleu is invariant under corpus pair permutation") {
    const std::vector<std::string> refs = {"a b c d", "e f g h", "x y z w"};
    const std::vector<std::string> hyps = {"a b c e", "e f g h", "x y w z"};
    const double base = bleu(refs, hyps);
    std::vector<std::string> refs2 = {refs[2], refs[0], refs[1]};
    std::vector<std::string> hyps2 = {hyps[2], hyps[0], hyps[1]};
    CHECK(bleu(refs2, hyps2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("bleu input validation") {
    CHECK_THROWS_AS(bleu({"a"}, {}), InputError);
    CHECK_THROWS_AS(bleu({}, {}), InputError);
}

TEST_CASE("metric report averages are unweighted means") {
    MetricReport report;
    report.rows.push_back({"set1", "CER", 0.02, 10});
    report.rows.push_back({"set2", "CER", 0.04, 30});
    report.add_average_rows();
    REQUIRE(report.rows.size() == 3);
    const MetricRow& avg = report.rows.back();
    CHECK(avg.testset == "AVG.");
    CHECK(avg.value == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(avg.utterances == 40);
    CHECK(report.to_table().find("AVG.") != std::string::npos);
    CHECK(report.to_jsonl().find("\"CER\"") != std::string::npos);
}
