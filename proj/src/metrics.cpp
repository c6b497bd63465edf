// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "speechlm/error.hpp"
#include "speechlm/utf8.hpp"

namespace speechlm {

namespace {

const std::set<uint32_t>& punctuation() {
    // {.,?!} plus fullwidth 。，？！ and 、
    static const std::set<uint32_t> p = {'.', ',', '?', '!', 0x3002, 0xFF0C, 0xFF1F, 0xFF01, 0x3001};
    return p;
}

template <typename Seq>
int64_t levenshtein(const Seq& a, const Seq& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int64_t> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int64_t>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::vector<std::string> split_words(const std::string& normalized) {
    std::vector<std::string> words;
    std::istringstream ss(normalized);
    std::string w;
    while (ss >> w) words.push_back(w);
    return words;
}

}  // namespace

std::string normalize_text(const std::string& text) {
    std::vector<uint32_t> out;
    bool pending_space = false;
    for (uint32_t cp : utf8_decode(text)) {
        if (cp >= 'A' && cp <= 'Z') cp = cp - 'A' + 'a';
        if (punctuation().count(cp)) continue;
        if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r') {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(cp);
    }
    return utf8_encode(out);
}

double cer(const std::string& ref, const std::string& hyp) {
    const std::vector<uint32_t> r = utf8_decode(normalize_text(ref));
    const std::vector<uint32_t> h = utf8_decode(normalize_text(hyp));
    if (r.empty()) throw InputError("cer: reference is empty after normalization");
    return static_cast<double>(levenshtein(r, h)) / static_cast<double>(r.size());
}

double wer(const std::string& ref, const std::string& hyp) {
    const std::vector<std::string> r = split_words(normalize_text(ref));
    const std::vector<std::string> h = split_words(normalize_text(hyp));
    if (r.empty()) throw InputError("wer: reference is empty after normalization");
    return static_cast<double>(levenshtein(r, h)) / static_cast<double>(r.size());
}

namespace {
using Ngram = std::vector<std::string>;

std::map<Ngram, int64_t> ngram_counts(const std::vector<std::string>& words, int n) {
    std::map<Ngram, int64_t> counts;
    if (static_cast<int>(words.size()) < n) return counts;
    for (size_t i = 0; i + n <= words.size(); ++i) {
        counts[Ngram(words.begin() + i, words.begin() + i + n)] += 1;
    }
    return counts;
}
}  // namespace

double bleu(const std::vector<std::string>& refs, const std::vector<std::string>& hyps,
            bool smooth_add_one) {
    if (refs.size() != hyps.size()) {
        throw InputError("bleu: refs and hyps must have equal length (" +
                         std::to_string(refs.size()) + " vs " + std::to_string(hyps.size()) + ")");
    }
    if (refs.empty()) throw InputError("bleu: empty corpus");

    constexpr int kMaxOrder = 4;
    int64_t matched[kMaxOrder] = {0, 0, 0, 0};
    int64_t total[kMaxOrder] = {0, 0, 0, 0};
    int64_t ref_len = 0, hyp_len = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        const std::vector<std::string> r = split_words(normalize_text(refs[i]));
        const std::vector<std::string> h = split_words(normalize_text(hyps[i]));
        ref_len += static_cast<int64_t>(r.size());
        hyp_len += static_cast<int64_t>(h.size());
        for (int n = 1; n <= kMaxOrder; ++n) {
            const auto rc = ngram_counts(r, n);
            const auto hc = ngram_counts(h, n);
            for (const auto& [gram, count] : hc) {
                total[n - 1] += count;
                auto it = rc.find(gram);
                if (it != rc.end()) matched[n - 1] += std::min(count, it->second);
            }
        }
    }

    double log_precision = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
        int64_t m = matched[n], t = total[n];
        if (smooth_add_one) {
            m += 1;
            t += 1;
        }
        if (m == 0 || t == 0) return 0.0;
        log_precision += std::log(static_cast<double>(m) / static_cast<double>(t));
    }
    double bp = 1.0;
    if (hyp_len == 0) return 0.0;
    if (hyp_len < ref_len) {
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    }
    return 100.0 * bp * std::exp(log_precision / kMaxOrder);
}

void MetricReport::add_average_rows() {
    std::map<std::string, std::pair<double, int64_t>> sums;  // metric -> (value sum, row count)
    std::map<std::string, int64_t> utts;
    for (const auto& row : rows) {
        if (row.testset == "AVG.") continue;
        sums[row.metric].first += row.value;
        sums[row.metric].second += 1;
        utts[row.metric] += row.utterances;
    }
    for (const auto& [metric, acc] : sums) {
        MetricRow avg;
        avg.testset = "AVG.";
        avg.metric = metric;
        avg.value = acc.first / static_cast<double>(acc.second);
        avg.utterances = utts[metric];
        rows.push_back(avg);
    }
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << "testset              metric   value      utts\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%-20s %-8s %9.4f %6lld\n", row.testset.c_str(),
                      row.metric.c_str(), row.value, static_cast<long long>(row.utterances));
        os << buf;
    }
    if (skipped_utterances > 0) {
        os << "(skipped " << skipped_utterances << " utterances with errors)\n";
    }
    return os.str();
}

std::string MetricReport::to_jsonl() const {
    std::ostringstream os;
    for (const auto& row : rows) {
        os << "{\"testset\":\"" << row.testset << "\",\"metric\":\"" << row.metric
           << "\",\"value\":" << row.value << ",\"utterances\":" << row.utterances << "}\n";
    }
    return os.str();
}

}  // namespace speechlm
