// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace speechlm {

// Scoring normalization: lowercase ASCII, strip the punctuation set
// {.,?!，。？！、}, collapse runs of whitespace to one space, trim.
std::string normalize_text(const std::string& text);

// Character-level Levenshtein distance (unit costs) over the normalized
// reference length. Throws InputError when the normalized ref is empty.
double cer(const std::string& ref, const std::string& hyp);

// Word-level (whitespace split) counterpart.
double wer(const std::string& ref, const std::string& hyp);

// Corpus-level BLEU-4 in [0, 100]: clipped modified n-gram precisions
// aggregated over the corpus, geometric mean, brevity penalty
// exp(1 - ref_len/hyp_len) when the hypothesis is shorter. Any zero
// corpus-level precision yields 0 unless add-one smoothing is requested.
double bleu(const std::vector<std::string>& refs, const std::vector<std::string>& hyps,
            bool smooth_add_one = false);

struct MetricRow {
    std::string testset;
    std::string metric;  // "CER", "WER" or "BLEU"
    double value = 0.0;
    int64_t utterances = 0;
};

// Per-testset rows plus one unweighted AVG. row per metric kind.
struct MetricReport {
    std::vector<MetricRow> rows;
    int64_t skipped_utterances = 0;

    void add_average_rows();
    std::string to_table() const;
    std::string to_jsonl() const;
};

}  // namespace speechlm
