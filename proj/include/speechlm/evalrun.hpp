// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "speechlm/manifest.hpp"
#include "speechlm/metrics.hpp"
#include "speechlm/model.hpp"
#include "speechlm/train.hpp"

namespace speechlm {

struct EvalOptions {
    TaskKind task = TaskKind::asr;
    int max_new = 96;
    // Bypasses the model and scores references against themselves; used to
    // sanity-check the metric plumbing.
    bool oracle_decode = false;
    // Where to write raw hypotheses (empty = next to nothing).
    std::string hyp_path;
};

struct EvalResult {
    MetricReport report;
    std::vector<std::pair<std::string, std::string>> hypotheses;  // id -> decoded text
};

// Greedy-decodes every utterance, normalizes, and scores per testset tag:
// ASR scores CER for zh and WER for en; AST scores BLEU on translations;
// MTL splits the output at the first newline and scores both. Missing audio
// files are recorded and excluded.
EvalResult evaluate_manifest(SpeechLmModel& model, const std::vector<ManifestRecord>& records,
                             const EvalOptions& opts);

enum class SweepAxis { granularity_k, llm_mode, encoder_variant };

SweepAxis parse_sweep_axis(const std::string& name);

struct SweepSpec {
    SweepAxis axis = SweepAxis::granularity_k;
    std::vector<std::string> values;
    ModelConfig base_model;
    TrainConfig base_train;
    int64_t steps_budget = 50;
};

struct SweepRow {
    std::string value;
    double final_loss = 0.0;
    bool converged = false;
    std::string error;  // non-empty when this run failed
};

// Trains one fresh model per axis value with shared seed/data; converged
// means final loss < 0.5 * ln(vocab). A failing run is recorded and the
// sweep continues.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::vector<ManifestRecord>& records);

std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace speechlm
