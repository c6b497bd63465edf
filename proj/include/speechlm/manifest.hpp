// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace speechlm {

// One JSONL utterance record: {"id", "audio", "text", "translation"?,
// "lang", "testset"?}.
struct ManifestRecord {
    std::string id;
    std::string audio;  // WAV path, relative paths resolved against the manifest directory
    std::string text;
    std::optional<std::string> translation;
    std::string lang = "zh";  // "zh" or "en"
    std::string testset = "default";
};

struct ManifestError {
    int line = 0;
    std::string message;
};

struct ManifestLoadResult {
    std::vector<ManifestRecord> records;
    std::vector<ManifestError> errors;
};

// Loads every parseable line; malformed lines land in `errors` with their
// line number. Duplicate ids abort with ValidationError; an unreadable file
// aborts with IoError.
ManifestLoadResult read_manifest(const std::string& path);

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

struct SynthConfig {
    uint64_t seed = 7;
    int n_utts = 10;
    std::string out_dir;
    // Pool of codepoints targets are drawn from; index in the pool selects
    // the tone frequency.
    std::string char_pool = "abcdefgh你好北京上海天气";
    int min_chars = 3;
    int max_chars = 6;
    double burst_ms = 200.0;
    int sample_rate = 16000;
    double base_hz = 220.0;
    double step_hz = 35.0;
    std::string testset = "train";
};

// Deterministic tone-sequence dataset: one sine burst per target character
// (frequency = base + pool_index * step), so audio length is
// len(target) * burst_ms. Returns the records it wrote; regeneration with
// the same seed is byte-identical. The translation field maps each
// character to "w<pool_index>" tokens.
std::vector<ManifestRecord> synth_dataset(const SynthConfig& cfg);

}  // namespace speechlm
