// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace speechlm {

// Mono waveform with samples in [-1, 1].
struct AudioWave {
    std::vector<double> samples;
    int sample_rate = 16000;
};

// Reads a canonical 44-byte-header 16-bit PCM mono WAV. Compressed formats,
// multi-channel audio and other bit depths are rejected with FormatError.
AudioWave read_wav(const std::string& path);

// Writes 16-bit PCM mono; samples are clamped to [-1, 1].
void write_wav(const std::string& path, const AudioWave& wave);

}  // namespace speechlm
