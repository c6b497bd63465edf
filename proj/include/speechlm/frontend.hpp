// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "speechlm/matrix.hpp"
#include "speechlm/wav.hpp"

namespace speechlm {

struct FrontendConfig {
    int n_mels = 80;
    double frame_shift_ms = 10.0;
    double frame_length_ms = 25.0;
    double log_floor = 1e-10;
};

// Log-mel energies, one row per 10 ms frame.
struct FeatureSequence {
    Matrix frames;  // T x n_mels
    double frame_shift_ms = 10.0;
};

// Low-frame-rate stacking: m consecutive frames concatenated, hop n.
struct LfrSequence {
    Matrix frames;  // ceil(T/n) x (n_mels * m)
    double effective_shift_ms = 60.0;
    int m = 7;
    int n = 6;
};

// Hann-windowed power spectrum through a triangular mel bank, floored log.
// T = floor((N - window_samples) / shift_samples) + 1. No dither, no
// pre-emphasis, so repeated calls are bit-identical.
FeatureSequence compute_fbank(const AudioWave& wave, const FrontendConfig& cfg);

// Output row i concatenates frames [i*n, i*n + m), repeating the final frame
// where the window overruns the input.
LfrSequence apply_lfr(const FeatureSequence& feats, int m, int n);

}  // namespace speechlm
