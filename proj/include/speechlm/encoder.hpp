// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "speechlm/frontend.hpp"
#include "speechlm/tape.hpp"

namespace speechlm {

struct EncoderConfig {
    int d_in = 560;       // n_mels * lfr_m
    int d_enc = 64;
    int n_layers = 2;
    int n_heads = 4;
    bool trainable = false;
    uint64_t seed = 0;

    int ffn_dim() const { return 4 * d_enc; }
    void validate() const;
};

// Pre-norm transformer encoder: input projection, sinusoidal positions,
// then n_layers of bidirectional self-attention + two-layer ReLU FFN.
// Initialization is uniform(+-1/sqrt(fan_in)) per weight, seeded per tensor
// name; biases and norm gains start at 0 and 1.
struct EncoderParams {
    struct Block {
        Param norm1_g, wq, wk, wv, wo;
        Param norm2_g, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    EncoderConfig cfg;
    Param in_proj_w, in_proj_b;
    std::vector<Block> blocks;
    Param final_norm_g;

    std::vector<Param*> all();
    int64_t param_count();
};

struct EncoderOutput {
    Matrix frames;          // T' x d_enc
    double frame_ms = 60.0; // effective shift of one row
};

EncoderParams init_encoder(const EncoderConfig& cfg);

// Builds the forward graph; input is T' x d_in.
Tape::Id encoder_graph(Tape& t, EncoderParams& params, Tape::Id input);

// Frame-synchronous forward pass: exactly one output row per LFR row.
EncoderOutput encode(const LfrSequence& lfr, EncoderParams& params);

// Loads the encoder tensors from a checkpoint container. Stands in for
// dropping in externally pretrained encoder weights; every tensor the
// config declares must be present with a matching shape (FormatError).
EncoderParams import_encoder_weights(const std::string& path, const EncoderConfig& cfg);

}  // namespace speechlm
