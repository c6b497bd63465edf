// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "speechlm/encoder.hpp"
#include "speechlm/tape.hpp"

namespace speechlm {

enum class TailPolicy { drop, pad_repeat };

struct AdapterConfig {
    int k = 2;             // time downsample factor
    int d_enc = 64;
    int d_hidden = 128;
    int d_llm = 64;
    TailPolicy tail = TailPolicy::drop;
    uint64_t seed = 0;

    void validate() const;
};

// One embedding per k encoder frames: groups of k consecutive frames are
// concatenated, then projected through linear / ReLU / linear into the LLM
// embedding space. This is the only module that is always trainable.
struct AdapterParams {
    AdapterConfig cfg;
    Param w1, b1;  // (k * d_enc) -> d_hidden
    Param w2, b2;  // d_hidden -> d_llm

    std::vector<Param*> all() { return {&w1, &b1, &w2, &b2}; }
    int64_t param_count();
};

struct AudioPromptEmbedding {
    Matrix vectors;  // T'' x d_llm
    double granularity_ms = 120.0;
};

AdapterParams init_adapter(const AdapterConfig& cfg);

// (k*d_enc*d_hidden + d_hidden) + (d_hidden*d_llm + d_llm).
int64_t adapter_param_count(const AdapterConfig& cfg);
int64_t adapter_param_count(int k, int64_t d_enc, int64_t d_hidden, int64_t d_llm);

Tape::Id adapter_graph(Tape& t, AdapterParams& params, Tape::Id enc_frames);

AudioPromptEmbedding adapt(const EncoderOutput& enc_out, AdapterParams& params);

}  // namespace speechlm
