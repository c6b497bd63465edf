// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/adapter.hpp"

#include <cmath>

#include "speechlm/error.hpp"
#include "speechlm/nn.hpp"
#include "speechlm/rng.hpp"

namespace speechlm {

void AdapterConfig::validate() const {
    if (k < 1) throw ConfigError("adapter downsample factor k must be >= 1");
    if (d_enc <= 0 || d_hidden <= 0 || d_llm <= 0) {
        throw ConfigError("adapter dims must be positive");
    }
}

AdapterParams init_adapter(const AdapterConfig& cfg) {
    cfg.validate();
    AdapterParams p;
    p.cfg = cfg;
    const int d_in = cfg.k * cfg.d_enc;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(d_in));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(cfg.d_hidden));
    p.w1 = Param("adapter.w1", uniform_matrix(cfg.d_hidden, d_in, b1, mix_seed(cfg.seed, "adapter.w1")), true);
    p.b1 = Param("adapter.b1", Matrix(1, cfg.d_hidden), true);
    p.w2 = Param("adapter.w2", uniform_matrix(cfg.d_llm, cfg.d_hidden, b2, mix_seed(cfg.seed, "adapter.w2")), true);
    p.b2 = Param("adapter.b2", Matrix(1, cfg.d_llm), true);
    return p;
}

int64_t AdapterParams::param_count() {
    int64_t n = 0;
    for (Param* p : all()) n += p->numel();
    return n;
}

int64_t adapter_param_count(int k, int64_t d_enc, int64_t d_hidden, int64_t d_llm) {
    if (k < 1 || d_enc <= 0 || d_hidden <= 0 || d_llm <= 0) {
        throw ConfigError("adapter_param_count: invalid dimensions");
    }
    return (k * d_enc * d_hidden + d_hidden) + (d_hidden * d_llm + d_llm);
}

int64_t adapter_param_count(const AdapterConfig& cfg) {
    return adapter_param_count(cfg.k, cfg.d_enc, cfg.d_hidden, cfg.d_llm);
}

Tape::Id adapter_graph(Tape& t, AdapterParams& params, Tape::Id enc_frames) {
    const AdapterConfig& cfg = params.cfg;
    if (t.value(enc_frames).cols() != cfg.d_enc) {
        throw ShapeError("adapter expects d_enc=" + std::to_string(cfg.d_enc) + ", got " +
                         std::to_string(t.value(enc_frames).cols()));
    }
    const int rows = t.value(enc_frames).rows();
    if (cfg.tail == TailPolicy::drop && rows < cfg.k) {
        throw InputError("adapter input of " + std::to_string(rows) +
                         " frames is shorter than downsample factor k=" + std::to_string(cfg.k));
    }
    Tape::Id x = t.group_rows(enc_frames, cfg.k, cfg.tail == TailPolicy::pad_repeat);
    x = t.add_row(linear_nt(t, x, params.w1), t.param(params.b1));
    x = t.relu(x);
    x = t.add_row(linear_nt(t, x, params.w2), t.param(params.b2));
    return x;
}

AudioPromptEmbedding adapt(const EncoderOutput& enc_out, AdapterParams& params) {
    Tape t;
    const Tape::Id out = adapter_graph(t, params, t.constant(enc_out.frames));
    AudioPromptEmbedding emb;
    emb.vectors = t.value(out);
    emb.granularity_ms = enc_out.frame_ms * params.cfg.k;
    return emb;
}

}  // namespace speechlm
