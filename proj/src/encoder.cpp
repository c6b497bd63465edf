// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/encoder.hpp"

#include <cmath>
#include <string>

#include "speechlm/checkpoint.hpp"
#include "speechlm/error.hpp"
#include "speechlm/nn.hpp"
#include "speechlm/rng.hpp"

namespace speechlm {

namespace {
constexpr double kNormEps = 1e-6;

Param weight(const std::string& name, int rows, int cols, uint64_t seed, bool trainable) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    return Param(name, uniform_matrix(rows, cols, bound, mix_seed(seed, name)), trainable);
}

Param zeros_param(const std::string& name, int rows, int cols, bool trainable) {
    return Param(name, Matrix(rows, cols), trainable);
}

Param ones_param(const std::string& name, int cols, bool trainable) {
    return Param(name, Matrix::full(1, cols, 1.0), trainable);
}
}  // namespace

void EncoderConfig::validate() const {
    if (d_in <= 0 || d_enc <= 0 || n_layers <= 0 || n_heads <= 0) {
        throw ConfigError("encoder dims must be positive");
    }
    if (d_enc % n_heads != 0) {
        throw ConfigError("d_enc=" + std::to_string(d_enc) + " not divisible by n_heads=" +
                          std::to_string(n_heads));
    }
}

EncoderParams init_encoder(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    const bool tr = cfg.trainable;
    const uint64_t s = cfg.seed;
    p.in_proj_w = weight("encoder.in_proj.w", cfg.d_enc, cfg.d_in, s, tr);
    p.in_proj_b = zeros_param("encoder.in_proj.b", 1, cfg.d_enc, tr);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string base = "encoder.blk" + std::to_string(l) + ".";
        EncoderParams::Block b;
        b.norm1_g = ones_param(base + "norm1.g", cfg.d_enc, tr);
        b.wq = weight(base + "attn.wq", cfg.d_enc, cfg.d_enc, s, tr);
        b.wk = weight(base + "attn.wk", cfg.d_enc, cfg.d_enc, s, tr);
        b.wv = weight(base + "attn.wv", cfg.d_enc, cfg.d_enc, s, tr);
        b.wo = weight(base + "attn.wo", cfg.d_enc, cfg.d_enc, s, tr);
        b.norm2_g = ones_param(base + "norm2.g", cfg.d_enc, tr);
        b.ffn_w1 = weight(base + "ffn.w1", cfg.ffn_dim(), cfg.d_enc, s, tr);
        b.ffn_b1 = zeros_param(base + "ffn.b1", 1, cfg.ffn_dim(), tr);
        b.ffn_w2 = weight(base + "ffn.w2", cfg.d_enc, cfg.ffn_dim(), s, tr);
        b.ffn_b2 = zeros_param(base + "ffn.b2", 1, cfg.d_enc, tr);
        p.blocks.push_back(std::move(b));
    }
    p.final_norm_g = ones_param("encoder.final_norm.g", cfg.d_enc, tr);
    return p;
}

std::vector<Param*> EncoderParams::all() {
    std::vector<Param*> out{&in_proj_w, &in_proj_b};
    for (auto& b : blocks) {
        for (Param* p : {&b.norm1_g, &b.wq, &b.wk, &b.wv, &b.wo, &b.norm2_g, &b.ffn_w1, &b.ffn_b1,
                         &b.ffn_w2, &b.ffn_b2}) {
            out.push_back(p);
        }
    }
    out.push_back(&final_norm_g);
    return out;
}

int64_t EncoderParams::param_count() {
    int64_t n = 0;
    for (Param* p : all()) n += p->numel();
    return n;
}

Tape::Id encoder_graph(Tape& t, EncoderParams& params, Tape::Id input) {
    const EncoderConfig& cfg = params.cfg;
    if (t.value(input).cols() != cfg.d_in) {
        throw ShapeError("encoder expects feature dim " + std::to_string(cfg.d_in) + ", got " +
                         std::to_string(t.value(input).cols()));
    }
    const int rows = t.value(input).rows();
    Tape::Id x = t.add_row(linear_nt(t, input, params.in_proj_w), t.param(params.in_proj_b));
    x = t.add(x, t.constant(sinusoidal_positions(rows, cfg.d_enc)));
    for (auto& b : params.blocks) {
        Tape::Id h = t.rms_norm(x, t.param(b.norm1_g), kNormEps);
        Tape::Id attn = attention_core(t, linear_nt(t, h, b.wq), linear_nt(t, h, b.wk),
                                       linear_nt(t, h, b.wv), cfg.n_heads, /*causal=*/false);
        x = t.add(x, linear_nt(t, attn, b.wo));
        Tape::Id f = t.rms_norm(x, t.param(b.norm2_g), kNormEps);
        f = t.add_row(linear_nt(t, f, b.ffn_w1), t.param(b.ffn_b1));
        f = t.relu(f);
        f = t.add_row(linear_nt(t, f, b.ffn_w2), t.param(b.ffn_b2));
        x = t.add(x, f);
    }
    return t.rms_norm(x, t.param(params.final_norm_g), kNormEps);
}

EncoderOutput encode(const LfrSequence& lfr, EncoderParams& params) {
    Tape t;
    const Tape::Id out = encoder_graph(t, params, t.constant(lfr.frames));
    EncoderOutput res;
    res.frames = t.value(out);
    res.frame_ms = lfr.effective_shift_ms;
    return res;
}

EncoderParams import_encoder_weights(const std::string& path, const EncoderConfig& cfg) {
    const CheckpointData data = load_checkpoint_file(path);
    EncoderParams params = init_encoder(cfg);
    for (Param* p : params.all()) {
        const Matrix* m = data.find(p->name);
        if (m == nullptr) {
            throw FormatError("checkpoint '" + path + "' is missing tensor '" + p->name + "'");
        }
        if (!m->same_shape(p->value)) {
            throw FormatError("tensor '" + p->name + "' is " + m->shape_str() +
                              " in the checkpoint but the config expects " +
                              p->value.shape_str());
        }
        p->value = *m;
        p->zero_grad();
    }
    return params;
}

}  // namespace speechlm
