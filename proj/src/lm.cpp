// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/lm.hpp"

#include <cmath>

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
}  // namespace

const char* llm_mode_name(LlmMode mode) {
    switch (mode) {
        case LlmMode::frozen: return "frozen";
        case LlmMode::lora: return "lora";
        case LlmMode::full: return "full";
    }
    return "?";
}

LlmMode parse_llm_mode(const std::string& name) {
    if (name == "frozen") return LlmMode::frozen;
    if (name == "lora") return LlmMode::lora;
    if (name == "full") return LlmMode::full;
    throw ConfigError("unknown llm_mode '" + name + "' (expected frozen, lora or full)");
}

void LoraConfig::validate() const {
    if (r < 0) throw ConfigError("lora_r must be >= 0");
    if (alpha <= 0.0) throw ConfigError("lora_alpha must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("lora_dropout must be in [0, 1)");
    for (const auto& t : targets) {
        if (kAllLoraTargets.count(t) == 0) throw ConfigError("unknown lora target '" + t + "'");
    }
}

void LmConfig::validate() const {
    if (d_llm <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_seq <= 0) {
        throw ConfigError("lm dims must be positive");
    }
    if (vocab_size <= 0) throw ConfigError("lm vocab_size must be set from the tokenizer");
    if (d_llm % n_heads != 0) {
        throw ConfigError("d_llm=" + std::to_string(d_llm) + " not divisible by n_heads=" +
                          std::to_string(n_heads));
    }
}

namespace {
LoraLinear make_linear(const std::string& name, int d_out, int d_in, const LmConfig& cfg,
                       const LoraConfig& lora, const std::string& target) {
    const bool base_trainable = cfg.mode == LlmMode::full;
    LoraLinear lin;
    lin.w = weight(name + ".w", d_out, d_in, cfg.seed, base_trainable);
    if (cfg.mode == LlmMode::lora && lora.r > 0 && lora.targets.count(target) > 0) {
        LoraPair pair;
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        pair.a = Param(name + ".lora_a",
                       uniform_matrix(lora.r, d_in, bound, mix_seed(cfg.seed, name + ".lora_a")),
                       true);
        pair.b = Param(name + ".lora_b", Matrix(d_out, lora.r), true);
        lin.lora = std::move(pair);
    }
    return lin;
}
}  // namespace

LmParams init_lm(const LmConfig& cfg, const LoraConfig& lora) {
    cfg.validate();
    lora.validate();
    const bool tr = cfg.mode == LlmMode::full;
    LmParams p;
    p.cfg = cfg;
    p.lora_cfg = lora;
    p.tok_embed = weight("llm.tok_embed", cfg.vocab_size, cfg.d_llm, cfg.seed, tr);
    p.pos_embed = weight("llm.pos_embed", cfg.max_seq, cfg.d_llm, cfg.seed, tr);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string base = "llm.layer" + std::to_string(l) + ".";
        LmParams::Layer layer;
        layer.norm1_g = Param(base + "norm1.g", Matrix::full(1, cfg.d_llm, 1.0), tr);
        layer.wq = make_linear(base + "q_proj", cfg.d_llm, cfg.d_llm, cfg, lora, "q_proj");
        layer.wk = make_linear(base + "k_proj", cfg.d_llm, cfg.d_llm, cfg, lora, "k_proj");
        layer.wv = make_linear(base + "v_proj", cfg.d_llm, cfg.d_llm, cfg, lora, "v_proj");
        layer.wo = make_linear(base + "o_proj", cfg.d_llm, cfg.d_llm, cfg, lora, "o_proj");
        layer.norm2_g = Param(base + "norm2.g", Matrix::full(1, cfg.d_llm, 1.0), tr);
        layer.gate = make_linear(base + "gate_proj", cfg.d_ff, cfg.d_llm, cfg, lora, "gate_proj");
        layer.up = make_linear(base + "up_proj", cfg.d_ff, cfg.d_llm, cfg, lora, "up_proj");
        layer.down = make_linear(base + "down_proj", cfg.d_llm, cfg.d_ff, cfg, lora, "down_proj");
        p.layers.push_back(std::move(layer));
    }
    p.final_norm_g = Param("llm.final_norm.g", Matrix::full(1, cfg.d_llm, 1.0), tr);
    p.lm_head = weight("llm.lm_head", cfg.vocab_size, cfg.d_llm, cfg.seed, tr);
    return p;
}

namespace {
void collect_linear(LoraLinear& lin, std::vector<Param*>& base, std::vector<Param*>* lora) {
    base.push_back(&lin.w);
    if (lin.lora && lora != nullptr) {
        lora->push_back(&lin.lora->a);
        lora->push_back(&lin.lora->b);
    }
}
}  // namespace

std::vector<Param*> LmParams::base() {
    std::vector<Param*> out{&tok_embed, &pos_embed};
    for (auto& l : layers) {
        out.push_back(&l.norm1_g);
        collect_linear(l.wq, out, nullptr);
        collect_linear(l.wk, out, nullptr);
        collect_linear(l.wv, out, nullptr);
        collect_linear(l.wo, out, nullptr);
        out.push_back(&l.norm2_g);
        collect_linear(l.gate, out, nullptr);
        collect_linear(l.up, out, nullptr);
        collect_linear(l.down, out, nullptr);
    }
    out.push_back(&final_norm_g);
    out.push_back(&lm_head);
    return out;
}

std::vector<Param*> LmParams::lora_all() {
    std::vector<Param*> out;
    for (auto& l : layers) {
        for (LoraLinear* lin : {&l.wq, &l.wk, &l.wv, &l.wo, &l.gate, &l.up, &l.down}) {
            if (lin->lora) {
                out.push_back(&lin->lora->a);
                out.push_back(&lin->lora->b);
            }
        }
    }
    return out;
}

std::vector<Param*> LmParams::all() {
    std::vector<Param*> out{&tok_embed, &pos_embed};
    std::vector<Param*> lora;
    for (auto& l : layers) {
        out.push_back(&l.norm1_g);
        collect_linear(l.wq, out, &lora);
        collect_linear(l.wk, out, &lora);
        collect_linear(l.wv, out, &lora);
        collect_linear(l.wo, out, &lora);
        out.push_back(&l.norm2_g);
        collect_linear(l.gate, out, &lora);
        collect_linear(l.up, out, &lora);
        collect_linear(l.down, out, &lora);
    }
    out.push_back(&final_norm_g);
    out.push_back(&lm_head);
    out.insert(out.end(), lora.begin(), lora.end());
    return out;
}

Tape::Id lora_linear(Tape& t, Tape::Id x, LoraLinear& lin, double scaling, Tape::Id dropout_mask) {
    Tape::Id y = linear_nt(t, x, lin.w);
    if (lin.lora && scaling != 0.0) {
        Tape::Id in = x;
        if (dropout_mask >= 0) in = t.mul(in, dropout_mask);
        const Tape::Id u = t.matmul(in, t.param(lin.lora->a), false, true);
        const Tape::Id v = t.matmul(u, t.param(lin.lora->b), false, true);
        y = t.add(y, t.scale(v, scaling));
    }
    return y;
}

Tape::Id lm_input_graph(Tape& t, LmParams& params, Tape::Id audio,
                        const std::vector<int>& token_ids, int pad_to) {
    const LmConfig& cfg = params.cfg;
    const Matrix& a = t.value(audio);
    if (a.rows() > 0 && a.cols() != cfg.d_llm) {
        throw ShapeError("audio embedding dim " + std::to_string(a.cols()) +
                         " does not match d_llm " + std::to_string(cfg.d_llm));
    }
    const int total = a.rows() + static_cast<int>(token_ids.size());
    const int padded = pad_to > 0 ? pad_to : total;
    if (padded < total) throw ShapeError("pad_to shorter than spliced sequence");
    if (padded > cfg.max_seq) {
        throw InputError("sequence of " + std::to_string(padded) + " positions exceeds max_seq " +
                         std::to_string(cfg.max_seq));
    }
    std::vector<Tape::Id> parts;
    if (a.rows() > 0) parts.push_back(audio);
    if (!token_ids.empty()) {
        parts.push_back(t.gather_rows(t.param(params.tok_embed), token_ids));
    }
    if (padded > total) parts.push_back(t.constant(Matrix(padded - total, cfg.d_llm)));
    if (parts.empty()) throw InputError("empty model input");
    Tape::Id x = parts.size() == 1 ? parts[0] : t.concat_rows(parts);
    std::vector<int> pos_ids(padded);
    for (int i = 0; i < padded; ++i) pos_ids[i] = i;
    return t.add(x, t.gather_rows(t.param(params.pos_embed), pos_ids));
}

namespace {
// Inverted-dropout mask for the LoRA branch input at one site.
Tape::Id dropout_mask_for(Tape& t, LmParams& params, int layer, int site, int rows, int cols) {
    const double p = params.lora_cfg.dropout;
    if (!params.dropout_active || p <= 0.0) return -1;
    Rng rng(mix_seed(params.dropout_seed, "lora-dropout-" + std::to_string(layer) + "-" +
                                              std::to_string(site)));
    Matrix mask(rows, cols);
    const double keep = 1.0 - p;
    for (size_t i = 0; i < mask.size(); ++i) {
        mask.data()[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
    }
    return t.constant(std::move(mask));
}
}  // namespace

Tape::Id lm_layer_graph(Tape& t, LmParams& params, int layer, Tape::Id x) {
    LmParams::Layer& l = params.layers[layer];
    const double s = params.lora_cfg.scaling();
    const int rows = t.value(x).rows();
    const int d = params.cfg.d_llm;
    Tape::Id h = t.rms_norm(x, t.param(l.norm1_g), kNormEps);
    const Tape::Id mask_h = dropout_mask_for(t, params, layer, 0, rows, d);
    Tape::Id attn = attention_core(t, lora_linear(t, h, l.wq, s, mask_h),
                                   lora_linear(t, h, l.wk, s, mask_h),
                                   lora_linear(t, h, l.wv, s, mask_h), params.cfg.n_heads,
                                   /*causal=*/true);
    const Tape::Id mask_o = dropout_mask_for(t, params, layer, 1, rows, d);
    x = t.add(x, lora_linear(t, attn, l.wo, s, mask_o));
    Tape::Id f = t.rms_norm(x, t.param(l.norm2_g), kNormEps);
    const Tape::Id mask_f = dropout_mask_for(t, params, layer, 2, rows, d);
    Tape::Id gated = t.mul(t.silu(lora_linear(t, f, l.gate, s, mask_f)),
                           lora_linear(t, f, l.up, s, mask_f));
    const Tape::Id mask_g = dropout_mask_for(t, params, layer, 3, rows, params.cfg.d_ff);
    return t.add(x, lora_linear(t, gated, l.down, s, mask_g));
}

Tape::Id lm_head_graph(Tape& t, LmParams& params, Tape::Id x) {
    const Tape::Id h = t.rms_norm(x, t.param(params.final_norm_g), kNormEps);
    return linear_nt(t, h, params.lm_head);
}

Matrix lm_forward(LmParams& params, const Matrix& audio, const std::vector<int>& token_ids) {
    Tape t;
    Tape::Id x = lm_input_graph(t, params, t.constant(audio), token_ids);
    for (int l = 0; l < params.cfg.n_layers; ++l) x = lm_layer_graph(t, params, l, x);
    return t.value(lm_head_graph(t, params, x));
}

std::vector<int> greedy_decode(LmParams& params, const Matrix& audio,
                               const std::vector<int>& prompt_ids, int max_new) {
    std::vector<int> ids = prompt_ids;
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        const int total = audio.rows() + static_cast<int>(ids.size());
        if (total >= params.cfg.max_seq) {
            throw TruncationError("decode would exceed max_seq=" +
                                  std::to_string(params.cfg.max_seq) + " at " +
                                  std::to_string(total) + " positions");
        }
        const Matrix logits = lm_forward(params, audio, ids);
        const double* last = logits.row(logits.rows() - 1);
        int best = 0;
        for (int v = 1; v < logits.cols(); ++v) {
            if (last[v] > last[best]) best = v;
        }
        if (best == Tokenizer::im_end_id) break;
        out.push_back(best);
        ids.push_back(best);
    }
    return out;
}

int64_t lora_param_count(const std::vector<LoraTargetDim>& per_layer_targets, int n_layers,
                         int r) {
    if (r < 0) throw ConfigError("lora_param_count: r must be >= 0");
    int64_t per_layer = 0;
    for (const auto& d : per_layer_targets) per_layer += static_cast<int64_t>(r) * (d.d_in + d.d_out);
    return per_layer * n_layers;
}

std::vector<LoraTargetDim> qwen2_7b_target_dims() {
    constexpr int64_t d = 3584, kv = 512, ff = 18944;
    return {
        {"q_proj", d, d},   {"k_proj", d, kv},  {"v_proj", d, kv}, {"o_proj", d, d},
        {"gate_proj", d, ff}, {"up_proj", d, ff}, {"down_proj", ff, d},
    };
}

ParamPartition ParamPartition::of(const std::vector<Param*>& params) {
    ParamPartition part;
    for (const Param* p : params) {
        for (const auto& e : part.entries) {
            if (e.name == p->name) {
                throw ValidationError("duplicate parameter name '" + p->name + "' in partition");
            }
        }
        part.entries.push_back({p->name, p->numel(), p->trainable});
    }
    return part;
}

int64_t ParamPartition::total(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& e : entries) {
        if (e.name.rfind(prefix, 0) == 0) n += e.numel;
    }
    return n;
}

int64_t ParamPartition::trainable_total(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& e : entries) {
        if (e.trainable && e.name.rfind(prefix, 0) == 0) n += e.numel;
    }
    return n;
}

std::vector<std::string> ParamPartition::frozen_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        if (!e.trainable) out.push_back(e.name);
    }
    return out;
}

std::vector<std::string> ParamPartition::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        if (e.trainable) out.push_back(e.name);
    }
    return out;
}

double trainable_ratio(const ParamPartition& partition, const std::string& prefix) {
    const int64_t total = partition.total(prefix);
    if (total == 0) throw InputError("trainable_ratio over empty partition prefix '" + prefix + "'");
    return static_cast<double>(partition.trainable_total(prefix)) / static_cast<double>(total);
}

double trainable_ratio(int64_t trainable, int64_t total) {
    if (total <= 0) throw InputError("trainable_ratio: total must be positive");
    return static_cast<double>(trainable) / static_cast<double>(total);
}

}  // namespace speechlm
