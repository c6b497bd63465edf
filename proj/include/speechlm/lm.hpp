// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "speechlm/prompt.hpp"
#include "speechlm/tape.hpp"

namespace speechlm {

enum class LlmMode { frozen, lora, full };

const char* llm_mode_name(LlmMode mode);
LlmMode parse_llm_mode(const std::string& name);

inline const std::set<std::string> kAllLoraTargets = {"q_proj", "k_proj", "v_proj", "o_proj",
                                                      "gate_proj", "up_proj", "down_proj"};

struct LoraConfig {
    int r = 64;
    double alpha = 16.0;
    std::set<std::string> targets = kAllLoraTargets;
    double dropout = 0.0;

    double scaling() const { return r > 0 ? alpha / r : 0.0; }
    void validate() const;
};

// Low-rank residual factors: A is r x d_in (small uniform init), B is
// d_out x r (zero init), so the residual is exactly zero at initialization.
struct LoraPair {
    Param a;
    Param b;
};

// Base projection weight with an optional LoRA pair attached.
struct LoraLinear {
    Param w;  // d_out x d_in
    std::optional<LoraPair> lora;
};

struct LmConfig {
    int d_llm = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 0;  // from tokenizer
    int max_seq = 512;
    LlmMode mode = LlmMode::lora;
    uint64_t seed = 0;

    void validate() const;
};

// Decoder-only LM: learned absolute positions, pre-RMSNorm causal attention
// (q/k/v/o), pre-RMSNorm gated FFN (gate/up/down with SiLU), untied head.
// All seven projections carry LoRA pairs in lora mode so the trainable set
// matches the paper-scale accounting.
struct LmParams {
    struct Layer {
        Param norm1_g;
        LoraLinear wq, wk, wv, wo;
        Param norm2_g;
        LoraLinear gate, up, down;
    };

    LmConfig cfg;
    LoraConfig lora_cfg;
    Param tok_embed;  // vocab x d
    Param pos_embed;  // max_seq x d
    std::vector<Layer> layers;
    Param final_norm_g;
    Param lm_head;  // vocab x d

    // Training-time LoRA dropout. Masks are regenerated from
    // (dropout_seed, layer, site) so a checkpointed recompute sees the
    // exact forward values again.
    bool dropout_active = false;
    uint64_t dropout_seed = 0;

    std::vector<Param*> all();       // base + lora
    std::vector<Param*> base();      // excludes lora pairs
    std::vector<Param*> lora_all();  // lora pairs only
};

LmParams init_lm(const LmConfig& cfg, const LoraConfig& lora);

// y = x*W^T + scaling * (x*A^T)*B^T; the low-rank residual of LoRA.
Tape::Id lora_linear(Tape& t, Tape::Id x, LoraLinear& lin, double scaling,
                     Tape::Id dropout_mask = -1);

// Embeds tokens, splices the audio rows in front, right-pads with zero rows
// to pad_to (0 = no padding), and adds learned positions.
Tape::Id lm_input_graph(Tape& t, LmParams& params, Tape::Id audio,
                        const std::vector<int>& token_ids, int pad_to = 0);
Tape::Id lm_layer_graph(Tape& t, LmParams& params, int layer, Tape::Id x);
Tape::Id lm_head_graph(Tape& t, LmParams& params, Tape::Id x);

// Full forward: audio is S x d_llm (S may be 0), returns (S+L) x vocab
// logits. Position i only sees positions <= i.
Matrix lm_forward(LmParams& params, const Matrix& audio, const std::vector<int>& token_ids);

// Appends argmax tokens (ties broken by lowest id) until <|im_end|> or
// max_new. Returns only the newly generated ids, without the end marker.
std::vector<int> greedy_decode(LmParams& params, const Matrix& audio,
                               const std::vector<int>& prompt_ids, int max_new);

// --- parameter accounting ---------------------------------------------------

struct LoraTargetDim {
    std::string name;
    int64_t d_in = 0;
    int64_t d_out = 0;
};

// Sum over layers and targets of r * (d_in + d_out).
int64_t lora_param_count(const std::vector<LoraTargetDim>& per_layer_targets, int n_layers, int r);

// The per-layer projection dims implied by the paper-scale decoder
// (d=3584, kv=512, ffn=18944, 28 layers).
std::vector<LoraTargetDim> qwen2_7b_target_dims();
inline constexpr int kQwen2Layers = 28;

struct PartitionEntry {
    std::string name;
    int64_t numel = 0;
    bool trainable = false;
};

// Frozen/trainable split of every named tensor; each name appears exactly
// once.
struct ParamPartition {
    std::vector<PartitionEntry> entries;

    static ParamPartition of(const std::vector<Param*>& params);

    int64_t total(const std::string& prefix = "") const;
    int64_t trainable_total(const std::string& prefix = "") const;
    std::vector<std::string> frozen_names() const;
    std::vector<std::string> trainable_names() const;
};

// trainable / total over entries with the given prefix ("llm." for the
// paper's 2% figure).
double trainable_ratio(const ParamPartition& partition, const std::string& prefix);
double trainable_ratio(int64_t trainable, int64_t total);

}  // namespace speechlm
