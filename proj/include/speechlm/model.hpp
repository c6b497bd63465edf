// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "speechlm/adapter.hpp"
#include "speechlm/checkpoint.hpp"
#include "speechlm/config.hpp"
#include "speechlm/encoder.hpp"
#include "speechlm/frontend.hpp"
#include "speechlm/lm.hpp"
#include "speechlm/prompt.hpp"
#include "speechlm/tokenizer.hpp"

namespace speechlm {

// Every knob of the assembled pipeline. Derived dims (encoder input size,
// adapter in/out sizes, vocab) are resolved by finalize().
struct ModelConfig {
    FrontendConfig frontend;
    int lfr_m = 7;
    int lfr_n = 6;
    EncoderConfig encoder;
    AdapterConfig adapter;
    LmConfig lm;
    LoraConfig lora;
    uint64_t seed = 0;

    void finalize(int vocab_size);

    static ModelConfig from_kv(KvReader& reader);
    KvMap to_kv() const;

    double granularity_ms() const { return frontend.frame_shift_ms * lfr_n * adapter.k; }
};

struct SpeechLmModel {
    ModelConfig cfg;
    Tokenizer tokenizer;
    EncoderParams encoder;
    AdapterParams adapter;
    LmParams lm;

    static SpeechLmModel init(ModelConfig cfg, Tokenizer tokenizer);

    std::vector<Param*> all_params();
    ParamPartition partition();
    void zero_grads();

    // wave -> fbank -> LFR -> encoder -> adapter.
    AudioPromptEmbedding embed_audio(const AudioWave& wave);

    // Greedy decode of the assistant content for one utterance.
    std::string transcribe(const AudioWave& wave, const Task& task, int max_new = 96);

    void fill_tensors(CheckpointData& data);
    // Loads parameter tensors by name; shapes must match (FormatError).
    void load_tensors(const CheckpointData& data);
};

// Convenience: construct a model (tokenizer included) from a checkpoint.
SpeechLmModel model_from_checkpoint(const CheckpointData& data);

}  // namespace speechlm
