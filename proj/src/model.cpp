// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/model.hpp"

#include <sstream>

#include "speechlm/error.hpp"

namespace speechlm {

void ModelConfig::finalize(int vocab_size) {
    if (lfr_m < 1 || lfr_n < 1) throw ConfigError("lfr_m and lfr_n must be >= 1");
    encoder.d_in = frontend.n_mels * lfr_m;
    encoder.seed = seed;
    adapter.d_enc = encoder.d_enc;
    adapter.d_llm = lm.d_llm;
    adapter.seed = seed;
    lm.vocab_size = vocab_size;
    lm.seed = seed;
    encoder.validate();
    adapter.validate();
    lm.validate();
    lora.validate();
}

ModelConfig ModelConfig::from_kv(KvReader& r) {
    ModelConfig cfg;
    cfg.frontend.n_mels = static_cast<int>(r.get_int("n_mels", cfg.frontend.n_mels));
    cfg.frontend.frame_length_ms = r.get_double("frame_length_ms", cfg.frontend.frame_length_ms);
    cfg.lfr_m = static_cast<int>(r.get_int("lfr_m", cfg.lfr_m));
    cfg.lfr_n = static_cast<int>(r.get_int("lfr_n", cfg.lfr_n));
    cfg.encoder.d_enc = static_cast<int>(r.get_int("d_enc", cfg.encoder.d_enc));
    cfg.encoder.n_layers = static_cast<int>(r.get_int("enc_layers", cfg.encoder.n_layers));
    cfg.encoder.n_heads = static_cast<int>(r.get_int("enc_heads", cfg.encoder.n_heads));
    cfg.encoder.trainable = r.get_bool("encoder_trainable", cfg.encoder.trainable);
    cfg.adapter.k = static_cast<int>(r.get_int("adapter_k", cfg.adapter.k));
    cfg.adapter.d_hidden = static_cast<int>(r.get_int("adapter_hidden", cfg.adapter.d_hidden));
    const std::string tail = r.get_str("adapter_tail", "drop");
    if (tail == "drop") {
        cfg.adapter.tail = TailPolicy::drop;
    } else if (tail == "pad_repeat") {
        cfg.adapter.tail = TailPolicy::pad_repeat;
    } else {
        throw ConfigError("adapter_tail must be drop or pad_repeat, got '" + tail + "'");
    }
    cfg.lm.d_llm = static_cast<int>(r.get_int("d_llm", cfg.lm.d_llm));
    cfg.lm.n_layers = static_cast<int>(r.get_int("llm_layers", cfg.lm.n_layers));
    cfg.lm.n_heads = static_cast<int>(r.get_int("llm_heads", cfg.lm.n_heads));
    cfg.lm.d_ff = static_cast<int>(r.get_int("d_ff", cfg.lm.d_ff));
    cfg.lm.max_seq = static_cast<int>(r.get_int("max_seq", cfg.lm.max_seq));
    cfg.lm.mode = parse_llm_mode(r.get_str("llm_mode", llm_mode_name(cfg.lm.mode)));
    cfg.lora.r = static_cast<int>(r.get_int("lora_r", cfg.lora.r));
    cfg.lora.alpha = r.get_double("lora_alpha", cfg.lora.alpha);
    cfg.lora.dropout = r.get_double("lora_dropout", cfg.lora.dropout);
    const std::string targets = r.get_str("lora_targets", "");
    if (!targets.empty()) {
        cfg.lora.targets.clear();
        std::istringstream ss(targets);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) cfg.lora.targets.insert(item);
        }
    }
    cfg.seed = static_cast<uint64_t>(r.get_int("seed", 0));
    return cfg;
}

KvMap ModelConfig::to_kv() const {
    KvMap kv;
    kv["n_mels"] = std::to_string(frontend.n_mels);
    kv["frame_length_ms"] = std::to_string(frontend.frame_length_ms);
    kv["lfr_m"] = std::to_string(lfr_m);
    kv["lfr_n"] = std::to_string(lfr_n);
    kv["d_enc"] = std::to_string(encoder.d_enc);
    kv["enc_layers"] = std::to_string(encoder.n_layers);
    kv["enc_heads"] = std::to_string(encoder.n_heads);
    kv["encoder_trainable"] = encoder.trainable ? "true" : "false";
    kv["adapter_k"] = std::to_string(adapter.k);
    kv["adapter_hidden"] = std::to_string(adapter.d_hidden);
    kv["adapter_tail"] = adapter.tail == TailPolicy::drop ? "drop" : "pad_repeat";
    kv["d_llm"] = std::to_string(lm.d_llm);
    kv["llm_layers"] = std::to_string(lm.n_layers);
    kv["llm_heads"] = std::to_string(lm.n_heads);
    kv["d_ff"] = std::to_string(lm.d_ff);
    kv["max_seq"] = std::to_string(lm.max_seq);
    kv["llm_mode"] = llm_mode_name(lm.mode);
    kv["lora_r"] = std::to_string(lora.r);
    kv["lora_alpha"] = std::to_string(lora.alpha);
    kv["lora_dropout"] = std::to_string(lora.dropout);
    std::string targets;
    for (const auto& t : lora.targets) {
        if (!targets.empty()) targets += ",";
        targets += t;
    }
    kv["lora_targets"] = targets;
    kv["seed"] = std::to_string(seed);
    return kv;
}

SpeechLmModel SpeechLmModel::init(ModelConfig cfg, Tokenizer tokenizer) {
    cfg.finalize(tokenizer.vocab_size());
    SpeechLmModel m;
    m.cfg = cfg;
    m.tokenizer = std::move(tokenizer);
    m.encoder = init_encoder(cfg.encoder);
    m.adapter = init_adapter(cfg.adapter);
    m.lm = init_lm(cfg.lm, cfg.lora);
    return m;
}

std::vector<Param*> SpeechLmModel::all_params() {
    std::vector<Param*> out = encoder.all();
    for (Param* p : adapter.all()) out.push_back(p);
    for (Param* p : lm.all()) out.push_back(p);
    return out;
}

ParamPartition SpeechLmModel::partition() { return ParamPartition::of(all_params()); }

void SpeechLmModel::zero_grads() {
    for (Param* p : all_params()) p->zero_grad();
}

AudioPromptEmbedding SpeechLmModel::embed_audio(const AudioWave& wave) {
    const FeatureSequence feats = compute_fbank(wave, cfg.frontend);
    const LfrSequence lfr = apply_lfr(feats, cfg.lfr_m, cfg.lfr_n);
    const EncoderOutput enc = encode(lfr, encoder);
    return adapt(enc, adapter);
}

std::string SpeechLmModel::transcribe(const AudioWave& wave, const Task& task, int max_new) {
    const AudioPromptEmbedding audio = embed_audio(wave);
    const ChatSequence chat = assemble_prompt(tokenizer, task, std::nullopt);
    const std::vector<int> generated = greedy_decode(lm, audio.vectors, chat.token_ids, max_new);
    return tokenizer.detokenize(generated);
}

void SpeechLmModel::fill_tensors(CheckpointData& data) {
    for (Param* p : all_params()) data.tensors.emplace_back(p->name, p->value);
}

void SpeechLmModel::load_tensors(const CheckpointData& data) {
    for (Param* p : all_params()) {
        const Matrix* m = data.find(p->name);
        if (m == nullptr) throw FormatError("checkpoint is missing tensor '" + p->name + "'");
        if (!m->same_shape(p->value)) {
            throw FormatError("tensor '" + p->name + "' has shape " + m->shape_str() +
                              " but the config expects " + p->value.shape_str());
        }
        p->value = *m;
        p->zero_grad();
    }
}

SpeechLmModel model_from_checkpoint(const CheckpointData& data) {
    const KvMap kv = parse_kv_text(data.config_text);
    KvReader reader(kv);
    ModelConfig cfg = ModelConfig::from_kv(reader);
    Tokenizer tok = Tokenizer::from_codepoints(data.vocab);
    SpeechLmModel model = SpeechLmModel::init(std::move(cfg), std::move(tok));
    model.load_tensors(data);
    return model;
}

}  // namespace speechlm
