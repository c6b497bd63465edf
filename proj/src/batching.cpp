// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/batching.hpp"

#include <iostream>

#include "speechlm/error.hpp"
#include "speechlm/rng.hpp"
#include "speechlm/wav.hpp"

namespace speechlm {

int64_t Batch::masked_tokens() const {
    int64_t n = 0;
    for (const auto& item : items) {
        for (uint8_t m : item.pred_mask) n += m;
    }
    return n;
}

namespace {

BatchItem prepare_item(const ManifestRecord& rec, SpeechLmModel& model, const Task& task) {
    BatchItem item;
    item.id = rec.id;
    const AudioWave wave = read_wav(rec.audio);
    const FeatureSequence feats = compute_fbank(wave, model.cfg.frontend);
    const LfrSequence lfr = apply_lfr(feats, model.cfg.lfr_m, model.cfg.lfr_n);
    int enc_rows;
    if (model.cfg.encoder.trainable) {
        item.audio = lfr.frames;
        item.audio_is_encoded = false;
        item.audio_frame_ms = lfr.effective_shift_ms;
        enc_rows = lfr.frames.rows();
    } else {
        const EncoderOutput enc = encode(lfr, model.encoder);
        item.audio = enc.frames;
        item.audio_is_encoded = true;
        item.audio_frame_ms = enc.frame_ms;
        enc_rows = enc.frames.rows();
    }
    const int k = model.cfg.adapter.k;
    if (model.cfg.adapter.tail == TailPolicy::drop) {
        if (enc_rows < k) {
            throw InputError("utterance '" + rec.id + "' too short for adapter k=" +
                             std::to_string(k));
        }
        item.speech_len = enc_rows / k;
    } else {
        item.speech_len = (enc_rows + k - 1) / k;
    }

    TrainTarget target;
    target.transcript = rec.text;
    target.translation = rec.translation;
    if (task.kind != TaskKind::asr && !rec.translation) {
        throw InputError("utterance '" + rec.id + "' has no translation for task " +
                         task_name(task.kind));
    }
    ChatSequence chat = assemble_prompt(model.tokenizer, task, target);
    chat.speech_len = item.speech_len;
    const int total = static_cast<int>(chat.total_len());
    if (total > model.cfg.lm.max_seq) {
        throw InputError("utterance '" + rec.id + "' needs " + std::to_string(total) +
                         " positions, over max_seq=" + std::to_string(model.cfg.lm.max_seq));
    }
    item.token_ids = chat.token_ids;

    const std::vector<int> full_ids = chat.full_token_ids();
    const std::vector<uint8_t> full_mask = chat.full_mask();
    item.pred_targets.assign(total, Tokenizer::pad_id);
    item.pred_mask.assign(total, 0);
    for (int p = 1; p < total; ++p) {
        if (full_mask[p]) {
            item.pred_targets[p - 1] = full_ids[p];
            item.pred_mask[p - 1] = 1;
        }
    }
    return item;
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<ManifestRecord>& records, SpeechLmModel& model,
                                const Task& task, int micro_batch, uint64_t seed, uint64_t epoch,
                                BatchStats* stats) {
    if (records.empty()) throw InputError("make_batches: no records");
    if (micro_batch < 1) throw ConfigError("micro_batch must be >= 1");

    std::vector<size_t> order(records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, "shuffle-epoch-" + std::to_string(epoch)));
    rng.shuffle(order);

    std::vector<BatchItem> items;
    items.reserve(records.size());
    for (size_t idx : order) {
        try {
            items.push_back(prepare_item(records[idx], model, task));
        } catch (const Error& e) {
            std::cerr << "warning: skipping utterance '" << records[idx].id << "': " << e.what()
                      << "\n";
            if (stats != nullptr) {
                stats->skipped += 1;
                stats->skip_reasons.push_back(e.what());
            }
        }
    }
    if (items.empty()) throw InputError("make_batches: every record failed preparation");

    std::vector<Batch> batches;
    for (size_t start = 0; start < items.size(); start += micro_batch) {
        Batch b;
        const size_t end = std::min(items.size(), start + micro_batch);
        int total_len = 0;
        for (size_t i = start; i < end; ++i) {
            total_len = std::max(total_len, static_cast<int>(items[i].pred_mask.size()));
        }
        for (size_t i = start; i < end; ++i) {
            BatchItem item = items[i];
            item.pred_targets.resize(total_len, Tokenizer::pad_id);
            item.pred_mask.resize(total_len, 0);
            b.items.push_back(std::move(item));
        }
        b.total_len = total_len;
        batches.push_back(std::move(b));
    }
    return batches;
}

PipelinedLoader::PipelinedLoader(Factory factory, int depth, int n_workers, int64_t start_index)
    : factory_(std::move(factory)), depth_(depth) {
    if (depth < 1) throw ConfigError("pipelined loader depth must be >= 1");
    if (n_workers < 1) throw ConfigError("pipelined loader needs at least one worker");
    next_claim_ = start_index;
    next_consume_ = start_index;
    workers_.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

PipelinedLoader::~PipelinedLoader() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        stop_ = true;
    }
    can_produce_.notify_all();
    can_consume_.notify_all();
    for (auto& w : workers_) w.join();
}

void PipelinedLoader::worker_loop() {
    while (true) {
        int64_t index;
        {
            std::unique_lock<std::mutex> lock(mu_);
            can_produce_.wait(lock, [this] {
                return stop_ || (next_claim_ < next_consume_ + depth_ &&
                                 (!saw_end_ || next_claim_ < end_index_));
            });
            if (stop_) return;
            index = next_claim_++;
        }

        Slot slot;
        try {
            std::optional<Batch> batch = factory_(index);
            if (batch) {
                slot.batch = std::move(batch);
            } else {
                slot.end = true;
            }
        } catch (...) {
            slot.error = std::current_exception();
        }

        {
            std::lock_guard<std::mutex> lock(mu_);
            if (slot.end && (!saw_end_ || index < end_index_)) {
                saw_end_ = true;
                end_index_ = index;
            }
            ready_.emplace(index, std::move(slot));
        }
        can_consume_.notify_all();
        can_produce_.notify_all();
    }
}

std::optional<Batch> PipelinedLoader::next() {
    std::unique_lock<std::mutex> lock(mu_);
    can_consume_.wait(lock, [this] {
        return stop_ || ready_.count(next_consume_) > 0 ||
               (saw_end_ && next_consume_ >= end_index_);
    });
    if (stop_) return std::nullopt;
    if (ready_.count(next_consume_) == 0 && saw_end_ && next_consume_ >= end_index_) {
        return std::nullopt;  // stream already exhausted
    }
    auto it = ready_.find(next_consume_);
    Slot slot = std::move(it->second);
    ready_.erase(it);
    ++next_consume_;
    lock.unlock();
    can_produce_.notify_all();
    if (slot.error) std::rethrow_exception(slot.error);
    if (slot.end) return std::nullopt;
    return std::move(slot.batch);
}

int64_t PipelinedLoader::prepared_ahead() const {
    std::lock_guard<std::mutex> lock(mu_);
    return static_cast<int64_t>(ready_.size());
}

}  // namespace speechlm
