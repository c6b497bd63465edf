// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "speechlm/manifest.hpp"
#include "speechlm/model.hpp"

namespace speechlm {

// One prepared utterance. With a frozen encoder `audio` holds encoder
// output frames (precomputed off the training thread); with a trainable
// encoder it holds LFR features and the encoder runs inside the training
// graph.
struct BatchItem {
    std::string id;
    Matrix audio;
    bool audio_is_encoded = true;
    double audio_frame_ms = 60.0;
    int speech_len = 0;            // adapter output rows S
    std::vector<int> token_ids;    // chat tokens (unpadded)
    // Next-token supervision over the padded spliced sequence: position p
    // predicts pred_targets[p] wherever pred_mask[p] is 1. Padding rows
    // always carry mask 0.
    std::vector<int> pred_targets;
    std::vector<uint8_t> pred_mask;
};

struct Batch {
    std::vector<BatchItem> items;
    int total_len = 0;  // common padded length

    int64_t masked_tokens() const;
};

struct BatchStats {
    int64_t skipped = 0;
    std::vector<std::string> skip_reasons;
};

// Shuffles records by (seed, epoch), prepares features, pads, and yields
// ceil(N / micro_batch) batches. Records that fail preparation (missing
// audio, too short, over max_seq) are skipped with a warning on stderr and
// counted in `stats`.
std::vector<Batch> make_batches(const std::vector<ManifestRecord>& records, SpeechLmModel& model,
                                const Task& task, int micro_batch, uint64_t seed, uint64_t epoch,
                                BatchStats* stats = nullptr);

// Bounded producer/consumer prefetcher. Workers claim batch indices from an
// atomic counter and run the factory; results are delivered strictly in
// index order, so the consumed sequence is identical to running the factory
// inline regardless of worker count, depth or timing. The factory must be a
// pure function of the index, and once it returns nullopt for some index it
// must do so for every later index.
class PipelinedLoader {
public:
    using Factory = std::function<std::optional<Batch>(int64_t)>;

    PipelinedLoader(Factory factory, int depth, int n_workers = 1, int64_t start_index = 0);
    ~PipelinedLoader();

    PipelinedLoader(const PipelinedLoader&) = delete;
    PipelinedLoader& operator=(const PipelinedLoader&) = delete;

    // Next batch in index order; nullopt at end of stream. Worker
    // exceptions rethrow here at the index that failed.
    std::optional<Batch> next();

    // How many finished batches are waiting right now (overlap gauge).
    int64_t prepared_ahead() const;

private:
    struct Slot {
        std::optional<Batch> batch;
        std::exception_ptr error;
        bool end = false;
    };

    void worker_loop();

    Factory factory_;
    int depth_;
    std::vector<std::thread> workers_;

    mutable std::mutex mu_;
    std::condition_variable can_produce_;
    std::condition_variable can_consume_;
    std::map<int64_t, Slot> ready_;
    int64_t next_claim_ = 0;
    int64_t next_consume_ = 0;
    bool stop_ = false;
    bool saw_end_ = false;
    int64_t end_index_ = -1;
};

}  // namespace speechlm
