// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "speechlm/batching.hpp"
#include "speechlm/model.hpp"

namespace speechlm {

enum class PrecisionMode { fp32, bf16_sim };

const char* precision_name(PrecisionMode mode);
PrecisionMode parse_precision(const std::string& name);

struct TrainConfig {
    int micro_batch = 8;
    int accum_steps = 2;
    double lr = 1e-4;
    int64_t warmup_steps = 1000;
    int64_t total_steps = 1000000;
    PrecisionMode precision = PrecisionMode::fp32;
    bool grad_checkpoint = false;
    uint64_t seed = 0;
    std::string init_from;  // checkpoint to warm-start weights from
    TaskKind task = TaskKind::asr;
    int64_t log_every = 10;
    int64_t ckpt_every = 0;  // 0 = only final
    int loader_depth = 2;
    int loader_workers = 1;

    void validate() const;
    static TrainConfig from_kv(KvReader& reader);
    KvMap to_kv() const;
};

// Linear warmup from 0 to lr over warmup_steps, then linear decay to 0 at
// total_steps; steps beyond total_steps clamp to 0.
double lr_at_step(int64_t step, const TrainConfig& cfg);

// Adam with bias correction; moment tensors exist only for trainable
// parameters.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::map<std::string, Matrix> m;
    std::map<std::string, Matrix> v;

    void ensure(const std::vector<Param*>& params);
    void apply(const std::vector<Param*>& params, double lr);
};

// Mean next-token cross-entropy over loss-masked positions of the batch.
// Throws InputError if any sequence has no masked-in position.
double compute_loss(SpeechLmModel& model, const Batch& batch,
                    PrecisionMode precision = PrecisionMode::fp32);

// Forward/backward for one batch: adds d(mean masked CE)/d(theta), scaled by
// grad_scale, into the parameter gradients. With grad_checkpoint the forward
// keeps only stage boundaries and recomputes each stage during backward;
// gradients match the plain path and peak live activations are strictly
// lower for multi-layer models. Returns the mean loss.
double forward_backward(SpeechLmModel& model, const Batch& batch, bool grad_checkpoint,
                        PrecisionMode precision, double grad_scale, uint64_t dropout_seed = 0);

struct StepReport {
    int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;  // mean of micro-batch losses
};

// One optimizer update: averages gradients over the accumulation
// micro-batches, applies Adam at lr_at_step(step). Frozen tensors are
// untouched. Aborts with TrainAbortError on non-finite loss.
StepReport train_step(SpeechLmModel& model, const std::vector<Batch>& micro_batches,
                      OptimizerState& opt, const TrainConfig& cfg, int64_t step);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    bool frozen_grads_zero = true;
    int64_t checked_elements = 0;
};

// Central finite differences over every element of every trainable tensor
// against the analytic gradients. fp32 (full-precision) mode only.
GradCheckReport gradient_check(SpeechLmModel& model, const Batch& batch, double eps);

// Orchestrates the step loop over an epoch-wrapped pipelined batch stream.
class Trainer {
public:
    Trainer(SpeechLmModel& model, TrainConfig cfg, std::vector<ManifestRecord> records);
    ~Trainer();

    StepReport step();
    int64_t current_step() const { return opt_.step; }
    OptimizerState& optimizer() { return opt_; }
    const BatchStats& batch_stats() const { return stats_; }

    void save_checkpoint(const std::string& path) const;
    // Restores optimizer state, step counter and RNG from a full-state
    // checkpoint (after the caller restored model tensors).
    void restore_state(const CheckpointData& data);

private:
    Batch fetch_batch();
    std::vector<Batch> epoch_batches(uint64_t epoch);

    SpeechLmModel& model_;
    TrainConfig cfg_;
    OptimizerState opt_;
    BatchStats stats_;
    std::vector<ManifestRecord> records_;
    int64_t batches_per_epoch_ = 0;
    int64_t cursor_ = 0;  // global micro-batch index

    // Per-epoch cache shared with loader workers.
    std::mutex cache_mu_;
    std::map<uint64_t, std::vector<Batch>> epoch_cache_;

    // Declared last: workers must stop before the cache and mutex go away.
    std::unique_ptr<PipelinedLoader> loader_;
};

// Serializes model + trainer into one checkpoint file.
CheckpointData build_checkpoint(SpeechLmModel& model, const TrainConfig& cfg,
                                const OptimizerState* opt, uint64_t step,
                                const std::string& rng_state);

struct LoadedTrainState {
    SpeechLmModel model;
    TrainConfig train_cfg;
    CheckpointData raw;
};

LoadedTrainState load_train_state(const std::string& path);

}  // namespace speechlm
