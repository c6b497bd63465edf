// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/train.hpp"

#include <cmath>
#include <sstream>

#include "speechlm/error.hpp"
#include "speechlm/rng.hpp"

namespace speechlm {

const char* precision_name(PrecisionMode mode) {
    return mode == PrecisionMode::fp32 ? "fp32" : "bf16-sim";
}

PrecisionMode parse_precision(const std::string& name) {
    if (name == "fp32") return PrecisionMode::fp32;
    if (name == "bf16-sim") return PrecisionMode::bf16_sim;
    throw ConfigError("unknown precision '" + name + "' (expected fp32 or bf16-sim)");
}

void TrainConfig::validate() const {
    if (micro_batch < 1) throw ConfigError("micro_batch must be >= 1");
    if (accum_steps < 1) throw ConfigError("accum_steps must be >= 1");
    if (lr < 0.0) throw ConfigError("lr must be >= 0");
    if (warmup_steps < 0 || total_steps < 1 || warmup_steps > total_steps) {
        throw ConfigError("need 0 <= warmup_steps <= total_steps and total_steps >= 1");
    }
    if (loader_depth < 1) throw ConfigError("loader_depth must be >= 1");
    if (loader_workers < 1) throw ConfigError("loader_workers must be >= 1");
}

TrainConfig TrainConfig::from_kv(KvReader& r) {
    TrainConfig cfg;
    cfg.micro_batch = static_cast<int>(r.get_int("micro_batch", cfg.micro_batch));
    cfg.accum_steps = static_cast<int>(r.get_int("accum_steps", cfg.accum_steps));
    cfg.lr = r.get_double("lr", cfg.lr);
    cfg.warmup_steps = r.get_int("warmup_steps", cfg.warmup_steps);
    cfg.total_steps = r.get_int("total_steps", cfg.total_steps);
    cfg.precision = parse_precision(r.get_str("precision", precision_name(cfg.precision)));
    cfg.grad_checkpoint = r.get_bool("grad_checkpoint", cfg.grad_checkpoint);
    cfg.seed = static_cast<uint64_t>(r.get_int("seed", 0));
    cfg.init_from = r.get_str("init_from", cfg.init_from);
    cfg.task = parse_task(r.get_str("task", task_name(cfg.task)));
    cfg.log_every = r.get_int("log_every", cfg.log_every);
    cfg.ckpt_every = r.get_int("ckpt_every", cfg.ckpt_every);
    cfg.loader_depth = static_cast<int>(r.get_int("loader_depth", cfg.loader_depth));
    cfg.loader_workers = static_cast<int>(r.get_int("loader_workers", cfg.loader_workers));
    return cfg;
}

KvMap TrainConfig::to_kv() const {
    KvMap kv;
    kv["micro_batch"] = std::to_string(micro_batch);
    kv["accum_steps"] = std::to_string(accum_steps);
    std::ostringstream lr_s;
    lr_s.precision(17);
    lr_s << lr;
    kv["lr"] = lr_s.str();
    kv["warmup_steps"] = std::to_string(warmup_steps);
    kv["total_steps"] = std::to_string(total_steps);
    kv["precision"] = precision_name(precision);
    kv["grad_checkpoint"] = grad_checkpoint ? "true" : "false";
    kv["task"] = task_name(task);
    kv["log_every"] = std::to_string(log_every);
    kv["ckpt_every"] = std::to_string(ckpt_every);
    kv["loader_depth"] = std::to_string(loader_depth);
    kv["loader_workers"] = std::to_string(loader_workers);
    return kv;
}

double lr_at_step(int64_t step, const TrainConfig& cfg) {
    if (step < 0) throw InputError("lr_at_step: negative step");
    if (step > cfg.total_steps) return 0.0;
    if (step <= cfg.warmup_steps) {
        if (cfg.warmup_steps == 0) return cfg.lr;
        return cfg.lr * (static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
    }
    const double remain = static_cast<double>(cfg.total_steps - step);
    const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.lr * (remain / span);
}

void OptimizerState::ensure(const std::vector<Param*>& params) {
    for (const Param* p : params) {
        if (!p->trainable) continue;
        if (m.count(p->name) == 0) {
            m.emplace(p->name, Matrix(p->value.rows(), p->value.cols()));
            v.emplace(p->name, Matrix(p->value.rows(), p->value.cols()));
        }
    }
}

void OptimizerState::apply(const std::vector<Param*>& params, double lr) {
    step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (Param* p : params) {
        if (!p->trainable) continue;
        Matrix& pm = m.at(p->name);
        Matrix& pv = v.at(p->name);
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.data()[i];
            pm.data()[i] = beta1 * pm.data()[i] + (1.0 - beta1) * g;
            pv.data()[i] = beta2 * pv.data()[i] + (1.0 - beta2) * g * g;
            const double mhat = pm.data()[i] / bc1;
            const double vhat = pv.data()[i] / bc2;
            p->value.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

using StageFn = std::function<Tape::Id(Tape&, Tape::Id)>;

// The forward pass as a chain of stages so the checkpointed runner can keep
// boundaries only: [encoder] -> adapter+splice -> each LLM layer -> head+CE.
std::vector<StageFn> build_stages(SpeechLmModel& model, const BatchItem& item, int total_len) {
    std::vector<StageFn> stages;
    if (!item.audio_is_encoded) {
        stages.push_back(
            [&model](Tape& t, Tape::Id x) { return encoder_graph(t, model.encoder, x); });
    }
    stages.push_back([&model, &item, total_len](Tape& t, Tape::Id x) {
        const Tape::Id audio = adapter_graph(t, model.adapter, x);
        return lm_input_graph(t, model.lm, audio, item.token_ids, total_len);
    });
    for (int l = 0; l < model.cfg.lm.n_layers; ++l) {
        stages.push_back(
            [&model, l](Tape& t, Tape::Id x) { return lm_layer_graph(t, model.lm, l, x); });
    }
    stages.push_back([&model, &item](Tape& t, Tape::Id x) {
        return t.ce_sum(lm_head_graph(t, model.lm, x), item.pred_targets, item.pred_mask);
    });
    return stages;
}

Tape::Precision tape_precision(PrecisionMode mode) {
    return mode == PrecisionMode::fp32 ? Tape::Precision::full : Tape::Precision::bf16_sim;
}

// Runs one utterance; returns the CE sum over its masked positions. When
// seed != 0 the backward pass adds seed * d(CE sum)/d(theta) into the
// parameter gradients.
double run_utterance(SpeechLmModel& model, const BatchItem& item, int total_len,
                     bool grad_checkpoint, Tape::Precision precision, double seed) {
    const std::vector<StageFn> stages = build_stages(model, item, total_len);

    if (!grad_checkpoint) {
        Tape t(precision);
        Tape::Id x = t.constant(item.audio);
        for (const auto& stage : stages) x = stage(t, x);
        const double loss = t.value(x).at(0, 0);
        if (seed != 0.0) t.backward(x, seed);
        return loss;
    }

    std::vector<Matrix> boundaries;
    boundaries.push_back(item.audio);
    int64_t held = 0;
    for (const auto& stage : stages) {
        Tape t(precision);
        const Tape::Id out = stage(t, t.constant(boundaries.back()));
        boundaries.push_back(t.value(out));
        held += static_cast<int64_t>(boundaries.back().size());
        ActivationStats::add(boundaries.back().size());
    }
    const double loss = boundaries.back().at(0, 0);
    if (seed != 0.0) {
        Matrix out_grad(1, 1);
        out_grad.at(0, 0) = seed;
        for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
            Tape t(precision);
            const Tape::Id in = t.input(boundaries[s]);
            const Tape::Id out = stages[s](t, in);
            t.backward_seeded(out, out_grad);
            out_grad = t.grad(in);
        }
    }
    ActivationStats::sub(held);
    return loss;
}

int64_t checked_masked_tokens(const Batch& batch) {
    int64_t total = 0;
    for (const auto& item : batch.items) {
        int64_t n = 0;
        for (uint8_t m : item.pred_mask) n += m;
        if (n == 0) {
            throw InputError("sequence '" + item.id + "' has no loss-masked position");
        }
        total += n;
    }
    return total;
}

struct DropoutScope {
    LmParams& lm;
    DropoutScope(LmParams& params, uint64_t seed) : lm(params) {
        lm.dropout_active = seed != 0;
        lm.dropout_seed = seed;
    }
    ~DropoutScope() {
        lm.dropout_active = false;
        lm.dropout_seed = 0;
    }
};

}  // namespace

double compute_loss(SpeechLmModel& model, const Batch& batch, PrecisionMode precision) {
    const int64_t masked = checked_masked_tokens(batch);
    double sum = 0.0;
    for (const auto& item : batch.items) {
        sum += run_utterance(model, item, batch.total_len, false, tape_precision(precision), 0.0);
    }
    return sum / static_cast<double>(masked);
}

double forward_backward(SpeechLmModel& model, const Batch& batch, bool grad_checkpoint,
                        PrecisionMode precision, double grad_scale, uint64_t dropout_seed) {
    const int64_t masked = checked_masked_tokens(batch);
    const double per_item_seed = grad_scale / static_cast<double>(masked);
    DropoutScope dropout(model.lm, model.cfg.lora.dropout > 0.0 ? dropout_seed : 0);
    double sum = 0.0;
    for (const auto& item : batch.items) {
        sum += run_utterance(model, item, batch.total_len, grad_checkpoint,
                             tape_precision(precision), per_item_seed);
    }
    return sum / static_cast<double>(masked);
}

StepReport train_step(SpeechLmModel& model, const std::vector<Batch>& micro_batches,
                      OptimizerState& opt, const TrainConfig& cfg, int64_t step) {
    if (micro_batches.empty()) throw InputError("train_step: no micro-batches");
    model.zero_grads();
    const double inv_a = 1.0 / static_cast<double>(micro_batches.size());
    double loss_sum = 0.0;
    for (size_t i = 0; i < micro_batches.size(); ++i) {
        const uint64_t dseed =
            mix_seed(cfg.seed, "dropout-" + std::to_string(step) + "-" + std::to_string(i));
        const double loss = forward_backward(model, micro_batches[i], cfg.grad_checkpoint,
                                             cfg.precision, inv_a, dseed);
        if (!std::isfinite(loss)) {
            std::string ids;
            for (const auto& item : micro_batches[i].items) ids += " " + item.id;
            throw TrainAbortError("non-finite loss at step " + std::to_string(step) +
                                  ", micro-batch " + std::to_string(i) + ", utterances:" + ids);
        }
        loss_sum += loss;
    }
    const std::vector<Param*> params = model.all_params();
    opt.ensure(params);
    const double lr = lr_at_step(step, cfg);
    opt.apply(params, lr);
    StepReport report;
    report.step = step;
    report.lr = lr;
    report.loss = loss_sum * inv_a;
    return report;
}

GradCheckReport gradient_check(SpeechLmModel& model, const Batch& batch, double eps) {
    if (eps <= 0.0) throw InputError("gradient_check: eps must be positive");
    model.zero_grads();
    forward_backward(model, batch, /*grad_checkpoint=*/false, PrecisionMode::fp32, 1.0, 0);

    GradCheckReport report;
    for (Param* p : model.all_params()) {
        if (!p->trainable) {
            for (size_t i = 0; i < p->grad.size(); ++i) {
                if (p->grad.data()[i] != 0.0) report.frozen_grads_zero = false;
            }
            continue;
        }
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value.data()[i];
            p->value.data()[i] = orig + eps;
            const double lp = compute_loss(model, batch);
            p->value.data()[i] = orig - eps;
            const double lm = compute_loss(model, batch);
            p->value.data()[i] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = p->grad.data()[i];
            const double rel =
                std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-3});
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p->name;
            }
            report.checked_elements += 1;
        }
    }
    return report;
}

Trainer::Trainer(SpeechLmModel& model, TrainConfig cfg, std::vector<ManifestRecord> records)
    : model_(model), cfg_(std::move(cfg)), records_(std::move(records)) {
    cfg_.validate();
    if (records_.empty()) throw InputError("trainer needs a non-empty manifest");
    batches_per_epoch_ = static_cast<int64_t>(epoch_batches(0).size());
}

Trainer::~Trainer() { loader_.reset(); }

std::vector<Batch> Trainer::epoch_batches(uint64_t epoch) {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = epoch_cache_.find(epoch);
    if (it != epoch_cache_.end()) return it->second;
    const Task task = Task::make(cfg_.task);
    std::vector<Batch> batches =
        make_batches(records_, model_, task, cfg_.micro_batch, cfg_.seed, epoch, &stats_);
    while (epoch_cache_.size() >= 2) epoch_cache_.erase(epoch_cache_.begin());
    epoch_cache_.emplace(epoch, batches);
    return batches;
}

Batch Trainer::fetch_batch() {
    if (!loader_) {
        cursor_ = opt_.step * cfg_.accum_steps;
        loader_ = std::make_unique<PipelinedLoader>(
            [this](int64_t index) -> std::optional<Batch> {
                const uint64_t epoch = static_cast<uint64_t>(index / batches_per_epoch_);
                const int64_t pos = index % batches_per_epoch_;
                std::vector<Batch> batches = epoch_batches(epoch);
                if (pos >= static_cast<int64_t>(batches.size())) {
                    throw Error("epoch " + std::to_string(epoch) + " produced " +
                                std::to_string(batches.size()) + " batches, expected " +
                                std::to_string(batches_per_epoch_));
                }
                return batches[pos];
            },
            cfg_.loader_depth, cfg_.loader_workers, cursor_);
    }
    std::optional<Batch> batch = loader_->next();
    if (!batch) throw Error("training batch stream ended unexpectedly");
    ++cursor_;
    return std::move(*batch);
}

StepReport Trainer::step() {
    std::vector<Batch> mbs;
    mbs.reserve(cfg_.accum_steps);
    for (int a = 0; a < cfg_.accum_steps; ++a) mbs.push_back(fetch_batch());
    return train_step(model_, mbs, opt_, cfg_, opt_.step + 1);
}

CheckpointData build_checkpoint(SpeechLmModel& model, const TrainConfig& cfg,
                                const OptimizerState* opt, uint64_t step,
                                const std::string& rng_state) {
    CheckpointData data;
    KvMap kv = model.cfg.to_kv();
    for (const auto& [k, v] : cfg.to_kv()) kv[k] = v;
    data.config_text = serialize_kv(kv);
    data.vocab = model.tokenizer.codepoints();
    data.step = step;
    data.rng_state = rng_state;
    model.fill_tensors(data);
    if (opt != nullptr) {
        for (const auto& [name, mat] : opt->m) data.tensors.emplace_back("opt.m." + name, mat);
        for (const auto& [name, mat] : opt->v) data.tensors.emplace_back("opt.v." + name, mat);
    }
    return data;
}

void Trainer::save_checkpoint(const std::string& path) const {
    const CheckpointData data = build_checkpoint(model_, cfg_, &opt_,(uint64_t)opt_.step,
                                                 "stateless:seed=" + std::to_string(cfg_.seed));
    save_checkpoint_file(path, data);
}

void Trainer::restore_state(const CheckpointData& data) {
    opt_.step = static_cast<int64_t>(data.step);
    opt_.m.clear();
    opt_.v.clear();
    for (const auto& [name, mat] : data.tensors) {
        if (name.rfind("opt.m.", 0) == 0) opt_.m.emplace(name.substr(6), mat);
        if (name.rfind("opt.v.", 0) == 0) opt_.v.emplace(name.substr(6), mat);
    }
    loader_.reset();  // cursor re-derives from the restored step
}

LoadedTrainState load_train_state(const std::string& path) {
    CheckpointData data = load_checkpoint_file(path);
    const KvMap kv = parse_kv_text(data.config_text);
    KvReader model_reader(kv);
    ModelConfig mcfg = ModelConfig::from_kv(model_reader);
    KvReader train_reader(kv);
    TrainConfig tcfg = TrainConfig::from_kv(train_reader);
    Tokenizer tok = Tokenizer::from_codepoints(data.vocab);
    SpeechLmModel model = SpeechLmModel::init(std::move(mcfg), std::move(tok));
    model.load_tensors(data);
    LoadedTrainState state{std::move(model), std::move(tcfg), std::move(data)};
    return state;
}

}  // namespace speechlm
