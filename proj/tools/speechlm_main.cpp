// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0
//
// speechlm — desk-scale speech-LLM pipeline: featurize | train | infer |
// eval | sweep | params | synth.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "speechlm/batching.hpp"
#include "speechlm/error.hpp"
#include "speechlm/evalrun.hpp"
#include "speechlm/manifest.hpp"
#include "speechlm/metrics.hpp"
#include "speechlm/model.hpp"
#include "speechlm/train.hpp"
#include "speechlm/wav.hpp"

namespace fs = std::filesystem;
using namespace speechlm;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value pairs from --set
};

// Config file first, then --set key=value overrides (flags win over file).
KvMap merged_kv(const CommonFlags& flags) {
    KvMap kv;
    if (!flags.config_path.empty()) kv = read_kv_file(flags.config_path);
    for (const auto& kvp : flags.overrides) {
        const size_t eq = kvp.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kvp + "'");
        }
        kv[kvp.substr(0, eq)] = kvp.substr(eq + 1);
    }
    return kv;
}

void write_matrix_block(std::ofstream& f, const Matrix& m) {
    const uint32_t rows = static_cast<uint32_t>(m.rows());
    const uint32_t cols = static_cast<uint32_t>(m.cols());
    f.write(reinterpret_cast<const char*>(&rows), 4);
    f.write(reinterpret_cast<const char*>(&cols), 4);
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

int cmd_featurize(const std::string& wav_path, const std::string& out_path, int sample_rate,
                  int n_mels, int lfr_m, int lfr_n) {
    const AudioWave wave = read_wav(wav_path);
    if (sample_rate > 0 && wave.sample_rate != sample_rate) {
        throw InputError("WAV sample rate " + std::to_string(wave.sample_rate) +
                         " does not match required --sample-rate " + std::to_string(sample_rate));
    }
    FrontendConfig cfg;
    cfg.n_mels = n_mels;
    const FeatureSequence feats = compute_fbank(wave, cfg);
    const LfrSequence lfr = apply_lfr(feats, lfr_m, lfr_n);

    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw IoError("cannot write feature sidecar: " + out_path);
    f.write("SPFE", 4);
    const uint32_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const double shift = feats.frame_shift_ms;
    const double eff = lfr.effective_shift_ms;
    const uint32_t m = static_cast<uint32_t>(lfr.m), n = static_cast<uint32_t>(lfr.n);
    f.write(reinterpret_cast<const char*>(&shift), 8);
    f.write(reinterpret_cast<const char*>(&eff), 8);
    f.write(reinterpret_cast<const char*>(&m), 4);
    f.write(reinterpret_cast<const char*>(&n), 4);
    write_matrix_block(f, feats.frames);
    write_matrix_block(f, lfr.frames);
    std::cout << "wrote " << out_path << ": " << feats.frames.rows() << " base frames ("
              << feats.frames.cols() << " mels), " << lfr.frames.rows() << " LFR frames (dim "
              << lfr.frames.cols() << ", " << lfr.effective_shift_ms << " ms)\n";
    return 0;
}

int cmd_synth(const std::string& out_dir, int n, uint64_t seed) {
    SynthConfig cfg;
    cfg.out_dir = out_dir;
    cfg.n_utts = n;
    cfg.seed = seed;
    const std::vector<ManifestRecord> records = synth_dataset(cfg);
    std::cout << "wrote " << records.size() << " utterances + manifest.jsonl under " << out_dir
              << "\n";
    return 0;
}

SpeechLmModel build_model_for_training(const KvMap& kv, const std::vector<ManifestRecord>& records,
                                       const TrainConfig& tcfg) {
    if (!tcfg.init_from.empty()) {
        // Warm start: model config and vocabulary come from the checkpoint.
        LoadedTrainState state = load_train_state(tcfg.init_from);
        std::cout << "initialized weights from " << tcfg.init_from << " (step "
                  << state.raw.step << ")\n";
        return std::move(state.model);
    }
    KvReader model_reader(kv);
    ModelConfig mcfg = ModelConfig::from_kv(model_reader);
    std::vector<std::string> texts;
    for (const auto& rec : records) {
        texts.push_back(rec.text);
        if (rec.translation) texts.push_back(*rec.translation);
    }
    return SpeechLmModel::init(mcfg, Tokenizer::build(texts));
}

int cmd_train(const CommonFlags& flags, const std::string& manifest_path,
              const std::string& out_dir, const std::string& init_from, int64_t steps) {
    const KvMap kv = merged_kv(flags);
    {
        // reject unknown keys before doing any work
        KvReader model_reader(kv);
        (void)ModelConfig::from_kv(model_reader);
        KvReader strict(kv);
        (void)ModelConfig::from_kv(strict);
        (void)TrainConfig::from_kv(strict);
        strict.reject_unknown();
    }
    KvReader train_reader(kv);
    TrainConfig tcfg = TrainConfig::from_kv(train_reader);
    if (!init_from.empty()) tcfg.init_from = init_from;
    tcfg.validate();

    const ManifestLoadResult loaded = read_manifest(manifest_path);
    for (const auto& err : loaded.errors) {
        std::cerr << "manifest line " << err.line << ": " << err.message << "\n";
    }
    if (loaded.records.empty()) throw InputError("manifest has no usable records");
    if (tcfg.task != TaskKind::asr) {
        for (const auto& rec : loaded.records) {
            if (!rec.translation) {
                throw InputError("task " + std::string(task_name(tcfg.task)) +
                                 " requires translations; utterance '" + rec.id +
                                 "' has none");
            }
        }
    }

    fs::create_directories(out_dir);
    SpeechLmModel model = build_model_for_training(kv, loaded.records, tcfg);
    Trainer trainer(model, tcfg, loaded.records);

    const int64_t run_steps = steps > 0 ? steps : tcfg.total_steps;
    std::ofstream log((fs::path(out_dir) / "train_log.csv").string());
    log << "step,lr,loss\n";
    for (int64_t s = 0; s < run_steps; ++s) {
        const StepReport rep = trainer.step();
        log << rep.step << "," << rep.lr << "," << rep.loss << "\n";
        if (tcfg.log_every > 0 && rep.step % tcfg.log_every == 0) {
            std::cout << "step " << rep.step << "  lr " << rep.lr << "  loss " << rep.loss
                      << std::endl;
        }
        if (tcfg.ckpt_every > 0 && rep.step % tcfg.ckpt_every == 0) {
            trainer.save_checkpoint(
                (fs::path(out_dir) / ("ckpt_step" + std::to_string(rep.step) + ".bin")).string());
        }
    }
    const std::string final_path = (fs::path(out_dir) / "ckpt_final.bin").string();
    trainer.save_checkpoint(final_path);
    if (trainer.batch_stats().skipped > 0) {
        std::cerr << "skipped " << trainer.batch_stats().skipped << " utterances during batching\n";
    }
    std::cout << "wrote " << final_path << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& wav_path, const std::string& task,
              int max_new) {
    LoadedTrainState state = load_train_state(ckpt_path);
    const AudioWave wave = read_wav(wav_path);
    const Task t = Task::make(parse_task(task));
    std::cout << state.model.transcribe(wave, t, max_new) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             const std::string& task, int max_new, bool oracle, const std::string& report_path) {
    LoadedTrainState state = load_train_state(ckpt_path);
    const ManifestLoadResult loaded = read_manifest(manifest_path);
    for (const auto& err : loaded.errors) {
        std::cerr << "manifest line " << err.line << ": " << err.message << "\n";
    }
    EvalOptions opts;
    opts.task = parse_task(task);
    opts.max_new = max_new;
    opts.oracle_decode = oracle;
    opts.hyp_path = manifest_path + ".hyp.jsonl";
    const EvalResult result = evaluate_manifest(state.model, loaded.records, opts);
    std::cout << result.report.to_table();
    if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) throw IoError("cannot write report: " + report_path);
        f << result.report.to_jsonl();
    }
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& manifest_path, const std::string& axis,
              const std::string& values_csv, int64_t steps) {
    const KvMap kv = merged_kv(flags);
    KvReader model_reader(kv);
    SweepSpec spec;
    spec.base_model = ModelConfig::from_kv(model_reader);
    KvReader train_reader(kv);
    spec.base_train = TrainConfig::from_kv(train_reader);
    spec.axis = parse_sweep_axis(axis);
    spec.steps_budget = steps;
    std::istringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) spec.values.push_back(item);
    }
    const ManifestLoadResult loaded = read_manifest(manifest_path);
    const std::vector<SweepRow> rows = run_sweep(spec, loaded.records);
    std::cout << sweep_table(rows);
    return 0;
}

void print_partition_table(const ParamPartition& part) {
    struct RowSpec {
        const char* label;
        const char* prefix;
    };
    const RowSpec rows[] = {{"Encoder", "encoder."}, {"Adapter", "adapter."}, {"LLM", "llm."}};
    char buf[128];
    std::printf("%-10s %14s %18s\n", "Module", "Params", "trainable Params");
    int64_t total = 0, trainable = 0;
    for (const auto& row : rows) {
        const int64_t t = part.total(row.prefix);
        const int64_t tr = part.trainable_total(row.prefix);
        total += t;
        trainable += tr;
        std::snprintf(buf, sizeof(buf), "%-10s %14lld %18lld\n", row.label,
                      static_cast<long long>(t), static_cast<long long>(tr));
        std::fputs(buf, stdout);
    }
    std::snprintf(buf, sizeof(buf), "%-10s %14lld %18lld\n", "Total",
                  static_cast<long long>(total), static_cast<long long>(trainable));
    std::fputs(buf, stdout);
}

int cmd_params(const std::string& ckpt_path, const CommonFlags& flags, const std::string& preset) {
    if (!preset.empty()) {
        if (preset != "qwen2-7b-dims") {
            throw InputError("unknown preset '" + preset + "' (expected qwen2-7b-dims)");
        }
        // Paper-scale dimension table, used only for count verification;
        // no tensors of this size are ever allocated.
        const int64_t lora = lora_param_count(qwen2_7b_target_dims(), kQwen2Layers, 64);
        const int64_t adapter = adapter_param_count(2, 512, 2048, 3584);
        std::printf("%-10s %14s %18s\n", "Module", "Params", "trainable Params");
        std::printf("%-10s %14s %18lld\n", "Encoder", "-", 0LL);
        std::printf("%-10s %14lld %18lld\n", "Adapter", static_cast<long long>(adapter),
                    static_cast<long long>(adapter));
        std::printf("%-10s %14s %18lld\n", "LLM", "-", static_cast<long long>(lora));
        return 0;
    }
    if (!ckpt_path.empty()) {
        LoadedTrainState state = load_train_state(ckpt_path);
        print_partition_table(state.model.partition());
        return 0;
    }
    const KvMap kv = merged_kv(flags);
    KvReader model_reader(kv);
    ModelConfig mcfg = ModelConfig::from_kv(model_reader);
    // A placeholder vocabulary stands in when counting from a bare config.
    SpeechLmModel model = SpeechLmModel::init(mcfg, Tokenizer::build({}));
    print_partition_table(model.partition());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale speech-LLM pipeline"};
    app.require_subcommand(1);

    CommonFlags flags;

    // featurize
    auto* featurize = app.add_subcommand("featurize", "WAV -> fbank + LFR sidecar");
    std::string wav_path, out_path;
    int sample_rate = 0, n_mels = 80, lfr_m = 7, lfr_n = 6;
    featurize->add_option("--wav", wav_path, "input WAV")->required();
    featurize->add_option("--out", out_path, "output sidecar path")->required();
    featurize->add_option("--sample-rate", sample_rate, "assert this sample rate");
    featurize->add_option("--n-mels", n_mels, "mel bins");
    featurize->add_option("--lfr-m", lfr_m, "LFR stack count");
    featurize->add_option("--lfr-n", lfr_n, "LFR hop");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a deterministic tone dataset");
    std::string synth_out;
    int synth_n = 10;
    uint64_t synth_seed = 7;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n", synth_n, "utterance count");
    synth->add_option("--seed", synth_seed, "generation seed");

    // train
    auto* train = app.add_subcommand("train", "train on a manifest");
    std::string manifest_path, out_dir, init_from;
    int64_t steps = 0;
    train->add_option("--config", flags.config_path, "flat key = value config file");
    train->add_option("--set", flags.overrides, "override config keys (key=value)");
    train->add_option("--manifest", manifest_path, "training manifest JSONL")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--init-from", init_from, "warm-start weights from a checkpoint");
    train->add_option("--steps", steps, "steps to run now (default: total_steps)");

    // infer
    auto* infer = app.add_subcommand("infer", "decode one WAV");
    std::string ckpt_path, task = "asr";
    int max_new = 96;
    infer->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    infer->add_option("--wav", wav_path, "input WAV")->required();
    infer->add_option("--task", task, "asr | ast | mtl");
    infer->add_option("--max-new", max_new, "decode budget");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a manifest");
    std::string report_path;
    bool oracle = false;
    eval->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    eval->add_option("--manifest", manifest_path, "test manifest JSONL")->required();
    eval->add_option("--task", task, "asr | ast | mtl");
    eval->add_option("--max-new", max_new, "decode budget");
    eval->add_option("--report", report_path, "write JSONL metric report here");
    eval->add_flag("--oracle", oracle, "score references against themselves");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "ablation sweep over one axis");
    std::string axis = "granularity_k", values_csv = "2,3,4";
    int64_t sweep_steps = 50;
    sweep->add_option("--config", flags.config_path, "flat key = value config file");
    sweep->add_option("--set", flags.overrides, "override config keys (key=value)");
    sweep->add_option("--manifest", manifest_path, "training manifest")->required();
    sweep->add_option("--axis", axis, "granularity_k | llm_mode | encoder_variant");
    sweep->add_option("--values", values_csv, "comma-separated axis values");
    sweep->add_option("--steps", sweep_steps, "training budget per value");

    // params
    auto* params = app.add_subcommand("params", "print the parameter partition table");
    std::string preset;
    params->add_option("--ckpt", ckpt_path, "checkpoint to inspect");
    params->add_option("--config", flags.config_path, "config to instantiate and count");
    params->add_option("--set", flags.overrides, "override config keys (key=value)");
    params->add_option("--preset", preset, "qwen2-7b-dims: paper-scale count table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (featurize->parsed()) {
            return cmd_featurize(wav_path, out_path, sample_rate, n_mels, lfr_m, lfr_n);
        }
        if (synth->parsed()) return cmd_synth(synth_out, synth_n, synth_seed);
        if (train->parsed()) return cmd_train(flags, manifest_path, out_dir, init_from, steps);
        if (infer->parsed()) return cmd_infer(ckpt_path, wav_path, task, max_new);
        if (eval->parsed()) {
            return cmd_eval(ckpt_path, manifest_path, task, max_new, oracle, report_path);
        }
        if (sweep->parsed()) {
            return cmd_sweep(flags, manifest_path, axis, values_csv, sweep_steps);
        }
        if (params->parsed()) return cmd_params(ckpt_path, flags, preset);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const EncodingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
