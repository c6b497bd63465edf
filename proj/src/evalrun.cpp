// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/evalrun.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "speechlm/error.hpp"
#include "speechlm/wav.hpp"

namespace speechlm {

namespace {

struct PairList {
    std::vector<std::string> refs;
    std::vector<std::string> hyps;
    std::string lang;  // representative language of the testset
};

void split_mtl(const std::string& text, std::string& transcript, std::string& translation) {
    const size_t nl = text.find('\n');
    if (nl == std::string::npos) {
        transcript = text;
        translation.clear();
    } else {
        transcript = text.substr(0, nl);
        translation = text.substr(nl + 1);
    }
}

}  // namespace

EvalResult evaluate_manifest(SpeechLmModel& model, const std::vector<ManifestRecord>& records,
                             const EvalOptions& opts) {
    if (records.empty()) throw InputError("evaluate_manifest: empty manifest");
    const Task task = Task::make(opts.task);

    EvalResult result;
    std::map<std::string, PairList> asr_sets;   // testset -> transcript pairs
    std::map<std::string, PairList> ast_sets;   // testset -> translation pairs
    for (const auto& rec : records) {
        std::string hyp;
        if (opts.oracle_decode) {
            TrainTarget target{rec.text, rec.translation};
            hyp = target_text(task, target);
        } else {
            try {
                const AudioWave wave = read_wav(rec.audio);
                hyp = model.transcribe(wave, task, opts.max_new);
            } catch (const Error& e) {
                std::cerr << "warning: excluding utterance '" << rec.id << "': " << e.what()
                          << "\n";
                result.report.skipped_utterances += 1;
                continue;
            }
        }
        result.hypotheses.emplace_back(rec.id, hyp);

        switch (opts.task) {
            case TaskKind::asr: {
                PairList& set = asr_sets[rec.testset];
                set.refs.push_back(rec.text);
                set.hyps.push_back(hyp);
                set.lang = rec.lang;
                break;
            }
            case TaskKind::ast: {
                PairList& set = ast_sets[rec.testset];
                set.refs.push_back(rec.translation.value_or(""));
                set.hyps.push_back(hyp);
                set.lang = "en";
                break;
            }
            case TaskKind::mtl: {
                std::string transcript, translation;
                split_mtl(hyp, transcript, translation);
                PairList& aset = asr_sets[rec.testset];
                aset.refs.push_back(rec.text);
                aset.hyps.push_back(transcript);
                aset.lang = rec.lang;
                PairList& tset = ast_sets[rec.testset];
                tset.refs.push_back(rec.translation.value_or(""));
                tset.hyps.push_back(translation);
                tset.lang = "en";
                break;
            }
        }
    }

    for (const auto& [name, set] : asr_sets) {
        MetricRow row;
        row.testset = name;
        row.metric = set.lang == "en" ? "WER" : "CER";
        row.utterances = static_cast<int64_t>(set.refs.size());
        double sum = 0.0;
        for (size_t i = 0; i < set.refs.size(); ++i) {
            sum += set.lang == "en" ? wer(set.refs[i], set.hyps[i]) : cer(set.refs[i], set.hyps[i]);
        }
        row.value = sum / static_cast<double>(set.refs.size());
        result.report.rows.push_back(row);
    }
    for (const auto& [name, set] : ast_sets) {
        MetricRow row;
        row.testset = name;
        row.metric = "BLEU";
        row.utterances = static_cast<int64_t>(set.refs.size());
        row.value = bleu(set.refs, set.hyps, /*smooth_add_one=*/true);
        result.report.rows.push_back(row);
    }
    result.report.add_average_rows();

    if (!opts.hyp_path.empty()) {
        std::ofstream f(opts.hyp_path);
        if (!f) throw IoError("cannot write hypotheses file: " + opts.hyp_path);
        for (const auto& [id, hyp] : result.hypotheses) {
            std::string escaped;
            for (char c : hyp) {
                if (c == '\n') {
                    escaped += "\\n";
                } else if (c == '"') {
                    escaped += "\\\"";
                } else if (c == '\\') {
                    escaped += "\\\\";
                } else {
                    escaped += c;
                }
            }
            f << "{\"id\":\"" << id << "\",\"hyp\":\"" << escaped << "\"}\n";
        }
    }
    return result;
}

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "granularity_k") return SweepAxis::granularity_k;
    if (name == "llm_mode") return SweepAxis::llm_mode;
    if (name == "encoder_variant") return SweepAxis::encoder_variant;
    throw InputError("unknown sweep axis '" + name +
                     "' (expected granularity_k, llm_mode or encoder_variant)");
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                const std::vector<ManifestRecord>& records) {
    if (spec.values.empty()) throw InputError("sweep values list is empty");
    if (spec.steps_budget < 1) throw InputError("sweep steps budget must be >= 1");

    std::vector<SweepRow> rows;
    for (const std::string& value : spec.values) {
        SweepRow row;
        row.value = value;
        try {
            ModelConfig mcfg = spec.base_model;
            switch (spec.axis) {
                case SweepAxis::granularity_k:
                    mcfg.adapter.k = std::stoi(value);
                    break;
                case SweepAxis::llm_mode:
                    mcfg.lm.mode = parse_llm_mode(value);
                    break;
                case SweepAxis::encoder_variant:
                    if (value == "frozen") {
                        mcfg.encoder.trainable = false;
                    } else if (value == "trainable") {
                        mcfg.encoder.trainable = true;
                    } else {
                        throw InputError("encoder_variant value must be frozen or trainable");
                    }
                    break;
            }
            std::vector<std::string> texts;
            for (const auto& rec : records) {
                texts.push_back(rec.text);
                if (rec.translation) texts.push_back(*rec.translation);
            }
            SpeechLmModel model = SpeechLmModel::init(mcfg, Tokenizer::build(texts));
            Trainer trainer(model, spec.base_train, records);
            StepReport last;
            for (int64_t s = 0; s < spec.steps_budget; ++s) last = trainer.step();
            row.final_loss = last.loss;
            row.converged =
                last.loss < 0.5 * std::log(static_cast<double>(model.cfg.lm.vocab_size));
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "value        final_loss  converged\n";
    char buf[160];
    for (const auto& row : rows) {
        if (!row.error.empty()) {
            std::snprintf(buf, sizeof(buf), "%-12s failed: %s\n", row.value.c_str(),
                          row.error.c_str());
        } else {
            std::snprintf(buf, sizeof(buf), "%-12s %10.4f  %s\n", row.value.c_str(),
                          row.final_loss, row.converged ? "yes" : "no");
        }
        os << buf;
    }
    return os.str();
}

}  // namespace speechlm
