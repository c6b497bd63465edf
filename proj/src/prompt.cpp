// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/prompt.hpp"

#include "speechlm/error.hpp"

namespace speechlm {

const char* task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::asr: return "asr";
        case TaskKind::ast: return "ast";
        case TaskKind::mtl: return "mtl";
    }
    return "?";
}

TaskKind parse_task(const std::string& name) {
    if (name == "asr") return TaskKind::asr;
    if (name == "ast") return TaskKind::ast;
    if (name == "mtl") return TaskKind::mtl;
    throw InputError("unknown task '" + name + "' (expected asr, ast or mtl)");
}

Task Task::make(TaskKind kind) {
    Task t;
    t.kind = kind;
    t.instruction = (kind == TaskKind::asr) ? kAsrInstruction : kAstInstruction;
    return t;
}

std::vector<uint8_t> ChatSequence::full_mask() const {
    std::vector<uint8_t> m(speech_len, 0);
    m.insert(m.end(), loss_mask.begin(), loss_mask.end());
    return m;
}

std::vector<int> ChatSequence::full_token_ids() const {
    std::vector<int> ids(speech_len, Tokenizer::pad_id);
    ids.insert(ids.end(), token_ids.begin(), token_ids.end());
    return ids;
}

std::string target_text(const Task& task, const TrainTarget& target) {
    switch (task.kind) {
        case TaskKind::asr:
            return target.transcript;
        case TaskKind::ast:
            if (!target.translation) throw InputError("AST target requires a translation");
            return *target.translation;
        case TaskKind::mtl:
            if (!target.translation) throw InputError("MTL target requires a translation");
            return target.transcript + "\n" + *target.translation;
    }
    throw InputError("invalid task kind");
}

ChatSequence assemble_prompt(const Tokenizer& tok, const Task& task,
                             const std::optional<TrainTarget>& target) {
    ChatSequence chat;
    auto put_masked = [&](const std::vector<int>& ids, uint8_t mask) {
        for (int id : ids) {
            chat.token_ids.push_back(id);
            chat.loss_mask.push_back(mask);
        }
    };
    auto put_special = [&](int id, uint8_t mask) {
        chat.token_ids.push_back(id);
        chat.loss_mask.push_back(mask);
    };

    put_special(Tokenizer::im_start_id, 0);
    put_masked(tok.tokenize(std::string("system\n") + kSystemPrompt), 0);
    put_special(Tokenizer::im_end_id, 0);
    put_masked(tok.tokenize("\n"), 0);
    put_special(Tokenizer::im_start_id, 0);
    put_masked(tok.tokenize(std::string("user\n") + task.instruction), 0);
    put_special(Tokenizer::im_end_id, 0);
    put_masked(tok.tokenize("\n"), 0);
    put_special(Tokenizer::im_start_id, 0);
    put_masked(tok.tokenize("assistant\n"), 0);
    if (target) {
        put_masked(tok.tokenize(target_text(task, *target)), 1);
        put_special(Tokenizer::im_end_id, 1);
    }
    return chat;
}

}  // namespace speechlm
