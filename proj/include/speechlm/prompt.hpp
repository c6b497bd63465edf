// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "speechlm/tokenizer.hpp"

namespace speechlm {

enum class TaskKind { asr, ast, mtl };

const char* task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

struct Task {
    TaskKind kind = TaskKind::asr;
    std::string instruction;

    static Task make(TaskKind kind);
};

inline constexpr const char* kSystemPrompt = "You are a helpful assistant.";
inline constexpr const char* kAsrInstruction = "Transcribe speech to text.";
inline constexpr const char* kAstInstruction = "Translate speech to english text.";

struct TrainTarget {
    std::string transcript;
    std::optional<std::string> translation;
};

// Token ids of one chat turn plus the per-position loss mask. speech_len is
// the number of audio embedding positions spliced in front of the tokens; it
// is 0 until splice time. The mask is 1 exactly on assistant target tokens
// and the closing <|im_end|>.
struct ChatSequence {
    std::vector<int> token_ids;
    std::vector<uint8_t> loss_mask;
    int speech_len = 0;

    size_t token_len() const { return token_ids.size(); }
    size_t total_len() const { return speech_len + token_ids.size(); }

    // 0 for the speech prefix, then loss_mask.
    std::vector<uint8_t> full_mask() const;
    // Token id at each absolute position; pad_id over the speech prefix.
    std::vector<int> full_token_ids() const;
};

// Builds the chat template. With a target (training) the assistant content
// and closing <|im_end|> are appended and masked in; without one (inference)
// the sequence ends right after "assistant\n" and the mask is all zeros.
ChatSequence assemble_prompt(const Tokenizer& tok, const Task& task,
                             const std::optional<TrainTarget>& target);

// Assistant content string per task: transcript for ASR, translation for
// AST, transcript + "\n" + translation for MTL.
std::string target_text(const Task& task, const TrainTarget& target);

}  // namespace speechlm
