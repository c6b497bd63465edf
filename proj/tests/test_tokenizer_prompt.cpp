// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "speechlm/error.hpp"
#include "speechlm/prompt.hpp"
#include "speechlm/rng.hpp"
#include "speechlm/tokenizer.hpp"
#include "speechlm/utf8.hpp"

using namespace speechlm;

namespace {
Tokenizer test_tokenizer() { return Tokenizer::build({"你叫什么名字？"}); }
}  // namespace

TEST_CASE("tokenize/detokenize round trip") {
    const Tokenizer tok = test_tokenizer();
    CHECK(tok.tokenize("").empty());
    CHECK(tok.detokenize({}) == "");
    CHECK(tok.detokenize(tok.tokenize("abc")) == "abc");
    CHECK(tok.detokenize(tok.tokenize("What's your name?")) == "What's your name?");
    CHECK(tok.detokenize(tok.tokenize("你叫什么名字？")) == "你叫什么名字？");
}

TEST_CASE("round trip holds for randomized vocabulary strings (property)") {
    const Tokenizer tok = test_tokenizer();
    const std::vector<uint32_t>& cps = tok.codepoints();
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<uint32_t> chars;
        const int len = static_cast<int>(rng.below(30));
        for (int i = 0; i < len; ++i) chars.push_back(cps[rng.below(cps.size())]);
        std::string s = utf8_encode(chars);
        // may hit a reserved literal by chance; those are expected to throw
        bool reserved = false;
        for (int id = 0; id < Tokenizer::num_special; ++id) {
            if (s.find(Tokenizer::special_text(id)) != std::string::npos) reserved = true;
        }
        if (reserved) continue;
        CHECK(tok.detokenize(tok.tokenize(s)) == s);
    }
}

TEST_CASE("unknown characters and reserved literals are encoding errors") {
    const Tokenizer tok = test_tokenizer();
    CHECK_THROWS_AS(tok.tokenize("日"), EncodingError);  // not in vocab
    CHECK_THROWS_AS(tok.tokenize("see <|im_start|> here"), EncodingError);
    CHECK_THROWS_AS(tok.tokenize("<|endoftext|>"), EncodingError);
    CHECK_THROWS_AS(tok.detokenize({99999}), EncodingError);
}

TEST_CASE("special ids are stable and never produced by plain text") {
    const Tokenizer tok = test_tokenizer();
    const std::vector<int> ids = tok.tokenize("im_start system assistant");
    for (int id : ids) CHECK(id >= Tokenizer::num_special);
}

TEST_CASE("template renders the documented block byte-for-byte") {
    const Tokenizer tok = test_tokenizer();
    Task task = Task::make(TaskKind::mtl);
    CHECK(task.instruction == "Translate speech to english text.");
    TrainTarget target{"你叫什么名字？", std::string("What's your name?")};
    const ChatSequence chat = assemble_prompt(tok, task, target);
    const std::string rendered = tok.detokenize(chat.token_ids);
    const std::string expected =
        "<|im_start|>system\nYou are a helpful assistant.<|im_end|>\n"
        "<|im_start|>user\nTranslate speech to english text.<|im_end|>\n"
        "<|im_start|>assistant\n你叫什么名字？\nWhat's your name?<|im_end|>";
    CHECK(rendered == expected);
}

TEST_CASE("loss mask covers exactly the assistant target and closing marker") {
    const Tokenizer tok = test_tokenizer();
    const Task task = Task::make(TaskKind::asr);
    CHECK(task.instruction == "Transcribe speech to text.");
    TrainTarget target{"abc", std::nullopt};
    const ChatSequence chat = assemble_prompt(tok, task, target);

    int64_t mask_sum = 0;
    for (uint8_t m : chat.loss_mask) mask_sum += m;
    CHECK(mask_sum == static_cast<int64_t>(tok.tokenize("abc").size()) + 1);

    // decoding the masked-in positions yields target + <|im_end|>
    std::vector<int> masked_ids;
    for (size_t i = 0; i < chat.token_ids.size(); ++i) {
        if (chat.loss_mask[i]) masked_ids.push_back(chat.token_ids[i]);
    }
    CHECK(tok.detokenize(masked_ids) == "abc<|im_end|>");
}

TEST_CASE("inference prompts end after the assistant header with a zero mask") {
    const Tokenizer tok = test_tokenizer();
    const ChatSequence chat = assemble_prompt(tok, Task::make(TaskKind::asr), std::nullopt);
    const std::string rendered = tok.detokenize(chat.token_ids);
    CHECK(rendered.substr(rendered.size() - 10) == "assistant\n");
    for (uint8_t m : chat.loss_mask) CHECK(m == 0);
}

TEST_CASE("MTL requires a translation") {
    const Tokenizer tok = test_tokenizer();
    TrainTarget no_translation{"abc", std::nullopt};
    CHECK_THROWS_AS(assemble_prompt(tok, Task::make(TaskKind::mtl), no_translation), InputError);
    CHECK_THROWS_AS(assemble_prompt(tok, Task::make(TaskKind::ast), no_translation), InputError);
}

TEST_CASE("MTL target joins transcript and translation with a newline") {
    Task task = Task::make(TaskKind::mtl);
    TrainTarget target{"你叫什么名字？", std::string("What's your name?")};
    CHECK(target_text(task, target) == "你叫什么名字？\nWhat's your name?");
}

TEST_CASE("full mask zeroes the speech prefix") {
    const Tokenizer tok = test_tokenizer();
    TrainTarget target{"ab", std::nullopt};
    ChatSequence chat = assemble_prompt(tok, Task::make(TaskKind::asr), target);
    chat.speech_len = 5;
    const std::vector<uint8_t> full = chat.full_mask();
    CHECK(full.size() == chat.token_ids.size() + 5);
    for (int i = 0; i < 5; ++i) CHECK(full[i] == 0);
    CHECK(chat.full_token_ids().size() == full.size());
}
