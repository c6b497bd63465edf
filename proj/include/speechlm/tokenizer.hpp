// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace speechlm {

// Character-level tokenizer over unicode codepoints plus four special
// tokens. The vocabulary is frozen at construction; ids are stable because
// codepoints are stored sorted.
class Tokenizer {
public:
    static constexpr int pad_id = 0;
    static constexpr int im_start_id = 1;
    static constexpr int im_end_id = 2;
    static constexpr int endoftext_id = 3;
    static constexpr int num_special = 4;

    static const char* special_text(int id);

    // Vocabulary = printable ASCII + newline + every codepoint in `texts`.
    static Tokenizer build(const std::vector<std::string>& texts);
    static Tokenizer from_codepoints(std::vector<uint32_t> codepoints);

    Tokenizer() = default;

    // Plain text only: rejects text containing any special-token literal and
    // any character outside the vocabulary (EncodingError names it).
    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    bool knows(uint32_t codepoint) const { return id_of_.count(codepoint) > 0; }
    int vocab_size() const { return num_special + static_cast<int>(codepoints_.size()); }
    const std::vector<uint32_t>& codepoints() const { return codepoints_; }

private:
    std::vector<uint32_t> codepoints_;          // sorted
    std::unordered_map<uint32_t, int> id_of_;   // codepoint -> id (>= num_special)
};

}  // namespace speechlm
