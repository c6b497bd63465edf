// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/tokenizer.hpp"

#include <algorithm>
#include <set>

#include "speechlm/error.hpp"
#include "speechlm/utf8.hpp"

namespace speechlm {

const char* Tokenizer::special_text(int id) {
    switch (id) {
        case pad_id: return "<pad>";
        case im_start_id: return "<|im_start|>";
        case im_end_id: return "<|im_end|>";
        case endoftext_id: return "<|endoftext|>";
        default: return nullptr;
    }
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
    std::set<uint32_t> cps;
    for (uint32_t c = 0x20; c <= 0x7E; ++c) cps.insert(c);
    cps.insert(static_cast<uint32_t>('\n'));
    for (const auto& t : texts) {
        for (uint32_t cp : utf8_decode(t)) cps.insert(cp);
    }
    return from_codepoints(std::vector<uint32_t>(cps.begin(), cps.end()));
}

Tokenizer Tokenizer::from_codepoints(std::vector<uint32_t> codepoints) {
    std::sort(codepoints.begin(), codepoints.end());
    codepoints.erase(std::unique(codepoints.begin(), codepoints.end()), codepoints.end());
    Tokenizer tok;
    tok.codepoints_ = std::move(codepoints);
    for (size_t i = 0; i < tok.codepoints_.size(); ++i) {
        tok.id_of_[tok.codepoints_[i]] = num_special + static_cast<int>(i);
    }
    return tok;
}

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
    for (int s = 0; s < num_special; ++s) {
        if (text.find(special_text(s)) != std::string::npos) {
            throw EncodingError(std::string("text contains reserved token literal ") +
                                special_text(s));
        }
    }
    std::vector<int> ids;
    for (uint32_t cp : utf8_decode(text)) {
        auto it = id_of_.find(cp);
        if (it == id_of_.end()) {
            throw EncodingError("character '" + utf8_encode_one(cp) + "' (U+" +
                                std::to_string(cp) + ") is not in the vocabulary");
        }
        ids.push_back(it->second);
    }
    return ids;
}

std::string Tokenizer::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) {
            throw EncodingError("token id " + std::to_string(id) + " out of range");
        }
        if (id < num_special) {
            out += special_text(id);
        } else {
            out += utf8_encode_one(codepoints_[id - num_special]);
        }
    }
    return out;
}

}  // namespace speechlm
