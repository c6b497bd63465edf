// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace speechlm {

// Decodes a UTF-8 string into codepoints. Throws EncodingError on malformed
// input.
std::vector<uint32_t> utf8_decode(const std::string& text);

// Encodes codepoints back to a UTF-8 string.
std::string utf8_encode(const std::vector<uint32_t>& codepoints);

std::string utf8_encode_one(uint32_t codepoint);

}  // namespace speechlm
