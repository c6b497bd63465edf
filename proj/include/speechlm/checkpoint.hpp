// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "speechlm/matrix.hpp"

namespace speechlm {

// Versioned binary container: magic, version, config digest, config text,
// vocabulary codepoints, step counter, RNG state blob, then a named tensor
// directory (name, dtype, shape, offset) followed by little-endian f64
// payloads.
struct CheckpointData {
    uint32_t version = 1;
    std::string config_text;
    std::vector<uint32_t> vocab;
    uint64_t step = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, Matrix>> tensors;

    const Matrix* find(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint_file(const std::string& path);

}  // namespace speechlm
