// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "speechlm/matrix.hpp"
#include "speechlm/tape.hpp"

namespace speechlm {

// Uniform(-bound, bound) init; the RNG stream is derived from the seed alone
// so a tensor's values depend only on (seed, shape, bound).
Matrix uniform_matrix(int rows, int cols, double bound, uint64_t seed);

// Fixed sin/cos table, one row per position.
Matrix sinusoidal_positions(int length, int dim);

// Scaled dot-product attention over already-projected q/k/v, split into
// n_heads column groups. Returns the concatenated head outputs (no output
// projection).
Tape::Id attention_core(Tape& t, Tape::Id q, Tape::Id k, Tape::Id v, int n_heads, bool causal);

// y = x * W^T (weights stored [d_out x d_in]).
inline Tape::Id linear_nt(Tape& t, Tape::Id x, Param& w) { return t.matmul(x, t.param(w), false, true); }

}  // namespace speechlm
