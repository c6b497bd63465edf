// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/nn.hpp"

#include <cmath>

#include "speechlm/error.hpp"
#include "speechlm/rng.hpp"

namespace speechlm {

Matrix uniform_matrix(int rows, int cols, double bound, uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
}

Matrix sinusoidal_positions(int length, int dim) {
    Matrix pe(length, dim);
    const int half = dim / 2;
    for (int pos = 0; pos < length; ++pos) {
        double* row = pe.row(pos);
        for (int i = 0; i < half; ++i) {
            const double angle = pos * std::exp(-std::log(10000.0) * (2.0 * i / dim));
            row[2 * i] = std::sin(angle);
            row[2 * i + 1] = std::cos(angle);
        }
        if (dim % 2 == 1) row[dim - 1] = 0.0;
    }
    return pe;
}

Tape::Id attention_core(Tape& t, Tape::Id q, Tape::Id k, Tape::Id v, int n_heads, bool causal) {
    const int d = t.value(q).cols();
    if (d % n_heads != 0) throw ShapeError("attention dim not divisible by head count");
    const int dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tape::Id> heads;
    heads.reserve(n_heads);
    for (int h = 0; h < n_heads; ++h) {
        const int c0 = h * dh, c1 = (h + 1) * dh;
        const Tape::Id qh = t.slice_cols(q, c0, c1);
        const Tape::Id kh = t.slice_cols(k, c0, c1);
        const Tape::Id vh = t.slice_cols(v, c0, c1);
        Tape::Id scores = t.scale(t.matmul(qh, kh, false, true), inv_sqrt);
        const Tape::Id probs = causal ? t.causal_softmax_rows(scores) : t.softmax_rows(scores);
        heads.push_back(t.matmul(probs, vh));
    }
    return t.concat_cols(heads);
}

}  // namespace speechlm
