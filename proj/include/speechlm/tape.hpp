// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "speechlm/matrix.hpp"

namespace speechlm {

// Named model tensor. Gradients accumulate across backward passes until
// zero_grad(), which is what makes gradient accumulation a no-op to
// implement on top of this engine.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Matrix v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), trainable(train) {}

    void zero_grad() { grad.fill(0.0); }
    int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

// Process-wide accounting of live tape buffers (values + gradients), used to
// verify that gradient checkpointing actually lowers peak activation memory.
struct ActivationStats {
    static int64_t current();
    static int64_t peak();
    static void reset_peak();
    // For buffers held outside any tape (e.g. stage boundaries kept alive
    // by the checkpointed runner).
    static void add(int64_t doubles);
    static void sub(int64_t doubles);
};

// Reverse-mode autodiff over Matrix values. Define-by-run: node creation
// order is a topological order, so backward() is a single reverse sweep.
class Tape {
public:
    using Id = int32_t;

    enum class Precision { full, bf16_sim };

    explicit Tape(Precision precision = Precision::full);
    ~Tape();

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Id constant(Matrix m);            // never receives gradient
    Id input(Matrix m);               // gradient tracked; read back via grad()
    Id param(Param& p);               // gradient flows into p.grad when trainable

    // Ops.
    Id matmul(Id a, Id b, bool trans_a = false, bool trans_b = false);
    Id add(Id a, Id b);
    Id add_row(Id a, Id bias_row);    // bias_row is 1 x C, broadcast over rows
    Id mul(Id a, Id b);               // elementwise
    Id scale(Id a, double s);
    Id relu(Id a);
    Id silu(Id a);
    Id rms_norm(Id x, Id gain, double eps);
    Id softmax_rows(Id a);
    Id causal_softmax_rows(Id a);     // row i normalizes over columns [0, i]
    Id slice_cols(Id a, int c0, int c1);
    Id concat_cols(const std::vector<Id>& parts);
    Id concat_rows(const std::vector<Id>& parts);
    Id gather_rows(Id table, std::vector<int> row_ids);
    // Non-overlapping groups of k consecutive rows concatenated feature-wise;
    // tail either dropped or right-padded by repeating the last row.
    Id group_rows(Id a, int k, bool pad_repeat);
    // Sum of next-token cross-entropies at rows where mask is 1.
    Id ce_sum(Id logits, std::vector<int> targets, std::vector<uint8_t> mask);

    const Matrix& value(Id id) const { return nodes_[id].val; }
    const Matrix& grad(Id id) const;

    // Seeds d(loss)/d(node) = seed and sweeps. `node` must be 1x1 for the
    // scalar form.
    void backward(Id node, double seed = 1.0);
    void backward_seeded(Id node, const Matrix& out_grad);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix val;
        Matrix grad;  // allocated lazily during backward
        bool requires_grad = false;
        Param* leaf = nullptr;
        std::function<void()> back;  // empty for leaves/constants
    };

    Id push(Matrix val, bool requires_grad);
    Matrix& grad_buf(Id id);  // allocates zeros on first touch
    bool wants_grad(Id id) const { return nodes_[id].requires_grad; }
    void run_backward(Id from);
    void track(size_t doubles);
    void maybe_round(Matrix& m);

    std::vector<Node> nodes_;
    std::unordered_map<const Param*, Id> param_ids_;
    Precision precision_;
    int64_t tracked_ = 0;
};

}  // namespace speechlm
