// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace speechlm {

// Dense row-major matrix of doubles. The training core computes in binary64
// throughout so that finite-difference gradient oracles at eps=1e-4 stay
// meaningful; see TrainConfig::precision for the simulated bf16 mode.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}
    Matrix(int rows, int cols, std::vector<double> data);

    static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }
    static Matrix full(int rows, int cols, double v);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
    const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    // Exact comparison; +0.0 and -0.0 compare equal, NaN never does.
    bool equals_bits(const Matrix& o) const;

    std::string shape_str() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C += A(^T) * B(^T). Accumulating form so gradient kernels can reuse it.
void matmul_acc(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c);
Matrix matmul(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b);

double max_abs(const Matrix& m);
double max_rel_diff(const Matrix& a, const Matrix& b, double floor_denom);

// Rounds a double to the nearest bfloat16 value (round-to-nearest-even),
// returned as a double. Used by the bf16-sim precision mode.
double round_to_bf16(double v);
void round_matrix_bf16(Matrix& m);

}  // namespace speechlm
