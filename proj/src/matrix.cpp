// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/matrix.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "speechlm/error.hpp"

namespace speechlm {

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<size_t>(rows) * cols) {
        throw ShapeError("matrix data size does not match " + shape_str());
    }
}

Matrix Matrix::full(int rows, int cols, double v) {
    Matrix m(rows, cols);
    m.fill(v);
    return m;
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool Matrix::equals_bits(const Matrix& o) const {
    if (!same_shape(o)) return false;
    for (size_t i = 0; i < data_.size(); ++i) {
        if (std::bit_cast<uint64_t>(data_[i]) != std::bit_cast<uint64_t>(o.data_[i]) &&
            !(data_[i] == o.data_[i])) {
            return false;
        }
    }
    return true;
}

std::string Matrix::shape_str() const {
    return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
}

namespace {

// Inner kernels: i-k-j order so the innermost loop runs over contiguous rows
// of both the output and the right operand.
void mm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void mm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    const int m = a.cols(), k = a.rows(), n = b.cols();
    for (int p = 0; p < k; ++p) {
        const double* arow = a.row(p);
        const double* brow = b.row(p);
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c.row(i);
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_tt(const Matrix& a, const Matrix& b, Matrix& c) {
    // Rare path (only via unusual gradient combinations); keep it simple.
    const int m = a.cols(), k = a.rows(), n = b.rows();
    for (int i = 0; i < m; ++i) {
        double* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a.at(p, i) * b.at(j, p);
            crow[j] += acc;
        }
    }
}

}  // namespace

void matmul_acc(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c) {
    const int m = trans_a ? a.cols() : a.rows();
    const int ka = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (ka != kb || c.rows() != m || c.cols() != n) {
        throw ShapeError("matmul shape mismatch: " + a.shape_str() + (trans_a ? "^T" : "") +
                         " * " + b.shape_str() + (trans_b ? "^T" : "") + " -> " + c.shape_str());
    }
    if (!trans_a && !trans_b) {
        mm_nn(a, b, c);
    } else if (!trans_a && trans_b) {
        mm_nt(a, b, c);
    } else if (trans_a && !trans_b) {
        mm_tn(a, b, c);
    } else {
        mm_tt(a, b, c);
    }
}

Matrix matmul(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b) {
    const int m = trans_a ? a.cols() : a.rows();
    const int n = trans_b ? b.rows() : b.cols();
    Matrix c(m, n);
    matmul_acc(a, trans_a, b, trans_b, c);
    return c;
}

double max_abs(const Matrix& m) {
    double v = 0.0;
    for (size_t i = 0; i < m.size(); ++i) v = std::max(v, std::fabs(m.data()[i]));
    return v;
}

double max_rel_diff(const Matrix& a, const Matrix& b, double floor_denom) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_rel_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i], y = b.data()[i];
        const double denom = std::max({std::fabs(x), std::fabs(y), floor_denom});
        worst = std::max(worst, std::fabs(x - y) / denom);
    }
    return worst;
}

double round_to_bf16(double v) {
    const float f = static_cast<float>(v);
    uint32_t bits = std::bit_cast<uint32_t>(f);
    const uint32_t lsb = (bits >> 16) & 1u;
    bits += 0x7FFFu + lsb;  // round to nearest even on the upper 16 bits
    bits &= 0xFFFF0000u;
    return static_cast<double>(std::bit_cast<float>(bits));
}

void round_matrix_bf16(Matrix& m) {
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = round_to_bf16(m.data()[i]);
}

}  // namespace speechlm
