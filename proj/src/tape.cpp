// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/tape.hpp"

#include <atomic>
#include <cmath>

#include "speechlm/error.hpp"

namespace speechlm {

namespace {
std::atomic<int64_t> g_live{0};
std::atomic<int64_t> g_peak{0};

void stats_add(int64_t doubles) {
    const int64_t now = g_live.fetch_add(doubles) + doubles;
    int64_t peak = g_peak.load();
    while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
    }
}

void stats_sub(int64_t doubles) { g_live.fetch_sub(doubles); }
}  // namespace

int64_t ActivationStats::current() { return g_live.load(); }
int64_t ActivationStats::peak() { return g_peak.load(); }
void ActivationStats::reset_peak() { g_peak.store(g_live.load()); }
void ActivationStats::add(int64_t doubles) { stats_add(doubles); }
void ActivationStats::sub(int64_t doubles) { stats_sub(doubles); }

Tape::Tape(Precision precision) : precision_(precision) {}

Tape::~Tape() { stats_sub(tracked_); }

void Tape::track(size_t doubles) {
    tracked_ += static_cast<int64_t>(doubles);
    stats_add(static_cast<int64_t>(doubles));
}

void Tape::maybe_round(Matrix& m) {
    if (precision_ == Precision::bf16_sim) round_matrix_bf16(m);
}

Tape::Id Tape::push(Matrix val, bool requires_grad) {
    track(val.size());
    Node n;
    n.val = std::move(val);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::constant(Matrix m) { return push(std::move(m), false); }

Tape::Id Tape::input(Matrix m) { return push(std::move(m), true); }

Tape::Id Tape::param(Param& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return it->second;
    const Id id = push(p.value, p.trainable);
    nodes_[id].leaf = &p;
    param_ids_.emplace(&p, id);
    return id;
}

Matrix& Tape::grad_buf(Id id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
        n.grad = Matrix(n.val.rows(), n.val.cols());
        track(n.grad.size());
    }
    return n.grad;
}

const Matrix& Tape::grad(Id id) const {
    if (nodes_[id].grad.empty()) {
        throw Error("gradient was never computed for node " + std::to_string(id));
    }
    return nodes_[id].grad;
}

Tape::Id Tape::matmul(Id a, Id b, bool trans_a, bool trans_b) {
    Matrix out = speechlm::matmul(value(a), trans_a, value(b), trans_b);
    maybe_round(out);
    const bool rg = wants_grad(a) || wants_grad(b);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, b, trans_a, trans_b] {
            const Matrix& dy = nodes_[id].grad;
            // y = A' * B' with ' meaning optional transpose.
            if (wants_grad(a)) {
                if (!trans_a) {
                    // dA = dY * B'^T
                    matmul_acc(dy, false, value(b), !trans_b, grad_buf(a));
                } else {
                    // dA = B' * dY^T
                    matmul_acc(value(b), trans_b, dy, true, grad_buf(a));
                }
            }
            if (wants_grad(b)) {
                if (!trans_b) {
                    matmul_acc(value(a), !trans_a, dy, false, grad_buf(b));
                } else {
                    matmul_acc(dy, true, value(a), trans_a, grad_buf(b));
                }
            }
        };
    }
    return id;
}

Tape::Id Tape::add(Id a, Id b) {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    if (!x.same_shape(y)) {
        throw ShapeError("add shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] + y.data()[i];
    maybe_round(out);
    const bool rg = wants_grad(a) || wants_grad(b);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, b] {
            const Matrix& dy = nodes_[id].grad;
            for (Id p : {a, b}) {
                if (!wants_grad(p)) continue;
                Matrix& g = grad_buf(p);
                for (size_t i = 0; i < dy.size(); ++i) g.data()[i] += dy.data()[i];
            }
        };
    }
    return id;
}

Tape::Id Tape::add_row(Id a, Id bias_row) {
    const Matrix& x = value(a);
    const Matrix& b = value(bias_row);
    if (b.rows() != 1 || b.cols() != x.cols()) {
        throw ShapeError("add_row bias must be 1 x " + std::to_string(x.cols()) + ", got " +
                         b.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) {
        const double* xr = x.row(r);
        double* o = out.row(r);
        for (int c = 0; c < x.cols(); ++c) o[c] = xr[c] + b.at(0, c);
    }
    maybe_round(out);
    const bool rg = wants_grad(a) || wants_grad(bias_row);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, bias_row] {
            const Matrix& dy = nodes_[id].grad;
            if (wants_grad(a)) {
                Matrix& g = grad_buf(a);
                for (size_t i = 0; i < dy.size(); ++i) g.data()[i] += dy.data()[i];
            }
            if (wants_grad(bias_row)) {
                Matrix& g = grad_buf(bias_row);
                for (int r = 0; r < dy.rows(); ++r) {
                    const double* d = dy.row(r);
                    for (int c = 0; c < dy.cols(); ++c) g.at(0, c) += d[c];
                }
            }
        };
    }
    return id;
}

Tape::Id Tape::mul(Id a, Id b) {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    if (!x.same_shape(y)) {
        throw ShapeError("mul shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * y.data()[i];
    maybe_round(out);
    const bool rg = wants_grad(a) || wants_grad(b);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, b] {
            const Matrix& dy = nodes_[id].grad;
            if (wants_grad(a)) {
                Matrix& g = grad_buf(a);
                const Matrix& y = value(b);
                for (size_t i = 0; i < dy.size(); ++i) g.data()[i] += dy.data()[i] * y.data()[i];
            }
            if (wants_grad(b)) {
                Matrix& g = grad_buf(b);
                const Matrix& x = value(a);
                for (size_t i = 0; i < dy.size(); ++i) g.data()[i] += dy.data()[i] * x.data()[i];
            }
        };
    }
    return id;
}

Tape::Id Tape::scale(Id a, double s) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * s;
    maybe_round(out);
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, s] {
            const Matrix& dy = nodes_[id].grad;
            Matrix& g = grad_buf(a);
            for (size_t i = 0; i < dy.size(); ++i) g.data()[i] += dy.data()[i] * s;
        };
    }
    return id;
}

Tape::Id Tape::relu(Id a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    maybe_round(out);
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a] {
            const Matrix& dy = nodes_[id].grad;
            const Matrix& x = value(a);
            Matrix& g = grad_buf(a);
            for (size_t i = 0; i < dy.size(); ++i) {
                if (x.data()[i] > 0.0) g.data()[i] += dy.data()[i];
            }
        };
    }
    return id;
}

Tape::Id Tape::silu(Id a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = v / (1.0 + std::exp(-v));
    }
    maybe_round(out);
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a] {
            const Matrix& dy = nodes_[id].grad;
            const Matrix& x = value(a);
            Matrix& g = grad_buf(a);
            for (size_t i = 0; i < dy.size(); ++i) {
                const double v = x.data()[i];
                const double sig = 1.0 / (1.0 + std::exp(-v));
                g.data()[i] += dy.data()[i] * sig * (1.0 + v * (1.0 - sig));
            }
        };
    }
    return id;
}

Tape::Id Tape::rms_norm(Id x, Id gain, double eps) {
    const Matrix& xv = value(x);
    const Matrix& gv = value(gain);
    if (gv.rows() != 1 || gv.cols() != xv.cols()) {
        throw ShapeError("rms_norm gain must be 1 x " + std::to_string(xv.cols()));
    }
    const int rows = xv.rows(), cols = xv.cols();
    Matrix out(rows, cols);
    std::vector<double> inv_rms(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = xv.row(r);
        double ss = 0.0;
        for (int c = 0; c < cols; ++c) ss += xr[c] * xr[c];
        const double ir = 1.0 / std::sqrt(ss / cols + eps);
        inv_rms[r] = ir;
        double* o = out.row(r);
        for (int c = 0; c < cols; ++c) o[c] = xr[c] * ir * gv.at(0, c);
    }
    maybe_round(out);
    const bool rg = wants_grad(x) || wants_grad(gain);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, x, gain, inv_rms = std::move(inv_rms)] {
            const Matrix& dy = nodes_[id].grad;
            const Matrix& xv = value(x);
            const Matrix& gv = value(gain);
            const int rows = xv.rows(), cols = xv.cols();
            if (wants_grad(gain)) {
                Matrix& gg = grad_buf(gain);
                for (int r = 0; r < rows; ++r) {
                    const double* d = dy.row(r);
                    const double* xr = xv.row(r);
                    for (int c = 0; c < cols; ++c) gg.at(0, c) += d[c] * xr[c] * inv_rms[r];
                }
            }
            if (wants_grad(x)) {
                Matrix& gx = grad_buf(x);
                for (int r = 0; r < rows; ++r) {
                    const double* d = dy.row(r);
                    const double* xr = xv.row(r);
                    const double ir = inv_rms[r];
                    double dot = 0.0;
                    for (int c = 0; c < cols; ++c) dot += d[c] * gv.at(0, c) * xr[c];
                    const double k = dot * ir * ir * ir / cols;
                    double* g = gx.row(r);
                    for (int c = 0; c < cols; ++c) {
                        g[c] += d[c] * gv.at(0, c) * ir - xr[c] * k;
                    }
                }
            }
        };
    }
    return id;
}

namespace {
// Softmax over columns [0, limit) of one row, written in place.
void softmax_span(const double* in, double* out, int limit, int cols) {
    double mx = in[0];
    for (int c = 1; c < limit; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (int c = 0; c < limit; ++c) {
        out[c] = std::exp(in[c] - mx);
        sum += out[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < limit; ++c) out[c] *= inv;
    for (int c = limit; c < cols; ++c) out[c] = 0.0;
}
}  // namespace

Tape::Id Tape::softmax_rows(Id a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) softmax_span(x.row(r), out.row(r), x.cols(), x.cols());
    maybe_round(out);
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a] {
            const Matrix& dy = nodes_[id].grad;
            const Matrix& y = value(id);
            Matrix& g = grad_buf(a);
            for (int r = 0; r < y.rows(); ++r) {
                const double* yr = y.row(r);
                const double* d = dy.row(r);
                double dot = 0.0;
                for (int c = 0; c < y.cols(); ++c) dot += d[c] * yr[c];
                double* gr = g.row(r);
                for (int c = 0; c < y.cols(); ++c) gr[c] += yr[c] * (d[c] - dot);
            }
        };
    }
    return id;
}

Tape::Id Tape::causal_softmax_rows(Id a) {
    const Matrix& x = value(a);
    if (x.rows() != x.cols()) {
        throw ShapeError("causal softmax expects square score matrix, got " + x.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) softmax_span(x.row(r), out.row(r), r + 1, x.cols());
    maybe_round(out);
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a] {
            const Matrix& dy = nodes_[id].grad;
            const Matrix& y = value(id);
            Matrix& g = grad_buf(a);
            for (int r = 0; r < y.rows(); ++r) {
                const int limit = r + 1;
                const double* yr = y.row(r);
                const double* d = dy.row(r);
                double dot = 0.0;
                for (int c = 0; c < limit; ++c) dot += d[c] * yr[c];
                double* gr = g.row(r);
                for (int c = 0; c < limit; ++c) gr[c] += yr[c] * (d[c] - dot);
            }
        };
    }
    return id;
}

Tape::Id Tape::slice_cols(Id a, int c0, int c1) {
    const Matrix& x = value(a);
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) {
        throw ShapeError("slice_cols [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") out of range for " + x.shape_str());
    }
    Matrix out(x.rows(), c1 - c0);
    for (int r = 0; r < x.rows(); ++r) {
        const double* xr = x.row(r);
        double* o = out.row(r);
        for (int c = c0; c < c1; ++c) o[c - c0] = xr[c];
    }
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, c0] {
            const Matrix& dy = nodes_[id].grad;
            Matrix& g = grad_buf(a);
            for (int r = 0; r < dy.rows(); ++r) {
                const double* d = dy.row(r);
                double* gr = g.row(r);
                for (int c = 0; c < dy.cols(); ++c) gr[c0 + c] += d[c];
            }
        };
    }
    return id;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of zero parts");
    const int rows = value(parts[0]).rows();
    int cols = 0;
    bool rg = false;
    for (Id p : parts) {
        if (value(p).rows() != rows) throw ShapeError("concat_cols row mismatch");
        cols += value(p).cols();
        rg = rg || wants_grad(p);
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Id p : parts) {
        const Matrix& x = value(p);
        for (int r = 0; r < rows; ++r) {
            const double* xr = x.row(r);
            double* o = out.row(r) + off;
            for (int c = 0; c < x.cols(); ++c) o[c] = xr[c];
        }
        off += x.cols();
    }
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, parts] {
            const Matrix& dy = nodes_[id].grad;
            int off = 0;
            for (Id p : parts) {
                const int w = value(p).cols();
                if (wants_grad(p)) {
                    Matrix& g = grad_buf(p);
                    for (int r = 0; r < dy.rows(); ++r) {
                        const double* d = dy.row(r) + off;
                        double* gr = g.row(r);
                        for (int c = 0; c < w; ++c) gr[c] += d[c];
                    }
                }
                off += w;
            }
        };
    }
    return id;
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of zero parts");
    const int cols = value(parts[0]).cols();
    int rows = 0;
    bool rg = false;
    for (Id p : parts) {
        if (value(p).cols() != cols) throw ShapeError("concat_rows column mismatch");
        rows += value(p).rows();
        rg = rg || wants_grad(p);
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Id p : parts) {
        const Matrix& x = value(p);
        for (int r = 0; r < x.rows(); ++r) {
            const double* xr = x.row(r);
            double* o = out.row(off + r);
            for (int c = 0; c < cols; ++c) o[c] = xr[c];
        }
        off += x.rows();
    }
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, parts] {
            const Matrix& dy = nodes_[id].grad;
            int off = 0;
            for (Id p : parts) {
                const int h = value(p).rows();
                if (wants_grad(p)) {
                    Matrix& g = grad_buf(p);
                    for (int r = 0; r < h; ++r) {
                        const double* d = dy.row(off + r);
                        double* gr = g.row(r);
                        for (int c = 0; c < dy.cols(); ++c) gr[c] += d[c];
                    }
                }
                off += h;
            }
        };
    }
    return id;
}

Tape::Id Tape::gather_rows(Id table, std::vector<int> row_ids) {
    const Matrix& t = value(table);
    Matrix out(static_cast<int>(row_ids.size()), t.cols());
    for (size_t i = 0; i < row_ids.size(); ++i) {
        const int r = row_ids[i];
        if (r < 0 || r >= t.rows()) {
            throw ShapeError("gather_rows index " + std::to_string(r) + " out of range for " +
                             t.shape_str());
        }
        const double* src = t.row(r);
        double* dst = out.row(static_cast<int>(i));
        for (int c = 0; c < t.cols(); ++c) dst[c] = src[c];
    }
    const bool rg = wants_grad(table);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, table, row_ids = std::move(row_ids)] {
            const Matrix& dy = nodes_[id].grad;
            Matrix& g = grad_buf(table);
            for (size_t i = 0; i < row_ids.size(); ++i) {
                const double* d = dy.row(static_cast<int>(i));
                double* gr = g.row(row_ids[i]);
                for (int c = 0; c < dy.cols(); ++c) gr[c] += d[c];
            }
        };
    }
    return id;
}

Tape::Id Tape::group_rows(Id a, int k, bool pad_repeat) {
    const Matrix& x = value(a);
    if (k < 1) throw ShapeError("group_rows needs k >= 1");
    const int t = x.rows();
    const int groups = pad_repeat ? (t + k - 1) / k : t / k;
    if (groups < 1) {
        throw ShapeError("group_rows: " + std::to_string(t) + " rows cannot form a group of " +
                         std::to_string(k));
    }
    Matrix out(groups, x.cols() * k);
    for (int g = 0; g < groups; ++g) {
        double* o = out.row(g);
        for (int j = 0; j < k; ++j) {
            const int src = std::min(g * k + j, t - 1);
            const double* xr = x.row(src);
            for (int c = 0; c < x.cols(); ++c) o[j * x.cols() + c] = xr[c];
        }
    }
    const bool rg = wants_grad(a);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, a, k, groups, t] {
            const Matrix& dy = nodes_[id].grad;
            Matrix& g = grad_buf(a);
            const int cols = g.cols();
            for (int gi = 0; gi < groups; ++gi) {
                const double* d = dy.row(gi);
                for (int j = 0; j < k; ++j) {
                    const int src = std::min(gi * k + j, t - 1);
                    double* gr = g.row(src);
                    for (int c = 0; c < cols; ++c) gr[c] += d[j * cols + c];
                }
            }
        };
    }
    return id;
}

Tape::Id Tape::ce_sum(Id logits, std::vector<int> targets, std::vector<uint8_t> mask) {
    const Matrix& z = value(logits);
    const size_t rows = static_cast<size_t>(z.rows());
    if (targets.size() != rows || mask.size() != rows) {
        throw ShapeError("ce_sum: targets/mask length must equal logit rows");
    }
    double total = 0.0;
    for (size_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        const int tgt = targets[r];
        if (tgt < 0 || tgt >= z.cols()) {
            throw ShapeError("ce_sum target id " + std::to_string(tgt) + " out of vocab range");
        }
        const double* zr = z.row(static_cast<int>(r));
        double mx = zr[0];
        for (int c = 1; c < z.cols(); ++c) mx = std::max(mx, zr[c]);
        double sum = 0.0;
        for (int c = 0; c < z.cols(); ++c) sum += std::exp(zr[c] - mx);
        total += std::log(sum) + mx - zr[tgt];
    }
    Matrix out(1, 1);
    out.at(0, 0) = total;
    const bool rg = wants_grad(logits);
    const Id id = push(std::move(out), rg);
    if (rg) {
        nodes_[id].back = [this, id, logits, targets = std::move(targets),
                           mask = std::move(mask)] {
            const double seed = nodes_[id].grad.at(0, 0);
            const Matrix& z = value(logits);
            Matrix& g = grad_buf(logits);
            for (int r = 0; r < z.rows(); ++r) {
                if (!mask[r]) continue;
                const double* zr = z.row(r);
                double* gr = g.row(r);
                double mx = zr[0];
                for (int c = 1; c < z.cols(); ++c) mx = std::max(mx, zr[c]);
                double sum = 0.0;
                for (int c = 0; c < z.cols(); ++c) sum += std::exp(zr[c] - mx);
                const double inv = 1.0 / sum;
                for (int c = 0; c < z.cols(); ++c) {
                    gr[c] += seed * std::exp(zr[c] - mx) * inv;
                }
                gr[targets[r]] -= seed;
            }
        };
    }
    return id;
}

void Tape::backward(Id node, double seed) {
    const Matrix& v = value(node);
    if (v.rows() != 1 || v.cols() != 1) {
        throw ShapeError("scalar backward on non-1x1 node " + v.shape_str());
    }
    grad_buf(node).at(0, 0) += seed;
    run_backward(node);
}

void Tape::backward_seeded(Id node, const Matrix& out_grad) {
    if (!out_grad.same_shape(value(node))) {
        throw ShapeError("backward_seeded shape mismatch");
    }
    Matrix& g = grad_buf(node);
    for (size_t i = 0; i < g.size(); ++i) g.data()[i] += out_grad.data()[i];
    run_backward(node);
}

void Tape::run_backward(Id from) {
    for (Id i = from; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (precision_ == Precision::bf16_sim) round_matrix_bf16(n.grad);
        if (n.back) n.back();
        if (n.leaf != nullptr && n.leaf->trainable) {
            Matrix& pg = n.leaf->grad;
            for (size_t j = 0; j < pg.size(); ++j) pg.data()[j] += n.grad.data()[j];
        }
    }
}

}  // namespace speechlm
