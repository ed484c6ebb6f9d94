#pragma once

// Dense f64 tensors plus a reverse-mode tape.  Every differentiable op is a
// Tape member: it computes the forward value eagerly and, when recording is
// enabled and an input wants gradients, pushes a closure that propagates
// adjoints.  backward() replays the closures in reverse creation order, which
// is a valid topological order because operands always predate results.

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace addlens {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline long long numel_of(const Shape& s) {
    long long n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

// Value-semantics handle over shared storage.  Copies alias the same buffer,
// which is what the tape closures rely on.
class Tensor {
public:
    struct Impl {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;   // allocated lazily, same size as value
        bool requires_grad = false;
    };

    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<Impl>();
        t.impl_->shape = shape;
        t.impl_->value.assign(static_cast<size_t>(numel_of(shape)), 0.0);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from(const Shape& shape, std::vector<double> data, bool requires_grad = false) {
        if (static_cast<long long>(data.size()) != numel_of(shape))
            throw std::invalid_argument("data size " + std::to_string(data.size()) +
                                        " does not fill shape " + shape_str(shape));
        Tensor t = zeros(shape, requires_grad);
        t.impl_->value = std::move(data);
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    static Tensor randn(const Shape& shape, double stddev, std::mt19937_64& rng,
                        bool requires_grad = false) {
        Tensor t = zeros(shape, requires_grad);
        std::normal_distribution<double> dist(0.0, stddev);
        for (double& v : t.impl_->value) v = dist(rng);
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return check().shape; }
    int dim(int i) const { return check().shape.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(check().shape.size()); }
    long long numel() const { return static_cast<long long>(check().value.size()); }
    bool requires_grad() const { return check().requires_grad; }
    void set_requires_grad(bool rg) { check().requires_grad = rg; }

    std::vector<double>& values() { return check().value; }
    const std::vector<double>& values() const { return check().value; }

    double at(int r, int c) const {
        const Impl& im = check();
        if (im.shape.size() != 2) throw std::invalid_argument("at(r,c) on non-matrix " + shape_str(im.shape));
        return im.value[static_cast<size_t>(r) * im.shape[1] + c];
    }
    double& at(int r, int c) {
        Impl& im = check();
        if (im.shape.size() != 2) throw std::invalid_argument("at(r,c) on non-matrix " + shape_str(im.shape));
        return im.value[static_cast<size_t>(r) * im.shape[1] + c];
    }
    double item() const {
        const Impl& im = check();
        if (im.value.size() != 1) throw std::invalid_argument("item() on tensor " + shape_str(im.shape));
        return im.value[0];
    }

    bool has_grad() const { return !check().grad.empty(); }
    std::vector<double>& grad() {
        Impl& im = check();
        if (im.grad.empty()) im.grad.assign(im.value.size(), 0.0);
        return im.grad;
    }
    const std::vector<double>& grad() const {
        const Impl& im = check();
        if (im.grad.empty())
            throw std::logic_error("gradient read before backward touched tensor " + shape_str(im.shape));
        return im.grad;
    }
    void zero_grad() {
        Impl& im = check();
        std::fill(im.grad.begin(), im.grad.end(), 0.0);
    }

    std::shared_ptr<Impl> impl() const { return impl_; }

private:
    Impl& check() const {
        if (!impl_) throw std::logic_error("use of undefined Tensor");
        return *impl_;
    }
    std::shared_ptr<Impl> impl_;
};

// Named parameter, the unit optimizers and checkpoints work in.
struct NamedParam {
    std::string name;
    Tensor tensor;
};

namespace detail {

inline void check_matrix(const Tensor& t, const char* who) {
    if (t.ndim() != 2)
        throw std::invalid_argument(std::string(who) + " expects a matrix, got " + shape_str(t.shape()));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(who) + " shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

// C += or = A(R x K) * B(K x C), row major.
inline void gemm(bool transA, bool transB, int m, int n, int k, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, transA ? CblasTrans : CblasNoTrans,
                transB ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, lda, b, ldb, beta, c, ldc);
}

} // namespace detail

// A block placement for assemble_blocks: copy `block` so its top-left lands at
// (row, col) of the output.
struct BlockPlacement {
    Tensor block;
    int row = 0;
    int col = 0;
};

class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }
    size_t size() const { return nodes_.size(); }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
    // Gradients accumulate into each tensor's grad buffer, so callers zero
    // them between steps.  A tape may only be walked once per recording.
    void backward(Tensor loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward needs a scalar loss, got " + shape_str(loss.shape()));
        if (consumed_)
            throw std::logic_error("backward called twice on one tape; reset() between passes");
        consumed_ = true;
        loss.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    // ----- elementwise and structural ops -----

    Tensor add(Tensor a, Tensor b) {
        detail::check_same_shape(a, b, "add");
        Tensor out = Tensor::zeros(a.shape());
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        if (track(out, {a, b})) {
            push([a, b, out]() mutable {
                const auto& g = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                }
            });
        }
        return out;
    }

    Tensor mul(Tensor a, Tensor b) {
        detail::check_same_shape(a, b, "mul");
        Tensor out = Tensor::zeros(a.shape());
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
        if (track(out, {a, b})) {
            push([a, b, out]() mutable {
                const auto& g = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    const auto& bv2 = b.values();
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    const auto& av2 = a.values();
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
                }
            });
        }
        return out;
    }

    Tensor scale(Tensor a, double c) {
        Tensor out = Tensor::zeros(a.shape());
        const auto& av = a.values();
        auto& ov = out.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
        if (track(out, {a})) {
            push([a, out, c]() mutable {
                const auto& g = out.grad();
                auto& ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
            });
        }
        return out;
    }

    Tensor relu(Tensor a) {
        Tensor out = Tensor::zeros(a.shape());
        const auto& av = a.values();
        auto& ov = out.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
        if (track(out, {a})) {
            push([a, out]() mutable {
                const auto& g = out.grad();
                const auto& av2 = a.values();
                auto& ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i)
                    if (av2[i] > 0.0) ga[i] += g[i];
            });
        }
        return out;
    }

    // Adds row vector b (shape [C]) to every row of a [R x C].
    Tensor add_rowvec(Tensor a, Tensor b) {
        detail::check_matrix(a, "add_rowvec");
        if (b.ndim() != 1 || b.dim(0) != a.dim(1))
            throw std::invalid_argument("add_rowvec wants bias [" + std::to_string(a.dim(1)) +
                                        "], got " + shape_str(b.shape()));
        const int R = a.dim(0), C = a.dim(1);
        Tensor out = Tensor::zeros(a.shape());
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) ov[static_cast<size_t>(r) * C + c] = av[static_cast<size_t>(r) * C + c] + bv[c];
        if (track(out, {a, b})) {
            push([a, b, out, R, C]() mutable {
                const auto& g = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    for (int r = 0; r < R; ++r)
                        for (int c = 0; c < C; ++c) gb[c] += g[static_cast<size_t>(r) * C + c];
                }
            });
        }
        return out;
    }

    Tensor matmul(Tensor a, Tensor b) {
        detail::check_matrix(a, "matmul");
        detail::check_matrix(b, "matmul");
        if (a.dim(1) != b.dim(0))
            throw std::invalid_argument("matmul inner dims disagree " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
        const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
        Tensor out = Tensor::zeros({M, N});
        detail::gemm(false, false, M, N, K, a.values().data(), K, b.values().data(), N, 0.0,
                     out.values().data(), N);
        if (track(out, {a, b})) {
            push([a, b, out, M, K, N]() mutable {
                const auto& g = out.grad();
                if (a.requires_grad())
                    detail::gemm(false, true, M, K, N, g.data(), N, b.values().data(), N, 1.0,
                                 a.grad().data(), K);
                if (b.requires_grad())
                    detail::gemm(true, false, K, N, M, a.values().data(), K, g.data(), N, 1.0,
                                 b.grad().data(), N);
            });
        }
        return out;
    }

    Tensor reshape(Tensor a, const Shape& shape) {
        if (numel_of(shape) != a.numel())
            throw std::invalid_argument("reshape " + shape_str(a.shape()) + " to " + shape_str(shape) +
                                        " changes element count");
        Tensor out = Tensor::zeros(shape);
        out.values() = a.values();
        if (track(out, {a})) {
            push([a, out]() mutable {
                const auto& g = out.grad();
                auto& ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            });
        }
        return out;
    }

    Tensor transpose(Tensor a) {
        detail::check_matrix(a, "transpose");
        const int R = a.dim(0), C = a.dim(1);
        Tensor out = Tensor::zeros({C, R});
        const auto& av = a.values();
        auto& ov = out.values();
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) ov[static_cast<size_t>(c) * R + r] = av[static_cast<size_t>(r) * C + c];
        if (track(out, {a})) {
            push([a, out, R, C]() mutable {
                const auto& g = out.grad();
                auto& ga = a.grad();
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) ga[static_cast<size_t>(r) * C + c] += g[static_cast<size_t>(c) * R + r];
            });
        }
        return out;
    }

    // Copies rows of a [R x C] selected by index (with repeats allowed); the
    // backward pass scatter-adds, which is what embedding lookups need.
    Tensor gather_rows(Tensor a, const std::vector<int>& rows) {
        detail::check_matrix(a, "gather_rows");
        const int R = a.dim(0), C = a.dim(1);
        for (int r : rows)
            if (r < 0 || r >= R)
                throw std::out_of_range("gather_rows index " + std::to_string(r) + " outside [0," +
                                        std::to_string(R) + ")");
        Tensor out = Tensor::zeros({static_cast<int>(rows.size()), C});
        const auto& av = a.values();
        auto& ov = out.values();
        for (size_t i = 0; i < rows.size(); ++i)
            std::copy_n(av.begin() + static_cast<size_t>(rows[i]) * C, C, ov.begin() + i * C);
        if (track(out, {a})) {
            push([a, out, rows, C]() mutable {
                const auto& g = out.grad();
                auto& ga = a.grad();
                for (size_t i = 0; i < rows.size(); ++i)
                    for (int c = 0; c < C; ++c) ga[static_cast<size_t>(rows[i]) * C + c] += g[i * C + c];
            });
        }
        return out;
    }

    // Copy of the half-open window [r0,r1) x [c0,c1).
    Tensor submatrix(Tensor a, int r0, int r1, int c0, int c1) {
        detail::check_matrix(a, "submatrix");
        const int R = a.dim(0), C = a.dim(1);
        if (r0 < 0 || r1 > R || c0 < 0 || c1 > C || r0 > r1 || c0 > c1)
            throw std::out_of_range("submatrix window [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ")x[" + std::to_string(c0) + "," + std::to_string(c1) + ") outside " +
                                    shape_str(a.shape()));
        const int h = r1 - r0, w = c1 - c0;
        Tensor out = Tensor::zeros({h, w});
        const auto& av = a.values();
        auto& ov = out.values();
        for (int r = 0; r < h; ++r)
            std::copy_n(av.begin() + static_cast<size_t>(r0 + r) * C + c0, w, ov.begin() + static_cast<size_t>(r) * w);
        if (track(out, {a})) {
            push([a, out, r0, c0, h, w, C]() mutable {
                const auto& g = out.grad();
                auto& ga = a.grad();
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < w; ++c)
                        ga[static_cast<size_t>(r0 + r) * C + c0 + c] += g[static_cast<size_t>(r) * w + c];
            });
        }
        return out;
    }

    // Tiles non-overlapping blocks into an [R x C] zero canvas.
    Tensor assemble_blocks(int R, int C, const std::vector<BlockPlacement>& blocks) {
        Tensor out = Tensor::zeros({R, C});
        auto& ov = out.values();
        std::vector<Tensor> inputs;
        inputs.reserve(blocks.size());
        for (const auto& bp : blocks) {
            detail::check_matrix(bp.block, "assemble_blocks");
            const int h = bp.block.dim(0), w = bp.block.dim(1);
            if (bp.row < 0 || bp.col < 0 || bp.row + h > R || bp.col + w > C)
                throw std::out_of_range("assemble_blocks block " + shape_str(bp.block.shape()) +
                                        " at (" + std::to_string(bp.row) + "," + std::to_string(bp.col) +
                                        ") overflows [" + std::to_string(R) + "x" + std::to_string(C) + "]");
            const auto& bv = bp.block.values();
            for (int r = 0; r < h; ++r)
                std::copy_n(bv.begin() + static_cast<size_t>(r) * w, w,
                            ov.begin() + static_cast<size_t>(bp.row + r) * C + bp.col);
            inputs.push_back(bp.block);
        }
        if (track(out, inputs)) {
            push([out, blocks, C]() mutable {
                const auto& g = out.grad();
                for (const auto& bp : blocks) {
                    if (!bp.block.requires_grad()) continue;
                    Tensor blk = bp.block;
                    auto& gb = blk.grad();
                    const int h = blk.dim(0), w = blk.dim(1);
                    for (int r = 0; r < h; ++r)
                        for (int c = 0; c < w; ++c)
                            gb[static_cast<size_t>(r) * w + c] += g[static_cast<size_t>(bp.row + r) * C + bp.col + c];
                }
            });
        }
        return out;
    }

    // ----- reductions and nonlinear heads -----

    Tensor sum_all(Tensor a) {
        double s = 0.0;
        for (double v : a.values()) s += v;
        Tensor out = Tensor::scalar(s);
        if (track(out, {a})) {
            push([a, out]() mutable {
                const double g = out.grad()[0];
                auto& ga = a.grad();
                for (double& v : ga) v += g;
            });
        }
        return out;
    }

    Tensor mean_all(Tensor a) {
        const double n = static_cast<double>(a.numel());
        if (n == 0.0) throw std::invalid_argument("mean_all of empty tensor");
        double s = 0.0;
        for (double v : a.values()) s += v;
        Tensor out = Tensor::scalar(s / n);
        if (track(out, {a})) {
            push([a, out, n]() mutable {
                const double g = out.grad()[0] / n;
                auto& ga = a.grad();
                for (double& v : ga) v += g;
            });
        }
        return out;
    }

    // Row-wise softmax over an [L x L] score matrix with a causal mask: row q
    // attends to keys 0..q, and masked cells are exactly zero in the output.
    Tensor softmax_causal(Tensor scores) {
        detail::check_matrix(scores, "softmax_causal");
        if (scores.dim(0) != scores.dim(1))
            throw std::invalid_argument("softmax_causal wants square scores, got " + shape_str(scores.shape()));
        const int L = scores.dim(0);
        Tensor out = Tensor::zeros({L, L});
        const auto& sv = scores.values();
        auto& ov = out.values();
        for (int q = 0; q < L; ++q) {
            const size_t row = static_cast<size_t>(q) * L;
            double mx = sv[row];
            for (int k = 1; k <= q; ++k) mx = std::max(mx, sv[row + k]);
            double z = 0.0;
            for (int k = 0; k <= q; ++k) {
                ov[row + k] = std::exp(sv[row + k] - mx);
                z += ov[row + k];
            }
            for (int k = 0; k <= q; ++k) ov[row + k] /= z;
        }
        if (track(out, {scores})) {
            push([scores, out, L]() mutable {
                const auto& g = out.grad();
                const auto& p = out.values();
                auto& gs = scores.grad();
                for (int q = 0; q < L; ++q) {
                    const size_t row = static_cast<size_t>(q) * L;
                    double dot = 0.0;
                    for (int k = 0; k <= q; ++k) dot += g[row + k] * p[row + k];
                    for (int k = 0; k <= q; ++k) gs[row + k] += p[row + k] * (g[row + k] - dot);
                }
            });
        }
        return out;
    }

    // Per-row negative log likelihood of the target class.  logits [R x V],
    // targets length R, output [R].
    Tensor cross_entropy_rows(Tensor logits, const std::vector<int>& targets) {
        detail::check_matrix(logits, "cross_entropy_rows");
        const int R = logits.dim(0), V = logits.dim(1);
        if (static_cast<int>(targets.size()) != R)
            throw std::invalid_argument("cross_entropy_rows got " + std::to_string(targets.size()) +
                                        " targets for " + std::to_string(R) + " rows");
        for (int t : targets)
            if (t < 0 || t >= V)
                throw std::out_of_range("cross_entropy_rows target " + std::to_string(t) +
                                        " outside vocab [0," + std::to_string(V) + ")");
        Tensor out = Tensor::zeros({R});
        // Probabilities are kept for the backward closure.
        auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(R) * V);
        const auto& lv = logits.values();
        auto& ov = out.values();
        for (int r = 0; r < R; ++r) {
            const size_t row = static_cast<size_t>(r) * V;
            double mx = lv[row];
            for (int v = 1; v < V; ++v) mx = std::max(mx, lv[row + v]);
            double z = 0.0;
            for (int v = 0; v < V; ++v) {
                (*probs)[row + v] = std::exp(lv[row + v] - mx);
                z += (*probs)[row + v];
            }
            for (int v = 0; v < V; ++v) (*probs)[row + v] /= z;
            ov[r] = -std::log((*probs)[row + targets[r]]);
        }
        if (track(out, {logits})) {
            push([logits, out, probs, targets, R, V]() mutable {
                const auto& g = out.grad();
                auto& gl = logits.grad();
                for (int r = 0; r < R; ++r) {
                    const size_t row = static_cast<size_t>(r) * V;
                    for (int v = 0; v < V; ++v)
                        gl[row + v] += g[r] * ((*probs)[row + v] - (v == targets[r] ? 1.0 : 0.0));
                }
            });
        }
        return out;
    }

    // Row-wise layer normalization with affine gain and bias.  A constant row
    // normalizes to zeros before the affine part.
    Tensor layer_norm(Tensor x, Tensor gain, Tensor bias, double eps = 1e-8) {
        detail::check_matrix(x, "layer_norm");
        const int R = x.dim(0), C = x.dim(1);
        if (gain.ndim() != 1 || gain.dim(0) != C || bias.ndim() != 1 || bias.dim(0) != C)
            throw std::invalid_argument("layer_norm affine params must be [" + std::to_string(C) +
                                        "], got " + shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
        Tensor out = Tensor::zeros({R, C});
        auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(R) * C);
        auto rstd = std::make_shared<std::vector<double>>(R);
        const auto& xv = x.values();
        const auto& gv = gain.values();
        const auto& bv = bias.values();
        auto& ov = out.values();
        for (int r = 0; r < R; ++r) {
            const size_t row = static_cast<size_t>(r) * C;
            double mean = 0.0;
            for (int c = 0; c < C; ++c) mean += xv[row + c];
            mean /= C;
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double d = xv[row + c] - mean;
                var += d * d;
            }
            var /= C;
            const double rs = 1.0 / std::sqrt(var + eps);
            (*rstd)[r] = rs;
            for (int c = 0; c < C; ++c) {
                (*xhat)[row + c] = (xv[row + c] - mean) * rs;
                ov[row + c] = (*xhat)[row + c] * gv[c] + bv[c];
            }
        }
        if (track(out, {x, gain, bias})) {
            push([x, gain, bias, out, xhat, rstd, R, C]() mutable {
                const auto& g = out.grad();
                const auto& gv2 = gain.values();
                for (int r = 0; r < R; ++r) {
                    const size_t row = static_cast<size_t>(r) * C;
                    if (gain.requires_grad()) {
                        auto& gg = gain.grad();
                        for (int c = 0; c < C; ++c) gg[c] += g[row + c] * (*xhat)[row + c];
                    }
                    if (bias.requires_grad()) {
                        auto& gb = bias.grad();
                        for (int c = 0; c < C; ++c) gb[c] += g[row + c];
                    }
                    if (x.requires_grad()) {
                        auto& gx = x.grad();
                        double sum_gy = 0.0, sum_gyx = 0.0;
                        for (int c = 0; c < C; ++c) {
                            const double gy = g[row + c] * gv2[c];
                            sum_gy += gy;
                            sum_gyx += gy * (*xhat)[row + c];
                        }
                        for (int c = 0; c < C; ++c) {
                            const double gy = g[row + c] * gv2[c];
                            gx[row + c] += (*rstd)[r] * (gy - (sum_gy + (*xhat)[row + c] * sum_gyx) / C);
                        }
                    }
                }
            });
        }
        return out;
    }

private:
    bool track(Tensor& out, const std::vector<Tensor>& inputs) {
        if (!recording_) return false;
        bool any = false;
        for (const auto& t : inputs) any = any || t.requires_grad();
        if (any) out.set_requires_grad(true);
        return any;
    }

    void push(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    bool recording_;
    bool consumed_ = false;
    std::vector<std::function<void()>> nodes_;
};

} // namespace addlens
