#pragma once

// Reverse-mode automatic differentiation over dense 64-bit tensors.
//
// Every operation records a node on a dynamic tape; backward() replays the
// tape in reverse creation order and accumulates gradients into leaf buffers.
// The tape is rebuilt from scratch on every training step, so nodes own their
// saved forward values and are freed when the last tensor handle goes away.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gptop/errors.hpp"

namespace gptop::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

namespace detail {
inline std::atomic<std::uint64_t>& node_counter() {
    static std::atomic<std::uint64_t> c{0};
    return c;
}
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

/// Disables tape recording within a scope; forward values only.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape entry: saved forward values plus the adjoint rule that scatters
/// an incoming gradient to the parents. Creation order doubles as the
/// topological order of the graph.
struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // lazily sized on first accumulation
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // null for leaves/constants
    std::uint64_t id = 0;
    bool requires_grad = false;

    std::size_t numel() const { return values.size(); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

/// Dense differentiable tensor: a value-semantics handle into the tape.
class Tensor {
public:
    Tensor() : node_(std::make_shared<Node>()) {}
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor constant(Shape shape, std::vector<double> values) {
        if (shape_numel(shape) != values.size())
            throw DimensionError("constant: shape " + shape_str(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->values = std::move(values);
        n->id = detail::node_counter()++;
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v) { return constant({1}, {v}); }

    static Tensor zeros(Shape shape) {
        std::vector<double> v(shape_numel(shape), 0.0);
        return constant(std::move(shape), std::move(v));
    }

    /// Trainable leaf: participates in gradient accumulation.
    static Tensor leaf(Shape shape, std::vector<double> values) {
        Tensor t = constant(std::move(shape), std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->numel(); }
    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& mutable_values() const { return node_->values; }  // handle semantics
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

    double item() const {
        if (numel() != 1) throw DimensionError("item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->values[0];
    }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

namespace detail {

inline NodePtr make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                           std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->id = node_counter()++;
    if (grad_enabled_flag()) {
        bool needs = false;
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
        if (needs) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return n;
}

inline void accumulate(const NodePtr& p, std::size_t idx, double g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    p->grad[idx] += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

enum class OpKind { Add, Sub, Mul, Div, Pow, Tanh, Swish, Neg, Exp, Sigmoid };

namespace detail {

// Broadcast layouts for binary ops: identical shapes, scalar on either side,
// or a length-m vector against the last axis of an [n x m] matrix.
enum class Bcast { Same, AScalar, BScalar, BRow };

inline Bcast classify_broadcast(const Shape& a, const Shape& b) {
    if (a == b) return Bcast::Same;
    if (shape_numel(b) == 1) return Bcast::BScalar;
    if (shape_numel(a) == 1) return Bcast::AScalar;
    if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return Bcast::BRow;
    throw DimensionError("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

inline std::size_t b_index(Bcast c, std::size_t i, std::size_t cols) {
    switch (c) {
        case Bcast::Same: return i;
        case Bcast::BScalar: return 0;
        case Bcast::AScalar: return i;  // unused for b
        case Bcast::BRow: return i % cols;
    }
    return 0;
}

template <class FwdFn, class BwdFn>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdFn fwd, BwdFn bwd) {
    Bcast c = classify_broadcast(a.shape(), b.shape());
    const bool a_scalar = (c == Bcast::AScalar);
    const Shape& out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(out_shape);
    const std::size_t cols = (c == Bcast::BRow) ? a.shape()[1] : 1;

    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = a_scalar ? av[0] : av[i];
        double y = a_scalar ? bv[i] : bv[b_index(c, i, cols)];
        out[i] = fwd(x, y);
    }

    NodePtr an = a.node(), bn = b.node();
    auto back = [an, bn, c, cols, a_scalar, bwd](Node& self) {
        const std::size_t n = self.numel();
        for (std::size_t i = 0; i < n; ++i) {
            double g = self.grad[i];
            if (g == 0.0) continue;
            std::size_t ia = a_scalar ? 0 : i;
            std::size_t ib = a_scalar ? i : b_index(c, i, cols);
            double x = an->values[ia];
            double y = bn->values[ib];
            auto [dx, dy] = bwd(x, y, self.values[i]);
            accumulate(an, ia, g * dx);
            accumulate(bn, ib, g * dy);
        }
    };
    return Tensor(make_result(out_shape, std::move(out), {an, bn}, back));
}

template <class FwdFn, class BwdFn>
Tensor unary_op(const Tensor& a, FwdFn fwd, BwdFn bwd) {
    const std::size_t n = a.numel();
    const auto& av = a.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);

    NodePtr an = a.node();
    auto back = [an, bwd](Node& self) {
        for (std::size_t i = 0; i < self.numel(); ++i) {
            double g = self.grad[i];
            if (g == 0.0) continue;
            accumulate(an, i, g * bwd(an->values[i], self.values[i]));
        }
    };
    return Tensor(make_result(a.shape(), std::move(out), {an}, back));
}

inline double sigmoid_val(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double) { return std::pair<double, double>{y, x}; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double) { return std::pair<double, double>{1.0 / y, -x / (y * y)}; });
}

/// a^c with constant real exponent. a == 0 is handled for c >= 1.
inline Tensor pow(const Tensor& a, double c) {
    return detail::unary_op(
        a, [c](double x) { return std::pow(x, c); },
        [c](double x, double) {
            if (x == 0.0) return (c == 1.0) ? 1.0 : 0.0;
            return c * std::pow(x, c - 1.0);
        });
}

inline Tensor neg(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::tanh(x); },
                            [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(a, detail::sigmoid_val,
                            [](double, double y) { return y * (1.0 - y); });
}

/// swish(x) = x * sigmoid(x)
inline Tensor swish(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x * detail::sigmoid_val(x); },
        [](double x, double) {
            double s = detail::sigmoid_val(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

/// Dispatch entry point over the registered elementwise kinds.
inline Tensor elementwise(OpKind kind, const Tensor& a, const Tensor* b = nullptr,
                          double exponent = 2.0) {
    auto need_b = [&]() -> const Tensor& {
        if (!b) throw ParameterError("elementwise: binary kind requires two operands");
        return *b;
    };
    switch (kind) {
        case OpKind::Add: return add(a, need_b());
        case OpKind::Sub: return sub(a, need_b());
        case OpKind::Mul: return mul(a, need_b());
        case OpKind::Div: return div(a, need_b());
        case OpKind::Pow: return pow(a, exponent);
        case OpKind::Tanh: return tanh(a);
        case OpKind::Swish: return swish(a);
        case OpKind::Neg: return neg(a);
        case OpKind::Exp: return exp(a);
        case OpKind::Sigmoid: return sigmoid(a);
    }
    throw ParameterError("elementwise: unknown op kind");
}

inline Tensor scale(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
inline Tensor add_scalar(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }

// ---------------------------------------------------------------------------
// Structural operations
// ---------------------------------------------------------------------------

/// Value-preserving gradient cut: output is a fresh constant with identical
/// values and no ancestry.
inline Tensor detach(const Tensor& a) {
    return Tensor::constant(a.shape(), a.values());
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    NodePtr an = a.node();
    auto back = [an](Node& self) {
        for (std::size_t i = 0; i < self.numel(); ++i) detail::accumulate(an, i, self.grad[i]);
    };
    return Tensor(detail::make_result(std::move(shape), a.values(), {an}, back));
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    NodePtr an = a.node();
    auto back = [an](Node& self) {
        double g = self.grad[0];
        if (g == 0.0) return;
        for (std::size_t i = 0; i < an->numel(); ++i) detail::accumulate(an, i, g);
    };
    return Tensor(detail::make_result({1}, {s}, {an}, back));
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Weighted sum with a constant weight vector (used for masked integrals).
inline Tensor dot_const(const Tensor& a, const std::vector<double>& w) {
    if (w.size() != a.numel())
        throw DimensionError("dot_const: weight length " + std::to_string(w.size()) + " vs " +
                             std::to_string(a.numel()));
    double s = 0.0;
    const auto& av = a.values();
    for (std::size_t i = 0; i < w.size(); ++i) s += av[i] * w[i];
    NodePtr an = a.node();
    auto wcopy = std::make_shared<std::vector<double>>(w);
    auto back = [an, wcopy](Node& self) {
        double g = self.grad[0];
        if (g == 0.0) return;
        for (std::size_t i = 0; i < an->numel(); ++i) detail::accumulate(an, i, g * (*wcopy)[i]);
    };
    return Tensor(detail::make_result({1}, {s}, {an}, back));
}

/// Selects rows of an [n x m] matrix (or entries of a vector).
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
    const auto& sh = a.shape();
    if (sh.size() > 2) throw DimensionError("gather_rows: rank must be 1 or 2");
    const std::size_t m = (sh.size() == 2) ? sh[1] : 1;
    const std::size_t n = sh[0];
    for (std::size_t r : rows)
        if (r >= n) throw DimensionError("gather_rows: row index out of range");

    std::vector<double> out(rows.size() * m);
    const auto& av = a.values();
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = av[rows[i] * m + j];

    Shape out_shape = (sh.size() == 2) ? Shape{rows.size(), m} : Shape{rows.size()};
    NodePtr an = a.node();
    auto idx = std::make_shared<std::vector<std::size_t>>(rows);
    auto back = [an, idx, m](Node& self) {
        for (std::size_t i = 0; i < idx->size(); ++i)
            for (std::size_t j = 0; j < m; ++j)
                detail::accumulate(an, (*idx)[i] * m + j, self.grad[i * m + j]);
    };
    return Tensor(detail::make_result(std::move(out_shape), std::move(out), {an}, back));
}

/// Extracts one column of an [n x m] matrix as a length-n vector.
inline Tensor col(const Tensor& a, std::size_t j) {
    const auto& sh = a.shape();
    if (sh.size() != 2 || j >= sh[1]) throw DimensionError("col: bad shape or index");
    const std::size_t n = sh[0], m = sh[1];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i * m + j];
    NodePtr an = a.node();
    auto back = [an, j, m](Node& self) {
        for (std::size_t i = 0; i < self.numel(); ++i) detail::accumulate(an, i * m + j, self.grad[i]);
    };
    return Tensor(detail::make_result({n}, std::move(out), {an}, back));
}

// ---------------------------------------------------------------------------
// Matrix multiply (Eigen-backed)
// ---------------------------------------------------------------------------

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2)
        throw DimensionError("matmul: operands must be rank-2, got " + shape_str(sa) + " and " +
                             shape_str(sb));
    if (sa[1] != sb[0])
        throw DimensionError("matmul: inner dimensions " + shape_str(sa) + " * " + shape_str(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[1];

    std::vector<double> out(m * n);
    {
        detail::ECMap A(a.values().data(), m, k);
        detail::ECMap B(b.values().data(), k, n);
        detail::EMap C(out.data(), m, n);
        C.noalias() = A * B;
    }

    NodePtr an = a.node(), bn = b.node();
    auto back = [an, bn, m, k, n](Node& self) {
        detail::ECMap G(self.grad.data(), m, n);
        detail::ECMap A(an->values.data(), m, k);
        detail::ECMap B(bn->values.data(), k, n);
        if (an->requires_grad) {
            an->ensure_grad();
            detail::EMap dA(an->grad.data(), m, k);
            dA.noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            detail::EMap dB(bn->grad.data(), k, n);
            dB.noalias() += A.transpose() * G;
        }
    };
    return Tensor(detail::make_result({m, n}, std::move(out), {an, bn}, back));
}

// ---------------------------------------------------------------------------
// 3x3 same-padding convolution (cross-correlation), Eigen GEMM via im2col
// ---------------------------------------------------------------------------

namespace detail {

// M[(y*W+x), ci*9 + ky*3 + kx] = X[ci, y+ky-1, x+kx-1], zero outside.
inline void im2col_3x3(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w,
                       std::vector<double>& m) {
    const std::size_t cols = c * 9;
    m.assign(h * w * cols, 0.0);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* plane = x.data() + ci * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t ky = 0; ky < 3; ++ky) {
                std::size_t yy = y + ky;
                if (yy < 1 || yy > h) continue;
                const double* row = plane + (yy - 1) * w;
                for (std::size_t xpos = 0; xpos < w; ++xpos) {
                    double* dst = m.data() + (y * w + xpos) * cols + ci * 9 + ky * 3;
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        std::size_t xx = xpos + kx;
                        if (xx < 1 || xx > w) continue;
                        dst[kx] = row[xx - 1];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// features [C x H x W], kernel [C x C x 3 x 3], bias [C] -> [C x H x W].
/// Zero padding of one ring keeps the output shape equal to the input shape.
inline Tensor conv2d_3x3(const Tensor& features, const Tensor& kernel, const Tensor& bias) {
    const auto& sf = features.shape();
    const auto& sk = kernel.shape();
    if (sf.size() != 3) throw DimensionError("conv2d_3x3: features must be [C x H x W]");
    const std::size_t c = sf[0], h = sf[1], w = sf[2];
    if (h < 3 || w < 3) throw DimensionError("conv2d_3x3: spatial extent must be at least 3");
    if (sk != Shape{c, c, 3, 3})
        throw DimensionError("conv2d_3x3: kernel " + shape_str(sk) + " does not match " +
                             std::to_string(c) + " channels");
    if (bias.shape() != Shape{c}) throw DimensionError("conv2d_3x3: bias must be [C]");

    const std::size_t hw = h * w, cols = c * 9;
    auto m = std::make_shared<std::vector<double>>();
    detail::im2col_3x3(features.values(), c, h, w, *m);

    // Kmat[ci*9+k, co] = kernel[co, ci, ky, kx]
    std::vector<double> kmat(cols * c);
    const auto& kv = kernel.values();
    for (std::size_t co = 0; co < c; ++co)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t k = 0; k < 9; ++k) kmat[(ci * 9 + k) * c + co] = kv[(co * c + ci) * 9 + k];

    std::vector<double> prod(hw * c);
    {
        detail::ECMap M(m->data(), hw, cols);
        detail::ECMap K(kmat.data(), cols, c);
        detail::EMap P(prod.data(), hw, c);
        P.noalias() = M * K;
    }
    std::vector<double> out(c * hw);
    const auto& bv = bias.values();
    for (std::size_t co = 0; co < c; ++co)
        for (std::size_t p = 0; p < hw; ++p) out[co * hw + p] = prod[p * c + co] + bv[co];

    NodePtr fn = features.node(), kn = kernel.node(), bn = bias.node();
    auto back = [fn, kn, bn, m, c, h, w](Node& self) {
        const std::size_t hw = h * w, cols = c * 9;
        // Gmat[p, co] = grad[co, p]
        std::vector<double> gmat(hw * c);
        for (std::size_t co = 0; co < c; ++co)
            for (std::size_t p = 0; p < hw; ++p) gmat[p * c + co] = self.grad[co * hw + p];

        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t co = 0; co < c; ++co) {
                double s = 0.0;
                for (std::size_t p = 0; p < hw; ++p) s += self.grad[co * hw + p];
                bn->grad[co] += s;
            }
        }
        if (kn->requires_grad) {
            kn->ensure_grad();
            std::vector<double> dkmat(cols * c);
            detail::ECMap M(m->data(), hw, cols);
            detail::ECMap G(gmat.data(), hw, c);
            detail::EMap DK(dkmat.data(), cols, c);
            DK.noalias() = M.transpose() * G;
            for (std::size_t co = 0; co < c; ++co)
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t k = 0; k < 9; ++k)
                        kn->grad[(co * c + ci) * 9 + k] += dkmat[(ci * 9 + k) * c + co];
        }
        if (fn->requires_grad) {
            fn->ensure_grad();
            // dM = G * Kmat^T, then col2im scatter.
            std::vector<double> kmat(cols * c);
            for (std::size_t co = 0; co < c; ++co)
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t k = 0; k < 9; ++k)
                        kmat[(ci * 9 + k) * c + co] = kn->values[(co * c + ci) * 9 + k];
            std::vector<double> dm(hw * cols);
            detail::ECMap G(gmat.data(), hw, c);
            detail::ECMap K(kmat.data(), cols, c);
            detail::EMap DM(dm.data(), hw, cols);
            DM.noalias() = G * K.transpose();
            for (std::size_t ci = 0; ci < c; ++ci) {
                double* dplane = fn->grad.data() + ci * hw;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        std::size_t yy = y + ky;
                        if (yy < 1 || yy > h) continue;
                        for (std::size_t xpos = 0; xpos < w; ++xpos)
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                std::size_t xx = xpos + kx;
                                if (xx < 1 || xx > w) continue;
                                dplane[(yy - 1) * w + (xx - 1)] +=
                                    dm[(y * w + xpos) * cols + ci * 9 + ky * 3 + kx];
                            }
                    }
            }
        }
    };
    return Tensor(detail::make_result({c, h, w}, std::move(out), {fn, kn, bn}, back));
}

// ---------------------------------------------------------------------------
// Grid stencils
// ---------------------------------------------------------------------------

/// Central difference along an axis of an [Ny x Nx] field (axis 0 = y rows,
/// axis 1 = x columns). Outermost lines are left at zero; callers mask them.
inline Tensor fd_central_diff(const Tensor& field, int axis, double spacing) {
    const auto& sh = field.shape();
    if (sh.size() != 2) throw GridError("fd_central_diff: field must be [Ny x Nx]");
    const std::size_t ny = sh[0], nx = sh[1];
    if ((axis == 1 && nx < 5) || (axis == 0 && ny < 5))
        throw GridError("fd_central_diff: grid thinner than 5 points along axis " +
                        std::to_string(axis));
    if (spacing <= 0.0) throw ParameterError("fd_central_diff: spacing must be positive");

    const double inv2h = 1.0 / (2.0 * spacing);
    const auto& fv = field.values();
    std::vector<double> out(ny * nx, 0.0);
    if (axis == 1) {
        for (std::size_t i = 0; i < ny; ++i)
            for (std::size_t j = 1; j + 1 < nx; ++j)
                out[i * nx + j] = (fv[i * nx + j + 1] - fv[i * nx + j - 1]) * inv2h;
    } else {
        for (std::size_t i = 1; i + 1 < ny; ++i)
            for (std::size_t j = 0; j < nx; ++j)
                out[i * nx + j] = (fv[(i + 1) * nx + j] - fv[(i - 1) * nx + j]) * inv2h;
    }

    NodePtr fn = field.node();
    auto back = [fn, axis, ny, nx, inv2h](Node& self) {
        if (axis == 1) {
            for (std::size_t i = 0; i < ny; ++i)
                for (std::size_t j = 1; j + 1 < nx; ++j) {
                    double g = self.grad[i * nx + j] * inv2h;
                    if (g == 0.0) continue;
                    detail::accumulate(fn, i * nx + j + 1, g);
                    detail::accumulate(fn, i * nx + j - 1, -g);
                }
        } else {
            for (std::size_t i = 1; i + 1 < ny; ++i)
                for (std::size_t j = 0; j < nx; ++j) {
                    double g = self.grad[i * nx + j] * inv2h;
                    if (g == 0.0) continue;
                    detail::accumulate(fn, (i + 1) * nx + j, g);
                    detail::accumulate(fn, (i - 1) * nx + j, -g);
                }
        }
    };
    return Tensor(detail::make_result({ny, nx}, std::move(out), {fn}, back));
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Reverse accumulation from a scalar loss. Gradients accumulate into leaf
/// buffers; repeated calls without zero_grad add up.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw DimensionError("backward: loss must be scalar");
    NodePtr root = loss.node();
    root->ensure_grad();
    root->grad[0] += 1.0;
    if (!root->requires_grad) return;

    // Collect the reachable subgraph, then replay in descending creation order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
    for (Node* n : order) {
        if (n->backward_fn && n->grad.size() == n->values.size()) n->backward_fn(*n);
    }
}

}  // namespace gptop::ad
