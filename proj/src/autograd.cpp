#include "insertnet/autograd.hpp"

#include "insertnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace insertnet {

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::abs_max() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

} // namespace insertnet

namespace insertnet::ag {

namespace {

thread_local bool g_grad_enabled = true;

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>(std::move(value));
    bool need = false;
    if (g_grad_enabled) {
        for (const Var& in : inputs) {
            if (in && in->requires_grad) {
                need = true;
                break;
            }
        }
    }
    if (need) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(fn);
    }
    return node;
}

inline bool wants(const Var& v) { return v && v->requires_grad; }

double stable_softplus(double x) {
    // log(1 + e^x) without overflow
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// --- conv lowering helpers -------------------------------------------------

struct ConvGeom {
    int ci, h, w, co, kh, kw, stride, pad, ho, wo;
};

void im2col(const Tensor& img, const ConvGeom& g, Tensor& col) {
    // col: (ci*kh*kw, ho*wo)
    const int how = g.ho * g.wo;
    for (int c = 0; c < g.ci; ++c) {
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                double* dst = col.data() + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * how;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) {
                        for (int ox = 0; ox < g.wo; ++ox) dst[oy * g.wo + ox] = 0.0;
                        continue;
                    }
                    const double* src = img.data() + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        dst[oy * g.wo + ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const Tensor& col, const ConvGeom& g, Tensor& img) {
    const int how = g.ho * g.wo;
    for (int c = 0; c < g.ci; ++c) {
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const double* src = col.data() + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * how;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    double* dst = img.data() + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.w) dst[ix] += src[oy * g.wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

Var param(Tensor v) {
    auto node = std::make_shared<Node>(std::move(v));
    node->requires_grad = true;
    return node;
}

// --- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& node) {
        const auto& g = node.grad;
        for (int s = 0; s < 2; ++s) {
            const Var& in = node.inputs[static_cast<std::size_t>(s)];
            if (!wants(in)) continue;
            in->ensure_grad();
            kern::ops().axpy(static_cast<int>(g.numel()), 1.0, g.data(), in->grad.data());
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& node) {
        const auto& g = node.grad;
        const int n2 = static_cast<int>(g.numel());
        if (wants(node.inputs[0])) {
            node.inputs[0]->ensure_grad();
            kern::ops().axpy(n2, 1.0, g.data(), node.inputs[0]->grad.data());
        }
        if (wants(node.inputs[1])) {
            node.inputs[1]->ensure_grad();
            kern::ops().axpy(n2, -1.0, g.data(), node.inputs[1]->grad.data());
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out(a->value.shape());
    kern::ops().vmul(static_cast<int>(out.numel()), a->value.data(), b->value.data(), out.data());
    return make_op(std::move(out), {a, b}, [](Node& node) {
        const auto& g = node.grad;
        const std::size_t n = static_cast<std::size_t>(g.numel());
        const Var& a2 = node.inputs[0];
        const Var& b2 = node.inputs[1];
        if (wants(a2)) {
            a2->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) a2->grad[i] += g[i] * b2->value[i];
        }
        if (wants(b2)) {
            b2->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) b2->grad[i] += g[i] * a2->value[i];
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] *= c;
    return make_op(std::move(out), {a}, [c](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        kern::ops().axpy(static_cast<int>(node.grad.numel()), c, node.grad.data(),
                         node.inputs[0]->grad.data());
    });
}

Var add_const(const Var& a, double c) {
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] += c;
    return make_op(std::move(out), {a}, [](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        kern::ops().axpy(static_cast<int>(node.grad.numel()), 1.0, node.grad.data(),
                         node.inputs[0]->grad.data());
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

namespace {

template <typename F, typename DF>
Var unary_from_out(const Var& a, F f, DF dfdout_times) {
    // dfdout_times(node, i) must accumulate using node.value (output)
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] = f(out[i]);
    return make_op(std::move(out), {a}, [dfdout_times](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        auto& gin = node.inputs[0]->grad;
        const std::size_t n2 = static_cast<std::size_t>(node.grad.numel());
        for (std::size_t i = 0; i < n2; ++i) gin[i] += node.grad[i] * dfdout_times(node, i);
    });
}

} // namespace

Var exp_(const Var& a) {
    return unary_from_out(
        a, [](double x) { return std::exp(x); },
        [](Node& n, std::size_t i) { return n.value[i]; });
}

Var tanh_(const Var& a) {
    return unary_from_out(
        a, [](double x) { return std::tanh(x); },
        [](Node& n, std::size_t i) { return 1.0 - n.value[i] * n.value[i]; });
}

Var sigmoid(const Var& a) {
    return unary_from_out(
        a, [](double x) { return stable_sigmoid(x); },
        [](Node& n, std::size_t i) { return n.value[i] * (1.0 - n.value[i]); });
}

Var softplus(const Var& a) {
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] = stable_softplus(out[i]);
    return make_op(std::move(out), {a}, [](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        auto& gin = node.inputs[0]->grad;
        const auto& x = node.inputs[0]->value;
        const std::size_t n2 = static_cast<std::size_t>(node.grad.numel());
        for (std::size_t i = 0; i < n2; ++i) gin[i] += node.grad[i] * stable_sigmoid(x[i]);
    });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var leaky_relu(const Var& a, double slope) {
    Tensor out(a->value.shape());
    kern::ops().leaky_relu(static_cast<int>(out.numel()), a->value.data(), slope, out.data());
    return make_op(std::move(out), {a}, [slope](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        kern::ops().leaky_relu_grad(static_cast<int>(node.grad.numel()),
                                    node.inputs[0]->value.data(), node.grad.data(), slope,
                                    node.inputs[0]->grad.data());
    });
}

Var abs_(const Var& a) {
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(out[i]);
    return make_op(std::move(out), {a}, [](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        auto& gin = node.inputs[0]->grad;
        const auto& x = node.inputs[0]->value;
        const std::size_t n2 = static_cast<std::size_t>(node.grad.numel());
        for (std::size_t i = 0; i < n2; ++i)
            gin[i] += node.grad[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
    });
}

Var clamp_(const Var& a, double lo, double hi) {
    Tensor out = a->value;
    const std::size_t n = static_cast<std::size_t>(out.numel());
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(out[i], lo), hi);
    return make_op(std::move(out), {a}, [lo, hi](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        auto& gin = node.inputs[0]->grad;
        const auto& x = node.inputs[0]->value;
        const std::size_t n2 = static_cast<std::size_t>(node.grad.numel());
        for (std::size_t i = 0; i < n2; ++i)
            if (x[i] > lo && x[i] < hi) gin[i] += node.grad[i];
    });
}

// --- reductions / shaping ----------------------------------------------------

Var sum(const Var& a) {
    Tensor out = Tensor::scalar(kern::ops().sum(static_cast<int>(a->value.numel()), a->value.data()));
    return make_op(std::move(out), {a}, [](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        const double g = node.grad[0];
        auto& gin = node.inputs[0]->grad;
        const std::size_t n = static_cast<std::size_t>(gin.numel());
        for (std::size_t i = 0; i < n; ++i) gin[i] += g;
    });
}

Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    Tensor out = Tensor::scalar(kern::ops().sum(static_cast<int>(a->value.numel()), a->value.data()) * inv);
    return make_op(std::move(out), {a}, [inv](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        const double g = node.grad[0] * inv;
        auto& gin = node.inputs[0]->grad;
        const std::size_t n = static_cast<std::size_t>(gin.numel());
        for (std::size_t i = 0; i < n; ++i) gin[i] += g;
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        kern::ops().axpy(static_cast<int>(node.grad.numel()), 1.0, node.grad.data(),
                         node.inputs[0]->grad.data());
    });
}

Var slice(const Var& a, int from, int to) {
    if (a->value.rank() != 1 || from < 0 || to > a->value.dim(0) || from >= to)
        throw std::invalid_argument("slice: bad range");
    Tensor out({to - from});
    for (int i = from; i < to; ++i) out[static_cast<std::size_t>(i - from)] = a->value[static_cast<std::size_t>(i)];
    return make_op(std::move(out), {a}, [from](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        const std::size_t n = static_cast<std::size_t>(node.grad.numel());
        for (std::size_t i = 0; i < n; ++i)
            node.inputs[0]->grad[static_cast<std::size_t>(from) + i] += node.grad[i];
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no parts");
    std::vector<int> shape = parts[0]->value.shape();
    std::int64_t trailing = 1;
    for (int d = 1; d < static_cast<int>(shape.size()); ++d) trailing *= shape[static_cast<std::size_t>(d)];
    int total0 = 0;
    for (const Var& p : parts) {
        const auto& s = p->value.shape();
        if (s.size() != shape.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 1; d < s.size(); ++d)
            if (s[d] != shape[d]) throw std::invalid_argument("concat: trailing dim mismatch");
        total0 += s[0];
    }
    shape[0] = total0;
    Tensor out(shape);
    std::size_t off = 0;
    for (const Var& p : parts) {
        const std::size_t n = static_cast<std::size_t>(p->value.numel());
        std::copy(p->value.data(), p->value.data() + n, out.data() + off);
        off += n;
    }
    return make_op(std::move(out), parts, [](Node& node) {
        std::size_t off2 = 0;
        for (const Var& p : node.inputs) {
            const std::size_t n = static_cast<std::size_t>(p->value.numel());
            if (wants(p)) {
                p->ensure_grad();
                kern::ops().axpy(static_cast<int>(n), 1.0, node.grad.data() + off2, p->grad.data());
            }
            off2 += n;
        }
    });
}

Var detach(const Var& a) { return constant(a->value); }

// --- linear algebra ----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
        throw std::invalid_argument("matmul: shape mismatch");
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor out({m, n});
    kern::ops().gemm_nn(m, n, k, a->value.data(), k, b->value.data(), n, out.data(), n, false);
    return make_op(std::move(out), {a, b}, [m, k, n](Node& node) {
        const Var& a2 = node.inputs[0];
        const Var& b2 = node.inputs[1];
        if (wants(a2)) {
            a2->ensure_grad();
            kern::ops().gemm_nt(m, k, n, node.grad.data(), n, b2->value.data(), n,
                                a2->grad.data(), k, true);
        }
        if (wants(b2)) {
            b2->ensure_grad();
            kern::ops().gemm_tn(k, n, m, a2->value.data(), k, node.grad.data(), n,
                                b2->grad.data(), n, true);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (w->value.rank() != 2 || x->value.rank() != 1 || w->value.dim(1) != x->value.dim(0) ||
        b->value.dim(0) != w->value.dim(0))
        throw std::invalid_argument("linear: shape mismatch");
    const int out_n = w->value.dim(0), in_n = w->value.dim(1);
    Tensor out({out_n});
    kern::ops().gemm_nt(out_n, 1, in_n, w->value.data(), in_n, x->value.data(), in_n,
                        out.data(), 1, false);
    for (int i = 0; i < out_n; ++i) out[static_cast<std::size_t>(i)] += b->value[static_cast<std::size_t>(i)];
    return make_op(std::move(out), {x, w, b}, [out_n, in_n](Node& node) {
        const Var& x2 = node.inputs[0];
        const Var& w2 = node.inputs[1];
        const Var& b2 = node.inputs[2];
        if (wants(x2)) {
            x2->ensure_grad();
            kern::ops().gemm_tn(in_n, 1, out_n, w2->value.data(), in_n, node.grad.data(), 1,
                                x2->grad.data(), 1, true);
        }
        if (wants(w2)) {
            w2->ensure_grad();
            kern::ops().gemm_nn(out_n, in_n, 1, node.grad.data(), 1, x2->value.data(), in_n,
                                w2->grad.data(), in_n, true);
        }
        if (wants(b2)) {
            b2->ensure_grad();
            kern::ops().axpy(out_n, 1.0, node.grad.data(), b2->grad.data());
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->value.rank() != 3 || w->value.rank() != 4 || x->value.dim(0) != w->value.dim(1))
        throw std::invalid_argument("conv2d: shape mismatch");
    ConvGeom g;
    g.ci = x->value.dim(0);
    g.h = x->value.dim(1);
    g.w = x->value.dim(2);
    g.co = w->value.dim(0);
    g.kh = w->value.dim(2);
    g.kw = w->value.dim(3);
    g.stride = stride;
    g.pad = pad;
    g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
    g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
    if (g.ho < 1 || g.wo < 1) throw std::invalid_argument("conv2d: empty output");
    const int cikk = g.ci * g.kh * g.kw;
    const int how = g.ho * g.wo;
    Tensor col({cikk, how});
    im2col(x->value, g, col);
    Tensor out({g.co, g.ho, g.wo});
    kern::ops().gemm_nn(g.co, how, cikk, w->value.data(), cikk, col.data(), how, out.data(), how, false);
    for (int c = 0; c < g.co; ++c) {
        const double bv = b->value[static_cast<std::size_t>(c)];
        double* plane = out.data() + static_cast<std::size_t>(c) * how;
        for (int i = 0; i < how; ++i) plane[i] += bv;
    }
    return make_op(std::move(out), {x, w, b},
                   [g, cikk, how, col = std::make_shared<Tensor>(std::move(col))](Node& node) {
        const Var& x2 = node.inputs[0];
        const Var& w2 = node.inputs[1];
        const Var& b2 = node.inputs[2];
        if (wants(w2)) {
            w2->ensure_grad();
            kern::ops().gemm_nt(g.co, cikk, how, node.grad.data(), how, col->data(), how,
                                w2->grad.data(), cikk, true);
        }
        if (wants(b2)) {
            b2->ensure_grad();
            for (int c = 0; c < g.co; ++c)
                b2->grad[static_cast<std::size_t>(c)] +=
                    kern::ops().sum(how, node.grad.data() + static_cast<std::size_t>(c) * how);
        }
        if (wants(x2)) {
            Tensor gcol({cikk, how});
            kern::ops().gemm_tn(cikk, how, g.co, w2->value.data(), cikk, node.grad.data(), how,
                                gcol.data(), how, false);
            x2->ensure_grad();
            col2im_add(gcol, g, x2->grad);
        }
    });
}

Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->value.rank() != 3 || w->value.rank() != 4 || x->value.dim(0) != w->value.dim(0))
        throw std::invalid_argument("conv2d_transpose: shape mismatch");
    // w: (ci, co, kh, kw); geometry is the conv geometry of the adjoint pass,
    // i.e. output plays the role of the conv input.
    ConvGeom g;
    g.ci = w->value.dim(1); // channels of the produced image
    g.co = x->value.dim(0);
    g.kh = w->value.dim(2);
    g.kw = w->value.dim(3);
    g.stride = stride;
    g.pad = pad;
    g.ho = x->value.dim(1);
    g.wo = x->value.dim(2);
    g.h = (g.ho - 1) * stride - 2 * pad + g.kh;
    g.w = (g.wo - 1) * stride - 2 * pad + g.kw;
    if (g.h < 1 || g.w < 1) throw std::invalid_argument("conv2d_transpose: empty output");
    const int cikk = g.ci * g.kh * g.kw;
    const int how = g.ho * g.wo;
    // col = W^T(cikk x co) * x(co x how)
    Tensor col({cikk, how});
    kern::ops().gemm_tn(cikk, how, g.co, w->value.data(), cikk, x->value.data(), how,
                        col.data(), how, false);
    Tensor out({g.ci, g.h, g.w});
    col2im_add(col, g, out);
    const int hw = g.h * g.w;
    for (int c = 0; c < g.ci; ++c) {
        const double bv = b->value[static_cast<std::size_t>(c)];
        double* plane = out.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) plane[i] += bv;
    }
    return make_op(std::move(out), {x, w, b}, [g, cikk, how, hw](Node& node) {
        const Var& x2 = node.inputs[0];
        const Var& w2 = node.inputs[1];
        const Var& b2 = node.inputs[2];
        Tensor gcol({cikk, how});
        if (wants(x2) || wants(w2)) im2col(node.grad, g, gcol);
        if (wants(x2)) {
            x2->ensure_grad();
            kern::ops().gemm_nn(g.co, how, cikk, w2->value.data(), cikk, gcol.data(), how,
                                x2->grad.data(), how, true);
        }
        if (wants(w2)) {
            w2->ensure_grad();
            kern::ops().gemm_nt(g.co, cikk, how, x2->value.data(), how, gcol.data(), how,
                                w2->grad.data(), cikk, true);
        }
        if (wants(b2)) {
            b2->ensure_grad();
            for (int c = 0; c < g.ci; ++c)
                b2->grad[static_cast<std::size_t>(c)] +=
                    kern::ops().sum(hw, node.grad.data() + static_cast<std::size_t>(c) * hw);
        }
    });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x->value.rank() != 3 || gamma->value.dim(0) != x->value.dim(0) ||
        beta->value.dim(0) != x->value.dim(0))
        throw std::invalid_argument("instance_norm: shape mismatch");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int n = h * w;
    Tensor out({c, h, w});
    std::vector<double> mu(static_cast<std::size_t>(c)), istd(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        const double* xp = x->value.data() + static_cast<std::size_t>(ch) * n;
        const double m = kern::ops().sum(n, xp) / n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) var += (xp[i] - m) * (xp[i] - m);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        mu[static_cast<std::size_t>(ch)] = m;
        istd[static_cast<std::size_t>(ch)] = is;
        const double gm = gamma->value[static_cast<std::size_t>(ch)];
        const double bt = beta->value[static_cast<std::size_t>(ch)];
        double* op = out.data() + static_cast<std::size_t>(ch) * n;
        for (int i = 0; i < n; ++i) op[i] = gm * (xp[i] - m) * is + bt;
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [c, n, mu = std::move(mu), istd = std::move(istd)](Node& node) {
        const Var& x2 = node.inputs[0];
        const Var& g2 = node.inputs[1];
        const Var& b2 = node.inputs[2];
        if (wants(x2)) x2->ensure_grad();
        if (wants(g2)) g2->ensure_grad();
        if (wants(b2)) b2->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t chs = static_cast<std::size_t>(ch);
            const double* xp = x2->value.data() + chs * n;
            const double* gy = node.grad.data() + chs * n;
            const double m = mu[chs];
            const double is = istd[chs];
            const double gm = g2->value[chs];
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int i = 0; i < n; ++i) {
                const double xhat = (xp[i] - m) * is;
                sum_gy += gy[i];
                sum_gy_xhat += gy[i] * xhat;
            }
            if (wants(g2)) g2->grad[chs] += sum_gy_xhat;
            if (wants(b2)) b2->grad[chs] += sum_gy;
            if (wants(x2)) {
                double* gx = x2->grad.data() + chs * n;
                const double mean_gy = sum_gy / n;
                const double mean_gy_xhat = sum_gy_xhat / n;
                for (int i = 0; i < n; ++i) {
                    const double xhat = (xp[i] - m) * is;
                    gx[i] += gm * is * (gy[i] - mean_gy - xhat * mean_gy_xhat);
                }
            }
        }
    });
}

Var tile_plane(const Var& v, int h, int w) {
    if (v->value.rank() != 1) throw std::invalid_argument("tile_plane: need rank-1");
    const int c = v->value.dim(0);
    Tensor out({c, h, w});
    const int n = h * w;
    for (int ch = 0; ch < c; ++ch) {
        double* plane = out.data() + static_cast<std::size_t>(ch) * n;
        const double val = v->value[static_cast<std::size_t>(ch)];
        for (int i = 0; i < n; ++i) plane[i] = val;
    }
    return make_op(std::move(out), {v}, [c, n](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            node.inputs[0]->grad[static_cast<std::size_t>(ch)] +=
                kern::ops().sum(n, node.grad.data() + static_cast<std::size_t>(ch) * n);
    });
}

// --- sampling ----------------------------------------------------------------

Var bilinear_sample(const Var& src, const Var& grid) {
    if (src->value.rank() != 3 || grid->value.rank() != 3 || grid->value.dim(2) != 2)
        throw std::invalid_argument("bilinear_sample: shape mismatch");
    const int c = src->value.dim(0), hs = src->value.dim(1), ws = src->value.dim(2);
    const int h = grid->value.dim(0), w = grid->value.dim(1);
    Tensor out({c, h, w});
    const Tensor& sv = src->value;
    const Tensor& gv = grid->value;
    auto pixel = [&](int ch, int y, int x) -> double {
        if (x < 0 || x >= ws || y < 0 || y >= hs) return 0.0;
        return sv.data()[(static_cast<std::size_t>(ch) * hs + y) * ws + x];
    };
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t gidx = (static_cast<std::size_t>(i) * w + j) * 2;
            const double xs = (gv[gidx] + 1.0) * ws * 0.5 - 0.5;
            const double ys = (gv[gidx + 1] + 1.0) * hs * 0.5 - 0.5;
            const double xf = std::floor(xs), yf = std::floor(ys);
            const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
            const double wx = xs - xf, wy = ys - yf;
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = pixel(ch, y0, x0), v01 = pixel(ch, y0, x0 + 1);
                const double v10 = pixel(ch, y0 + 1, x0), v11 = pixel(ch, y0 + 1, x0 + 1);
                out.at(ch, i, j) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                   wy * ((1.0 - wx) * v10 + wx * v11);
            }
        }
    }
    return make_op(std::move(out), {src, grid}, [c, hs, ws, h, w](Node& node) {
        const Var& src2 = node.inputs[0];
        const Var& grid2 = node.inputs[1];
        const bool need_src = wants(src2);
        const bool need_grid = wants(grid2);
        if (need_src) src2->ensure_grad();
        if (need_grid) grid2->ensure_grad();
        const Tensor& sv = src2->value;
        const Tensor& gv = grid2->value;
        auto pixel = [&](int ch, int y, int x) -> double {
            if (x < 0 || x >= ws || y < 0 || y >= hs) return 0.0;
            return sv.data()[(static_cast<std::size_t>(ch) * hs + y) * ws + x];
        };
        auto add_src = [&](int ch, int y, int x, double g) {
            if (x < 0 || x >= ws || y < 0 || y >= hs) return;
            src2->grad.data()[(static_cast<std::size_t>(ch) * hs + y) * ws + x] += g;
        };
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const std::size_t gidx = (static_cast<std::size_t>(i) * w + j) * 2;
                const double xs = (gv[gidx] + 1.0) * ws * 0.5 - 0.5;
                const double ys = (gv[gidx + 1] + 1.0) * hs * 0.5 - 0.5;
                const double xf = std::floor(xs), yf = std::floor(ys);
                const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
                const double wx = xs - xf, wy = ys - yf;
                double dxs = 0.0, dys = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    const double g = node.grad.at(ch, i, j);
                    if (g == 0.0) continue;
                    if (need_src) {
                        add_src(ch, y0, x0, g * (1.0 - wy) * (1.0 - wx));
                        add_src(ch, y0, x0 + 1, g * (1.0 - wy) * wx);
                        add_src(ch, y0 + 1, x0, g * wy * (1.0 - wx));
                        add_src(ch, y0 + 1, x0 + 1, g * wy * wx);
                    }
                    if (need_grid) {
                        const double v00 = pixel(ch, y0, x0), v01 = pixel(ch, y0, x0 + 1);
                        const double v10 = pixel(ch, y0 + 1, x0), v11 = pixel(ch, y0 + 1, x0 + 1);
                        dxs += g * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
                        dys += g * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
                    }
                }
                if (need_grid) {
                    grid2->grad[gidx] += dxs * ws * 0.5;
                    grid2->grad[gidx + 1] += dys * hs * 0.5;
                }
            }
        }
    });
}

Var inverse_box_grid(const Var& sx, const Var& sy, const Var& tx, const Var& ty,
                     int out_h, int out_w) {
    for (const Var* p : {&sx, &sy, &tx, &ty})
        if ((*p)->value.numel() != 1) throw std::invalid_argument("inverse_box_grid: scalars expected");
    const double sxv = sx->value[0], syv = sy->value[0];
    const double txv = tx->value[0], tyv = ty->value[0];
    if (sxv <= 0.0 || syv <= 0.0) throw std::invalid_argument("inverse_box_grid: non-positive scale");
    Tensor out({out_h, out_w, 2});
    for (int i = 0; i < out_h; ++i) {
        const double qy = (2.0 * i + 1.0) / out_h - 1.0;
        for (int j = 0; j < out_w; ++j) {
            const double qx = (2.0 * j + 1.0) / out_w - 1.0;
            const std::size_t idx = (static_cast<std::size_t>(i) * out_w + j) * 2;
            out[idx] = (qx - txv) / sxv;
            out[idx + 1] = (qy - tyv) / syv;
        }
    }
    return make_op(std::move(out), {sx, sy, tx, ty}, [out_h, out_w](Node& node) {
        const double sxv = node.inputs[0]->value[0], syv = node.inputs[1]->value[0];
        double gsx = 0.0, gsy = 0.0, gtx = 0.0, gty = 0.0;
        for (int i = 0; i < out_h; ++i) {
            for (int j = 0; j < out_w; ++j) {
                const std::size_t idx = (static_cast<std::size_t>(i) * out_w + j) * 2;
                const double gu = node.grad[idx];
                const double gv = node.grad[idx + 1];
                const double u = node.value[idx];
                const double v = node.value[idx + 1];
                gsx += gu * (-u / sxv);
                gtx += gu * (-1.0 / sxv);
                gsy += gv * (-v / syv);
                gty += gv * (-1.0 / syv);
            }
        }
        const double gs[4] = {gsx, gsy, gtx, gty};
        for (int s = 0; s < 4; ++s) {
            const Var& in = node.inputs[static_cast<std::size_t>(s)];
            if (!wants(in)) continue;
            in->ensure_grad();
            in->grad[0] += gs[s];
        }
    });
}

Var soft_composite(const Tensor& base, const Var& m, const Tensor& class_plane) {
    if (base.rank() != 3 || m->value.rank() != 2 || base.dim(1) != m->value.dim(0) ||
        base.dim(2) != m->value.dim(1) || class_plane.dim(0) != base.dim(0))
        throw std::invalid_argument("soft_composite: shape mismatch");
    const int c = base.dim(0), h = base.dim(1), w = base.dim(2);
    const int n = h * w;
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        const double kv = class_plane[static_cast<std::size_t>(ch)];
        const double* bp = base.data() + static_cast<std::size_t>(ch) * n;
        double* op = out.data() + static_cast<std::size_t>(ch) * n;
        for (int i = 0; i < n; ++i) op[i] = bp[i] * (1.0 - m->value[static_cast<std::size_t>(i)]) +
                                            kv * m->value[static_cast<std::size_t>(i)];
    }
    return make_op(std::move(out), {m}, [base, class_plane, c, n](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        auto& gm = node.inputs[0]->grad;
        for (int ch = 0; ch < c; ++ch) {
            const double kv = class_plane[static_cast<std::size_t>(ch)];
            const double* bp = base.data() + static_cast<std::size_t>(ch) * n;
            const double* gp = node.grad.data() + static_cast<std::size_t>(ch) * n;
            for (int i = 0; i < n; ++i) gm[static_cast<std::size_t>(i)] += gp[i] * (kv - bp[i]);
        }
    });
}

// --- losses --------------------------------------------------------------------

Var bce_with_logits(const Var& logits, double target) {
    const std::size_t n = static_cast<std::size_t>(logits->value.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += stable_softplus(logits->value[i]) - target * logits->value[i];
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    return make_op(std::move(out), {logits}, [target, n](Node& node) {
        if (!wants(node.inputs[0])) return;
        node.inputs[0]->ensure_grad();
        const double g = node.grad[0] / static_cast<double>(n);
        const auto& x = node.inputs[0]->value;
        auto& gx = node.inputs[0]->grad;
        for (std::size_t i = 0; i < n; ++i) gx[i] += g * (stable_sigmoid(x[i]) - target);
    });
}

Var l1_mean(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("l1_mean: shape mismatch");
    const std::size_t n = static_cast<std::size_t>(a->value.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(a->value[i] - b->value[i]);
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    return make_op(std::move(out), {a, b}, [n](Node& node) {
        const double g = node.grad[0] / static_cast<double>(n);
        const auto& av = node.inputs[0]->value;
        const auto& bv = node.inputs[1]->value;
        const bool wa = wants(node.inputs[0]);
        const bool wb = wants(node.inputs[1]);
        if (wa) node.inputs[0]->ensure_grad();
        if (wb) node.inputs[1]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double d = av[i] - bv[i];
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (wa) node.inputs[0]->grad[i] += g * s;
            if (wb) node.inputs[1]->grad[i] -= g * s;
        }
    });
}

Var kl_std_normal(const Var& mu, const Var& logvar) {
    if (!mu->value.same_shape(logvar->value))
        throw std::invalid_argument("kl_std_normal: shape mismatch");
    const std::size_t n = static_cast<std::size_t>(mu->value.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = mu->value[i], lv = logvar->value[i];
        acc += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
    Tensor out = Tensor::scalar(acc);
    return make_op(std::move(out), {mu, logvar}, [n](Node& node) {
        const double g = node.grad[0];
        const bool wm = wants(node.inputs[0]);
        const bool wl = wants(node.inputs[1]);
        if (wm) node.inputs[0]->ensure_grad();
        if (wl) node.inputs[1]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            if (wm) node.inputs[0]->grad[i] += g * node.inputs[0]->value[i];
            if (wl) node.inputs[1]->grad[i] += g * 0.5 * (std::exp(node.inputs[1]->value[i]) - 1.0);
        }
    });
}

// --- backward ------------------------------------------------------------------

void backward(const Var& root) {
    if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!root->requires_grad) return;

    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* next = node->inputs[idx].get();
            ++idx;
            if (next && next->requires_grad && !seen.count(next)) {
                seen.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        n->ensure_grad();
        std::fill(n->grad.data(), n->grad.data() + n->grad.numel(), 0.0);
    }
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

} // namespace insertnet::ag
