#pragma once

#include "insertnet/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode autodiff over Tensor. Nodes form a shared_ptr DAG; backward()
// does an iterative topological walk from the root. There is no global tape,
// so independent graphs can be built on different threads.
namespace insertnet::ag {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;               // allocated by backward()
    bool requires_grad = false;
    std::vector<Var> inputs;
    // Accumulates into inputs' grads; only called when requires_grad.
    std::function<void(Node&)> backward_fn;

    explicit Node(Tensor v) : value(std::move(v)) {}

    double scalar() const { return value[0]; }
    bool grad_ready() const { return grad.numel() == value.numel(); }
    void ensure_grad() {
        if (!grad_ready()) grad = Tensor::zeros(value.shape());
    }
};

Var constant(Tensor v);
Var param(Tensor v); // leaf with requires_grad

// Thread-local grad mode; when disabled every op returns a constant, so
// "inference" forwards build no graph.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// --- elementwise / scalar ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var neg(const Var& a);
Var exp_(const Var& a);
Var tanh_(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var abs_(const Var& a);
Var clamp_(const Var& a, double lo, double hi); // pass-through grad strictly inside (lo,hi)

// --- reductions / shaping ---
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var slice(const Var& a, int from, int to); // rank-1
Var concat(const std::vector<Var>& parts); // axis 0; trailing dims must match
Var detach(const Var& a);

// --- linear algebra / network ops ---
Var matmul(const Var& a, const Var& b); // (m,k) x (k,n)
Var linear(const Var& x, const Var& w, const Var& b); // w:(out,in), x:(in) -> (out)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// w:(c_in, c_out, kh, kw), output (c_out, (h-1)*s - 2p + kh, ...)
Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var tile_plane(const Var& v, int h, int w); // (c) -> (c,h,w) constant planes

// --- sampling / warping ---
// src (c,hs,ws), grid (h,w,2) normalized coords; zero border outside [-1,1].
Var bilinear_sample(const Var& src, const Var& grid);
// Inverse placement grid for a rotation-free affine (sx,sy,tx,ty scalars):
// grid(i,j) = ((qx_j - tx)/sx, (qy_i - ty)/sy) with q the output pixel centers.
Var inverse_box_grid(const Var& sx, const Var& sy, const Var& tx, const Var& ty,
                     int out_h, int out_w);
// out[c] = base[c]*(1-m) + class_plane[c]*m, base/class constant, m (h,w).
Var soft_composite(const Tensor& base, const Var& m, const Tensor& class_plane);

// --- loss helpers ---
Var bce_with_logits(const Var& logits, double target); // mean-reduced
Var l1_mean(const Var& a, const Var& b);
Var kl_std_normal(const Var& mu, const Var& logvar); // sum over dims

void backward(const Var& root); // root must be scalar

} // namespace insertnet::ag
