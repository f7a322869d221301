#include "insertnet/warp.hpp"

#include <cmath>
#include <stdexcept>

namespace insertnet::warp {

using core::AffineParams;

namespace {

double clamp_scale(double log_s) {
    if (!std::isfinite(log_s)) throw std::invalid_argument("affine params must be finite");
    const double s = std::exp(log_s);
    return std::min(std::max(s, AffineParams::kScaleMin), AffineParams::kScaleMax);
}

} // namespace

AffineMatrix params_to_matrix(const AffineParams& p) {
    if (!std::isfinite(p.tx) || !std::isfinite(p.ty))
        throw std::invalid_argument("affine params must be finite");
    return {clamp_scale(p.log_sx), clamp_scale(p.log_sy), p.tx, p.ty};
}

AffineMatrix inverse_matrix(const AffineMatrix& m) {
    return {1.0 / m.sx, 1.0 / m.sy, -m.tx / m.sx, -m.ty / m.sy};
}

SamplingGrid affine_grid(const AffineMatrix& m, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("affine_grid: empty output");
    Tensor grid({out_h, out_w, 2});
    for (int i = 0; i < out_h; ++i) {
        const double v = (2.0 * i + 1.0) / out_h - 1.0;
        for (int j = 0; j < out_w; ++j) {
            const double u = (2.0 * j + 1.0) / out_w - 1.0;
            const std::size_t idx = (static_cast<std::size_t>(i) * out_w + j) * 2;
            grid[idx] = m.sx * u + m.tx;
            grid[idx + 1] = m.sy * v + m.ty;
        }
    }
    return grid;
}

Tensor bilinear_sample(const Tensor& src, const SamplingGrid& grid) {
    ag::NoGradGuard ng;
    return ag::bilinear_sample(ag::constant(src), ag::constant(grid))->value;
}

Tensor transform_unit_box(const AffineParams& p, int out_h, int out_w, int canvas_m) {
    ag::NoGradGuard ng;
    return g_box_mask(ag::constant(params_to_tensor(p)), out_h, out_w, canvas_m)
        ->value.reshaped({out_h, out_w});
}

Tensor warp_shape(const AffineParams& p, const core::ShapeMask& s, int out_h, int out_w) {
    ag::NoGradGuard ng;
    Tensor canvas({s.m, s.m}, s.values);
    return g_warp_shape(ag::constant(params_to_tensor(p)), ag::constant(canvas), out_h, out_w)
        ->value.reshaped({out_h, out_w});
}

AffineParams fit_affine_from_bbox(const core::BoxSpec& box, int map_h, int map_w) {
    if (box.w < 1 || box.h < 1) throw std::invalid_argument("fit_affine_from_bbox: degenerate box");
    if (box.x0 < 0 || box.y0 < 0 || box.x0 + box.w > map_w || box.y0 + box.h > map_h)
        throw std::invalid_argument("fit_affine_from_bbox: box outside map");
    const double sx = static_cast<double>(box.w) / map_w;
    const double sy = static_cast<double>(box.h) / map_h;
    const double cx = box.x0 + box.w * 0.5;
    const double cy = box.y0 + box.h * 0.5;
    AffineParams p;
    p.log_sx = std::log(sx);
    p.log_sy = std::log(sy);
    p.tx = 2.0 * cx / map_w - 1.0;
    p.ty = 2.0 * cy / map_h - 1.0;
    return p;
}

core::BoxSpec implied_bbox(const AffineParams& p, int map_h, int map_w) {
    const AffineMatrix m = params_to_matrix(p);
    const double cx = (m.tx + 1.0) * 0.5 * map_w;
    const double cy = (m.ty + 1.0) * 0.5 * map_h;
    const double bw = m.sx * map_w;
    const double bh = m.sy * map_h;
    int x0 = static_cast<int>(std::lround(cx - bw * 0.5));
    int y0 = static_cast<int>(std::lround(cy - bh * 0.5));
    int w = std::max(1, static_cast<int>(std::lround(bw)));
    int h = std::max(1, static_cast<int>(std::lround(bh)));
    x0 = std::min(std::max(x0, 0), map_w - 1);
    y0 = std::min(std::max(y0, 0), map_h - 1);
    w = std::min(w, map_w - x0);
    h = std::min(h, map_h - y0);
    return {x0, y0, w, h};
}

// --- graph builders ----------------------------------------------------------

Tensor params_to_tensor(const AffineParams& p) {
    return Tensor({4}, {p.log_sx, p.log_sy, p.tx, p.ty});
}

core::AffineParams params_from_tensor(const Tensor& t4) {
    if (t4.numel() != 4) throw std::invalid_argument("params_from_tensor: need 4 entries");
    return {t4[0], t4[1], t4[2], t4[3]};
}

ag::Var g_scale_clamped(const ag::Var& params4, int idx) {
    const double lo = std::log(AffineParams::kScaleMin);
    const double hi = std::log(AffineParams::kScaleMax);
    return ag::exp_(ag::clamp_(ag::slice(params4, idx, idx + 1), lo, hi));
}

ag::Var g_inverse_grid(const ag::Var& params4, int out_h, int out_w) {
    ag::Var sx = g_scale_clamped(params4, 0);
    ag::Var sy = g_scale_clamped(params4, 1);
    ag::Var tx = ag::slice(params4, 2, 3);
    ag::Var ty = ag::slice(params4, 3, 4);
    return ag::inverse_box_grid(sx, sy, tx, ty, out_h, out_w);
}

ag::Var g_box_mask(const ag::Var& params4, int out_h, int out_w, int canvas_m) {
    Tensor canvas = Tensor::full({1, canvas_m, canvas_m}, 1.0);
    ag::Var grid = g_inverse_grid(params4, out_h, out_w);
    ag::Var out = ag::bilinear_sample(ag::constant(std::move(canvas)), grid);
    return ag::reshape(out, {out_h, out_w});
}

ag::Var g_warp_shape(const ag::Var& params4, const ag::Var& shape, int out_h, int out_w) {
    if (shape->value.rank() != 2 || shape->value.dim(0) != shape->value.dim(1))
        throw std::invalid_argument("g_warp_shape: square canvas expected");
    const int m = shape->value.dim(0);
    ag::Var grid = g_inverse_grid(params4, out_h, out_w);
    ag::Var out = ag::bilinear_sample(ag::reshape(shape, {1, m, m}), grid);
    return ag::reshape(out, {out_h, out_w});
}

ag::Var g_embed6(const ag::Var& params4) {
    ag::Var zero = ag::constant(Tensor::zeros({1}));
    ag::Var sx = g_scale_clamped(params4, 0);
    ag::Var sy = g_scale_clamped(params4, 1);
    ag::Var tx = ag::slice(params4, 2, 3);
    ag::Var ty = ag::slice(params4, 3, 4);
    return ag::concat({sx, zero, tx, zero, sy, ty});
}

} // namespace insertnet::warp
