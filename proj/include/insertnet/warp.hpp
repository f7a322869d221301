#pragma once

#include "insertnet/autograd.hpp"
#include "insertnet/core.hpp"
#include "insertnet/tensor.hpp"

namespace insertnet::warp {

// 2x3 rotation-free affine, output normalized coords -> source normalized
// coords. Off-diagonal linear terms are identically zero.
struct AffineMatrix {
    double sx = 1.0, sy = 1.0;
    double tx = 0.0, ty = 0.0;
};

// grid tensor layout: (h, w, 2) with [...,0] = u (x), [...,1] = v (y)
using SamplingGrid = Tensor;

// Hard clamp of the scales to [kScaleMin, kScaleMax]; identity for params
// already in range.
AffineMatrix params_to_matrix(const core::AffineParams& p);
AffineMatrix inverse_matrix(const AffineMatrix& m); // diagonal closed form

SamplingGrid affine_grid(const AffineMatrix& m, int out_h, int out_w);

// normalized-coordinate bilinear sampling with a zero border; pixel centers
// sit at (2j+1)/W - 1
Tensor bilinear_sample(const Tensor& src, const SamplingGrid& grid);

// Rasterize the placed unit box: all-ones canvas sampled through the inverse
// placement grid. Binarizing at 0.5 recovers integer boxes exactly.
Tensor transform_unit_box(const core::AffineParams& p, int out_h, int out_w, int canvas_m = 32);

// Place a box-local shape with the same transform.
Tensor warp_shape(const core::AffineParams& p, const core::ShapeMask& s, int out_h, int out_w);

// Ground-truth transform of a pixel box on a map.
core::AffineParams fit_affine_from_bbox(const core::BoxSpec& box, int map_h, int map_w);

// Pixel box implied by params on a map (inverse of fit up to rounding).
core::BoxSpec implied_bbox(const core::AffineParams& p, int map_h, int map_w);

// --- differentiable builders -------------------------------------------------
// params4 is a rank-1 var (log_sx, log_sy, tx, ty); scales are clamped inside.

ag::Var g_scale_clamped(const ag::Var& params4, int idx); // exp(clamp(log_s))
ag::Var g_inverse_grid(const ag::Var& params4, int out_h, int out_w);
ag::Var g_box_mask(const ag::Var& params4, int out_h, int out_w, int canvas_m = 32);
// shape: (m, m) var in [0,1]
ag::Var g_warp_shape(const ag::Var& params4, const ag::Var& shape, int out_h, int out_w);
// 6-vector embedding [sx, 0, tx, 0, sy, ty]
ag::Var g_embed6(const ag::Var& params4);

core::AffineParams params_from_tensor(const Tensor& t4);
Tensor params_to_tensor(const core::AffineParams& p);

} // namespace insertnet::warp
