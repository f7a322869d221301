#pragma once

#include "insertnet/core.hpp"
#include "insertnet/netblocks.hpp"
#include "insertnet/warp.hpp"
#include "insertnet/where_module.hpp"

namespace insertnet::whatmod {

struct WhatConfig {
    int map_h = 64, map_w = 128; // shape-res tier
    int canvas_m = 32;
    int classes = 8;
    int latent_dim = 16;
    int code_dim = 128;
    std::vector<int> enc_channels = {32, 32, 48, 48};
    std::vector<int> mask_channels = {48, 32, 16, 1};
    std::vector<int> recon_channels = {32, 16, 16, 10}; // last = classes + 2
    std::vector<int> dinst_channels = {16, 32, 32, 64};
    std::vector<int> dshape_channels = {16, 32, 32};
    std::vector<int> es_channels = {16, 32, 32};
    int z_planes = 4;

    int boxed_ch() const { return classes + 2; } // one-hot + edge + box
    int comp_ch() const { return classes + 1; }  // composited map seen by D_inst
    static WhatConfig toy();
};

// Shape generator side: conditioned encoder + mask decoder + reconstruction
// heads + shape encoder E_s in `gen`; instance-layout and shape critics in
// `disc`.
class WhatState {
public:
    WhatState(const WhatConfig& cfg, std::uint64_t seed);

    const WhatConfig& cfg() const { return cfg_; }
    nets::ParameterStore& gen() { return gen_; }
    nets::ParameterStore& disc() { return disc_; }
    const nets::ParameterStore& gen() const { return gen_; }
    const nets::ParameterStore& disc() const { return disc_; }

    struct Generated {
        ag::Var mask; // (m, m) in [0,1]
        ag::Var code;
    };
    // x_boxed: blend_box output at shape-res (classes+2 channels)
    Generated g_generate(const ag::Var& x_boxed, const ag::Var& z) const;

    using GaussCode = wheremod::WhereState::GaussCode;
    GaussCode g_encode_shape(const ag::Var& mask, const Tensor& eps) const;

    ag::Var g_recon_x(const ag::Var& code) const; // (classes+2, h, w)
    ag::Var g_recon_z(const ag::Var& code) const;

    ag::Var g_d_inst(const ag::Var& comp) const;  // patch logits over composited map
    ag::Var g_d_shape(const ag::Var& mask) const; // patch logits over (1,m,m)

private:
    WhatConfig cfg_;
    nets::ParameterStore gen_, disc_;
    nets::ConvEncoder enc_;
    nets::DeconvDecoder mask_dec_;
    nets::DeconvDecoder recon_x_;
    nets::Mlp recon_z_;
    nets::ConvEncoder shape_enc_;
    nets::Mlp shape_enc_head_;
    nets::PatchDiscriminator d_inst_;
    nets::PatchDiscriminator d_shape_;
};

// --- spec-surface operations -----------------------------------------------------

core::ShapeMask generate_shape(const WhatState& st, const Tensor& x_boxed,
                               const core::LatentVector& z_s);

struct ShapeCode {
    core::LatentVector mu, logvar, z;
};
ShapeCode encode_shape(const WhatState& st, const core::ShapeMask& s_real,
                       const core::LatentVector& eps);

using AdvLoss = wheremod::AdvLoss;
// fake/real composited maps (classes+1 channels each)
AdvLoss loss_what_adv(const WhatState& st, const Tensor& comp_fake, const Tensor& comp_real);

double loss_what_recon(const Tensor& x_boxed, const Tensor& x_recon, const core::LatentVector& z,
                       const core::LatentVector& z_recon, double lambda_recon);

struct SupLoss {
    double l1 = 0.0, kl = 0.0, adv = 0.0, total = 0.0;
    double d_term = 0.0;
};
// conditioning: blend of the supervised scene with the ground-truth box
SupLoss loss_what_sup(const WhatState& st, const core::ShapeMask& s_real, const Tensor& conditioning,
                      const core::LatentVector& eps, double lambda_s, double lambda_kl);

// soft composite per the blending rule: one-hot(x)*(1-m) + class-one-hot*m
Tensor compose_soft(const Tensor& onehot_x, const Tensor& warped_mask, int class_id);
ag::Var g_compose_soft(const Tensor& onehot_x, const ag::Var& warped_mask, int class_id);

} // namespace insertnet::whatmod
