#include "insertnet/what_module.hpp"

#include <cmath>

namespace insertnet::whatmod {

using namespace insertnet::nets;

WhatConfig WhatConfig::toy() {
    WhatConfig c;
    c.map_h = 16;
    c.map_w = 32;
    c.canvas_m = 8;
    c.latent_dim = 4;
    c.code_dim = 16;
    c.enc_channels = {4, 8};
    c.mask_channels = {4, 1};
    c.recon_channels = {8, 10};
    c.dinst_channels = {4, 8};
    c.dshape_channels = {4};
    c.es_channels = {4};
    c.z_planes = 2;
    return c;
}

namespace {

ConvEncoderSpec enc_spec(const WhatConfig& c) {
    return {c.boxed_ch(), c.map_h, c.map_w, c.latent_dim, c.z_planes, c.enc_channels, c.code_dim};
}

DeconvDecoderSpec mask_spec(const WhatConfig& c) {
    const int stages = static_cast<int>(c.mask_channels.size());
    DeconvDecoderSpec s;
    s.in_dim = c.code_dim;
    s.start_ch = c.enc_channels.back();
    s.start_h = c.canvas_m >> stages;
    s.start_w = c.canvas_m >> stages;
    s.channels = c.mask_channels;
    s.kernel = 4;
    s.final_sigmoid = true;
    return s;
}

DeconvDecoderSpec recon_spec(const WhatConfig& c) {
    const int stages = static_cast<int>(c.recon_channels.size());
    DeconvDecoderSpec s;
    s.in_dim = c.code_dim;
    s.start_ch = c.enc_channels.back();
    s.start_h = c.map_h >> stages;
    s.start_w = c.map_w >> stages;
    s.channels = c.recon_channels;
    s.kernel = 2;
    s.final_sigmoid = true;
    return s;
}

ConvEncoderSpec es_spec(const WhatConfig& c) {
    return {1, c.canvas_m, c.canvas_m, 0, 0, c.es_channels, 2 * c.latent_dim};
}

} // namespace

WhatState::WhatState(const WhatConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      enc_(gen_, "what.enc", enc_spec(cfg)),
      mask_dec_(gen_, "what.mask", mask_spec(cfg)),
      recon_x_(gen_, "what.recon_x", recon_spec(cfg)),
      recon_z_(gen_, "what.recon_z", {cfg.code_dim, 64, cfg.latent_dim}),
      shape_enc_(gen_, "what.es", es_spec(cfg)),
      shape_enc_head_(gen_, "what.es_head", {2 * cfg.latent_dim, 2 * cfg.latent_dim}),
      d_inst_(disc_, "what.dinst", {cfg.comp_ch(), cfg.dinst_channels}),
      d_shape_(disc_, "what.dshape", {1, cfg.dshape_channels}) {
    if (cfg.recon_channels.back() != cfg.boxed_ch())
        throw ShapeError("what: recon head must emit classes+2 channels");
    if (cfg.mask_channels.back() != 1) throw ShapeError("what: mask head must emit one channel");
    gen_.init_dcgan(hash_mix(seed, 0x33));
    disc_.init_dcgan(hash_mix(seed, 0x44));
}

WhatState::Generated WhatState::g_generate(const ag::Var& x_boxed, const ag::Var& z) const {
    if (x_boxed->value.rank() != 3 || x_boxed->value.dim(0) != cfg_.boxed_ch())
        throw ShapeError("generate_shape: conditioning must carry exactly one box channel");
    ag::Var code = enc_.fwd(x_boxed, z);
    ag::Var mask = ag::reshape(mask_dec_.fwd(code), {cfg_.canvas_m, cfg_.canvas_m});
    return {mask, code};
}

WhatState::GaussCode WhatState::g_encode_shape(const ag::Var& mask, const Tensor& eps) const {
    if (eps.numel() != cfg_.latent_dim) throw ShapeError("encode_shape: bad eps size");
    ag::Var m3 = ag::reshape(mask, {1, cfg_.canvas_m, cfg_.canvas_m});
    ag::Var out = shape_enc_head_.fwd(shape_enc_.fwd(m3, nullptr));
    ag::Var mu = ag::slice(out, 0, cfg_.latent_dim);
    ag::Var logvar = ag::slice(out, cfg_.latent_dim, 2 * cfg_.latent_dim);
    ag::Var z = ag::add(mu, ag::mul(ag::exp_(ag::scale(logvar, 0.5)), ag::constant(eps)));
    return {mu, logvar, z};
}

ag::Var WhatState::g_recon_x(const ag::Var& code) const { return recon_x_.fwd(code); }
ag::Var WhatState::g_recon_z(const ag::Var& code) const { return recon_z_.fwd(code); }
ag::Var WhatState::g_d_inst(const ag::Var& comp) const { return d_inst_.fwd(comp); }
ag::Var WhatState::g_d_shape(const ag::Var& mask) const {
    ag::Var m = mask->value.rank() == 2
                    ? ag::reshape(mask, {1, cfg_.canvas_m, cfg_.canvas_m})
                    : mask;
    return d_shape_.fwd(m);
}

// --- value-level ops ---------------------------------------------------------

core::ShapeMask generate_shape(const WhatState& st, const Tensor& x_boxed,
                               const core::LatentVector& z_s) {
    if (static_cast<int>(z_s.size()) != st.cfg().latent_dim)
        throw ShapeError("generate_shape: latent size mismatch");
    ag::NoGradGuard ng;
    Tensor z({st.cfg().latent_dim}, z_s);
    auto g = st.g_generate(ag::constant(x_boxed), ag::constant(std::move(z)));
    core::ShapeMask s;
    s.m = st.cfg().canvas_m;
    s.values.assign(g.mask->value.data(), g.mask->value.data() + g.mask->value.numel());
    return s;
}

ShapeCode encode_shape(const WhatState& st, const core::ShapeMask& s_real,
                       const core::LatentVector& eps) {
    if (s_real.m != st.cfg().canvas_m) throw ShapeError("encode_shape: canvas size mismatch");
    bool any = false;
    for (double v : s_real.values)
        if (v >= 0.5) any = true;
    if (!any) throw core::InvalidSceneError("encode_shape: empty shape mask");
    ag::NoGradGuard ng;
    Tensor m({s_real.m, s_real.m}, s_real.values);
    auto g = st.g_encode_shape(ag::constant(std::move(m)), Tensor({st.cfg().latent_dim}, eps));
    ShapeCode out;
    out.mu.assign(g.mu->value.data(), g.mu->value.data() + g.mu->value.numel());
    out.logvar.assign(g.logvar->value.data(), g.logvar->value.data() + g.logvar->value.numel());
    out.z.assign(g.z->value.data(), g.z->value.data() + g.z->value.numel());
    return out;
}

AdvLoss loss_what_adv(const WhatState& st, const Tensor& comp_fake, const Tensor& comp_real) {
    ag::NoGradGuard ng;
    AdvLoss out;
    out.d_term = ag::bce_with_logits(st.g_d_inst(ag::constant(comp_real)), 1.0)->scalar() +
                 ag::bce_with_logits(st.g_d_inst(ag::constant(comp_fake)), 0.0)->scalar();
    out.g_term = ag::bce_with_logits(st.g_d_inst(ag::constant(comp_fake)), 1.0)->scalar();
    return out;
}

double loss_what_recon(const Tensor& x_boxed, const Tensor& x_recon, const core::LatentVector& z,
                       const core::LatentVector& z_recon, double lambda_recon) {
    if (!x_boxed.same_shape(x_recon)) throw ShapeError("loss_what_recon: shape mismatch");
    if (z.size() != z_recon.size()) throw ShapeError("loss_what_recon: latent mismatch");
    ag::NoGradGuard ng;
    const double lx = ag::l1_mean(ag::constant(x_recon), ag::constant(x_boxed))->scalar();
    const double lz = ag::l1_mean(ag::constant(Tensor({static_cast<int>(z.size())}, z_recon)),
                                  ag::constant(Tensor({static_cast<int>(z.size())}, z)))
                          ->scalar();
    return lambda_recon * (lx + lz);
}

SupLoss loss_what_sup(const WhatState& st, const core::ShapeMask& s_real, const Tensor& conditioning,
                      const core::LatentVector& eps, double lambda_s, double lambda_kl) {
    ShapeCode code = encode_shape(st, s_real, eps);
    core::ShapeMask s_tilde = generate_shape(st, conditioning, code.z);

    ag::NoGradGuard ng;
    const int m = st.cfg().canvas_m;
    Tensor real({m, m}, s_real.values);
    Tensor fake({m, m}, s_tilde.values);
    SupLoss out;
    out.l1 = lambda_s * ag::l1_mean(ag::constant(fake), ag::constant(real))->scalar();
    out.kl = lambda_kl * wheremod::kl_closed_form(code.mu, code.logvar);
    out.adv = ag::bce_with_logits(st.g_d_shape(ag::constant(fake)), 1.0)->scalar();
    out.total = out.l1 + out.kl + out.adv;
    out.d_term = ag::bce_with_logits(st.g_d_shape(ag::constant(real)), 1.0)->scalar() +
                 ag::bce_with_logits(st.g_d_shape(ag::constant(fake)), 0.0)->scalar();
    return out;
}

Tensor compose_soft(const Tensor& onehot_x, const Tensor& warped_mask, int class_id) {
    ag::NoGradGuard ng;
    return g_compose_soft(onehot_x, ag::constant(warped_mask), class_id)->value;
}

ag::Var g_compose_soft(const Tensor& onehot_x, const ag::Var& warped_mask, int class_id) {
    const int c = onehot_x.dim(0);
    if (class_id < 0 || class_id >= c - 1)
        throw core::InvalidSceneError("compose_soft: class outside palette");
    Tensor class_plane = Tensor::zeros({c});
    class_plane[static_cast<std::size_t>(class_id)] = 1.0; // edge component stays zero
    return ag::soft_composite(onehot_x, warped_mask, class_plane);
}

} // namespace insertnet::whatmod
