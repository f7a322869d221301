#include "insertnet/where_module.hpp"

#include <cmath>

namespace insertnet::wheremod {

using namespace insertnet::nets;

WhereConfig WhereConfig::toy() {
    WhereConfig c;
    c.map_h = 8;
    c.map_w = 16;
    c.latent_dim = 4;
    c.ctx_dim = 16;
    c.z_planes = 2;
    c.enc_channels = {4, 8};
    c.recon_channels = {8, 9};
    c.dbox_channels = {4, 8};
    c.head_hidden = 8;
    return c;
}

namespace {

ConvEncoderSpec enc_spec(const WhereConfig& c) {
    return {c.in_ch(), c.map_h, c.map_w, c.latent_dim, c.z_planes, c.enc_channels, c.ctx_dim};
}

DeconvDecoderSpec recon_spec(const WhereConfig& c) {
    const int stages = static_cast<int>(c.recon_channels.size());
    DeconvDecoderSpec s;
    s.in_dim = c.ctx_dim;
    s.start_ch = c.enc_channels.back();
    s.start_h = c.map_h >> stages;
    s.start_w = c.map_w >> stages;
    s.channels = c.recon_channels;
    s.kernel = 2;
    s.final_sigmoid = true;
    return s;
}

} // namespace

WhereState::WhereState(const WhereConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      ctx_enc_(gen_, "where.enc", enc_spec(cfg)),
      stn_head_(gen_, "where.head", {cfg.ctx_dim, cfg.head_hidden, 4}),
      recon_x_(gen_, "where.recon_x", recon_spec(cfg)),
      recon_z_(gen_, "where.recon_z", {cfg.ctx_dim, cfg.head_hidden, cfg.latent_dim}),
      affine_enc_(gen_, "where.ea", {6, 64, 2 * cfg.latent_dim}),
      d_box_(disc_, "where.dbox", {cfg.in_ch() + 1, cfg.dbox_channels}),
      d_affine_(disc_, "where.daff", 64) {
    if (cfg.recon_channels.back() != cfg.in_ch())
        throw nets::ShapeError("where: recon head must emit classes+1 channels");
    gen_.init_dcgan(hash_mix(seed, 0x11));
    disc_.init_dcgan(hash_mix(seed, 0x22));
}

WhereState::Placement WhereState::g_predict(const ag::Var& x_in, const ag::Var& z) const {
    ag::Var e = ctx_enc_.fwd(x_in, z);
    ag::Var raw = stn_head_.fwd(e);
    const double lo = std::log(core::AffineParams::kScaleMin);
    const double hi = std::log(core::AffineParams::kScaleMax);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    ag::Var log_s = ag::add_const(
        ag::scale(ag::tanh_(ag::scale(ag::slice(raw, 0, 2), cfg_.gain_scale)), half), mid);
    ag::Var trans = ag::tanh_(ag::scale(ag::slice(raw, 2, 4), cfg_.gain_trans));
    return {ag::concat({log_s, trans}), e};
}

ag::Var WhereState::g_recon_x(const ag::Var& code) const { return recon_x_.fwd(code); }

ag::Var WhereState::g_recon_z(const ag::Var& code) const { return recon_z_.fwd(code); }

WhereState::GaussCode WhereState::g_encode_affine(const ag::Var& a6, const Tensor& eps) const {
    if (eps.numel() != cfg_.latent_dim) throw nets::ShapeError("encode_affine: bad eps size");
    ag::Var out = affine_enc_.fwd(a6);
    ag::Var mu = ag::slice(out, 0, cfg_.latent_dim);
    ag::Var logvar = ag::slice(out, cfg_.latent_dim, 2 * cfg_.latent_dim);
    ag::Var std_half = ag::exp_(ag::scale(logvar, 0.5));
    ag::Var z = ag::add(mu, ag::mul(std_half, ag::constant(eps)));
    return {mu, logvar, z};
}

ag::Var WhereState::g_d_box(const ag::Var& x_boxed) const { return d_box_.fwd(x_boxed); }

ag::Var WhereState::g_d_affine(const ag::Var& a6) const { return d_affine_.fwd(a6); }

// --- value-level ops -----------------------------------------------------------

PlacementResult predict_placement(const WhereState& st, const core::SemanticScene& x,
                                  const core::LatentVector& z_l,
                                  const core::ClassPalette& palette) {
    if (x.tier != core::Tier::WhereRes)
        throw core::InvalidSceneError("predict_placement: scene must be at where-res tier");
    if (static_cast<int>(z_l.size()) != st.cfg().latent_dim)
        throw nets::ShapeError("predict_placement: latent size mismatch");
    ag::NoGradGuard ng;
    Tensor oh = core::one_hot_encode(x, palette);
    Tensor z({st.cfg().latent_dim}, z_l);
    auto p = st.g_predict(ag::constant(std::move(oh)), ag::constant(std::move(z)));
    PlacementResult out;
    out.params = warp::params_from_tensor(p.params4->value);
    out.code.assign(p.code->value.data(), p.code->value.data() + p.code->value.numel());
    return out;
}

ReconResult reconstruct_from_code(const WhereState& st, const core::ContextCode& e) {
    if (static_cast<int>(e.size()) != st.cfg().ctx_dim)
        throw nets::ShapeError("reconstruct_from_code: code size mismatch");
    ag::NoGradGuard ng;
    ag::Var code = ag::constant(Tensor({st.cfg().ctx_dim}, e));
    ReconResult r;
    r.x_recon = st.g_recon_x(code)->value;
    const auto z = st.g_recon_z(code)->value;
    r.z_recon.assign(z.data(), z.data() + z.numel());
    return r;
}

AffineCode encode_affine(const WhereState& st, const core::AffineParams& a,
                         const core::LatentVector& eps) {
    ag::NoGradGuard ng;
    const auto e6 = a.embed6();
    Tensor a6({6}, std::vector<double>(e6.begin(), e6.end()));
    auto g = st.g_encode_affine(ag::constant(std::move(a6)), Tensor({st.cfg().latent_dim}, eps));
    AffineCode out;
    out.mu.assign(g.mu->value.data(), g.mu->value.data() + g.mu->value.numel());
    out.logvar.assign(g.logvar->value.data(), g.logvar->value.data() + g.logvar->value.numel());
    out.z.assign(g.z->value.data(), g.z->value.data() + g.z->value.numel());
    return out;
}

double kl_closed_form(const core::LatentVector& mu, const core::LatentVector& logvar) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        acc += -0.5 * (1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]));
    return acc;
}

AdvLoss loss_where_adv(const WhereState& st, const core::SemanticScene& x,
                       const core::SemanticScene& x_plus_cond, const core::AffineParams& a_real,
                       const core::AffineParams& a_fake, const core::ClassPalette& palette) {
    ag::NoGradGuard ng;
    const int h = st.cfg().map_h, w = st.cfg().map_w;
    Tensor real_box = warp::transform_unit_box(a_real, h, w);
    Tensor fake_box = warp::transform_unit_box(a_fake, h, w);
    ag::Var real = ag::constant(core::blend_box(x_plus_cond, palette, real_box));
    ag::Var fake = ag::constant(core::blend_box(x, palette, fake_box));
    AdvLoss out;
    out.d_term = ag::bce_with_logits(st.g_d_box(real), 1.0)->scalar() +
                 ag::bce_with_logits(st.g_d_box(fake), 0.0)->scalar();
    out.g_term = ag::bce_with_logits(st.g_d_box(fake), 1.0)->scalar();
    return out;
}

double loss_where_recon(const Tensor& x_onehot, const Tensor& x_recon,
                        const core::LatentVector& z, const core::LatentVector& z_recon,
                        double lambda_recon) {
    if (!x_onehot.same_shape(x_recon)) throw nets::ShapeError("loss_where_recon: shape mismatch");
    if (z.size() != z_recon.size()) throw nets::ShapeError("loss_where_recon: latent mismatch");
    ag::NoGradGuard ng;
    const double lx = ag::l1_mean(ag::constant(x_recon), ag::constant(x_onehot))->scalar();
    const double lz =
        ag::l1_mean(ag::constant(Tensor({static_cast<int>(z.size())}, z_recon)),
                    ag::constant(Tensor({static_cast<int>(z.size())}, z)))
            ->scalar();
    return lambda_recon * (lx + lz);
}

SupLoss loss_where_sup(const WhereState& st, const core::SemanticScene& x_plus_cond,
                       const core::AffineParams& a_real, const core::LatentVector& eps,
                       const core::ClassPalette& palette, double lambda_a, double lambda_kl) {
    ag::NoGradGuard ng;
    AffineCode code = encode_affine(st, a_real, eps);
    PlacementResult pred = predict_placement(st, x_plus_cond, code.z, palette);

    const auto ra = a_real.embed6();
    const auto fa = pred.params.embed6();
    Tensor real6({6}, std::vector<double>(ra.begin(), ra.end()));
    Tensor fake6({6}, std::vector<double>(fa.begin(), fa.end()));

    SupLoss out;
    out.l1 = lambda_a * ag::l1_mean(ag::constant(fake6), ag::constant(real6))->scalar();
    out.kl = lambda_kl * kl_closed_form(code.mu, code.logvar);
    out.adv = ag::bce_with_logits(st.g_d_affine(ag::constant(fake6)), 1.0)->scalar();
    out.total = out.l1 + out.kl + out.adv;
    out.d_term = ag::bce_with_logits(st.g_d_affine(ag::constant(real6)), 1.0)->scalar() +
                 ag::bce_with_logits(st.g_d_affine(ag::constant(fake6)), 0.0)->scalar();
    return out;
}

double loss_where_total(core::LossReport& report, double adv_g, double recon, double sup_total) {
    const double total = adv_g + recon + sup_total;
    report.set("where/adv_g", adv_g);
    report.set("where/recon", recon);
    report.set("where/sup", sup_total);
    report.set("where/total_g", total);
    return total;
}

} // namespace insertnet::wheremod
