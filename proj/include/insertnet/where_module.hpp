#pragma once

#include "insertnet/core.hpp"
#include "insertnet/netblocks.hpp"
#include "insertnet/warp.hpp"

namespace insertnet::wheremod {

struct WhereConfig {
    int map_h = 32, map_w = 64;
    int classes = 8; // palette size; network input adds the edge channel
    int latent_dim = 16;
    int ctx_dim = 128;
    int z_planes = 4;
    std::vector<int> enc_channels = {32, 64, 64, 64};
    std::vector<int> recon_channels = {32, 16, 16, 9}; // last = classes + 1
    std::vector<int> dbox_channels = {16, 32, 32, 64};
    int head_hidden = 64;
    // tanh gains on the placement head; sized so Adam at 2e-4 can cross the
    // parameter range within a few thousand steps
    double gain_scale = 2.0;
    double gain_trans = 4.0;

    int in_ch() const { return classes + 1; }
    static WhereConfig toy(); // tiny spec for gradcheck-style tests
};

// Everything the location generator side owns. `gen` holds the context
// encoder, placement head, reconstruction heads and the affine encoder E_A;
// `disc` holds the box-layout and affine critics.
class WhereState {
public:
    WhereState(const WhereConfig& cfg, std::uint64_t seed);

    const WhereConfig& cfg() const { return cfg_; }
    nets::ParameterStore& gen() { return gen_; }
    nets::ParameterStore& disc() { return disc_; }
    const nets::ParameterStore& gen() const { return gen_; }
    const nets::ParameterStore& disc() const { return disc_; }

    struct Placement {
        ag::Var params4; // (log_sx, log_sy, tx, ty), scales pre-bounded
        ag::Var code;    // context bottleneck e
    };

    // x_in: one_hot_encode(x), z: latent (var or constant)
    Placement g_predict(const ag::Var& x_in, const ag::Var& z) const;
    ag::Var g_recon_x(const ag::Var& code) const;
    ag::Var g_recon_z(const ag::Var& code) const;

    struct GaussCode {
        ag::Var mu, logvar, z;
    };
    // a6: 6-vector embedding of the ground-truth transform
    GaussCode g_encode_affine(const ag::Var& a6, const Tensor& eps) const;

    ag::Var g_d_box(const ag::Var& x_boxed) const;   // (1, h/16, w/16) logits
    ag::Var g_d_affine(const ag::Var& a6) const;     // (1) logit

private:
    WhereConfig cfg_;
    nets::ParameterStore gen_, disc_;
    nets::ConvEncoder ctx_enc_;
    nets::Mlp stn_head_;
    nets::DeconvDecoder recon_x_;
    nets::Mlp recon_z_;
    nets::Mlp affine_enc_;
    nets::PatchDiscriminator d_box_;
    nets::AffineDiscriminator d_affine_;
};

// --- spec-surface operations (value level) -----------------------------------

struct PlacementResult {
    core::AffineParams params;
    core::ContextCode code;
};

// scene must be at where-res tier
PlacementResult predict_placement(const WhereState& st, const core::SemanticScene& x,
                                  const core::LatentVector& z_l, const core::ClassPalette& palette);

struct ReconResult {
    Tensor x_recon;            // (classes+1, h, w)
    core::LatentVector z_recon;
};
ReconResult reconstruct_from_code(const WhereState& st, const core::ContextCode& e);

struct AffineCode {
    core::LatentVector mu, logvar, z;
};
AffineCode encode_affine(const WhereState& st, const core::AffineParams& a,
                         const core::LatentVector& eps);

double kl_closed_form(const core::LatentVector& mu, const core::LatentVector& logvar);

struct AdvLoss {
    double g_term = 0.0;
    double d_term = 0.0;
};
// real: x_plus conditioning with the ground-truth box blended; fake built from
// predict_placement on x
AdvLoss loss_where_adv(const WhereState& st, const core::SemanticScene& x,
                       const core::SemanticScene& x_plus_cond, const core::AffineParams& a_real,
                       const core::AffineParams& a_fake, const core::ClassPalette& palette);

double loss_where_recon(const Tensor& x_onehot, const Tensor& x_recon,
                        const core::LatentVector& z, const core::LatentVector& z_recon,
                        double lambda_recon);

struct SupLoss {
    double l1 = 0.0, kl = 0.0, adv = 0.0, total = 0.0; // generator side
    double d_term = 0.0;                               // affine critic side
};
SupLoss loss_where_sup(const WhereState& st, const core::SemanticScene& x_plus_cond,
                       const core::AffineParams& a_real, const core::LatentVector& eps,
                       const core::ClassPalette& palette, double lambda_a, double lambda_kl);

// total = adv.g + recon + sup.total; entries land in the report under "where/"
double loss_where_total(core::LossReport& report, double adv_g, double recon, double sup_total);

} // namespace insertnet::wheremod
