#include "doctest.h"

#include "insertnet/what_module.hpp"
#include "modelcheck.hpp"

#include <cmath>

using namespace insertnet;
using namespace insertnet::whatmod;

namespace {

Tensor boxed_input(const WhatConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::zeros({cfg.boxed_ch(), cfg.map_h, cfg.map_w});
    const int n = cfg.map_h * cfg.map_w;
    // plausible one-hot planes + a box channel
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.classes)));
        x.data()[static_cast<std::size_t>(cls) * n + i] = 1.0;
    }
    for (int i = 0; i < n; ++i)
        x.data()[static_cast<std::size_t>(cfg.classes + 1) * n + i] = rng.uniform() < 0.1 ? 1.0 : 0.0;
    return x;
}

core::LatentVector randn_vec(int n, std::uint64_t seed) {
    Rng rng(seed);
    core::LatentVector v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.normal();
    return v;
}

} // namespace

TEST_CASE("generate_shape: canvas size, [0,1] range, determinism, channel check") {
    WhatState st(WhatConfig{}, 5);
    Tensor x = boxed_input(st.cfg(), 1);
    core::LatentVector z = randn_vec(16, 2);

    core::ShapeMask s1 = generate_shape(st, x, z);
    CHECK(s1.m == 32);
    CHECK(s1.values.size() == 32 * 32);
    for (double v : s1.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    core::ShapeMask s2 = generate_shape(st, x, z);
    CHECK(s1.values == s2.values);

    CHECK_THROWS_AS((void)generate_shape(st, Tensor::zeros({9, 64, 128}), z), nets::ShapeError);
}

TEST_CASE("encode_shape: rejects empty masks, KL mirrors the affine encoder contract") {
    WhatState st(WhatConfig{}, 9);
    core::ShapeMask empty{32, std::vector<double>(1024, 0.0)};
    CHECK_THROWS_AS((void)encode_shape(st, empty, randn_vec(16, 3)), core::InvalidSceneError);

    core::ShapeMask blob{32, std::vector<double>(1024, 0.0)};
    for (int y = 8; y < 24; ++y)
        for (int x = 10; x < 20; ++x) blob.values[static_cast<std::size_t>(y) * 32 + x] = 1.0;

    auto c0 = encode_shape(st, blob, core::LatentVector(16, 0.0));
    for (std::size_t i = 0; i < 16; ++i) CHECK(c0.z[i] == doctest::Approx(c0.mu[i]).epsilon(1e-15));
    CHECK(wheremod::kl_closed_form(c0.mu, c0.logvar) >= 0.0);

    // 1000 random encoder outputs keep KL nonnegative
    Rng rng(4);
    for (int t = 0; t < 1000; ++t) {
        core::LatentVector mu(6), lv(6);
        for (auto& v : mu) v = rng.normal();
        for (auto& v : lv) v = 2.0 * rng.normal();
        CHECK(wheremod::kl_closed_form(mu, lv) >= 0.0);
    }
}

TEST_CASE("loss_what_adv: 2 ln 2 with a zeroed critic") {
    WhatState st(WhatConfig{}, 15);
    modelcheck::zero_store(st.disc());
    Rng rng(6);
    Tensor fake = Tensor::randn({9, 64, 128}, rng, 0.3);
    Tensor real = Tensor::randn({9, 64, 128}, rng, 0.3);
    auto adv = loss_what_adv(st, fake, real);
    CHECK(adv.d_term == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
    CHECK(adv.g_term == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("loss_what_recon arithmetic") {
    core::LatentVector z = randn_vec(16, 7);
    Tensor a = Tensor::full({10, 64, 128}, 0.5);
    CHECK(loss_what_recon(a, a, z, z, 10.0) == 0.0);

    Tensor b = a;
    b[777] += 1.0;
    CHECK(loss_what_recon(a, b, z, z, 10.0) ==
          doctest::Approx(10.0 / (10.0 * 64.0 * 128.0)).epsilon(1e-12));
    CHECK(loss_what_recon(a, b, z, z, 10.0) ==
          doctest::Approx(loss_what_recon(b, a, z, z, 10.0)).epsilon(1e-15));
    CHECK_THROWS(loss_what_recon(a, Tensor::zeros({10, 32, 64}), z, z, 1.0));
}

TEST_CASE("loss_what_sup: composition, ln2 floor, L1 of all-ones vs all-zeros") {
    WhatState st(WhatConfig{}, 21);
    modelcheck::zero_store(st.disc());
    core::ShapeMask s_real{32, std::vector<double>(1024, 0.0)};
    for (int y = 4; y < 28; ++y)
        for (int x = 8; x < 24; ++x) s_real.values[static_cast<std::size_t>(y) * 32 + x] = 1.0;
    Tensor cond = boxed_input(st.cfg(), 2);

    auto sup = loss_what_sup(st, s_real, cond, core::LatentVector(16, 0.0), 10.0, 1.0);
    CHECK(sup.total == doctest::Approx(sup.l1 + sup.kl + sup.adv).epsilon(1e-12));
    CHECK(sup.adv == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(sup.d_term == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
    CHECK(sup.kl >= 0.0);

    // mean-reduced L1 between all-ones and all-zeros 32x32 masks is exactly 1
    ag::NoGradGuard ng;
    CHECK(ag::l1_mean(ag::constant(Tensor::full({32, 32}, 1.0)),
                      ag::constant(Tensor::zeros({32, 32})))
              ->scalar() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("compose_soft follows the blending rule exactly") {
    Rng rng(8);
    Tensor oh = Tensor::zeros({9, 4, 6});
    const int n = 24;
    for (int i = 0; i < n; ++i) oh.data()[static_cast<std::size_t>(rng.below(8)) * n + i] = 1.0;
    Tensor m({4, 6});
    for (std::size_t i = 0; i < n; ++i) m[i] = rng.uniform();

    Tensor out = compose_soft(oh, m, 6);
    for (int c = 0; c < 9; ++c)
        for (int i = 0; i < n; ++i) {
            const double base = oh.data()[static_cast<std::size_t>(c) * n + i];
            const double k = c == 6 ? 1.0 : 0.0;
            const double expect = base * (1.0 - m[static_cast<std::size_t>(i)]) +
                                  k * m[static_cast<std::size_t>(i)];
            CHECK(out.data()[static_cast<std::size_t>(c) * n + i] ==
                  doctest::Approx(expect).epsilon(1e-15));
        }

    CHECK_THROWS(compose_soft(oh, m, 8)); // the edge channel is not a class

    // all-zero mask leaves the map untouched; all-one mask paints the class plane
    Tensor keep = compose_soft(oh, Tensor::zeros({4, 6}), 6);
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh.numel()); ++i) CHECK(keep[i] == oh[i]);
    Tensor paint = compose_soft(oh, Tensor::full({4, 6}, 1.0), 6);
    for (int i = 0; i < n; ++i) {
        CHECK(paint.data()[6 * n + i] == 1.0);
        CHECK(paint.data()[8 * n + i] == 0.0);
    }
}

TEST_CASE("generated masks stay finite/in-range under random stress (toy spec)") {
    WhatState st(WhatConfig::toy(), 31);
    Rng rng(9);
    for (int t = 0; t < 1000; ++t) {
        Tensor x = Tensor::randn({st.cfg().boxed_ch(), st.cfg().map_h, st.cfg().map_w}, rng,
                                 rng.uniform(0.1, 4.0));
        core::ShapeMask s = generate_shape(st, x, randn_vec(st.cfg().latent_dim,
                                                            1000 + static_cast<std::uint64_t>(t)));
        for (double v : s.values) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("what-side generator gradient reaches G_s through the composite (toy spec)") {
    WhatState st(WhatConfig::toy(), 37);
    const auto& cfg = st.cfg();
    Rng rng(10);
    Tensor oh = Tensor::zeros({cfg.comp_ch(), cfg.map_h, cfg.map_w});
    const int n = cfg.map_h * cfg.map_w;
    for (int i = 0; i < n; ++i) oh.data()[static_cast<std::size_t>(rng.below(8)) * n + i] = 1.0;
    Tensor xb = Tensor::zeros({cfg.boxed_ch(), cfg.map_h, cfg.map_w});
    std::copy(oh.data(), oh.data() + static_cast<std::size_t>(cfg.classes + 1) * n, xb.data());
    Tensor z = Tensor::randn({cfg.latent_dim}, rng);
    Tensor p4({4}, {std::log(0.4), std::log(0.5), 0.1, 0.2});

    auto build = [&]() {
        auto gen = st.g_generate(ag::constant(xb), ag::constant(z));
        ag::Var warped = warp::g_warp_shape(ag::constant(p4), gen.mask, cfg.map_h, cfg.map_w);
        ag::Var comp = g_compose_soft(oh, warped, 6);
        return ag::bce_with_logits(st.g_d_inst(comp), 1.0);
    };
    ag::Var enc_w = st.gen().get("what.enc.conv0.w");
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < 20; ++i) coords.push_back(i * 11);
    auto r = modelcheck::fd_vs_autograd({{enc_w, coords}}, build, 1e-5);
    CHECK(r.max_abs_grad > 0.0);
    CHECK(r.max_rel_err < 1e-3);
}
