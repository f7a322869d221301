#include "doctest.h"

#include "gradcheck.hpp"
#include "insertnet/netblocks.hpp"
#include "insertnet/rng.hpp"

#include <cmath>

using namespace insertnet;
using namespace insertnet::nets;

TEST_CASE("init is deterministic and follows the 0.02-std convention") {
    ParameterStore a, b;
    auto wa = a.add("conv.w", {16, 25, 5, 5}, ParamKind::Weight); // 10k elements
    auto ga = a.add("norm.g", {64}, ParamKind::Gamma);
    auto ba = a.add("conv.b", {16}, ParamKind::Zero);
    auto wb = b.add("conv.w", {16, 25, 5, 5}, ParamKind::Weight);
    b.add("norm.g", {64}, ParamKind::Gamma);
    b.add("conv.b", {16}, ParamKind::Zero);

    a.init_dcgan(123);
    b.init_dcgan(123);
    for (std::size_t i = 0; i < static_cast<std::size_t>(wa->value.numel()); ++i)
        CHECK(wa->value[i] == wb->value[i]);

    // sample std of the 10^4-element weight array within [0.018, 0.022]
    double mean = 0.0;
    for (std::size_t i = 0; i < 10000; ++i) mean += wa->value[i];
    mean /= 10000;
    double var = 0.0;
    for (std::size_t i = 0; i < 10000; ++i) {
        const double d = wa->value[i] - mean;
        var += d * d;
    }
    const double stddev = std::sqrt(var / 9999);
    CHECK(stddev > 0.018);
    CHECK(stddev < 0.022);

    double gmean = 0.0;
    for (std::size_t i = 0; i < 64; ++i) gmean += ga->value[i];
    CHECK(gmean / 64 == doctest::Approx(1.0).epsilon(0.02));
    for (std::size_t i = 0; i < 16; ++i) CHECK(ba->value[i] == 0.0);

    // a different seed must give different weights
    ParameterStore c;
    auto wc = c.add("conv.w", {16, 25, 5, 5}, ParamKind::Weight);
    c.init_dcgan(124);
    bool any_diff = false;
    for (std::size_t i = 0; i < 100; ++i)
        if (wc->value[i] != wa->value[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("patch discriminator: score grid shapes and divisibility error") {
    ParameterStore ps;
    PatchDiscriminator d(ps, "d", {10, {16, 32, 32, 64}});
    ps.init_dcgan(7);
    Rng rng(1);

    ag::NoGradGuard ng;
    auto s1 = d.fwd(ag::constant(Tensor::randn({10, 32, 64}, rng)));
    CHECK(s1->value.shape() == std::vector<int>{1, 2, 4});
    auto s2 = d.fwd(ag::constant(Tensor::randn({10, 64, 128}, rng)));
    CHECK(s2->value.shape() == std::vector<int>{1, 4, 8});
    CHECK_THROWS_AS((void)d.fwd(ag::constant(Tensor::randn({10, 30, 64}, rng))), ShapeError);
}

TEST_CASE("patch discriminator gradient w.r.t. input matches finite differences") {
    ParameterStore ps;
    PatchDiscriminator d(ps, "d", {3, {4, 6}});
    ps.init_dcgan(9);
    Rng rng(2);
    Tensor x = Tensor::randn({3, 8, 8}, rng);

    auto r = gradcheck::check({x}, [&](const std::vector<gradcheck::Var>& v) {
        auto out = d.fwd(v[0]);
        return ag::mean(ag::mul(out, out));
    });
    CHECK(r.max_rel_err < 1e-4);
    CHECK(r.max_abs_grad > 0.0);
}

TEST_CASE("affine discriminator: exact 6->64->1, zero weights give zero logit") {
    ParameterStore ps;
    AffineDiscriminator d(ps, "da");
    CHECK(ps.get("da.fc1.w")->value.shape() == std::vector<int>{64, 6});
    CHECK(ps.get("da.fc2.w")->value.shape() == std::vector<int>{1, 64});

    Tensor a6({6}, {0.3, 0.0, -0.2, 0.0, 0.5, 0.9});
    {
        ag::NoGradGuard ng;
        auto logit = d.fwd(ag::constant(a6)); // params still zero
        CHECK(logit->value.numel() == 1);
        CHECK(logit->scalar() == 0.0);

        ps.init_dcgan(3);
        auto l2 = d.fwd(ag::constant(a6));
        CHECK(l2->value.numel() == 1);
    }

    Tensor a = a6;
    auto r = gradcheck::check({a}, [&](const std::vector<gradcheck::Var>& v) {
        return ag::mul(d.fwd(v[0]), d.fwd(v[0]));
    });
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("conv encoder: configured shape, determinism, z sensitivity") {
    ParameterStore ps;
    ConvEncoder enc(ps, "e", {9, 32, 64, 16, 4, {32, 64, 64, 64}, 128});
    ps.init_dcgan(11);
    Rng rng(4);
    Tensor x = Tensor::randn({9, 32, 64}, rng);
    Tensor z = Tensor::randn({16}, rng);

    ag::NoGradGuard ng;
    auto e1 = enc.fwd(ag::constant(x), ag::constant(z));
    CHECK(e1->value.shape() == std::vector<int>{128});
    auto e2 = enc.fwd(ag::constant(x), ag::constant(z));
    for (std::size_t i = 0; i < 128; ++i) CHECK(e1->value[i] == e2->value[i]);

    // over 50 random inits, perturbing z changes the code
    int changed = 0;
    for (int s = 0; s < 50; ++s) {
        ParameterStore ps2;
        ConvEncoder enc2(ps2, "e", {9, 32, 64, 16, 4, {8, 8}, 32});
        ps2.init_dcgan(static_cast<std::uint64_t>(s) + 100);
        Tensor x2 = Tensor::randn({9, 32, 64}, rng);
        Tensor za = Tensor::randn({16}, rng);
        Tensor zb = za;
        zb[0] += 0.5;
        auto ca = enc2.fwd(ag::constant(x2), ag::constant(za));
        auto cb = enc2.fwd(ag::constant(x2), ag::constant(zb));
        for (std::size_t i = 0; i < 32; ++i)
            if (ca->value[i] != cb->value[i]) {
                ++changed;
                break;
            }
    }
    CHECK(changed >= 50); // every random init must react to z

    CHECK_THROWS_AS((void)enc.fwd(ag::constant(Tensor::zeros({9, 16, 16})), ag::constant(z)),
                    ShapeError);
}

TEST_CASE("deconv decoder: mask head range, recon head shape, gradients") {
    ParameterStore ps;
    DeconvDecoder mask_head(ps, "m", {128, 64, 2, 2, {48, 32, 16, 1}, 4, true});
    DeconvDecoder recon_head(ps, "r", {128, 64, 2, 4, {32, 16, 16, 9}, 2, true});
    ps.init_dcgan(21);
    Rng rng(5);
    Tensor code = Tensor::randn({128}, rng);

    {
        ag::NoGradGuard ng;
        auto m = mask_head.fwd(ag::constant(code));
        CHECK(m->value.shape() == std::vector<int>{1, 32, 32});
        for (std::size_t i = 0; i < static_cast<std::size_t>(m->value.numel()); ++i) {
            CHECK(m->value[i] >= 0.0);
            CHECK(m->value[i] <= 1.0);
        }
        auto x = recon_head.fwd(ag::constant(code));
        CHECK(x->value.shape() == std::vector<int>{9, 32, 64});
    }

    ParameterStore tiny;
    DeconvDecoder small(tiny, "s", {8, 4, 2, 2, {4, 1}, 4, true});
    tiny.init_dcgan(22);
    Tensor c8 = Tensor::randn({8}, rng);
    auto r = gradcheck::check({c8}, [&](const std::vector<gradcheck::Var>& v) {
        auto out = small.fwd(v[0]);
        return ag::mean(ag::mul(out, out));
    });
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("forwards stay finite under random stress") {
    ParameterStore ps;
    ConvEncoder enc(ps, "e", {4, 8, 8, 8, 2, {4, 4}, 16});
    DeconvDecoder dec(ps, "d", {16, 4, 2, 2, {4, 2}, 4, true});
    PatchDiscriminator disc(ps, "p", {2, {4, 4}});
    ps.init_dcgan(33);
    Rng rng(6);

    ag::NoGradGuard ng;
    for (int t = 0; t < 1000; ++t) {
        Tensor x = Tensor::randn({4, 8, 8}, rng, rng.uniform(0.1, 5.0));
        Tensor z = Tensor::randn({8}, rng, rng.uniform(0.1, 5.0));
        auto code = enc.fwd(ag::constant(x), ag::constant(z));
        auto img = dec.fwd(code);
        auto score = disc.fwd(ag::constant(Tensor::randn({2, 8, 8}, rng, 3.0)));
        CHECK(code->value.all_finite());
        CHECK(img->value.all_finite());
        CHECK(score->value.all_finite());
    }
}

TEST_CASE("mlp builds the requested stack") {
    ParameterStore ps;
    Mlp head(ps, "h", {128, 64, 4});
    ps.init_dcgan(41);
    Rng rng(7);
    ag::NoGradGuard ng;
    auto out = head.fwd(ag::constant(Tensor::randn({128}, rng)));
    CHECK(out->value.shape() == std::vector<int>{4});
}
