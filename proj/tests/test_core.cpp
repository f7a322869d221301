#include "doctest.h"

#include "insertnet/core.hpp"
#include "insertnet/warp.hpp"
#include "insertnet/rng.hpp"

#include <algorithm>

using namespace insertnet;
using namespace insertnet::core;

namespace {

SemanticScene flat_scene(int h, int w, int label, const ClassPalette& p) {
    return make_scene(h, w, Tier::WhereRes, std::vector<int>(static_cast<std::size_t>(h) * w, label),
                      std::vector<int>(static_cast<std::size_t>(h) * w, 0), p);
}

// independent brute-force edge oracle: compares every pixel against all four
// neighbours explicitly
std::vector<std::uint8_t> edge_oracle(const std::vector<int>& ids, int h, int w) {
    std::vector<std::uint8_t> e(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int own = ids[static_cast<std::size_t>(y) * w + x];
            if (own == 0) continue;
            int drop = 0;
            if (y - 1 >= 0 && ids[static_cast<std::size_t>(y - 1) * w + x] != own) drop = 1;
            if (y + 1 < h && ids[static_cast<std::size_t>(y + 1) * w + x] != own) drop = 1;
            if (x - 1 >= 0 && ids[static_cast<std::size_t>(y) * w + x - 1] != own) drop = 1;
            if (x + 1 < w && ids[static_cast<std::size_t>(y) * w + x + 1] != own) drop = 1;
            e[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(drop);
        }
    }
    return e;
}

} // namespace

TEST_CASE("palette invariants") {
    ClassPalette p = default_palette();
    CHECK(p.size() == 8);
    CHECK(p.is_insertable(p.id_of("person")));
    CHECK(p.is_insertable(p.id_of("car")));
    CHECK_FALSE(p.is_insertable(p.id_of("road")));
    CHECK_THROWS_AS((void)p.id_of("unicorn"), NotFoundError);

    ClassPalette bad = p;
    bad.classes[3].id = 5;
    CHECK_THROWS_AS(bad.validate(), InvalidSceneError);
}

TEST_CASE("one_hot_encode basics and argmax round trip") {
    ClassPalette p = default_palette();
    const int road = p.id_of("road"), sidewalk = p.id_of("sidewalk");

    SemanticScene tiny = make_scene(1, 2, Tier::WhereRes, {road, sidewalk}, {0, 0}, p);
    Tensor oh = one_hot_encode(tiny, p);
    CHECK(oh.shape() == std::vector<int>{9, 1, 2});
    CHECK(oh.at(road, 0, 0) == 1.0);
    CHECK(oh.at(sidewalk, 0, 1) == 1.0);
    for (int x = 0; x < 2; ++x) {
        double s = 0.0;
        for (int c = 0; c < 8; ++c) s += oh.at(c, 0, x);
        CHECK(s == 1.0);
    }

    SemanticScene allroad = flat_scene(4, 6, road, p);
    Tensor oh2 = one_hot_encode(allroad, p);
    for (int i = 0; i < 24; ++i) {
        CHECK(oh2.data()[static_cast<std::size_t>(road) * 24 + i] == 1.0);
        for (int c = 0; c < 8; ++c)
            if (c != road) CHECK(oh2.data()[static_cast<std::size_t>(c) * 24 + i] == 0.0);
    }

    // random scene: argmax reproduces the label grid and sums stay exactly 1
    Rng rng(5);
    std::vector<int> labels(32 * 16);
    for (int& v : labels) v = static_cast<int>(rng.below(8));
    SemanticScene rnd = make_scene(16, 32, Tier::WhereRes, labels, std::vector<int>(32 * 16, 0), p);
    Tensor oh3 = one_hot_encode(rnd, p);
    for (int i = 0; i < 16 * 32; ++i) {
        int best = 0;
        double sum = 0.0;
        for (int c = 0; c < 8; ++c) {
            const double v = oh3.data()[static_cast<std::size_t>(c) * 16 * 32 + i];
            sum += v;
            if (v > oh3.data()[static_cast<std::size_t>(best) * 16 * 32 + i]) best = c;
        }
        CHECK(sum == 1.0);
        CHECK(best == labels[static_cast<std::size_t>(i)]);
    }

    SemanticScene broken = rnd;
    broken.labels[5] = 99;
    CHECK_THROWS_AS((void)one_hot_encode(broken, p), InvalidSceneError);
}

TEST_CASE("extract_edge_map matches definition and brute force") {
    // uniform zero grid
    auto e0 = extract_edge_map(std::vector<int>(64, 0), 8, 8);
    CHECK(std::all_of(e0.begin(), e0.end(), [](std::uint8_t v) { return v == 0; }));

    // single 4x4 block inside 8x8: exactly the 12 border pixels fire
    std::vector<int> ids(64, 0);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) ids[static_cast<std::size_t>(y) * 8 + x] = 1;
    auto e1 = extract_edge_map(ids, 8, 8);
    int count = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool border = (y == 2 || y == 5 || x == 2 || x == 5) &&
                                (y >= 2 && y <= 5 && x >= 2 && x <= 5);
            CHECK(e1[static_cast<std::size_t>(y) * 8 + x] == (border ? 1 : 0));
            count += e1[static_cast<std::size_t>(y) * 8 + x];
        }
    CHECK(count == 12);

    // random grids vs brute-force oracle
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 3 + static_cast<int>(rng.below(12));
        const int w = 3 + static_cast<int>(rng.below(12));
        std::vector<int> g(static_cast<std::size_t>(h) * w);
        for (int& v : g) v = static_cast<int>(rng.below(4));
        CHECK(extract_edge_map(g, h, w) == edge_oracle(g, h, w));
    }
}

TEST_CASE("blend_box appends exactly one channel") {
    ClassPalette p = default_palette();
    SemanticScene s = flat_scene(4, 6, p.id_of("road"), p);
    Tensor zeros = Tensor::zeros({4, 6});
    Tensor b = blend_box(s, p, zeros);
    CHECK(b.shape() == std::vector<int>{10, 4, 6});
    Tensor oh = one_hot_encode(s, p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh.numel()); ++i) CHECK(b[i] == oh[i]);
    for (int i = 0; i < 24; ++i) CHECK(b.data()[9 * 24 + i] == 0.0);

    Tensor ones = Tensor::full({4, 6}, 1.0);
    Tensor b1 = blend_box(s, p, ones);
    for (int i = 0; i < 24; ++i) CHECK(b1.data()[9 * 24 + i] == 1.0);

    CHECK_THROWS_AS((void)blend_box(s, p, Tensor::zeros({5, 6})), InvalidSceneError);
}

TEST_CASE("blend_box carries a soft rasterized box verbatim") {
    ClassPalette p = default_palette();
    SemanticScene s = flat_scene(32, 64, p.id_of("road"), p);
    const core::AffineParams params{-1.2, -0.9, 0.2, 0.3};
    Tensor soft = insertnet::warp::transform_unit_box(params, 32, 64);
    Tensor blended = blend_box(s, p, soft);
    for (int i = 0; i < 32 * 64; ++i) {
        const double v = blended.data()[static_cast<std::size_t>(9) * 32 * 64 + i];
        CHECK(v == soft[static_cast<std::size_t>(i)]);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("paste_instance relabels, recomputes edges, handles no-ops") {
    ClassPalette p = default_palette();
    const int road = p.id_of("road"), person = p.id_of("person");
    SemanticScene s = flat_scene(8, 8, road, p);

    // all-zero mask: unchanged, warning path
    auto r0 = paste_instance(s, p, Tensor::zeros({8, 8}), person);
    CHECK_FALSE(r0.inserted);
    CHECK(r0.scene.labels == s.labels);
    CHECK(r0.scene.instance_ids == s.instance_ids);

    // solid rectangle
    Tensor mask = Tensor::zeros({8, 8});
    for (int y = 2; y < 6; ++y)
        for (int x = 3; x < 5; ++x) mask.at(y, x) = 1.0;
    auto r1 = paste_instance(s, p, mask, person);
    CHECK(r1.inserted);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool inside = y >= 2 && y < 6 && x >= 3 && x < 5;
            CHECK(r1.scene.label_at(y, x) == (inside ? person : road));
            CHECK((r1.scene.id_at(y, x) != 0) == inside);
        }
    CHECK(r1.scene.edge == extract_edge_map(r1.scene.instance_ids, 8, 8));

    // idempotence: identical mask+class over its own instance is a no-op
    auto r2 = paste_instance(r1.scene, p, mask, person);
    CHECK_FALSE(r2.inserted);
    CHECK(r2.scene.labels == r1.scene.labels);
    CHECK(r2.scene.instance_ids == r1.scene.instance_ids);

    // arbitrary soft mask keeps the edge invariant
    Rng rng(3);
    Tensor soft({8, 8});
    for (std::size_t i = 0; i < 64; ++i) soft[i] = rng.uniform();
    auto r3 = paste_instance(r1.scene, p, soft, p.id_of("car"));
    CHECK(r3.scene.edge == extract_edge_map(r3.scene.instance_ids, 8, 8));
    validate_scene(r3.scene, p);

    CHECK_THROWS_AS((void)paste_instance(s, p, mask, road), InvalidSceneError);
}

TEST_CASE("extract_instance_bbox exact and brute force") {
    ClassPalette p = default_palette();
    SemanticScene s = flat_scene(12, 10, p.id_of("road"), p);
    Tensor mask = Tensor::zeros({12, 10});
    for (int y = 2; y < 7; ++y)
        for (int x = 4; x < 7; ++x) mask.at(y, x) = 1.0;
    auto r = paste_instance(s, p, mask, p.id_of("person"));
    CHECK(extract_instance_bbox(r.scene, 1) == BoxSpec{4, 2, 3, 5});
    CHECK_THROWS_AS((void)extract_instance_bbox(r.scene, 9), NotFoundError);

    // random blob vs min/max scan
    Rng rng(11);
    Tensor blob = Tensor::zeros({12, 10});
    for (int t = 0; t < 15; ++t)
        blob.at(1 + static_cast<int>(rng.below(10)), 1 + static_cast<int>(rng.below(8))) = 1.0;
    auto r2 = paste_instance(s, p, blob, p.id_of("car"));
    int x0 = 10, y0 = 12, x1 = -1, y1 = -1;
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 10; ++x)
            if (r2.scene.id_at(y, x) == 1) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    CHECK(extract_instance_bbox(r2.scene, 1) == BoxSpec{x0, y0, x1 - x0 + 1, y1 - y0 + 1});
}

TEST_CASE("erase_instance flood fills and restores labels") {
    ClassPalette p = default_palette();
    const int road = p.id_of("road"), sidewalk = p.id_of("sidewalk");
    const int person = p.id_of("person");

    // rectangle person fully surrounded by road
    SemanticScene s = flat_scene(8, 8, road, p);
    Tensor mask = Tensor::zeros({8, 8});
    for (int y = 3; y < 6; ++y)
        for (int x = 3; x < 5; ++x) mask.at(y, x) = 1.0;
    auto pasted = paste_instance(s, p, mask, person);
    SemanticScene erased = erase_instance(pasted.scene, p, 1);
    CHECK(erased.labels == s.labels);
    CHECK(erased.instance_ids == s.instance_ids);

    CHECK_THROWS_AS((void)erase_instance(pasted.scene, p, 7), NotFoundError);

    // person straddling a sidewalk/road boundary
    std::vector<int> labels(64, road);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) labels[static_cast<std::size_t>(y) * 8 + x] = sidewalk;
    SemanticScene split = make_scene(8, 8, Tier::WhereRes, labels, std::vector<int>(64, 0), p);
    Tensor straddle = Tensor::zeros({8, 8});
    for (int y = 2; y < 6; ++y)
        for (int x = 3; x < 5; ++x) straddle.at(y, x) = 1.0;
    auto pasted2 = paste_instance(split, p, straddle, person);
    SemanticScene erased2 = erase_instance(pasted2.scene, p, 1);
    for (int v : erased2.labels) CHECK(v != person);
    validate_scene(erased2, p);
}

TEST_CASE("LossReport bookkeeping") {
    LossReport r;
    r.set("a", 0.5);
    r.set("b", 0.25);
    r.set("a", 0.75);
    CHECK(r.get("a") == 0.75);
    CHECK(r.has("b"));
    CHECK_FALSE(r.has("c"));
    CHECK(r.all_finite());
    r.set("bad", std::numeric_limits<double>::quiet_NaN());
    CHECK_FALSE(r.all_finite());
    CHECK_THROWS_AS((void)r.get("missing"), NotFoundError);
}
