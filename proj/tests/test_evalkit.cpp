#include "doctest.h"

#include "insertnet/evalkit.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace insertnet;
using namespace insertnet::evalkit;

namespace {

PlacementSample sample_from_box(const core::BoxSpec& box, int map_h, int map_w, int class_id,
                                int mask_scale = 2) {
    PlacementSample s;
    s.class_id = class_id;
    s.box = box;
    s.params = warp::fit_affine_from_bbox(box, map_h, map_w);
    s.mask_h = mask_scale * map_h;
    s.mask_w = mask_scale * map_w;
    s.mask.assign(static_cast<std::size_t>(s.mask_h) * s.mask_w, 0);
    for (int y = mask_scale * box.y0; y < mask_scale * (box.y0 + box.h); ++y)
        for (int x = mask_scale * box.x0; x < mask_scale * (box.x0 + box.w); ++x)
            s.mask[static_cast<std::size_t>(y) * s.mask_w + x] = 1;
    s.inserted = true;
    return s;
}

} // namespace

TEST_CASE("oracle accepts every ground-truth instance, 1000 instances") {
    core::ClassPalette p = core::default_palette();
    synth::SceneSpec spec;
    int n = 0;
    std::uint64_t seed = 0;
    while (n < 1000) {
        synth::ScenePair sp = synth::generate_scene(spec, p, 600000 + seed++);
        for (const auto& inst : sp.instances) {
            PlacementSample s;
            s.class_id = inst.class_id;
            s.box = inst.box_where;
            s.params = inst.params;
            s.mask_h = sp.shape.h;
            s.mask_w = sp.shape.w;
            s.mask.assign(static_cast<std::size_t>(sp.shape.h) * sp.shape.w, 0);
            for (int y = 0; y < sp.shape.h; ++y)
                for (int x = 0; x < sp.shape.w; ++x)
                    s.mask[static_cast<std::size_t>(y) * sp.shape.w + x] =
                        sp.shape.id_at(y, x) == inst.id ? 1 : 0;
            Verdict v = oracle_validate(spec, p, s);
            if (!v.valid) {
                CAPTURE(inst.class_id);
                CAPTURE(inst.box_where.y0);
                CAPTURE(fail_reason_name(v.reasons[0]));
            }
            CHECK(v.valid);
            ++n;
        }
    }
}

TEST_CASE("oracle rejects misplaced and misshapen samples with named reasons") {
    core::ClassPalette p = core::default_palette();
    synth::SceneSpec spec;
    const int person = p.id_of("person");

    // person in the sky band: reason (a)
    PlacementSample sky = sample_from_box({30, 2, 2, 5}, 32, 64, person);
    Verdict v1 = oracle_validate(spec, p, sky);
    CHECK_FALSE(v1.valid);
    CHECK(std::find(v1.reasons.begin(), v1.reasons.end(), FailReason::Band) != v1.reasons.end());

    // right position but 3x the rule height: reason (b)
    PlacementSample tall = sample_from_box({30, 10, 5, 14}, 32, 64, person);
    // center ~ row 17 (sidewalk band), rule height ~ 4.4, actual 14
    Verdict v2 = oracle_validate(spec, p, tall);
    CHECK_FALSE(v2.valid);
    CHECK(std::find(v2.reasons.begin(), v2.reasons.end(), FailReason::Height) != v2.reasons.end());

    // valid position/height but absurd aspect: reason (c)
    PlacementSample wide = sample_from_box({20, 16, 10, 4}, 32, 64, person);
    Verdict v3 = oracle_validate(spec, p, wide);
    CHECK_FALSE(v3.valid);
    CHECK(std::find(v3.reasons.begin(), v3.reasons.end(), FailReason::Aspect) != v3.reasons.end());

    // disconnected mask: reason (d)
    PlacementSample split = sample_from_box({20, 16, 2, 5}, 32, 64, person);
    // carve a gap
    for (int x = 0; x < split.mask_w; ++x)
        split.mask[static_cast<std::size_t>(35) * split.mask_w + x] = 0;
    Verdict v4 = oracle_validate(spec, p, split);
    CHECK_FALSE(v4.valid);
    CHECK(std::find(v4.reasons.begin(), v4.reasons.end(), FailReason::Blob) != v4.reasons.end());

    CHECK_THROWS_AS((void)oracle_validate(spec, p, sample_from_box({0, 0, 4, 4}, 32, 64, 5)),
                    core::InvalidSceneError);
}

TEST_CASE("sample_placements: heatmap bookkeeping and determinism") {
    pipe::TrainConfig cfg;
    cfg.steps = 0;
    pipe::Trainer tr(cfg);
    auto scenes = synth::generate_scenes(2, synth::SceneSpec{}, tr.palette, 5);

    SampleSet one = sample_placements(tr, scenes[0], tr.class_id, 1, 9);
    long mass = 0;
    for (int c : one.heatmap) mass += c;
    CHECK(mass == static_cast<long>(one.samples[0].box.w) * one.samples[0].box.h);

    SampleSet many = sample_placements(tr, scenes[0], tr.class_id, 25, 10);
    long mass2 = 0, boxes = 0;
    for (int c : many.heatmap) mass2 += c;
    for (const auto& s : many.samples) boxes += static_cast<long>(s.box.w) * s.box.h;
    CHECK(mass2 == boxes);

    SampleSet again = sample_placements(tr, scenes[0], tr.class_id, 25, 10);
    CHECK(again.heatmap == many.heatmap);
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(again.samples[i].params.tx == many.samples[i].params.tx);
        CHECK(again.samples[i].mask == many.samples[i].mask);
    }
}

TEST_CASE("recall_proxy equals a manual recount") {
    pipe::TrainConfig cfg;
    cfg.steps = 0;
    pipe::Trainer tr(cfg);
    synth::Dataset ds;
    ds.scenes = synth::generate_scenes(4, synth::SceneSpec{}, tr.palette, 77);

    const double r = recall_proxy(tr, ds, tr.class_id, 3, 123);
    long valid = 0, total = 0;
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        SampleSet set = sample_placements(tr, ds.scenes[i], tr.class_id, 3, hash_mix(123, i));
        for (const auto& s : set.samples) {
            ++total;
            if (oracle_validate(cfg.scene, tr.palette, s).valid) ++valid;
        }
    }
    CHECK(r == doctest::Approx(static_cast<double>(valid) / total).epsilon(1e-12));
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
}

TEST_CASE("diversity_metrics: exact values on hand-built samples") {
    core::ClassPalette p = core::default_palette();
    const int person = p.id_of("person");

    // all-identical boxes
    std::vector<PlacementSample> same(5, sample_from_box({10, 16, 4, 5}, 32, 64, person));
    DiversityReport r1 = diversity_metrics(same);
    CHECK(r1.center_std == 0.0);
    CHECK(r1.distinct_cells == 1);
    CHECK(r1.mean_box_iou == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r1.mean_mask_iou == doctest::Approx(1.0).epsilon(1e-12));

    // two disjoint equal-size boxes in different cells
    std::vector<PlacementSample> two = {sample_from_box({4, 16, 4, 4}, 32, 64, person),
                                        sample_from_box({40, 24, 4, 4}, 32, 64, person)};
    DiversityReport r2 = diversity_metrics(two);
    CHECK(r2.mean_box_iou == 0.0);
    CHECK(r2.distinct_cells == 2);

    // random samples: center std matches an independent two-pass computation
    Rng rng(3);
    std::vector<PlacementSample> rnd;
    for (int i = 0; i < 40; ++i) {
        const int w = 3 + static_cast<int>(rng.below(6));
        const int h = 3 + static_cast<int>(rng.below(6));
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(64 - w)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(32 - h)));
        rnd.push_back(sample_from_box({x0, y0, w, h}, 32, 64, person));
    }
    DiversityReport r3 = diversity_metrics(rnd);
    double mx = 0.0, my = 0.0;
    for (const auto& s : rnd) {
        mx += s.box.x0 + 0.5 * s.box.w;
        my += s.box.y0 + 0.5 * s.box.h;
    }
    mx /= 40;
    my /= 40;
    double vx = 0.0, vy = 0.0;
    for (const auto& s : rnd) {
        vx += std::pow(s.box.x0 + 0.5 * s.box.w - mx, 2);
        vy += std::pow(s.box.y0 + 0.5 * s.box.h - my, 2);
    }
    CHECK(r3.center_std == doctest::Approx(std::sqrt((vx + vy) / 40)).epsilon(1e-9));

    CHECK_THROWS(diversity_metrics({same[0]}));
}

TEST_CASE("heatmap pgm output is deterministic and normalized") {
    namespace fs = std::filesystem;
    pipe::TrainConfig cfg;
    cfg.steps = 0;
    pipe::Trainer tr(cfg);
    auto scenes = synth::generate_scenes(1, synth::SceneSpec{}, tr.palette, 15);
    SampleSet set = sample_placements(tr, scenes[0], tr.class_id, 10, 4);

    const auto path = (fs::temp_directory_path() / "insertnet_heat.pgm").string();
    write_heatmap_pgm(path, set);
    std::ifstream f(path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    CHECK(magic == "P2");
    CHECK(w == 64);
    CHECK(h == 32);
    int expect_max = 1;
    for (int c : set.heatmap) expect_max = std::max(expect_max, c);
    CHECK(maxval == expect_max);
    fs::remove(path);
}

TEST_CASE("ablation bookkeeping: five variants x seeds gives a full table") {
    pipe::TrainConfig base;
    base.steps = 0; // bookkeeping only
    auto variants = table_variants(base);
    REQUIRE(variants.size() == 5);
    CHECK(variants[0].first == "wo_d_layout_box");
    CHECK_FALSE(variants[0].second.use_d_layout_box);
    CHECK(variants[4].first == "full");

    synth::Dataset train_ds, eval_ds;
    train_ds.scenes = synth::generate_scenes(3, synth::SceneSpec{}, core::default_palette(), 1);
    eval_ds.scenes = synth::generate_scenes(2, synth::SceneSpec{}, core::default_palette(), 2);
    auto rows = ablation_run(variants, {1, 2, 3}, train_ds, eval_ds, 1, 2);
    CHECK(rows.size() == 15);
    for (const auto& r : rows) {
        CHECK(r.recall >= 0.0);
        CHECK(r.recall <= 1.0);
    }
    const std::string table = format_result_table(rows);
    CHECK(table.find("full") != std::string::npos);
    CHECK(table.find("wo_d_affine") != std::string::npos);
}
