#pragma once

#include "insertnet/core.hpp"
#include "insertnet/warp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace insertnet::synth {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Placement rule for one insertable class: centers live in a horizontal band,
// height follows h = h_factor * (y_c - horizon) with +/-20% noise, aspect
// (w/h) is drawn from a fixed range.
struct ClassRule {
    double h_factor = 0.6;
    double center_lo = 0.50, center_hi = 0.60; // fractions of H
    double aspect_lo = 0.25, aspect_hi = 0.45;
    double noise = 0.20;
};

struct SceneSpec {
    int h = 32, w = 64; // where-res; shape-res is exactly 2x
    double sky_end = 0.30, building_end = 0.50, sidewalk_end = 0.60;
    double horizon = 0.30;
    ClassRule person{0.6, 0.50, 0.60, 0.25, 0.45, 0.20};
    ClassRule car{0.5, 0.60, 1.00, 1.80, 2.60, 0.20};
    int max_instances = 3;
    double p_tree = 0.35;
    double p_building_col = 0.30;

    const ClassRule& rule_for(int class_id, const core::ClassPalette& p) const;
    double rule_height(int class_id, const core::ClassPalette& p, double yc_frac) const;
    // rows (as fractions of H) reachable by any rule-conforming mask
    std::pair<double, double> permissible_band(int class_id, const core::ClassPalette& p) const;
};

struct InstanceRecord {
    int id = 0;
    int class_id = 0;
    core::BoxSpec box_where, box_shape;
    core::AffineParams params; // fitted from box_where
};

struct ScenePair {
    core::SemanticScene where, shape;
    std::vector<InstanceRecord> instances;

    bool has_class(int class_id) const;
};

ScenePair generate_scene(const SceneSpec& spec, const core::ClassPalette& palette,
                         std::uint64_t scene_seed);

// Same per-scene streams as the on-disk path: scene i uses hash(seed, i).
std::vector<ScenePair> generate_scenes(int n, const SceneSpec& spec,
                                       const core::ClassPalette& palette, std::uint64_t seed);

void generate_dataset(int n, const SceneSpec& spec, const core::ClassPalette& palette,
                      std::uint64_t seed, const std::string& out_dir);

core::SemanticScene load_scene(const std::string& path, const core::ClassPalette& palette);
void save_scene(const std::string& path, const core::SemanticScene& scene,
                const core::ClassPalette& palette);

struct Dataset {
    std::vector<ScenePair> scenes;
    std::vector<int> with_class(int class_id) const; // scene indices
};

Dataset load_dataset(const std::string& dir, const core::ClassPalette& palette);

// Crop the instance mask (shape-res) to its bbox and resample to an m x m
// canvas, thresholded at 0.5: the supervision target for the shape generator.
core::ShapeMask real_shape_canvas(const core::SemanticScene& shape_scene, int instance_id, int m);

// Cityscapes-style directory loader stub: remaps raw ids via `remap`
// (raw id -> palette id, -1 drops to void). Expects P2/P5 graymap id images;
// untested against real exports.
core::SemanticScene load_idmap_scene(const std::string& label_pgm, const std::string& instance_pgm,
                                     const std::vector<int>& remap,
                                     const core::ClassPalette& palette);

} // namespace insertnet::synth
