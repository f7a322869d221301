#pragma once

#include "insertnet/tensor.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace insertnet::core {

struct InvalidSceneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------

struct ClassPalette {
    struct Entry {
        int id;
        std::string name;
    };
    std::vector<Entry> classes;
    std::vector<int> insertable;

    int size() const { return static_cast<int>(classes.size()); }
    bool valid_id(int id) const { return id >= 0 && id < size(); }
    bool is_insertable(int id) const;
    int id_of(const std::string& name) const; // NotFoundError if absent
    void validate() const;                    // contiguous ids, >=1 background class
};

// Street-scene palette used by the synthetic dataset.
ClassPalette default_palette();

enum class Tier { WhereRes, ShapeRes };

// Label grid + instance-id grid + derived edge map. Treat as immutable after
// construction; all mutating operations return fresh scenes.
struct SemanticScene {
    int h = 0, w = 0;
    Tier tier = Tier::WhereRes;
    std::vector<int> labels;       // h*w class ids
    std::vector<int> instance_ids; // h*w, 0 = background
    std::vector<std::uint8_t> edge; // h*w, derived

    int label_at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
    int id_at(int y, int x) const { return instance_ids[static_cast<std::size_t>(y) * w + x]; }
    int max_instance_id() const;
    std::vector<int> instance_list() const; // distinct nonzero ids, ascending
};

SemanticScene make_scene(int h, int w, Tier tier, std::vector<int> labels,
                         std::vector<int> instance_ids, const ClassPalette& palette);
void validate_scene(const SemanticScene& s, const ClassPalette& palette);

struct BoxSpec {
    int x0 = 0, y0 = 0, w = 1, h = 1;
    bool operator==(const BoxSpec&) const = default;
};
double box_iou(const BoxSpec& a, const BoxSpec& b);

// Rotation-free placement: log scales + normalized-center translation.
struct AffineParams {
    double log_sx = 0.0, log_sy = 0.0;
    double tx = 0.0, ty = 0.0;

    double sx() const;
    double sy() const;
    // [sx, 0, tx, 0, sy, ty]
    std::array<double, 6> embed6() const;

    static constexpr double kScaleMin = 0.01;
    static constexpr double kScaleMax = 1.0;
};

struct ShapeMask {
    int m = 0;               // canvas side
    std::vector<double> values; // m*m in [0,1]

    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * m + x]; }
    std::vector<std::uint8_t> binarize(double threshold = 0.5) const;
};

using LatentVector = std::vector<double>;
using ContextCode = std::vector<double>;

// Named scalar losses for one training step. `set_total` entries are checked
// against the recomputed sum of their components.
struct LossReport {
    std::vector<std::pair<std::string, double>> entries;

    void set(const std::string& name, double v);
    double get(const std::string& name) const; // NotFoundError
    bool has(const std::string& name) const;
    bool all_finite() const;
    std::string to_line() const;
};

// ---------------------------------------------------------------------------
// operations

// binary map of instance boundaries: 1 iff own id nonzero and some in-bounds
// 4-neighbor carries a different id
std::vector<std::uint8_t> extract_edge_map(const std::vector<int>& instance_ids, int h, int w);

// (C+1, H, W): per-class one-hot channels plus the edge channel
Tensor one_hot_encode(const SemanticScene& scene, const ClassPalette& palette);

// one_hot_encode plus one extra channel carrying box_mask
Tensor blend_box(const SemanticScene& scene, const ClassPalette& palette, const Tensor& box_mask);

struct PasteResult {
    SemanticScene scene;
    bool inserted = false; // false on the empty-mask no-op path
};

// Binarize warped_mask at 0.5; matching pixels get class_id and a fresh
// instance id. Re-pasting an identical region over its own instance is a
// no-op.
PasteResult paste_instance(const SemanticScene& scene, const ClassPalette& palette,
                           const Tensor& warped_mask, int class_id);

BoxSpec extract_instance_bbox(const SemanticScene& scene, int instance_id);

// Instance pixels refilled with the nearest non-instance label (4-neighbor BFS).
SemanticScene erase_instance(const SemanticScene& scene, const ClassPalette& palette,
                             int instance_id);

} // namespace insertnet::core
