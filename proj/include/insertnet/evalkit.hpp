#pragma once

#include "insertnet/pipeline.hpp"

#include <functional>
#include <string>
#include <vector>

namespace insertnet::evalkit {

enum class FailReason { Band, Height, Aspect, Blob };
const char* fail_reason_name(FailReason r);

struct Verdict {
    bool valid = false;
    std::vector<FailReason> reasons;
};

struct PlacementSample {
    core::AffineParams params;
    core::BoxSpec box;                 // binarized box at where-res
    std::vector<std::uint8_t> mask;    // binarized warped mask at shape-res
    int mask_h = 0, mask_w = 0;
    int class_id = 0;
    bool inserted = false;
    Verdict verdict; // filled by oracle_validate
};

struct SampleSet {
    std::vector<PlacementSample> samples;
    std::vector<int> heatmap; // where-res box-interior counts
    int h = 0, w = 0;
};

// n independent (z_l, z_s) draws through the inference path
SampleSet sample_placements(const pipe::Trainer& model, const synth::ScenePair& x, int class_id,
                            int n, std::uint64_t seed);

// Rule oracle standing in for a detector: (a) mask mass inside the class's
// permissible row band, (b) height within +/-40% of the rule at the mask's
// center, (c) aspect within the class range widened by 30%, (d) 4-connected
// mask filling at least 30% of its bbox.
Verdict oracle_validate(const synth::SceneSpec& spec, const core::ClassPalette& palette,
                        const PlacementSample& sample);

// fraction of oracle-valid samples over scenes x n_per_scene
double recall_proxy(const pipe::Trainer& model, const synth::Dataset& dataset, int class_id,
                    int n_per_scene, std::uint64_t seed);

struct DiversityReport {
    double center_std = 0.0;      // px, sqrt(var_x + var_y)
    int distinct_cells = 0;       // on the fixed 8 x 16 occupancy grid
    double mean_box_iou = 0.0;    // over unordered pairs
    double mean_mask_iou = 0.0;
};

DiversityReport diversity_metrics(const std::vector<PlacementSample>& samples);

// fraction of heatmap mass whose rows fall inside the class's permissible band
double band_mass_fraction(const SampleSet& set, const synth::SceneSpec& spec,
                          const core::ClassPalette& palette, int class_id);

// portable graymap, counts normalized to the max cell
void write_heatmap_pgm(const std::string& path, const SampleSet& set);

// --- multi-run studies -------------------------------------------------------

struct RunResult {
    std::string variant;
    std::uint64_t seed = 0;
    double recall = 0.0;
    DiversityReport diversity;
};

using Variant = std::pair<std::string, pipe::TrainConfig>;

// Trains each (variant, seed) pair from identical initialization and
// evaluates recall_proxy; runs in parallel across a small worker pool.
std::vector<RunResult> ablation_run(const std::vector<Variant>& variants,
                                    const std::vector<std::uint64_t>& seeds,
                                    const synth::Dataset& train_data,
                                    const synth::Dataset& eval_data, int n_per_scene,
                                    int jobs,
                                    const std::function<void(const RunResult&)>& on_done = {});

// the five ablation columns: wo box-layout / wo affine / wo instance-layout /
// wo shape critic / full
std::vector<Variant> table_variants(const pipe::TrainConfig& base);

std::string format_result_table(const std::vector<RunResult>& rows);

} // namespace insertnet::evalkit
