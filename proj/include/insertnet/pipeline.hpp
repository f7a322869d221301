#pragma once

#include "insertnet/core.hpp"
#include "insertnet/synthdata.hpp"
#include "insertnet/what_module.hpp"
#include "insertnet/where_module.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace insertnet::pipe {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::string insert_class = "person";
    int where_h = 32, where_w = 64; // shape-res is exactly 2x
    int canvas_m = 32;
    int box_canvas_m = 4; // rasterization canvas for box channels (coarse: wide soft rims)
    int latent_dim = 16;
    int ctx_dim = 128;
    double lambda_recon = 10.0, lambda_a = 30.0, lambda_s = 30.0, lambda_kl = 0.01;
    double lr = 2e-4, beta1 = 0.5, beta2 = 0.999;
    // instance noise on patch-critic inputs and half-pixel jitter on real
    // boxes; without them the critics win on rasterization tells alone
    double d_noise = 0.05;
    double real_box_jitter = 0.5;  // px
    double d_real_target = 0.9;    // one-sided label smoothing for the critics
    long steps = 5000;
    std::uint64_t seed = 1;
    int snapshot_every = 0; // 0: only the final checkpoint
    // discriminator toggles (ablation studies)
    bool use_d_layout_box = true, use_d_affine = true;
    bool use_d_layout_instance = true, use_d_shape = true;
    // loss-path toggles (mode-collapse studies)
    bool use_where_recon = true, use_where_sup = true;
    bool use_what_recon = true, use_what_sup = true;
    bool joint_update = true;    // what-side adversarial gradient into G_l
    bool sup_cond_erase = true;  // supervised path conditions on the erased scene
    std::string stage = "joint"; // "joint" | "where-first"
    synth::SceneSpec scene;

    int shape_h() const { return 2 * where_h; }
    int shape_w() const { return 2 * where_w; }
    void validate() const;
    wheremod::WhereConfig where_cfg() const;
    whatmod::WhatConfig what_cfg() const;
};

// Adam over one parameter store; moments are addressable for checkpoints.
class Adam {
public:
    Adam(nets::ParameterStore& ps, double lr, double beta1, double beta2);
    void step(); // consumes and zeroes gradients
    long t() const { return t_; }
    void set_t(long t) { t_ = t; }
    Tensor& moment_m(std::size_t i) { return m_[i]; }
    Tensor& moment_v(std::size_t i) { return v_[i]; }
    std::size_t size() const { return m_.size(); }

private:
    nets::ParameterStore* ps_;
    double lr_, beta1_, beta2_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct Models {
    wheremod::WhereState where;
    whatmod::WhatState what;
    Models(const TrainConfig& cfg, std::uint64_t seed)
        : where(cfg.where_cfg(), hash_mix(seed, 0xAA)), what(cfg.what_cfg(), hash_mix(seed, 0xBB)) {}
};

// Full training state: models + one optimizer per parameter group.
struct Trainer {
    TrainConfig cfg;
    core::ClassPalette palette;
    int class_id;
    Models models;
    Adam opt_where_gen, opt_where_disc, opt_what_gen, opt_what_disc;
    long step = 0;

    explicit Trainer(const TrainConfig& cfg);
};

struct InsertResult {
    core::SemanticScene where, shape; // the edited pair
    core::AffineParams params;
    core::ShapeMask mask;
    Tensor soft_composite; // (classes+1, shape_h, shape_w)
    bool inserted = false;
};

// Inference path only: sample a placement, generate a shape, warp and paste.
InsertResult insert_instance(const Trainer& tr, const synth::ScenePair& x,
                             const core::LatentVector& z_l, const core::LatentVector& z_s,
                             int class_id);

// One alternating step: where-side critics, what-side critics, G_l (with the
// composite gradient), G_s. Deterministic given (cfg, dataset, step).
core::LossReport train_step(Trainer& tr, const synth::Dataset& dataset);

struct TrainHooks {
    std::string run_dir;                    // empty: no files written
    std::function<void(long, const core::LossReport&)> on_step; // optional
};

// Runs cfg.steps steps; writes loss log / snapshots / final checkpoint when a
// run dir is given. Aborts with NumericalError on a non-finite loss.
void train(Trainer& tr, const synth::Dataset& dataset, const TrainHooks& hooks = {});

void save_checkpoint(const std::string& dir, const Trainer& tr);
std::unique_ptr<Trainer> load_checkpoint(const std::string& dir);

} // namespace insertnet::pipe
