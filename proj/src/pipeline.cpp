#include "insertnet/pipeline.hpp"

#include "insertnet/kernels.hpp"
#include "insertnet/runio.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace insertnet::pipe {

namespace fs = std::filesystem;

// --- config --------------------------------------------------------------------

void TrainConfig::validate() const {
    if (where_h < 16 || where_w < 16 || where_h % 16 || where_w % 16)
        throw std::invalid_argument("where resolution must be a multiple of 16");
    if (canvas_m % 8) throw std::invalid_argument("canvas_m must be a multiple of 8");
    if (lambda_recon < 0 || lambda_a < 0 || lambda_s < 0 || lambda_kl < 0)
        throw std::invalid_argument("loss weights must be nonnegative");
    if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
    if (stage != "joint" && stage != "where-first")
        throw std::invalid_argument("stage must be 'joint' or 'where-first'");
    if (scene.h != where_h || scene.w != where_w)
        throw std::invalid_argument("scene spec resolution must match where resolution");
}

wheremod::WhereConfig TrainConfig::where_cfg() const {
    wheremod::WhereConfig c;
    c.map_h = where_h;
    c.map_w = where_w;
    c.latent_dim = latent_dim;
    c.ctx_dim = ctx_dim;
    return c;
}

whatmod::WhatConfig TrainConfig::what_cfg() const {
    whatmod::WhatConfig c;
    c.map_h = shape_h();
    c.map_w = shape_w();
    c.canvas_m = canvas_m;
    c.latent_dim = latent_dim;
    c.code_dim = ctx_dim;
    return c;
}

// --- optimizer ------------------------------------------------------------------

Adam::Adam(nets::ParameterStore& ps, double lr, double beta1, double beta2)
    : ps_(&ps), lr_(lr), beta1_(beta1), beta2_(beta2) {
    for (const auto& [name, var] : ps.arrays()) {
        m_.push_back(Tensor::zeros(var->value.shape()));
        v_.push_back(Tensor::zeros(var->value.shape()));
    }
}

void Adam::step() {
    ++t_;
    const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto& arrays = ps_->arrays();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        ag::Var var = arrays[i].second;
        if (!var->grad_ready()) continue;
        const int n = static_cast<int>(var->value.numel());
        kern::ops().adam_step(n, var->value.data(), var->grad.data(), m_[i].data(), v_[i].data(),
                              lr_, beta1_, beta2_, 1e-8, bias1, bias2);
        std::fill(var->grad.data(), var->grad.data() + n, 0.0);
    }
}

// --- trainer --------------------------------------------------------------------

namespace {
const TrainConfig& validated(const TrainConfig& c) {
    c.validate();
    return c;
}
} // namespace

Trainer::Trainer(const TrainConfig& c)
    : cfg(validated(c)),
      palette(core::default_palette()),
      class_id(palette.id_of(c.insert_class)),
      models(c, c.seed),
      opt_where_gen(models.where.gen(), c.lr, c.beta1, c.beta2),
      opt_where_disc(models.where.disc(), c.lr, c.beta1, c.beta2),
      opt_what_gen(models.what.gen(), c.lr, c.beta1, c.beta2),
      opt_what_disc(models.what.disc(), c.lr, c.beta1, c.beta2) {
    if (!palette.is_insertable(class_id))
        throw core::InvalidSceneError("insert_class is not insertable");
}

// --- inference -------------------------------------------------------------------

InsertResult insert_instance(const Trainer& tr, const synth::ScenePair& x,
                             const core::LatentVector& z_l, const core::LatentVector& z_s,
                             int class_id) {
    ag::NoGradGuard ng;
    const TrainConfig& cfg = tr.cfg;
    if (x.where.tier != core::Tier::WhereRes || x.shape.tier != core::Tier::ShapeRes)
        throw core::InvalidSceneError("insert_instance: scene pair tiers are wrong");

    auto placement = wheremod::predict_placement(tr.models.where, x.where, z_l, tr.palette);
    Tensor box_shape =
        warp::transform_unit_box(placement.params, cfg.shape_h(), cfg.shape_w(), cfg.box_canvas_m);
    Tensor x_boxed = core::blend_box(x.shape, tr.palette, box_shape);
    core::ShapeMask s = whatmod::generate_shape(tr.models.what, x_boxed, z_s);

    Tensor m_shape = warp::warp_shape(placement.params, s, cfg.shape_h(), cfg.shape_w());
    Tensor m_where = warp::warp_shape(placement.params, s, cfg.where_h, cfg.where_w);

    InsertResult out;
    out.params = placement.params;
    out.mask = s;
    out.soft_composite =
        whatmod::compose_soft(core::one_hot_encode(x.shape, tr.palette), m_shape, class_id);

    auto paste_shape = core::paste_instance(x.shape, tr.palette, m_shape, class_id);
    auto paste_where = core::paste_instance(x.where, tr.palette, m_where, class_id);
    if (paste_shape.inserted && paste_where.inserted) {
        out.inserted = true;
        out.where = std::move(paste_where.scene);
        out.shape = std::move(paste_shape.scene);
    } else {
        out.inserted = false;
        out.where = x.where;
        out.shape = x.shape;
    }
    return out;
}

// --- training step ----------------------------------------------------------------

namespace {

struct StepData {
    const synth::ScenePair* x = nullptr;
    const synth::ScenePair* xp = nullptr;
    const synth::InstanceRecord* inst = nullptr;
    synth::ScenePair cond; // supervised conditioning (erased or as-is)
    core::ShapeMask s_real;
    Tensor oh_x_where, oh_x_shape, oh_cond_where, oh_cond_shape, oh_xp_shape;
    Tensor a6_real;             // 6-vector embedding of the ground-truth transform
    Tensor cond_boxed_shape;    // conditioning with the GT box blended, shape-res
    // critic-side views of the real transform: half-pixel jitter kills the
    // integer-alignment tell that otherwise lets the critics win outright
    Tensor a6_real_d;
    Tensor box_real_where_d;
    Tensor z_l, z_s, eps_a, eps_s;
    Rng noise_rng;
};

Tensor latent(Rng& rng, int n) {
    Tensor t({n});
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = rng.normal();
    return t;
}

StepData make_step_data(Trainer& tr, const synth::Dataset& ds, const std::vector<int>& pool,
                        long step) {
    const TrainConfig& cfg = tr.cfg;
    Rng rng = substream(cfg.seed, hash_mix(0x57E9, static_cast<std::uint64_t>(step)));

    StepData d;
    d.x = &ds.scenes[rng.below(ds.scenes.size())];
    const int pi = pool[static_cast<std::size_t>(rng.below(pool.size()))];
    d.xp = &ds.scenes[static_cast<std::size_t>(pi)];
    std::vector<const synth::InstanceRecord*> targets;
    for (const auto& inst : d.xp->instances)
        if (inst.class_id == tr.class_id) targets.push_back(&inst);
    d.inst = targets[rng.below(targets.size())];

    if (cfg.sup_cond_erase) {
        d.cond.where = core::erase_instance(d.xp->where, tr.palette, d.inst->id);
        d.cond.shape = core::erase_instance(d.xp->shape, tr.palette, d.inst->id);
    } else {
        d.cond.where = d.xp->where;
        d.cond.shape = d.xp->shape;
    }
    d.s_real = synth::real_shape_canvas(d.xp->shape, d.inst->id, cfg.canvas_m);

    d.oh_x_where = core::one_hot_encode(d.x->where, tr.palette);
    d.oh_x_shape = core::one_hot_encode(d.x->shape, tr.palette);
    d.oh_cond_where = core::one_hot_encode(d.cond.where, tr.palette);
    d.oh_cond_shape = core::one_hot_encode(d.cond.shape, tr.palette);
    d.oh_xp_shape = core::one_hot_encode(d.xp->shape, tr.palette);

    const auto e6 = d.inst->params.embed6();
    d.a6_real = Tensor({6}, std::vector<double>(e6.begin(), e6.end()));
    Tensor box_real_shape =
        warp::transform_unit_box(d.inst->params, cfg.shape_h(), cfg.shape_w(), cfg.box_canvas_m);
    d.cond_boxed_shape = core::blend_box(d.cond.shape, tr.palette, box_real_shape);

    {
        const double j = cfg.real_box_jitter;
        const core::BoxSpec& b = d.inst->box_where;
        const double x0 = b.x0 + rng.uniform(-j, j);
        const double y0 = b.y0 + rng.uniform(-j, j);
        const double w = std::max(1.0, b.w + rng.uniform(-j, j));
        const double h = std::max(1.0, b.h + rng.uniform(-j, j));
        core::AffineParams pj;
        pj.log_sx = std::log(w / cfg.where_w);
        pj.log_sy = std::log(h / cfg.where_h);
        pj.tx = 2.0 * (x0 + 0.5 * w) / cfg.where_w - 1.0;
        pj.ty = 2.0 * (y0 + 0.5 * h) / cfg.where_h - 1.0;
        const auto j6 = pj.embed6();
        d.a6_real_d = Tensor({6}, std::vector<double>(j6.begin(), j6.end()));
        d.box_real_where_d =
            warp::transform_unit_box(pj, cfg.where_h, cfg.where_w, cfg.box_canvas_m);
    }

    d.z_l = latent(rng, cfg.latent_dim);
    d.z_s = latent(rng, cfg.latent_dim);
    d.eps_a = latent(rng, cfg.latent_dim);
    d.eps_s = latent(rng, cfg.latent_dim);
    d.noise_rng = substream(cfg.seed, hash_mix(0xA013E5, static_cast<std::uint64_t>(step)));
    return d;
}

Tensor gauss_like(const Tensor& t, Rng& rng, double sigma) {
    Tensor out(t.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[static_cast<std::size_t>(i)] = sigma * rng.normal();
    return out;
}

// instance noise on critic inputs (shared by real/fake branches, fresh draws)
ag::Var with_noise(const ag::Var& v, StepData& d, double sigma) {
    if (sigma <= 0.0) return v;
    return ag::add(v, ag::constant(gauss_like(v->value, d.noise_rng, sigma)));
}

ag::Var append_channel(const Tensor& base, const ag::Var& plane) {
    const int h = plane->value.dim(0), w = plane->value.dim(1);
    return ag::concat({ag::constant(base), ag::reshape(plane, {1, h, w})});
}

struct UnsupForward {
    ag::Var params4, code;    // placement
    ag::Var mask, gen_code;   // generated shape + bottleneck
    ag::Var warped;           // mask placed at shape-res
    ag::Var comp;             // soft composite (classes+1 channels)
    ag::Var x_boxed;          // what-module conditioning
};

// the unsupervised pipeline x -> Â -> s -> composite; callers pick how much of
// it participates in gradients via detach_placement
UnsupForward unsup_forward(const Trainer& tr, const StepData& d, bool detach_placement) {
    const TrainConfig& cfg = tr.cfg;
    UnsupForward f;
    auto pl = tr.models.where.g_predict(ag::constant(d.oh_x_where), ag::constant(d.z_l));
    f.params4 = detach_placement ? ag::detach(pl.params4) : pl.params4;
    f.code = pl.code;
    ag::Var box_shape = warp::g_box_mask(f.params4, cfg.shape_h(), cfg.shape_w(), cfg.box_canvas_m);
    f.x_boxed = append_channel(d.oh_x_shape, box_shape);
    auto gen = tr.models.what.g_generate(f.x_boxed, ag::constant(d.z_s));
    f.mask = gen.mask;
    f.gen_code = gen.code;
    f.warped = warp::g_warp_shape(f.params4, f.mask, cfg.shape_h(), cfg.shape_w());
    f.comp = whatmod::g_compose_soft(d.oh_x_shape, f.warped, tr.class_id);
    return f;
}

void check_finite(const core::LossReport& report) {
    if (!report.all_finite())
        throw NumericalError("non-finite loss detected: " + report.to_line());
}

} // namespace

core::LossReport train_step(Trainer& tr, const synth::Dataset& dataset) {
    const TrainConfig& cfg = tr.cfg;
    if (dataset.scenes.empty()) throw std::invalid_argument("train_step: empty dataset");
    const std::vector<int> pool = dataset.with_class(tr.class_id);
    if (pool.empty())
        throw std::invalid_argument("train_step: no scene contains the target class");

    const bool where_only =
        cfg.stage == "where-first" && tr.step < cfg.steps / 2; // pretraining half
    StepData d = make_step_data(tr, dataset, pool, tr.step);
    core::LossReport report;

    const bool train_d_affine = cfg.use_d_affine && cfg.use_where_sup;
    const bool train_d_shape = cfg.use_d_shape && cfg.use_what_sup && !where_only;
    const bool train_d_inst = cfg.use_d_layout_instance && !where_only;

    // ---- fakes for the critic updates (current generators, no graph) ----
    Tensor fake_box_in, comp_fake_v, a6_fake, s_tilde_v;
    {
        ag::NoGradGuard ng;
        auto f = unsup_forward(tr, d, false);
        fake_box_in = append_channel(d.oh_x_where,
                                     warp::g_box_mask(f.params4, cfg.where_h, cfg.where_w,
                                                      cfg.box_canvas_m))
                          ->value;
        comp_fake_v = f.comp->value;
        if (train_d_affine) {
            auto gc = tr.models.where.g_encode_affine(ag::constant(d.a6_real), d.eps_a);
            auto sup_pl =
                tr.models.where.g_predict(ag::constant(d.oh_cond_where), gc.z);
            a6_fake = warp::g_embed6(sup_pl.params4)->value;
        }
        if (train_d_shape) {
            auto sc = tr.models.what.g_encode_shape(
                ag::constant(Tensor({cfg.canvas_m, cfg.canvas_m}, d.s_real.values)), d.eps_s);
            s_tilde_v = tr.models.what.g_generate(ag::constant(d.cond_boxed_shape), sc.z).mask->value;
        }
    }

    // ---- phase 1: where-side critics ----
    {
        std::vector<ag::Var> losses;
        if (cfg.use_d_layout_box) {
            ag::Var real_in = with_noise(
                ag::constant(core::blend_box(d.cond.where, tr.palette, d.box_real_where_d)), d,
                cfg.d_noise);
            ag::Var fake_in = with_noise(ag::constant(fake_box_in), d, cfg.d_noise);
            ag::Var d_loss =
                ag::add(ag::bce_with_logits(tr.models.where.g_d_box(real_in), cfg.d_real_target),
                        ag::bce_with_logits(tr.models.where.g_d_box(fake_in), 0.0));
            report.set("where/d_box", d_loss->scalar());
            losses.push_back(d_loss);
        }
        if (train_d_affine) {
            ag::Var d_loss = ag::add(
                ag::bce_with_logits(tr.models.where.g_d_affine(ag::constant(d.a6_real_d)),
                                    cfg.d_real_target),
                ag::bce_with_logits(tr.models.where.g_d_affine(ag::constant(a6_fake)), 0.0));
            report.set("where/d_affine", d_loss->scalar());
            losses.push_back(d_loss);
        }
        if (!losses.empty()) {
            ag::Var total = losses[0];
            for (std::size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
            check_finite(report);
            ag::backward(total);
            tr.opt_where_disc.step();
        }
    }

    // ---- phase 2: what-side critics ----
    {
        std::vector<ag::Var> losses;
        if (train_d_inst) {
            ag::Var real_in = with_noise(ag::constant(d.oh_xp_shape), d, cfg.d_noise);
            ag::Var fake_in = with_noise(ag::constant(comp_fake_v), d, cfg.d_noise);
            ag::Var d_loss =
                ag::add(ag::bce_with_logits(tr.models.what.g_d_inst(real_in), cfg.d_real_target),
                        ag::bce_with_logits(tr.models.what.g_d_inst(fake_in), 0.0));
            report.set("what/d_inst", d_loss->scalar());
            losses.push_back(d_loss);
        }
        if (train_d_shape) {
            ag::Var real = with_noise(
                ag::constant(Tensor({cfg.canvas_m, cfg.canvas_m}, d.s_real.values)), d, cfg.d_noise);
            ag::Var fake = with_noise(ag::constant(s_tilde_v), d, cfg.d_noise);
            ag::Var d_loss =
                ag::add(ag::bce_with_logits(tr.models.what.g_d_shape(real), cfg.d_real_target),
                        ag::bce_with_logits(tr.models.what.g_d_shape(fake), 0.0));
            report.set("what/d_shape", d_loss->scalar());
            losses.push_back(d_loss);
        }
        if (!losses.empty()) {
            ag::Var total = losses[0];
            for (std::size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
            check_finite(report);
            ag::backward(total);
            tr.opt_what_disc.step();
        }
    }

    // ---- phase 3: location generator (updates E_ctx, head, recon heads, E_A) ----
    {
        auto pl = tr.models.where.g_predict(ag::constant(d.oh_x_where), ag::constant(d.z_l));
        ag::Var zero = ag::constant(Tensor::scalar(0.0));
        ag::Var adv_g = zero, recon = zero;
        ag::Var sup_l1 = zero, sup_kl = zero, sup_adv = zero, joint_g = zero;

        if (cfg.use_d_layout_box) {
            ag::Var box =
                warp::g_box_mask(pl.params4, cfg.where_h, cfg.where_w, cfg.box_canvas_m);
            ag::Var boxed = with_noise(append_channel(d.oh_x_where, box), d, cfg.d_noise);
            adv_g = ag::bce_with_logits(tr.models.where.g_d_box(boxed), 1.0);
        }
        if (cfg.use_where_recon) {
            ag::Var lx = ag::l1_mean(tr.models.where.g_recon_x(pl.code), ag::constant(d.oh_x_where));
            ag::Var lz = ag::l1_mean(tr.models.where.g_recon_z(pl.code), ag::constant(d.z_l));
            recon = ag::scale(ag::add(lx, lz), cfg.lambda_recon);
        }
        if (cfg.use_where_sup) {
            auto gc = tr.models.where.g_encode_affine(ag::constant(d.a6_real), d.eps_a);
            auto sup_pl = tr.models.where.g_predict(ag::constant(d.oh_cond_where), gc.z);
            ag::Var a6_tilde = warp::g_embed6(sup_pl.params4);
            sup_l1 = ag::scale(ag::l1_mean(a6_tilde, ag::constant(d.a6_real)), cfg.lambda_a);
            sup_kl = ag::scale(ag::kl_std_normal(gc.mu, gc.logvar), cfg.lambda_kl);
            if (cfg.use_d_affine)
                sup_adv = ag::bce_with_logits(tr.models.where.g_d_affine(a6_tilde), 1.0);
        }
        if (cfg.joint_update && train_d_inst) {
            // the composite path: D_layout^instance scores reach Â through the warp
            ag::Var box_shape =
                warp::g_box_mask(pl.params4, cfg.shape_h(), cfg.shape_w(), cfg.box_canvas_m);
            ag::Var x_boxed = append_channel(d.oh_x_shape, box_shape);
            auto gen = tr.models.what.g_generate(x_boxed, ag::constant(d.z_s));
            ag::Var warped = warp::g_warp_shape(pl.params4, gen.mask, cfg.shape_h(), cfg.shape_w());
            ag::Var comp =
                with_noise(whatmod::g_compose_soft(d.oh_x_shape, warped, tr.class_id), d, cfg.d_noise);
            joint_g = ag::bce_with_logits(tr.models.what.g_d_inst(comp), 1.0);
        }

        ag::Var total = ag::add(ag::add(ag::add(adv_g, recon), ag::add(sup_l1, sup_kl)),
                                ag::add(sup_adv, joint_g));
        report.set("where/adv_g", adv_g->scalar());
        report.set("where/recon", recon->scalar());
        report.set("where/sup_l1", sup_l1->scalar());
        report.set("where/sup_kl", sup_kl->scalar());
        report.set("where/sup_adv", sup_adv->scalar());
        report.set("where/joint_g", joint_g->scalar());
        report.set("where/total_g", total->scalar());
        check_finite(report);
        ag::backward(total);
        tr.opt_where_gen.step();
    }

    // ---- phase 4: shape generator (placement fixed at its post-update value) ----
    if (!where_only) {
        auto f = unsup_forward(tr, d, /*detach_placement=*/true);
        ag::Var zero = ag::constant(Tensor::scalar(0.0));
        ag::Var adv_g = zero, recon = zero, sup_l1 = zero, sup_kl = zero, sup_adv = zero;

        if (cfg.use_d_layout_instance)
            adv_g = ag::bce_with_logits(tr.models.what.g_d_inst(with_noise(f.comp, d, cfg.d_noise)),
                                        1.0);
        if (cfg.use_what_recon) {
            ag::Var lx =
                ag::l1_mean(tr.models.what.g_recon_x(f.gen_code), ag::detach(f.x_boxed));
            ag::Var lz = ag::l1_mean(tr.models.what.g_recon_z(f.gen_code), ag::constant(d.z_s));
            recon = ag::scale(ag::add(lx, lz), cfg.lambda_recon);
        }
        if (cfg.use_what_sup) {
            ag::Var s_real_var = ag::constant(Tensor({cfg.canvas_m, cfg.canvas_m}, d.s_real.values));
            auto sc = tr.models.what.g_encode_shape(s_real_var, d.eps_s);
            auto gen = tr.models.what.g_generate(ag::constant(d.cond_boxed_shape), sc.z);
            sup_l1 = ag::scale(ag::l1_mean(gen.mask, s_real_var), cfg.lambda_s);
            sup_kl = ag::scale(ag::kl_std_normal(sc.mu, sc.logvar), cfg.lambda_kl);
            if (cfg.use_d_shape)
                sup_adv = ag::bce_with_logits(
                    tr.models.what.g_d_shape(with_noise(gen.mask, d, cfg.d_noise)), 1.0);
        }

        ag::Var total = ag::add(ag::add(ag::add(adv_g, recon), ag::add(sup_l1, sup_kl)), sup_adv);
        report.set("what/adv_g", adv_g->scalar());
        report.set("what/recon", recon->scalar());
        report.set("what/sup_l1", sup_l1->scalar());
        report.set("what/sup_kl", sup_kl->scalar());
        report.set("what/sup_adv", sup_adv->scalar());
        report.set("what/total_g", total->scalar());
        check_finite(report);
        ag::backward(total);
        tr.opt_what_gen.step();
    }

    ++tr.step;
    return report;
}

void train(Trainer& tr, const synth::Dataset& dataset, const TrainHooks& hooks) {
    std::unique_ptr<runio::LossLog> log;
    if (!hooks.run_dir.empty())
        log = std::make_unique<runio::LossLog>(
            (fs::path(hooks.run_dir) / "loss_log.jsonl").string());
    while (tr.step < tr.cfg.steps) {
        const auto t0 = std::chrono::steady_clock::now();
        core::LossReport report = train_step(tr, dataset);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (log) log->append(tr.step - 1, report, ms);
        if (hooks.on_step) hooks.on_step(tr.step - 1, report);
        if (!hooks.run_dir.empty() && tr.cfg.snapshot_every > 0 &&
            tr.step % tr.cfg.snapshot_every == 0 && tr.step < tr.cfg.steps) {
            char name[32];
            std::snprintf(name, sizeof name, "snap_%06ld", tr.step);
            save_checkpoint((fs::path(hooks.run_dir) / name).string(), tr);
        }
    }
    if (!hooks.run_dir.empty()) {
        save_checkpoint((fs::path(hooks.run_dir) / "checkpoint").string(), tr);
        runio::append_manifest(hooks.run_dir, "checkpoint/");
        runio::append_manifest(hooks.run_dir, "loss_log.jsonl");
    }
}

// --- checkpointing -----------------------------------------------------------------

namespace {

struct ArrayRef {
    std::string name;
    Tensor* tensor;
};

std::vector<ArrayRef> checkpoint_arrays(Trainer& tr) {
    std::vector<ArrayRef> out;
    auto add_store = [&](const char* prefix, nets::ParameterStore& ps, Adam& opt) {
        const auto& arrays = ps.arrays();
        for (std::size_t i = 0; i < arrays.size(); ++i) {
            out.push_back({std::string("p.") + arrays[i].first,
                           const_cast<Tensor*>(&arrays[i].second->value)});
            out.push_back({std::string("m.") + prefix + "." + arrays[i].first, &opt.moment_m(i)});
            out.push_back({std::string("v.") + prefix + "." + arrays[i].first, &opt.moment_v(i)});
        }
    };
    add_store("where_gen", tr.models.where.gen(), tr.opt_where_gen);
    add_store("where_disc", tr.models.where.disc(), tr.opt_where_disc);
    add_store("what_gen", tr.models.what.gen(), tr.opt_what_gen);
    add_store("what_disc", tr.models.what.disc(), tr.opt_what_disc);
    return out;
}

} // namespace

void save_checkpoint(const std::string& dir, const Trainer& tr) {
    fs::create_directories(dir);
    auto arrays = checkpoint_arrays(const_cast<Trainer&>(tr));

    std::string blob;
    std::ostringstream manifest;
    manifest << "INSERTNET-CKPT 1\n";
    manifest << "step " << tr.step << '\n';
    manifest << "rng_seed " << tr.cfg.seed << '\n';
    manifest << "adam_t where_gen " << tr.opt_where_gen.t() << '\n';
    manifest << "adam_t where_disc " << tr.opt_where_disc.t() << '\n';
    manifest << "adam_t what_gen " << tr.opt_what_gen.t() << '\n';
    manifest << "adam_t what_disc " << tr.opt_what_disc.t() << '\n';
    manifest << "config " << runio::to_json(tr.cfg).dump() << '\n';
    manifest << "arrays " << arrays.size() << '\n';
    for (const auto& a : arrays) {
        const std::size_t offset = blob.size();
        const std::size_t bytes = static_cast<std::size_t>(a.tensor->numel()) * sizeof(double);
        blob.append(reinterpret_cast<const char*>(a.tensor->data()), bytes);
        manifest << "array " << a.name << " f64 " << a.tensor->rank();
        for (int dim : a.tensor->shape()) manifest << ' ' << dim;
        manifest << ' ' << offset << ' ' << bytes << '\n';
    }
    manifest << "blob_bytes " << blob.size() << '\n';
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", runio::crc32(blob.data(), blob.size()));
    manifest << "blob_crc32 " << crc << '\n';

    {
        std::ofstream f(fs::path(dir) / "manifest.txt", std::ios::binary);
        if (!f) throw CheckpointError("cannot write checkpoint manifest in " + dir);
        const std::string s = manifest.str();
        f.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    {
        std::ofstream f(fs::path(dir) / "blob.bin", std::ios::binary);
        if (!f) throw CheckpointError("cannot write checkpoint blob in " + dir);
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
}

std::unique_ptr<Trainer> load_checkpoint(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.txt");
    if (!f) throw CheckpointError("no checkpoint manifest under " + dir);
    std::string magic;
    int version = 0;
    if (!(f >> magic >> version) || magic != "INSERTNET-CKPT" || version != 1)
        throw CheckpointError("bad checkpoint magic in " + dir);

    long step = 0;
    std::uint64_t seed = 0;
    long t_wg = 0, t_wd = 0, t_ag = 0, t_ad = 0;
    std::string key;
    if (!(f >> key >> step) || key != "step") throw CheckpointError("manifest missing step");
    if (!(f >> key >> seed) || key != "rng_seed") throw CheckpointError("manifest missing rng_seed");
    auto read_adam_t = [&](long& t) {
        std::string group;
        if (!(f >> key >> group >> t) || key != "adam_t")
            throw CheckpointError("manifest missing adam_t entry");
    };
    read_adam_t(t_wg);
    read_adam_t(t_wd);
    read_adam_t(t_ag);
    read_adam_t(t_ad);
    if (!(f >> key) || key != "config") throw CheckpointError("manifest missing config");
    std::string cfg_line;
    std::getline(f, cfg_line);
    pipe::TrainConfig cfg;
    try {
        cfg = runio::train_config_from_json(nlohmann::json::parse(cfg_line));
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("bad config echo in checkpoint: ") + e.what());
    }

    std::size_t count = 0;
    if (!(f >> key >> count) || key != "arrays") throw CheckpointError("manifest missing arrays");

    auto tr = std::make_unique<Trainer>(cfg);
    tr->step = step;
    tr->opt_where_gen.set_t(t_wg);
    tr->opt_where_disc.set_t(t_wd);
    tr->opt_what_gen.set_t(t_ag);
    tr->opt_what_disc.set_t(t_ad);

    auto arrays = checkpoint_arrays(*tr);
    if (arrays.size() != count)
        throw CheckpointError("checkpoint array count mismatch: file has " + std::to_string(count));

    struct Rec {
        std::string name;
        std::vector<int> shape;
        std::size_t offset = 0, bytes = 0;
    };
    std::vector<Rec> recs;
    for (std::size_t i = 0; i < count; ++i) {
        Rec r;
        std::string dtype;
        int rank = 0;
        if (!(f >> key >> r.name >> dtype >> rank) || key != "array" || dtype != "f64")
            throw CheckpointError("bad array record in manifest (index " + std::to_string(i) + ")");
        r.shape.resize(static_cast<std::size_t>(rank));
        for (int& d : r.shape)
            if (!(f >> d)) throw CheckpointError("bad array shape in manifest: " + r.name);
        if (!(f >> r.offset >> r.bytes)) throw CheckpointError("bad array span in manifest: " + r.name);
        recs.push_back(std::move(r));
    }
    std::size_t blob_bytes = 0;
    std::string crc_hex;
    if (!(f >> key >> blob_bytes) || key != "blob_bytes")
        throw CheckpointError("manifest missing blob_bytes");
    if (!(f >> key >> crc_hex) || key != "blob_crc32")
        throw CheckpointError("manifest missing blob_crc32");

    std::ifstream bf(fs::path(dir) / "blob.bin", std::ios::binary);
    if (!bf) throw CheckpointError("no checkpoint blob under " + dir);
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
    if (blob.size() != blob_bytes)
        throw CheckpointError("checkpoint blob truncated: " + std::to_string(blob.size()) + " of " +
                              std::to_string(blob_bytes) + " bytes");
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", runio::crc32(blob.data(), blob.size()));
    if (crc_hex != crc) throw CheckpointError("checkpoint blob checksum mismatch");

    for (std::size_t i = 0; i < count; ++i) {
        const Rec& r = recs[i];
        ArrayRef& dst = arrays[i];
        if (r.name != dst.name)
            throw CheckpointError("checkpoint array order mismatch at " + r.name);
        if (r.shape != dst.tensor->shape())
            throw CheckpointError("checkpoint shape mismatch for " + r.name);
        if (r.offset + r.bytes > blob.size() ||
            r.bytes != static_cast<std::size_t>(dst.tensor->numel()) * sizeof(double))
            throw CheckpointError("checkpoint span out of range for " + r.name);
        std::memcpy(dst.tensor->data(), blob.data() + r.offset, r.bytes);
    }
    return tr;
}

} // namespace insertnet::pipe
