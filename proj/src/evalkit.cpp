#include "insertnet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace insertnet::evalkit {

const char* fail_reason_name(FailReason r) {
    switch (r) {
    case FailReason::Band: return "band";
    case FailReason::Height: return "height";
    case FailReason::Aspect: return "aspect";
    case FailReason::Blob: return "blob";
    }
    return "?";
}

SampleSet sample_placements(const pipe::Trainer& model, const synth::ScenePair& x, int class_id,
                            int n, std::uint64_t seed) {
    const auto& cfg = model.cfg;
    SampleSet set;
    set.h = cfg.where_h;
    set.w = cfg.where_w;
    set.heatmap.assign(static_cast<std::size_t>(set.h) * set.w, 0);
    set.samples.reserve(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        Rng rng = substream(seed, static_cast<std::uint64_t>(i));
        core::LatentVector z_l(static_cast<std::size_t>(cfg.latent_dim));
        core::LatentVector z_s(static_cast<std::size_t>(cfg.latent_dim));
        for (auto& v : z_l) v = rng.normal();
        for (auto& v : z_s) v = rng.normal();

        pipe::InsertResult res = pipe::insert_instance(model, x, z_l, z_s, class_id);
        PlacementSample s;
        s.params = res.params;
        s.class_id = class_id;
        s.inserted = res.inserted;
        s.box = warp::implied_bbox(res.params, cfg.where_h, cfg.where_w);
        Tensor warped = warp::warp_shape(res.params, res.mask, cfg.shape_h(), cfg.shape_w());
        s.mask_h = cfg.shape_h();
        s.mask_w = cfg.shape_w();
        s.mask.resize(static_cast<std::size_t>(s.mask_h) * s.mask_w);
        for (std::size_t j = 0; j < s.mask.size(); ++j) s.mask[j] = warped[j] >= 0.5 ? 1 : 0;

        for (int yy = s.box.y0; yy < s.box.y0 + s.box.h; ++yy)
            for (int xx = s.box.x0; xx < s.box.x0 + s.box.w; ++xx)
                ++set.heatmap[static_cast<std::size_t>(yy) * set.w + xx];
        set.samples.push_back(std::move(s));
    }
    return set;
}

namespace {

struct MaskStats {
    int count = 0;
    core::BoxSpec box;
    bool connected = false;
};

MaskStats mask_stats(const std::vector<std::uint8_t>& mask, int h, int w) {
    MaskStats st;
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    int seed_y = -1, seed_x = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask[static_cast<std::size_t>(y) * w + x]) {
                ++st.count;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
                seed_y = y;
                seed_x = x;
            }
    if (st.count == 0) return st;
    st.box = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::deque<std::pair<int, int>> q{{seed_y, seed_x}};
    seen[static_cast<std::size_t>(seed_y) * w + seed_x] = 1;
    int reached = 0;
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop_front();
        ++reached;
        for (int d = 0; d < 4; ++d) {
            const int ny = y + dy[d], nx = x + dx[d];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t i = static_cast<std::size_t>(ny) * w + nx;
            if (mask[i] && !seen[i]) {
                seen[i] = 1;
                q.emplace_back(ny, nx);
            }
        }
    }
    st.connected = reached == st.count;
    return st;
}

} // namespace

Verdict oracle_validate(const synth::SceneSpec& spec, const core::ClassPalette& palette,
                        const PlacementSample& sample) {
    if (!palette.is_insertable(sample.class_id))
        throw core::InvalidSceneError("oracle_validate: class not insertable");
    Verdict v;
    const int h = sample.mask_h, w = sample.mask_w;
    MaskStats st = mask_stats(sample.mask, h, w);
    if (st.count == 0) {
        v.reasons = {FailReason::Band, FailReason::Height, FailReason::Aspect, FailReason::Blob};
        return v;
    }

    // (a) mask mass inside the permissible row band (+1.5 px rounding margin)
    auto [lo, hi] = spec.permissible_band(sample.class_id, palette);
    const double margin = 1.5 / h;
    int inside = 0;
    for (int y = 0; y < h; ++y) {
        const double f = (y + 0.5) / h;
        if (f < lo - margin || f > hi + margin) continue;
        for (int x = 0; x < w; ++x)
            if (sample.mask[static_cast<std::size_t>(y) * w + x]) ++inside;
    }
    if (static_cast<double>(inside) / st.count < 0.60) v.reasons.push_back(FailReason::Band);

    // (b) height within +/-40% of the rule at the measured center
    const double yc_frac = (st.box.y0 + 0.5 * st.box.h) / h;
    const double rule_frac = spec.rule_height(sample.class_id, palette, yc_frac);
    const double h_frac = static_cast<double>(st.box.h) / h;
    if (rule_frac <= 0.0 || std::abs(h_frac - rule_frac) > 0.40 * rule_frac)
        v.reasons.push_back(FailReason::Height);

    // (c) aspect within the class range widened by 30%
    const auto& rule = spec.rule_for(sample.class_id, palette);
    const double aspect = static_cast<double>(st.box.w) / st.box.h;
    if (aspect < 0.70 * rule.aspect_lo || aspect > 1.30 * rule.aspect_hi)
        v.reasons.push_back(FailReason::Aspect);

    // (d) connected blob covering at least 30% of its bbox
    const double fill = static_cast<double>(st.count) / (static_cast<double>(st.box.w) * st.box.h);
    if (!st.connected || fill < 0.30) v.reasons.push_back(FailReason::Blob);

    v.valid = v.reasons.empty();
    return v;
}

double recall_proxy(const pipe::Trainer& model, const synth::Dataset& dataset, int class_id,
                    int n_per_scene, std::uint64_t seed) {
    if (dataset.scenes.empty()) return 0.0;
    long valid = 0, total = 0;
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
        SampleSet set = sample_placements(model, dataset.scenes[i], class_id, n_per_scene,
                                          hash_mix(seed, i));
        for (auto& s : set.samples) {
            s.verdict = oracle_validate(model.cfg.scene, model.palette, s);
            ++total;
            if (s.verdict.valid) ++valid;
        }
    }
    return total ? static_cast<double>(valid) / static_cast<double>(total) : 0.0;
}

DiversityReport diversity_metrics(const std::vector<PlacementSample>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("diversity_metrics: need at least two samples");
    DiversityReport rep;

    double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& s : samples) {
        const double cx = s.box.x0 + 0.5 * s.box.w;
        const double cy = s.box.y0 + 0.5 * s.box.h;
        sx += cx;
        sy += cy;
        sxx += cx * cx;
        syy += cy * cy;
    }
    const double n = static_cast<double>(samples.size());
    const double var_x = std::max(0.0, sxx / n - (sx / n) * (sx / n));
    const double var_y = std::max(0.0, syy / n - (sy / n) * (sy / n));
    rep.center_std = std::sqrt(var_x + var_y);

    // occupancy cells on a fixed 8 x 16 grid regardless of resolution
    std::vector<std::uint8_t> cells(8 * 16, 0);
    int map_h = 1, map_w = 1;
    for (const auto& s : samples) {
        map_h = std::max(map_h, s.box.y0 + s.box.h);
        map_w = std::max(map_w, s.box.x0 + s.box.w);
    }
    for (const auto& s : samples) {
        const double cx = s.box.x0 + 0.5 * s.box.w;
        const double cy = s.box.y0 + 0.5 * s.box.h;
        const int gx = std::min(15, static_cast<int>(cx * 16.0 / map_w));
        const int gy = std::min(7, static_cast<int>(cy * 8.0 / map_h));
        cells[static_cast<std::size_t>(gy) * 16 + gx] = 1;
    }
    rep.distinct_cells = 0;
    for (std::uint8_t c : cells) rep.distinct_cells += c;

    double box_acc = 0.0, mask_acc = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            box_acc += core::box_iou(samples[i].box, samples[j].box);
            long inter = 0, uni = 0;
            const auto& a = samples[i].mask;
            const auto& b = samples[j].mask;
            for (std::size_t t = 0; t < a.size(); ++t) {
                inter += a[t] && b[t];
                uni += a[t] || b[t];
            }
            mask_acc += uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
            ++pairs;
        }
    }
    rep.mean_box_iou = box_acc / static_cast<double>(pairs);
    rep.mean_mask_iou = mask_acc / static_cast<double>(pairs);
    return rep;
}

double band_mass_fraction(const SampleSet& set, const synth::SceneSpec& spec,
                          const core::ClassPalette& palette, int class_id) {
    auto [lo, hi] = spec.permissible_band(class_id, palette);
    const double margin = 1.5 / set.h;
    long inside = 0, total = 0;
    for (int y = 0; y < set.h; ++y) {
        const double f = (y + 0.5) / set.h;
        const bool in = f >= lo - margin && f <= hi + margin;
        for (int x = 0; x < set.w; ++x) {
            const int c = set.heatmap[static_cast<std::size_t>(y) * set.w + x];
            total += c;
            if (in) inside += c;
        }
    }
    return total ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
}

void write_heatmap_pgm(const std::string& path, const SampleSet& set) {
    int maxval = 1;
    for (int c : set.heatmap) maxval = std::max(maxval, c);
    std::ostringstream os;
    os << "P2\n" << set.w << ' ' << set.h << '\n' << maxval << '\n';
    for (int y = 0; y < set.h; ++y) {
        for (int x = 0; x < set.w; ++x) {
            if (x) os << ' ';
            os << set.heatmap[static_cast<std::size_t>(y) * set.w + x];
        }
        os << '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write heatmap: " + path);
    const std::string s = os.str();
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// --- studies --------------------------------------------------------------------

std::vector<Variant> table_variants(const pipe::TrainConfig& base) {
    std::vector<Variant> out;
    pipe::TrainConfig v = base;
    v.use_d_layout_box = false;
    out.emplace_back("wo_d_layout_box", v);
    v = base;
    v.use_d_affine = false;
    out.emplace_back("wo_d_affine", v);
    v = base;
    v.use_d_layout_instance = false;
    out.emplace_back("wo_d_layout_instance", v);
    v = base;
    v.use_d_shape = false;
    out.emplace_back("wo_d_shape", v);
    out.emplace_back("full", base);
    return out;
}

std::vector<RunResult> ablation_run(const std::vector<Variant>& variants,
                                    const std::vector<std::uint64_t>& seeds,
                                    const synth::Dataset& train_data,
                                    const synth::Dataset& eval_data, int n_per_scene, int jobs,
                                    const std::function<void(const RunResult&)>& on_done) {
    struct Job {
        const Variant* variant;
        std::uint64_t seed;
    };
    std::vector<Job> jobs_list;
    for (const auto& v : variants)
        for (std::uint64_t s : seeds) jobs_list.push_back({&v, s});

    std::vector<RunResult> results(jobs_list.size());
    std::mutex mu;
    std::size_t next = 0;
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(jobs_list.size())));

    auto worker = [&]() {
        for (;;) {
            std::size_t idx;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= jobs_list.size()) return;
                idx = next++;
            }
            const Job& job = jobs_list[idx];
            pipe::TrainConfig cfg = job.variant->second;
            cfg.seed = job.seed;
            pipe::Trainer tr(cfg);
            pipe::train(tr, train_data);
            RunResult r;
            r.variant = job.variant->first;
            r.seed = job.seed;
            r.recall = recall_proxy(tr, eval_data, tr.class_id, n_per_scene,
                                    hash_mix(job.seed, 0xE7A1ull));
            SampleSet set = sample_placements(tr, eval_data.scenes.front(), tr.class_id, 100,
                                              hash_mix(job.seed, 0xD17ull));
            r.diversity = diversity_metrics(set.samples);
            {
                std::lock_guard<std::mutex> lock(mu);
                results[idx] = r;
                if (on_done) on_done(r);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

std::string format_result_table(const std::vector<RunResult>& rows) {
    std::ostringstream os;
    os << "variant                  seed   recall  cells  box_iou\n";
    for (const auto& r : rows) {
        char line[128];
        std::snprintf(line, sizeof line, "%-24s %4llu   %.3f   %4d    %.3f\n", r.variant.c_str(),
                      static_cast<unsigned long long>(r.seed), r.recall, r.diversity.distinct_cells,
                      r.diversity.mean_box_iou);
        os << line;
    }
    return os.str();
}

} // namespace insertnet::evalkit
