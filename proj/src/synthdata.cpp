#include "insertnet/synthdata.hpp"

#include "insertnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace insertnet::synth {

namespace fs = std::filesystem;

// --- spec helpers ---------------------------------------------------------------

const ClassRule& SceneSpec::rule_for(int class_id, const core::ClassPalette& p) const {
    if (class_id == p.id_of("person")) return person;
    if (class_id == p.id_of("car")) return car;
    throw core::NotFoundError("no placement rule for class id " + std::to_string(class_id));
}

double SceneSpec::rule_height(int class_id, const core::ClassPalette& p, double yc_frac) const {
    return rule_for(class_id, p).h_factor * (yc_frac - horizon);
}

std::pair<double, double> SceneSpec::permissible_band(int class_id,
                                                      const core::ClassPalette& p) const {
    const ClassRule& r = rule_for(class_id, p);
    const double reach_lo = 0.5 * (1.0 + r.noise) * r.h_factor * (r.center_lo - horizon);
    const double reach_hi = 0.5 * (1.0 + r.noise) * r.h_factor * (r.center_hi - horizon);
    return {std::max(0.0, r.center_lo - reach_lo), std::min(1.0, r.center_hi + reach_hi)};
}

bool ScenePair::has_class(int class_id) const {
    for (const auto& inst : instances)
        if (inst.class_id == class_id) return true;
    return false;
}

// --- shape rasterizer -------------------------------------------------------------

namespace {

struct ShapeParams {
    bool is_person = true;
    int lean = 0;        // -1, 0, +1
    double alpha = 1.0;  // stroke half-width fraction of w/2 (person)
    int cab_mode = 1;    // car cabin position: 0 left, 1 center, 2 right
};

// paints the instance into mask (h*w bytes, row-major) inside the given box
void rasterize(std::vector<std::uint8_t>& mask, int map_w, const core::BoxSpec& box,
               const ShapeParams& sp) {
    auto set = [&](int y, int x) { mask[static_cast<std::size_t>(y) * map_w + x] = 1; };
    const double cx = box.x0 + box.w * 0.5;
    const double cy = box.y0 + box.h * 0.5;
    if (sp.is_person) {
        const double b = box.h * 0.5;
        double a = (sp.lean == 0 ? 1.0 : sp.alpha) * box.w * 0.5;
        a = std::max(a, 0.35);
        double shear = 0.0;
        if (sp.lean != 0) {
            const double half_w = box.w * 0.5;
            const double rad = std::max(half_w * half_w - a * a, 0.0);
            shear = sp.lean * std::sqrt(rad) / b;
        }
        for (int y = box.y0; y < box.y0 + box.h; ++y) {
            for (int x = box.x0; x < box.x0 + box.w; ++x) {
                const double dy = (y + 0.5) - cy;
                const double dx = (x + 0.5) - cx - shear * dy;
                if ((dx * dx) / (a * a) + (dy * dy) / (b * b) <= 1.0) set(y, x);
            }
        }
        // stamp the four tangent pixels so the pixel bbox equals the box
        const double sb = shear * b;
        const double denom = std::sqrt(a * a + sb * sb);
        const double t_star = denom > 0 ? sb * b / denom : 0.0;
        auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
        const int y_right = clampi(static_cast<int>(std::floor(cy + t_star)), box.y0, box.y0 + box.h - 1);
        const int y_left = clampi(static_cast<int>(std::floor(cy - t_star)), box.y0, box.y0 + box.h - 1);
        set(y_right, box.x0 + box.w - 1);
        set(y_left, box.x0);
        const int x_top = clampi(static_cast<int>(std::floor(cx - sb)), box.x0, box.x0 + box.w - 1);
        const int x_bot = clampi(static_cast<int>(std::floor(cx + sb)), box.x0, box.x0 + box.w - 1);
        set(box.y0, x_top);
        set(box.y0 + box.h - 1, x_bot);
    } else {
        // car: full-width body with clipped corners plus a cabin on top
        int cab_h = box.h >= 5 ? static_cast<int>(std::lround(0.4 * box.h)) : 0;
        if (cab_h >= box.h) cab_h = box.h - 1;
        const int body_y0 = box.y0 + cab_h;
        const bool round_corners = box.w >= 4 && (box.h - cab_h) >= 3;
        for (int y = body_y0; y < box.y0 + box.h; ++y)
            for (int x = box.x0; x < box.x0 + box.w; ++x) {
                if (round_corners &&
                    (y == body_y0 || y == box.y0 + box.h - 1) &&
                    (x == box.x0 || x == box.x0 + box.w - 1))
                    continue;
                set(y, x);
            }
        if (cab_h > 0) {
            const int cab_w = std::max(1, static_cast<int>(std::lround(0.55 * box.w)));
            const double off_frac = sp.cab_mode == 0 ? 0.05 : (sp.cab_mode == 1 ? 0.225 : 0.40);
            int cab_x0 = box.x0 + static_cast<int>(std::lround(off_frac * box.w));
            cab_x0 = std::min(cab_x0, box.x0 + box.w - cab_w);
            for (int y = box.y0; y < body_y0; ++y)
                for (int x = cab_x0; x < cab_x0 + cab_w; ++x) set(y, x);
        } else if (round_corners) {
            // no cabin: keep the top edge covered between the clipped corners
            for (int x = box.x0 + 1; x < box.x0 + box.w - 1; ++x) set(box.y0, x);
        }
    }
}

bool mask_connected_and_exact(const std::vector<std::uint8_t>& mask, int map_h, int map_w,
                              const core::BoxSpec& box) {
    int x0 = map_w, y0 = map_h, x1 = -1, y1 = -1, count = 0;
    int seed_y = -1, seed_x = -1;
    for (int y = 0; y < map_h; ++y)
        for (int x = 0; x < map_w; ++x)
            if (mask[static_cast<std::size_t>(y) * map_w + x]) {
                ++count;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
                seed_y = y;
                seed_x = x;
            }
    if (count == 0) return false;
    if (core::BoxSpec{x0, y0, x1 - x0 + 1, y1 - y0 + 1} != box) return false;
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::deque<std::pair<int, int>> q{{seed_y, seed_x}};
    seen[static_cast<std::size_t>(seed_y) * map_w + seed_x] = 1;
    int reached = 0;
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop_front();
        ++reached;
        for (int d = 0; d < 4; ++d) {
            const int ny = y + dy[d], nx = x + dx[d];
            if (ny < 0 || ny >= map_h || nx < 0 || nx >= map_w) continue;
            const std::size_t i = static_cast<std::size_t>(ny) * map_w + nx;
            if (mask[i] && !seen[i]) {
                seen[i] = 1;
                q.emplace_back(ny, nx);
            }
        }
    }
    return reached == count;
}

std::vector<std::uint8_t> rasterize_checked(int map_h, int map_w, const core::BoxSpec& box,
                                            ShapeParams sp) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(map_h) * map_w, 0);
    rasterize(mask, map_w, box, sp);
    if (!mask_connected_and_exact(mask, map_h, map_w, box) && sp.is_person && sp.lean != 0) {
        // leaning stroke degenerated at this size: fall back to the plain ellipse
        std::fill(mask.begin(), mask.end(), 0);
        sp.lean = 0;
        rasterize(mask, map_w, box, sp);
    }
    return mask;
}

struct PendingInstance {
    core::BoxSpec box; // where-res
    int class_id = 0;
    ShapeParams shape;
};

// integer box satisfying the class rule exactly (height within noise of the
// rule at the box's own integer center, aspect within the class range)
bool sample_box(const SceneSpec& spec, const ClassRule& r, Rng& rng, core::BoxSpec& out) {
    const double H = spec.h, W = spec.w;
    const double yh = spec.horizon * H;
    const double yc = rng.uniform(r.center_lo * H, r.center_hi * H);
    const double h0 = r.h_factor * (yc - yh) * (1.0 + rng.uniform(-r.noise, r.noise));
    const int y0 = static_cast<int>(std::lround(yc - 0.5 * h0));
    if (y0 < 0) return false;
    const double d0 = y0 - yh;
    if (d0 <= 0) return false;
    // h within +/-noise of the rule evaluated at the final center y0 + h/2
    const double lo = (1.0 - r.noise) * r.h_factor * d0 / (1.0 - 0.5 * (1.0 - r.noise) * r.h_factor);
    const double hi = (1.0 + r.noise) * r.h_factor * d0 / (1.0 - 0.5 * (1.0 + r.noise) * r.h_factor);
    int h_px = std::max(3, static_cast<int>(std::lround(h0)));
    h_px = std::min(std::max(h_px, static_cast<int>(std::ceil(lo))),
                    static_cast<int>(std::floor(hi)));
    if (h_px < 3 || h_px < lo || h_px > hi) return false;
    const double yc_final = y0 + 0.5 * h_px;
    if (yc_final < r.center_lo * H || yc_final >= r.center_hi * H) return false;
    if (y0 + h_px > spec.h - 1) return false; // keep the bottom row road

    const double aspect = rng.uniform(r.aspect_lo, r.aspect_hi);
    int w_px = static_cast<int>(std::lround(aspect * h_px));
    w_px = std::min(std::max(w_px, static_cast<int>(std::ceil(r.aspect_lo * h_px))),
                    static_cast<int>(std::floor(r.aspect_hi * h_px)));
    w_px = std::max(w_px, 1);
    const double ratio = static_cast<double>(w_px) / h_px;
    if (ratio < r.aspect_lo - 1e-9 || ratio > r.aspect_hi + 1e-9) return false;
    if (w_px > spec.w - 2) return false;
    const double xc = rng.uniform(0.5 * w_px + 1.0, W - 0.5 * w_px - 1.0);
    int x0 = static_cast<int>(std::lround(xc - 0.5 * w_px));
    x0 = std::min(std::max(x0, 0), spec.w - w_px);
    out = {x0, y0, w_px, h_px};
    return true;
}

bool overlaps_any(const core::BoxSpec& box, const std::vector<PendingInstance>& placed) {
    for (const auto& p : placed) {
        const bool apart = box.x0 > p.box.x0 + p.box.w || p.box.x0 > box.x0 + box.w ||
                           box.y0 > p.box.y0 + p.box.h || p.box.y0 > box.y0 + box.h;
        if (!apart) return true;
    }
    return false;
}

std::vector<int> band_labels(const SceneSpec& spec, const core::ClassPalette& p, Rng& rng) {
    const int h = spec.h, w = spec.w;
    const int sky = p.id_of("sky"), building = p.id_of("building");
    const int sidewalk = p.id_of("sidewalk"), road = p.id_of("road");
    const int tree = p.id_of("tree");
    std::vector<int> labels(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const double f = (y + 0.5) / h;
        int cls = road;
        if (f < spec.sky_end)
            cls = sky;
        else if (f < spec.building_end)
            cls = building;
        else if (f < spec.sidewalk_end)
            cls = sidewalk;
        for (int x = 0; x < w; ++x) labels[static_cast<std::size_t>(y) * w + x] = cls;
    }
    auto column = [&](int cls, int x0, int cw, int yt, int yb) {
        for (int y = yt; y < yb; ++y)
            for (int x = x0; x < std::min(x0 + cw, w); ++x)
                labels[static_cast<std::size_t>(y) * w + x] = cls;
    };
    const int trees = rng.uniform() < spec.p_tree ? 1 + static_cast<int>(rng.below(2)) : 0;
    for (int t = 0; t < trees; ++t) {
        const int cw = 2 + static_cast<int>(rng.below(2));
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw)));
        column(tree, x0, cw, static_cast<int>(0.35 * h), static_cast<int>(spec.sidewalk_end * h));
    }
    if (rng.uniform() < spec.p_building_col) {
        const int cw = 3 + static_cast<int>(rng.below(4));
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw)));
        const int yt = static_cast<int>(rng.uniform(0.12, 0.25) * h);
        column(building, x0, cw, yt, static_cast<int>(spec.building_end * h));
    }
    return labels;
}

} // namespace

ScenePair generate_scene(const SceneSpec& spec, const core::ClassPalette& palette,
                         std::uint64_t scene_seed) {
    Rng rng(hash_mix(scene_seed, 0x5CEEull));
    const int h = spec.h, w = spec.w;
    const int hs = 2 * h, ws = 2 * w;
    const int person = palette.id_of("person"), car = palette.id_of("car");

    std::vector<int> labels_w = band_labels(spec, palette, rng);
    // shape tier: nearest-neighbour upsample of the band layer
    std::vector<int> labels_s(static_cast<std::size_t>(hs) * ws);
    for (int y = 0; y < hs; ++y)
        for (int x = 0; x < ws; ++x)
            labels_s[static_cast<std::size_t>(y) * ws + x] =
                labels_w[static_cast<std::size_t>(y / 2) * w + x / 2];

    std::vector<PendingInstance> placed;
    const int want = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_instances + 1)));
    for (int k = 0; k < want; ++k) {
        const int cls = rng.uniform() < 0.5 ? person : car;
        const ClassRule& rule = spec.rule_for(cls, palette);
        for (int attempt = 0; attempt < 40; ++attempt) {
            core::BoxSpec box;
            if (!sample_box(spec, rule, rng, box)) continue;
            core::BoxSpec grown{box.x0 - 1, box.y0 - 1, box.w + 2, box.h + 2};
            if (overlaps_any(grown, placed)) continue;
            PendingInstance inst;
            inst.box = box;
            inst.class_id = cls;
            inst.shape.is_person = cls == person;
            if (inst.shape.is_person) {
                const double u = rng.uniform();
                inst.shape.lean = u < 0.4 ? -1 : (u < 0.8 ? 1 : 0);
                inst.shape.alpha = rng.uniform(0.45, 0.70);
            } else {
                inst.shape.cab_mode = static_cast<int>(rng.below(3));
            }
            placed.push_back(inst);
            break;
        }
    }

    std::vector<int> ids_w(static_cast<std::size_t>(h) * w, 0);
    std::vector<int> ids_s(static_cast<std::size_t>(hs) * ws, 0);
    ScenePair pair;
    int next_id = 1;
    for (const auto& inst : placed) {
        const core::BoxSpec box_s{2 * inst.box.x0, 2 * inst.box.y0, 2 * inst.box.w, 2 * inst.box.h};
        auto m_w = rasterize_checked(h, w, inst.box, inst.shape);
        auto m_s = rasterize_checked(hs, ws, box_s, inst.shape);
        for (std::size_t i = 0; i < m_w.size(); ++i)
            if (m_w[i]) {
                ids_w[i] = next_id;
                labels_w[i] = inst.class_id;
            }
        for (std::size_t i = 0; i < m_s.size(); ++i)
            if (m_s[i]) {
                ids_s[i] = next_id;
                labels_s[i] = inst.class_id;
            }
        InstanceRecord rec;
        rec.id = next_id;
        rec.class_id = inst.class_id;
        rec.box_where = inst.box;
        rec.box_shape = box_s;
        rec.params = warp::fit_affine_from_bbox(inst.box, h, w);
        pair.instances.push_back(rec);
        ++next_id;
    }

    pair.where = core::make_scene(h, w, core::Tier::WhereRes, std::move(labels_w), std::move(ids_w),
                                  palette);
    pair.shape = core::make_scene(hs, ws, core::Tier::ShapeRes, std::move(labels_s),
                                  std::move(ids_s), palette);
    return pair;
}

std::vector<ScenePair> generate_scenes(int n, const SceneSpec& spec,
                                       const core::ClassPalette& palette, std::uint64_t seed) {
    std::vector<ScenePair> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(generate_scene(spec, palette, hash_mix(seed, static_cast<std::uint64_t>(i))));
    return out;
}

// --- SSM1 scene files ------------------------------------------------------------

void save_scene(const std::string& path, const core::SemanticScene& scene,
                const core::ClassPalette& palette) {
    std::ostringstream os;
    os << "SSM1 " << scene.h << ' ' << scene.w << ' ' << palette.size() << '\n';
    auto grid = [&](const std::vector<int>& g) {
        for (int y = 0; y < scene.h; ++y) {
            for (int x = 0; x < scene.w; ++x) {
                if (x) os << ' ';
                os << g[static_cast<std::size_t>(y) * scene.w + x];
            }
            os << '\n';
        }
    };
    grid(scene.labels);
    os << '\n';
    grid(scene.instance_ids);
    os << '\n';
    for (int id : scene.instance_list()) {
        const core::BoxSpec b = core::extract_instance_bbox(scene, id);
        int cls = -1;
        for (int y = b.y0; y < b.y0 + b.h && cls < 0; ++y)
            for (int x = b.x0; x < b.x0 + b.w; ++x)
                if (scene.id_at(y, x) == id) {
                    cls = scene.label_at(y, x);
                    break;
                }
        os << id << ' ' << cls << ' ' << b.x0 << ' ' << b.y0 << ' ' << b.w << ' ' << b.h << '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for write: " + path);
    const std::string s = os.str();
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

core::SemanticScene load_scene(const std::string& path, const core::ClassPalette& palette) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open scene file: " + path);
    std::string magic;
    int h = 0, w = 0, ncls = 0;
    if (!(f >> magic) || magic != "SSM1") throw FormatError("bad magic in " + path);
    if (!(f >> h >> w >> ncls)) throw FormatError("bad header dims in " + path);
    if (h < 1 || w < 1) throw FormatError("non-positive dims in header of " + path);
    if (ncls != palette.size())
        throw FormatError("num_classes mismatch in " + path + ": file says " + std::to_string(ncls));
    auto read_grid = [&](const char* which) {
        std::vector<int> g(static_cast<std::size_t>(h) * w);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(f >> g[i]))
                throw FormatError(std::string("truncated ") + which + " grid in " + path);
        return g;
    };
    std::vector<int> labels = read_grid("label");
    for (int v : labels)
        if (v < 0 || v >= ncls)
            throw FormatError("label id out of range in " + path + ": " + std::to_string(v));
    std::vector<int> ids = read_grid("instance-id");

    core::SemanticScene scene;
    try {
        // tier is not part of the payload; our writers encode it in the name
        const core::Tier tier = path.find(".shape.ssm") != std::string::npos
                                    ? core::Tier::ShapeRes
                                    : core::Tier::WhereRes;
        scene = core::make_scene(h, w, tier, std::move(labels), std::move(ids), palette);
    } catch (const core::InvalidSceneError& e) {
        throw FormatError("invalid scene payload in " + path + ": " + e.what());
    }
    // verify the stored inventory against the grids
    int id = 0, cls = 0, x0 = 0, y0 = 0, bw = 0, bh = 0;
    while (f >> id >> cls >> x0 >> y0 >> bw >> bh) {
        const core::BoxSpec b = core::extract_instance_bbox(scene, id);
        if (!(b == core::BoxSpec{x0, y0, bw, bh}))
            throw FormatError("inventory bbox mismatch for instance " + std::to_string(id) + " in " +
                              path);
    }
    return scene;
}

// --- dataset ------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string scene_name(int i, const char* tier) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "scene_%05d.%s.ssm", i, tier);
    return buf;
}

} // namespace

void generate_dataset(int n, const SceneSpec& spec, const core::ClassPalette& palette,
                      std::uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ostringstream idx;
    idx << "SSMIDX1 " << n << '\n';
    for (int i = 0; i < n; ++i) {
        ScenePair pair = generate_scene(spec, palette, hash_mix(seed, static_cast<std::uint64_t>(i)));
        const std::string fw = scene_name(i, "where");
        const std::string fsName = scene_name(i, "shape");
        save_scene((fs::path(out_dir) / fw).string(), pair.where, palette);
        save_scene((fs::path(out_dir) / fsName).string(), pair.shape, palette);
        idx << "scene " << i << ' ' << fw << ' ' << fsName << ' ' << pair.instances.size() << '\n';
        for (const auto& inst : pair.instances) {
            idx << "inst " << inst.id << ' ' << inst.class_id << ' ' << inst.box_where.x0 << ' '
                << inst.box_where.y0 << ' ' << inst.box_where.w << ' ' << inst.box_where.h << ' '
                << inst.box_shape.x0 << ' ' << inst.box_shape.y0 << ' ' << inst.box_shape.w << ' '
                << inst.box_shape.h << ' ' << fmt_double(inst.params.log_sx) << ' '
                << fmt_double(inst.params.log_sy) << ' ' << fmt_double(inst.params.tx) << ' '
                << fmt_double(inst.params.ty) << '\n';
        }
    }
    std::ofstream f(fs::path(out_dir) / "index.txt", std::ios::binary);
    if (!f) throw FormatError("cannot write index in " + out_dir);
    const std::string s = idx.str();
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

Dataset load_dataset(const std::string& dir, const core::ClassPalette& palette) {
    std::ifstream f(fs::path(dir) / "index.txt");
    if (!f) throw FormatError("no index.txt under " + dir);
    std::string magic;
    int n = 0;
    if (!(f >> magic >> n) || magic != "SSMIDX1") throw FormatError("bad index header in " + dir);
    Dataset ds;
    ds.scenes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::string kw, fw, fsName;
        int idx = 0, k = 0;
        if (!(f >> kw >> idx >> fw >> fsName >> k) || kw != "scene")
            throw FormatError("bad scene record " + std::to_string(i) + " in index");
        ScenePair pair;
        pair.where = load_scene((fs::path(dir) / fw).string(), palette);
        pair.shape = load_scene((fs::path(dir) / fsName).string(), palette);
        for (int j = 0; j < k; ++j) {
            InstanceRecord rec;
            std::string ik;
            if (!(f >> ik >> rec.id >> rec.class_id >> rec.box_where.x0 >> rec.box_where.y0 >>
                  rec.box_where.w >> rec.box_where.h >> rec.box_shape.x0 >> rec.box_shape.y0 >>
                  rec.box_shape.w >> rec.box_shape.h >> rec.params.log_sx >> rec.params.log_sy >>
                  rec.params.tx >> rec.params.ty) ||
                ik != "inst")
                throw FormatError("bad inst record in index");
            pair.instances.push_back(rec);
        }
        ds.scenes.push_back(std::move(pair));
    }
    return ds;
}

std::vector<int> Dataset::with_class(int class_id) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        if (scenes[i].has_class(class_id)) out.push_back(static_cast<int>(i));
    return out;
}

core::ShapeMask real_shape_canvas(const core::SemanticScene& shape_scene, int instance_id, int m) {
    const core::BoxSpec box = core::extract_instance_bbox(shape_scene, instance_id);
    Tensor crop({1, box.h, box.w});
    for (int y = 0; y < box.h; ++y)
        for (int x = 0; x < box.w; ++x)
            crop.at(0, y, x) =
                shape_scene.id_at(box.y0 + y, box.x0 + x) == instance_id ? 1.0 : 0.0;
    // resample the crop onto the canvas through the identity placement
    warp::SamplingGrid grid = warp::affine_grid({1.0, 1.0, 0.0, 0.0}, m, m);
    Tensor resampled = warp::bilinear_sample(crop, grid);
    core::ShapeMask out;
    out.m = m;
    out.values.resize(static_cast<std::size_t>(m) * m);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = resampled[i] >= 0.5 ? 1.0 : 0.0;
    return out;
}

// --- id-map loader stub ---------------------------------------------------------------

core::SemanticScene load_idmap_scene(const std::string& label_pgm, const std::string& instance_pgm,
                                     const std::vector<int>& remap,
                                     const core::ClassPalette& palette) {
    auto read_pgm = [](const std::string& path, int& h, int& w) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw FormatError("cannot open graymap: " + path);
        std::string magic;
        int maxval = 0;
        f >> magic >> w >> h >> maxval;
        if (magic != "P2" && magic != "P5") throw FormatError("unsupported graymap magic in " + path);
        std::vector<int> g(static_cast<std::size_t>(h) * w);
        if (magic == "P2") {
            for (auto& v : g)
                if (!(f >> v)) throw FormatError("truncated graymap " + path);
        } else {
            f.get();
            for (auto& v : g) {
                const int c = f.get();
                if (c < 0) throw FormatError("truncated graymap " + path);
                v = c;
            }
        }
        return g;
    };
    int h = 0, w = 0, h2 = 0, w2 = 0;
    std::vector<int> raw = read_pgm(label_pgm, h, w);
    std::vector<int> ids = read_pgm(instance_pgm, h2, w2);
    if (h != h2 || w != w2) throw FormatError("label/instance graymap dimension mismatch");
    for (auto& v : raw) {
        const int mapped = v < static_cast<int>(remap.size()) ? remap[static_cast<std::size_t>(v)] : -1;
        v = mapped >= 0 ? mapped : 0;
    }
    return core::make_scene(h, w, core::Tier::WhereRes, std::move(raw), std::move(ids), palette);
}

} // namespace insertnet::synth
