#include "insertnet/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

namespace insertnet::core {

// --- palette ---------------------------------------------------------------

bool ClassPalette::is_insertable(int id) const {
    return std::find(insertable.begin(), insertable.end(), id) != insertable.end();
}

int ClassPalette::id_of(const std::string& name) const {
    for (const auto& e : classes)
        if (e.name == name) return e.id;
    throw NotFoundError("unknown class name: " + name);
}

void ClassPalette::validate() const {
    if (classes.empty()) throw InvalidSceneError("empty palette");
    for (int i = 0; i < size(); ++i)
        if (classes[static_cast<std::size_t>(i)].id != i)
            throw InvalidSceneError("palette ids must be contiguous from 0");
    for (int id : insertable)
        if (!valid_id(id)) throw InvalidSceneError("insertable id outside palette");
    if (static_cast<int>(insertable.size()) >= size())
        throw InvalidSceneError("palette needs at least one non-insertable class");
}

ClassPalette default_palette() {
    ClassPalette p;
    p.classes = {{0, "void"},     {1, "sky"},  {2, "building"}, {3, "tree"},
                 {4, "sidewalk"}, {5, "road"}, {6, "person"},   {7, "car"}};
    p.insertable = {6, 7};
    p.validate();
    return p;
}

// --- scene -----------------------------------------------------------------

int SemanticScene::max_instance_id() const {
    int m = 0;
    for (int v : instance_ids) m = std::max(m, v);
    return m;
}

std::vector<int> SemanticScene::instance_list() const {
    std::set<int> ids;
    for (int v : instance_ids)
        if (v != 0) ids.insert(v);
    return std::vector<int>(ids.begin(), ids.end());
}

std::vector<std::uint8_t> extract_edge_map(const std::vector<int>& ids, int h, int w) {
    std::vector<std::uint8_t> edge(static_cast<std::size_t>(h) * w, 0);
    auto at = [&](int y, int x) { return ids[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int own = at(y, x);
            if (own == 0) continue;
            const bool diff = (y > 0 && at(y - 1, x) != own) || (y + 1 < h && at(y + 1, x) != own) ||
                              (x > 0 && at(y, x - 1) != own) || (x + 1 < w && at(y, x + 1) != own);
            if (diff) edge[static_cast<std::size_t>(y) * w + x] = 1;
        }
    }
    return edge;
}

void validate_scene(const SemanticScene& s, const ClassPalette& palette) {
    const std::size_t n = static_cast<std::size_t>(s.h) * s.w;
    if (s.labels.size() != n || s.instance_ids.size() != n || s.edge.size() != n)
        throw InvalidSceneError("scene grids disagree on resolution");
    for (int v : s.labels)
        if (!palette.valid_id(v)) throw InvalidSceneError("label id outside palette");
    // one class per instance region
    std::vector<int> id_class;
    for (std::size_t i = 0; i < n; ++i) {
        const int id = s.instance_ids[i];
        if (id < 0) throw InvalidSceneError("negative instance id");
        if (id == 0) continue;
        if (static_cast<std::size_t>(id) >= id_class.size()) id_class.resize(static_cast<std::size_t>(id) + 1, -1);
        int& cls = id_class[static_cast<std::size_t>(id)];
        if (cls == -1)
            cls = s.labels[i];
        else if (cls != s.labels[i])
            throw InvalidSceneError("instance region spans multiple classes");
    }
    const auto expect = extract_edge_map(s.instance_ids, s.h, s.w);
    if (expect != s.edge) throw InvalidSceneError("edge map out of sync with instance ids");
}

SemanticScene make_scene(int h, int w, Tier tier, std::vector<int> labels,
                         std::vector<int> instance_ids, const ClassPalette& palette) {
    SemanticScene s;
    s.h = h;
    s.w = w;
    s.tier = tier;
    s.labels = std::move(labels);
    s.instance_ids = std::move(instance_ids);
    s.edge = extract_edge_map(s.instance_ids, h, w);
    validate_scene(s, palette);
    return s;
}

// --- small types -------------------------------------------------------------

double box_iou(const BoxSpec& a, const BoxSpec& b) {
    const int x0 = std::max(a.x0, b.x0), y0 = std::max(a.y0, b.y0);
    const int x1 = std::min(a.x0 + a.w, b.x0 + b.w), y1 = std::min(a.y0 + a.h, b.y0 + b.h);
    const long inter = std::max(0, x1 - x0) * static_cast<long>(std::max(0, y1 - y0));
    const long uni = static_cast<long>(a.w) * a.h + static_cast<long>(b.w) * b.h - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double AffineParams::sx() const {
    return std::min(std::max(std::exp(log_sx), kScaleMin), kScaleMax);
}
double AffineParams::sy() const {
    return std::min(std::max(std::exp(log_sy), kScaleMin), kScaleMax);
}

std::array<double, 6> AffineParams::embed6() const { return {sx(), 0.0, tx, 0.0, sy(), ty}; }

std::vector<std::uint8_t> ShapeMask::binarize(double threshold) const {
    std::vector<std::uint8_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] >= threshold ? 1 : 0;
    return out;
}

void LossReport::set(const std::string& name, double v) {
    for (auto& e : entries)
        if (e.first == name) {
            e.second = v;
            return;
        }
    entries.emplace_back(name, v);
}

double LossReport::get(const std::string& name) const {
    for (const auto& e : entries)
        if (e.first == name) return e.second;
    throw NotFoundError("no loss entry: " + name);
}

bool LossReport::has(const std::string& name) const {
    for (const auto& e : entries)
        if (e.first == name) return true;
    return false;
}

bool LossReport::all_finite() const {
    for (const auto& e : entries)
        if (!std::isfinite(e.second)) return false;
    return true;
}

std::string LossReport::to_line() const {
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& e : entries) {
        if (!first) os << ' ';
        os << e.first << '=' << e.second;
        first = false;
    }
    return os.str();
}

// --- encodings ----------------------------------------------------------------

Tensor one_hot_encode(const SemanticScene& scene, const ClassPalette& palette) {
    validate_scene(scene, palette);
    const int c = palette.size();
    const int n = scene.h * scene.w;
    Tensor out({c + 1, scene.h, scene.w});
    for (int i = 0; i < n; ++i) {
        out.data()[static_cast<std::size_t>(scene.labels[static_cast<std::size_t>(i)]) * n + i] = 1.0;
        out.data()[static_cast<std::size_t>(c) * n + i] = scene.edge[static_cast<std::size_t>(i)];
    }
    return out;
}

Tensor blend_box(const SemanticScene& scene, const ClassPalette& palette, const Tensor& box_mask) {
    if (box_mask.rank() != 2 || box_mask.dim(0) != scene.h || box_mask.dim(1) != scene.w)
        throw InvalidSceneError("blend_box: box mask resolution mismatch");
    Tensor oh = one_hot_encode(scene, palette);
    const int c = oh.dim(0);
    const int n = scene.h * scene.w;
    Tensor out({c + 1, scene.h, scene.w});
    std::copy(oh.data(), oh.data() + static_cast<std::size_t>(c) * n, out.data());
    std::copy(box_mask.data(), box_mask.data() + n, out.data() + static_cast<std::size_t>(c) * n);
    return out;
}

// --- editing -------------------------------------------------------------------

PasteResult paste_instance(const SemanticScene& scene, const ClassPalette& palette,
                           const Tensor& warped_mask, int class_id) {
    if (!palette.is_insertable(class_id))
        throw InvalidSceneError("paste_instance: class not insertable");
    if (warped_mask.rank() != 2 || warped_mask.dim(0) != scene.h || warped_mask.dim(1) != scene.w)
        throw InvalidSceneError("paste_instance: mask resolution mismatch");

    const int n = scene.h * scene.w;
    std::vector<std::size_t> hits;
    for (int i = 0; i < n; ++i)
        if (warped_mask.data()[i] >= 0.5) hits.push_back(static_cast<std::size_t>(i));

    if (hits.empty()) return {scene, false};

    // Re-pasting the exact footprint of an existing same-class instance is a
    // no-op (keeps paste idempotent).
    {
        const int first_id = scene.instance_ids[hits[0]];
        if (first_id != 0) {
            bool same = true;
            std::size_t region = 0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(n) && same; ++i) {
                const bool in_region = scene.instance_ids[i] == first_id;
                if (in_region) ++region;
            }
            for (std::size_t i : hits)
                if (scene.instance_ids[i] != first_id || scene.labels[i] != class_id) {
                    same = false;
                    break;
                }
            if (same && region == hits.size()) return {scene, false};
        }
    }

    SemanticScene out = scene;
    const int new_id = scene.max_instance_id() + 1;
    for (std::size_t i : hits) {
        out.labels[i] = class_id;
        out.instance_ids[i] = new_id;
    }
    out.edge = extract_edge_map(out.instance_ids, out.h, out.w);
    return {std::move(out), true};
}

BoxSpec extract_instance_bbox(const SemanticScene& scene, int instance_id) {
    int x0 = scene.w, y0 = scene.h, x1 = -1, y1 = -1;
    for (int y = 0; y < scene.h; ++y)
        for (int x = 0; x < scene.w; ++x)
            if (scene.id_at(y, x) == instance_id && instance_id != 0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) throw NotFoundError("instance id not present in scene");
    return BoxSpec{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

SemanticScene erase_instance(const SemanticScene& scene, const ClassPalette& palette,
                             int instance_id) {
    if (instance_id == 0) throw NotFoundError("instance id 0 is background");
    bool present = false;
    for (int v : scene.instance_ids)
        if (v == instance_id) {
            present = true;
            break;
        }
    if (!present) throw NotFoundError("instance id not present in scene");

    SemanticScene out = scene;
    const int h = scene.h, w = scene.w;
    // multi-source BFS from every non-instance pixel; the first label to reach
    // an erased pixel wins (scan order, then N/S/W/E, makes this deterministic)
    std::vector<int> fill(static_cast<std::size_t>(h) * w, -1);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (scene.id_at(y, x) == 0) {
                fill[static_cast<std::size_t>(y) * w + x] = scene.label_at(y, x);
                queue.emplace_back(y, x);
            }
    if (queue.empty()) throw InvalidSceneError("erase_instance: no background pixels to fill from");
    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const auto [y, x] = queue.front();
        queue.pop_front();
        const int lbl = fill[static_cast<std::size_t>(y) * w + x];
        for (int d = 0; d < 4; ++d) {
            const int ny = y + dy[d], nx = x + dx[d];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            auto& f = fill[static_cast<std::size_t>(ny) * w + nx];
            if (f == -1) {
                f = lbl;
                queue.emplace_back(ny, nx);
            }
        }
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (scene.id_at(y, x) == instance_id) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                out.labels[i] = fill[i];
                out.instance_ids[i] = 0;
            }
    out.edge = extract_edge_map(out.instance_ids, h, w);
    validate_scene(out, palette);
    return out;
}

} // namespace insertnet::core
