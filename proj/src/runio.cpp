#include "insertnet/runio.hpp"

#include <array>
#include <filesystem>
#include <fstream>

namespace insertnet::runio {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint32_t crc32(const void* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(std::string("unknown config key '") + it.key() + "' in " + where);
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json rule_to_json(const synth::ClassRule& r) {
    return {{"h_factor", r.h_factor}, {"center_lo", r.center_lo}, {"center_hi", r.center_hi},
            {"aspect_lo", r.aspect_lo}, {"aspect_hi", r.aspect_hi}, {"noise", r.noise}};
}

synth::ClassRule rule_from_json(const json& j, synth::ClassRule base, const char* where) {
    expect_keys(j, {"h_factor", "center_lo", "center_hi", "aspect_lo", "aspect_hi", "noise"}, where);
    maybe(j, "h_factor", base.h_factor);
    maybe(j, "center_lo", base.center_lo);
    maybe(j, "center_hi", base.center_hi);
    maybe(j, "aspect_lo", base.aspect_lo);
    maybe(j, "aspect_hi", base.aspect_hi);
    maybe(j, "noise", base.noise);
    return base;
}

} // namespace

json to_json(const synth::SceneSpec& s) {
    return {{"h", s.h},
            {"w", s.w},
            {"sky_end", s.sky_end},
            {"building_end", s.building_end},
            {"sidewalk_end", s.sidewalk_end},
            {"horizon", s.horizon},
            {"person", rule_to_json(s.person)},
            {"car", rule_to_json(s.car)},
            {"max_instances", s.max_instances},
            {"p_tree", s.p_tree},
            {"p_building_col", s.p_building_col}};
}

synth::SceneSpec scene_spec_from_json(const json& j) {
    synth::SceneSpec s;
    expect_keys(j,
                {"h", "w", "sky_end", "building_end", "sidewalk_end", "horizon", "person", "car",
                 "max_instances", "p_tree", "p_building_col"},
                "scene");
    maybe(j, "h", s.h);
    maybe(j, "w", s.w);
    maybe(j, "sky_end", s.sky_end);
    maybe(j, "building_end", s.building_end);
    maybe(j, "sidewalk_end", s.sidewalk_end);
    maybe(j, "horizon", s.horizon);
    if (j.contains("person")) s.person = rule_from_json(j.at("person"), s.person, "scene.person");
    if (j.contains("car")) s.car = rule_from_json(j.at("car"), s.car, "scene.car");
    maybe(j, "max_instances", s.max_instances);
    maybe(j, "p_tree", s.p_tree);
    maybe(j, "p_building_col", s.p_building_col);
    return s;
}

json to_json(const pipe::TrainConfig& c) {
    return {{"insert_class", c.insert_class},
            {"where_h", c.where_h},
            {"where_w", c.where_w},
            {"canvas_m", c.canvas_m},
            {"box_canvas_m", c.box_canvas_m},
            {"latent_dim", c.latent_dim},
            {"ctx_dim", c.ctx_dim},
            {"lambda_recon", c.lambda_recon},
            {"lambda_a", c.lambda_a},
            {"lambda_s", c.lambda_s},
            {"lambda_kl", c.lambda_kl},
            {"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"d_noise", c.d_noise},
            {"real_box_jitter", c.real_box_jitter},
            {"d_real_target", c.d_real_target},
            {"steps", c.steps},
            {"seed", c.seed},
            {"snapshot_every", c.snapshot_every},
            {"use_d_layout_box", c.use_d_layout_box},
            {"use_d_affine", c.use_d_affine},
            {"use_d_layout_instance", c.use_d_layout_instance},
            {"use_d_shape", c.use_d_shape},
            {"use_where_recon", c.use_where_recon},
            {"use_where_sup", c.use_where_sup},
            {"use_what_recon", c.use_what_recon},
            {"use_what_sup", c.use_what_sup},
            {"joint_update", c.joint_update},
            {"sup_cond_erase", c.sup_cond_erase},
            {"stage", c.stage},
            {"scene", to_json(c.scene)}};
}

pipe::TrainConfig train_config_from_json(const json& j) {
    pipe::TrainConfig c;
    expect_keys(j,
                {"insert_class", "where_h", "where_w", "canvas_m", "box_canvas_m", "latent_dim",
                 "ctx_dim", "lambda_recon", "lambda_a", "lambda_s", "lambda_kl", "lr", "beta1",
                 "beta2", "d_noise", "real_box_jitter", "d_real_target", "steps", "seed", "snapshot_every", "use_d_layout_box", "use_d_affine",
                 "use_d_layout_instance", "use_d_shape", "use_where_recon", "use_where_sup",
                 "use_what_recon", "use_what_sup", "joint_update", "sup_cond_erase", "stage",
                 "scene"},
                "config");
    maybe(j, "insert_class", c.insert_class);
    maybe(j, "where_h", c.where_h);
    maybe(j, "where_w", c.where_w);
    maybe(j, "canvas_m", c.canvas_m);
    maybe(j, "box_canvas_m", c.box_canvas_m);
    maybe(j, "latent_dim", c.latent_dim);
    maybe(j, "ctx_dim", c.ctx_dim);
    maybe(j, "lambda_recon", c.lambda_recon);
    maybe(j, "lambda_a", c.lambda_a);
    maybe(j, "lambda_s", c.lambda_s);
    maybe(j, "lambda_kl", c.lambda_kl);
    maybe(j, "lr", c.lr);
    maybe(j, "beta1", c.beta1);
    maybe(j, "beta2", c.beta2);
    maybe(j, "d_noise", c.d_noise);
    maybe(j, "real_box_jitter", c.real_box_jitter);
    maybe(j, "d_real_target", c.d_real_target);
    maybe(j, "steps", c.steps);
    maybe(j, "seed", c.seed);
    maybe(j, "snapshot_every", c.snapshot_every);
    maybe(j, "use_d_layout_box", c.use_d_layout_box);
    maybe(j, "use_d_affine", c.use_d_affine);
    maybe(j, "use_d_layout_instance", c.use_d_layout_instance);
    maybe(j, "use_d_shape", c.use_d_shape);
    maybe(j, "use_where_recon", c.use_where_recon);
    maybe(j, "use_where_sup", c.use_where_sup);
    maybe(j, "use_what_recon", c.use_what_recon);
    maybe(j, "use_what_sup", c.use_what_sup);
    maybe(j, "joint_update", c.joint_update);
    maybe(j, "sup_cond_erase", c.sup_cond_erase);
    maybe(j, "stage", c.stage);
    if (j.contains("scene")) c.scene = scene_spec_from_json(j.at("scene"));
    c.validate();
    return c;
}

pipe::TrainConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return train_config_from_json(j);
}

void init_run_dir(const std::string& dir, const pipe::TrainConfig& cfg,
                  const std::string& command_line) {
    fs::create_directories(dir);
    {
        std::ofstream f(fs::path(dir) / "config_echo.json");
        f << to_json(cfg).dump(2) << '\n';
    }
    {
        std::ofstream f(fs::path(dir) / "manifest.txt");
        f << "insertnet run\ncommand: " << command_line << "\nseed: " << cfg.seed << '\n'
          << "artifacts:\n";
    }
}

void append_manifest(const std::string& dir, const std::string& artifact) {
    std::ofstream f(fs::path(dir) / "manifest.txt", std::ios::app);
    f << "  - " << artifact << '\n';
}

LossLog::LossLog(const std::string& path) : path_(path) {
    std::ofstream f(path_, std::ios::trunc); // start fresh
}

void LossLog::append(long step, const core::LossReport& report, double wall_ms) {
    json j;
    j["step"] = step;
    j["wall_ms"] = wall_ms;
    for (const auto& [k, v] : report.entries) j[k] = v;
    std::ofstream f(path_, std::ios::app);
    f << j.dump() << '\n';
}

} // namespace insertnet::runio
