#include "insertnet/evalkit.hpp"
#include "insertnet/pipeline.hpp"
#include "insertnet/runio.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace insertnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out(const std::string& given, const char* command) {
    if (!given.empty()) return given;
    if (const char* root = std::getenv("INSERTNET_RUN_ROOT"))
        return (fs::path(root) / command).string();
    throw runio::ConfigError(std::string("--out is required (or set INSERTNET_RUN_ROOT) for ") +
                             command);
}

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

pipe::TrainConfig load_cfg(const std::string& config_path) {
    if (config_path.empty()) return pipe::TrainConfig{};
    return runio::load_config_file(config_path);
}

void apply_disabled(pipe::TrainConfig& cfg, const std::vector<std::string>& disabled) {
    for (const auto& d : disabled) {
        if (d == "layout-box")
            cfg.use_d_layout_box = false;
        else if (d == "affine")
            cfg.use_d_affine = false;
        else if (d == "layout-instance")
            cfg.use_d_layout_instance = false;
        else if (d == "shape")
            cfg.use_d_shape = false;
        else
            throw CLI::ValidationError("--disable-disc",
                                       "expected one of layout-box|affine|layout-instance|shape");
    }
}

json sample_to_json(const evalkit::PlacementSample& s) {
    json j;
    j["log_sx"] = s.params.log_sx;
    j["log_sy"] = s.params.log_sy;
    j["tx"] = s.params.tx;
    j["ty"] = s.params.ty;
    j["box"] = {s.box.x0, s.box.y0, s.box.w, s.box.h};
    j["inserted"] = s.inserted;
    j["valid"] = s.verdict.valid;
    json reasons = json::array();
    for (auto r : s.verdict.reasons) reasons.push_back(evalkit::fail_reason_name(r));
    j["fail_reasons"] = reasons;
    return j;
}

void write_diversity(const std::string& path, const evalkit::DiversityReport& rep) {
    std::ofstream f(path);
    f << "center_std_px " << rep.center_std << '\n'
      << "distinct_cells_8x16 " << rep.distinct_cells << '\n'
      << "mean_pairwise_box_iou " << rep.mean_box_iou << '\n'
      << "mean_pairwise_mask_iou " << rep.mean_mask_iou << '\n';
}

int run(int argc, char** argv) {
    CLI::App app{"insertnet: learns where to place and what shape to give a new object instance "
                 "in a semantic label map"};
    app.require_subcommand(1);

    std::string config_path, data_dir, eval_data_dir, out_dir, checkpoint_dir, class_name, stage;
    std::string seeds_csv = "1,2,3";
    std::vector<std::string> disabled;
    int n = 100, scene_index = 0, jobs = 2, n_per_scene = 2;
    long steps = -1;
    std::uint64_t seed = 0;
    bool have_seed = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](std::uint64_t v) { seed = v; have_seed = true; }, "seed override");
        cmd->add_option("--out", out_dir, "output/run directory");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    add_common(gen);
    gen->add_option("--n", n, "number of scenes")->required();

    CLI::App* train = app.add_subcommand("train", "train the where/what modules");
    add_common(train);
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--steps", steps, "training steps override");
    train->add_option("--class", class_name, "class to insert (person|car)");
    train->add_option("--disable-disc", disabled,
                      "disable a discriminator: layout-box|affine|layout-instance|shape");
    train->add_option("--stage", stage, "joint|where-first");

    CLI::App* sample = app.add_subcommand("sample", "insert instances into one scene");
    add_common(sample);
    sample->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    sample->add_option("--data", data_dir, "dataset directory")->required();
    sample->add_option("--scene-index", scene_index, "scene index in the dataset");
    sample->add_option("--class", class_name, "class to insert");
    sample->add_option("--n", n, "number of samples");

    CLI::App* heatmap = app.add_subcommand("heatmap", "placement heatmap for one scene");
    add_common(heatmap);
    heatmap->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    heatmap->add_option("--data", data_dir, "dataset directory")->required();
    heatmap->add_option("--scene-index", scene_index, "scene index in the dataset");
    heatmap->add_option("--class", class_name, "class to insert");
    heatmap->add_option("--n", n, "number of samples");

    CLI::App* eval = app.add_subcommand("eval", "recall proxy + diversity over a dataset");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--class", class_name, "class to insert");
    eval->add_option("--n", n_per_scene, "samples per scene");

    CLI::App* ablate = app.add_subcommand("ablate", "discriminator ablation table");
    add_common(ablate);
    ablate->add_option("--data", data_dir, "training dataset directory")->required();
    ablate->add_option("--eval-data", eval_data_dir, "evaluation dataset (default: --data)");
    ablate->add_option("--seeds", seeds_csv, "comma-separated seeds");
    ablate->add_option("--jobs", jobs, "parallel training jobs");
    ablate->add_option("--n", n_per_scene, "samples per scene for recall");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << '\n';
        return runio::kUsage;
    }

    const core::ClassPalette palette = core::default_palette();
    const std::string cmdline = join_args(argc, argv);

    if (gen->parsed()) {
        pipe::TrainConfig cfg = load_cfg(config_path);
        if (have_seed) cfg.seed = seed;
        const std::string out = default_out(out_dir, "gen-data");
        runio::init_run_dir(out, cfg, cmdline);
        synth::generate_dataset(n, cfg.scene, palette, cfg.seed, out);
        runio::append_manifest(out, "index.txt");
        std::cout << "wrote " << n << " scenes under " << out << '\n';
        return runio::kOk;
    }

    if (train->parsed()) {
        pipe::TrainConfig cfg = load_cfg(config_path);
        if (have_seed) cfg.seed = seed;
        if (steps >= 0) cfg.steps = steps;
        if (!class_name.empty()) cfg.insert_class = class_name;
        if (!stage.empty()) cfg.stage = stage;
        apply_disabled(cfg, disabled);
        const std::string out = default_out(out_dir, "train");
        runio::init_run_dir(out, cfg, cmdline);
        synth::Dataset ds = synth::load_dataset(data_dir, palette);
        pipe::Trainer tr(cfg);
        pipe::train(tr, ds, {out, nullptr});
        std::cout << "trained " << cfg.steps << " steps; checkpoint under " << out
                  << "/checkpoint\n";
        return runio::kOk;
    }

    // remaining commands operate on a checkpoint
    auto tr = pipe::load_checkpoint(checkpoint_dir);
    synth::Dataset ds = synth::load_dataset(data_dir, palette);
    if (ds.scenes.empty()) throw synth::FormatError("dataset is empty");
    const int class_id = palette.id_of(class_name.empty() ? tr->cfg.insert_class : class_name);
    const std::uint64_t run_seed = have_seed ? seed : tr->cfg.seed;

    if (sample->parsed()) {
        if (scene_index < 0 || scene_index >= static_cast<int>(ds.scenes.size()))
            throw synth::FormatError("--scene-index out of range");
        const std::string out = default_out(out_dir, "sample");
        runio::init_run_dir(out, tr->cfg, cmdline);
        std::ofstream report(fs::path(out) / "samples.jsonl");
        for (int i = 0; i < n; ++i) {
            Rng rng = substream(run_seed, static_cast<std::uint64_t>(i));
            core::LatentVector z_l(static_cast<std::size_t>(tr->cfg.latent_dim));
            core::LatentVector z_s(static_cast<std::size_t>(tr->cfg.latent_dim));
            for (auto& v : z_l) v = rng.normal();
            for (auto& v : z_s) v = rng.normal();
            pipe::InsertResult res =
                insert_instance(*tr, ds.scenes[static_cast<std::size_t>(scene_index)], z_l, z_s,
                                class_id);
            char name[64];
            std::snprintf(name, sizeof name, "edit_%03d", i);
            synth::save_scene((fs::path(out) / (std::string(name) + ".where.ssm")).string(),
                              res.where, palette);
            synth::save_scene((fs::path(out) / (std::string(name) + ".shape.ssm")).string(),
                              res.shape, palette);
            json j;
            j["sample"] = i;
            j["inserted"] = res.inserted;
            j["log_sx"] = res.params.log_sx;
            j["log_sy"] = res.params.log_sy;
            j["tx"] = res.params.tx;
            j["ty"] = res.params.ty;
            report << j.dump() << '\n';
            runio::append_manifest(out, std::string(name) + ".{where,shape}.ssm");
        }
        std::cout << "wrote " << n << " edited scenes under " << out << '\n';
        return runio::kOk;
    }

    if (heatmap->parsed()) {
        if (scene_index < 0 || scene_index >= static_cast<int>(ds.scenes.size()))
            throw synth::FormatError("--scene-index out of range");
        const std::string out = default_out(out_dir, "heatmap");
        runio::init_run_dir(out, tr->cfg, cmdline);
        evalkit::SampleSet set = evalkit::sample_placements(
            *tr, ds.scenes[static_cast<std::size_t>(scene_index)], class_id, n, run_seed);
        for (auto& s : set.samples) s.verdict = evalkit::oracle_validate(tr->cfg.scene, palette, s);
        evalkit::write_heatmap_pgm((fs::path(out) / "heatmap.pgm").string(), set);
        write_diversity((fs::path(out) / "diversity.txt").string(),
                        evalkit::diversity_metrics(set.samples));
        std::ofstream report(fs::path(out) / "samples.jsonl");
        for (const auto& s : set.samples) report << sample_to_json(s).dump() << '\n';
        const double mass = evalkit::band_mass_fraction(set, tr->cfg.scene, palette, class_id);
        std::ofstream bm(fs::path(out) / "band_mass.txt");
        bm << "band_mass_fraction " << mass << '\n';
        for (const char* a : {"heatmap.pgm", "diversity.txt", "samples.jsonl", "band_mass.txt"})
            runio::append_manifest(out, a);
        std::cout << "heatmap written under " << out << " (band mass " << mass << ")\n";
        return runio::kOk;
    }

    if (eval->parsed()) {
        const std::string out = default_out(out_dir, "eval");
        runio::init_run_dir(out, tr->cfg, cmdline);
        const double recall = evalkit::recall_proxy(*tr, ds, class_id, n_per_scene, run_seed);
        evalkit::SampleSet set =
            evalkit::sample_placements(*tr, ds.scenes.front(), class_id, 100, hash_mix(run_seed, 1));
        evalkit::DiversityReport div = evalkit::diversity_metrics(set.samples);
        std::ofstream f(fs::path(out) / "eval.txt");
        f << "recall_proxy " << recall << '\n';
        write_diversity((fs::path(out) / "diversity.txt").string(), div);
        runio::append_manifest(out, "eval.txt");
        runio::append_manifest(out, "diversity.txt");
        std::cout << "recall_proxy " << recall << '\n';
        return runio::kOk;
    }

    if (ablate->parsed()) {
        pipe::TrainConfig cfg = load_cfg(config_path);
        if (have_seed) cfg.seed = seed;
        if (!class_name.empty()) cfg.insert_class = class_name;
        const std::string out = default_out(out_dir, "ablate");
        runio::init_run_dir(out, cfg, cmdline);
        synth::Dataset train_ds = synth::load_dataset(data_dir, palette);
        synth::Dataset eval_ds =
            eval_data_dir.empty() ? train_ds : synth::load_dataset(eval_data_dir, palette);
        std::vector<std::uint64_t> seed_list;
        std::stringstream ss(seeds_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) seed_list.push_back(std::stoull(tok));
        auto rows = evalkit::ablation_run(evalkit::table_variants(cfg), seed_list, train_ds,
                                          eval_ds, n_per_scene, jobs, [](const auto& r) {
                                              std::cout << r.variant << " seed " << r.seed
                                                        << " recall " << r.recall << '\n';
                                          });
        std::ofstream jf(fs::path(out) / "results.jsonl");
        for (const auto& r : rows) {
            json j;
            j["variant"] = r.variant;
            j["seed"] = r.seed;
            j["recall"] = r.recall;
            j["distinct_cells"] = r.diversity.distinct_cells;
            j["mean_box_iou"] = r.diversity.mean_box_iou;
            j["mean_mask_iou"] = r.diversity.mean_mask_iou;
            jf << j.dump() << '\n';
        }
        std::ofstream tf(fs::path(out) / "table.txt");
        tf << evalkit::format_result_table(rows);
        runio::append_manifest(out, "results.jsonl");
        runio::append_manifest(out, "table.txt");
        std::cout << evalkit::format_result_table(rows);
        return runio::kOk;
    }

    return runio::kUsage;
}

} // namespace

int main(int argc, char** argv) {
    // sample/heatmap must be byte-reproducible: ensure no locale surprises
    try {
        return run(argc, argv);
    } catch (const runio::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return runio::kUsage;
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return runio::kUsage;
    } catch (const pipe::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return runio::kNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return runio::kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return runio::kData;
    }
}
