#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* cli = INSERTNET_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

struct TmpDir {
    fs::path path;
    explicit TmpDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("cli: gen-data, train --steps 0, sample, heatmap, eval round trip") {
    TmpDir tmp("insertnet_cli");
    const std::string data = (tmp.path / "data").string();
    REQUIRE(run("gen-data --n 12 --seed 7 --out " + data) == 0);
    CHECK(fs::exists(tmp.path / "data" / "index.txt"));
    CHECK(fs::exists(tmp.path / "data" / "scene_00011.shape.ssm"));
    CHECK(fs::exists(tmp.path / "data" / "config_echo.json"));
    CHECK(fs::exists(tmp.path / "data" / "manifest.txt"));

    const std::string rund = (tmp.path / "run").string();
    REQUIRE(run("train --data " + data + " --steps 0 --seed 3 --out " + rund) == 0);
    CHECK(fs::exists(tmp.path / "run" / "checkpoint" / "manifest.txt"));
    CHECK(fs::exists(tmp.path / "run" / "checkpoint" / "blob.bin"));
    CHECK(fs::exists(tmp.path / "run" / "loss_log.jsonl"));

    const std::string ck = (tmp.path / "run" / "checkpoint").string();
    const std::string outs = (tmp.path / "samples").string();
    REQUIRE(run("sample --checkpoint " + ck + " --data " + data + " --n 3 --seed 5 --out " + outs) ==
            0);
    CHECK(fs::exists(tmp.path / "samples" / "edit_002.where.ssm"));
    CHECK(fs::exists(tmp.path / "samples" / "samples.jsonl"));

    const std::string heat1 = (tmp.path / "heat1").string();
    const std::string heat2 = (tmp.path / "heat2").string();
    REQUIRE(run("heatmap --checkpoint " + ck + " --data " + data +
                " --n 20 --seed 9 --out " + heat1) == 0);
    REQUIRE(run("heatmap --checkpoint " + ck + " --data " + data +
                " --n 20 --seed 9 --out " + heat2) == 0);
    CHECK(slurp(tmp.path / "heat1" / "heatmap.pgm") == slurp(tmp.path / "heat2" / "heatmap.pgm"));
    CHECK(slurp(tmp.path / "heat1" / "samples.jsonl") == slurp(tmp.path / "heat2" / "samples.jsonl"));
    // report lists one line per sample
    {
        std::ifstream f(tmp.path / "heat1" / "samples.jsonl");
        int lines = 0;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 20);
    }

    const std::string evald = (tmp.path / "eval").string();
    REQUIRE(run("eval --checkpoint " + ck + " --data " + data + " --n 1 --seed 11 --out " + evald) ==
            0);
    CHECK(fs::exists(tmp.path / "eval" / "eval.txt"));
}

TEST_CASE("cli: exit codes for usage and data errors") {
    TmpDir tmp("insertnet_cli_err");
    // unknown flag -> 1
    CHECK(run("train --bogus 1") == 1);
    // unknown subcommand -> 1
    CHECK(run("dance") == 1);
    // missing checkpoint -> 2
    const std::string data = (tmp.path / "data").string();
    REQUIRE(run("gen-data --n 2 --seed 1 --out " + data) == 0);
    CHECK(run("eval --checkpoint " + (tmp.path / "nope").string() + " --data " + data + " --out " +
              (tmp.path / "e").string()) == 2);
    // corrupt dataset -> 2
    {
        std::ofstream f(tmp.path / "data" / "index.txt", std::ios::trunc);
        f << "garbage\n";
    }
    CHECK(run("train --data " + data + " --steps 0 --out " + (tmp.path / "r").string()) == 2);
    // bad config key -> 1
    {
        std::ofstream f(tmp.path / "bad.json");
        f << "{\"no_such_key\": 1}\n";
    }
    CHECK(run("train --config " + (tmp.path / "bad.json").string() + " --data " + data +
              " --steps 0 --out " + (tmp.path / "r2").string()) == 1);
    // bad --disable-disc value -> 1
    CHECK(run("train --data " + data + " --steps 0 --disable-disc bogus --out " +
              (tmp.path / "r3").string()) == 1);
}

TEST_CASE("cli: gen-data is byte-reproducible for a fixed seed") {
    TmpDir tmp("insertnet_cli_repro");
    const std::string a = (tmp.path / "a").string();
    const std::string b = (tmp.path / "b").string();
    REQUIRE(run("gen-data --n 6 --seed 42 --out " + a) == 0);
    REQUIRE(run("gen-data --n 6 --seed 42 --out " + b) == 0);
    CHECK(slurp(tmp.path / "a" / "index.txt") == slurp(tmp.path / "b" / "index.txt"));
    CHECK(slurp(tmp.path / "a" / "scene_00003.where.ssm") ==
          slurp(tmp.path / "b" / "scene_00003.where.ssm"));
}
