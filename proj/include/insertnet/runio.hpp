#pragma once

#include "insertnet/pipeline.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>

namespace insertnet::runio {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint32_t crc32(const void* data, std::size_t len);

nlohmann::json to_json(const synth::SceneSpec& spec);
nlohmann::json to_json(const pipe::TrainConfig& cfg);
// strict: unknown keys raise ConfigError naming the key
synth::SceneSpec scene_spec_from_json(const nlohmann::json& j);
pipe::TrainConfig train_config_from_json(const nlohmann::json& j);
pipe::TrainConfig load_config_file(const std::string& path);

// self-describing run directory: config echo + manifest
void init_run_dir(const std::string& dir, const pipe::TrainConfig& cfg,
                  const std::string& command_line);
void append_manifest(const std::string& dir, const std::string& artifact);

// line-delimited loss log
class LossLog {
public:
    explicit LossLog(const std::string& path);
    void append(long step, const core::LossReport& report, double wall_ms);

private:
    std::string path_;
};

// exit codes shared by the CLI
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

} // namespace insertnet::runio
