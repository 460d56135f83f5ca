#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csafl/cluster.hpp"
#include "csafl/sim.hpp"

namespace csafl {

// Everything `run` needs; relative paths resolve against the config file's
// directory.
struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path profiles;
    std::optional<std::filesystem::path> assignment;  // absent: cluster inline
    std::filesystem::path output_dir;
    std::string label;
    ProtocolConfig protocol;
    ClusterConfig cluster;
};

// Unknown or mistyped keys raise ConfigError naming the key.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
nlohmann::json run_config_to_json(const RunConfig& cfg);

std::string code_version();

// Runs the experiment described by `cfg` and writes every output file.
SimulationTrace execute_run(const RunConfig& cfg);

int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace csafl
