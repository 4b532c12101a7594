#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "resona/bie3d.hpp"
#include "resona/oned.hpp"
#include "resona/periodic.hpp"

namespace resona::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
    std::string experiment;
    nlohmann::json doc;  // validated input, canonical key order
    std::string digest;  // sha256 of doc.dump()
    int threads = 1;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
};

struct PeriodicCell {
    bie3d::SphereScene scene;
    periodic::QuasiPeriodicContext ctx;
};

struct BlockSpec {
    int p = 0, q = 0;
    std::vector<int> n, m;
};

std::string sha256_hex(const std::string& bytes);

const std::vector<std::string>& command_names();

/// Parses and validates the config for one command. Throws ConfigError.
RunConfig parse_config(const std::string& command, const std::string& text);
RunConfig load_config(const std::string& command, const std::filesystem::path& path);

/// Thread count with precedence flag > RESONA_THREADS > config > 1. flag <= 0 means unset.
int resolve_threads(int flag, const RunConfig& cfg);

// Typed accessors on a validated config.
bie3d::SphereScene scene_of(const RunConfig& cfg);
oned::Layout1D layout_of(const RunConfig& cfg);
PeriodicCell cell_of(const RunConfig& cfg);
BlockSpec block_of(const RunConfig& cfg);
double number(const RunConfig& cfg, const std::string& key, double fallback);
int integer(const RunConfig& cfg, const std::string& key, int fallback);
std::vector<double> numbers(const RunConfig& cfg, const std::string& key);
Vec3 vec3(const nlohmann::json& j);

/// Runs the command and writes <command>.csv, <command>.json, config.json and manifest.json into cfg.out_dir.
void run_command(const RunConfig& cfg);

/// Entry point of the resona executable; returns the process exit code.
int main(int argc, char** argv);

}  // namespace resona::cli
