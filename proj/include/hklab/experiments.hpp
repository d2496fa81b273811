#pragma once

#include "hklab/error.hpp"
#include "hklab/model_geometry.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hklab {

/// Schema violation in an experiment config; `path` is the dotted field
/// path (e.g. "model.m", "experiment.times[2]").
class ConfigError : public InvalidArgument {
public:
    ConfigError(std::string path, const std::string& message)
        : InvalidArgument(path.empty() ? message : path + ": " + message)
        , path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct PotentialConfig {
    std::string kind = "constant";  ///< constant | center_bump | radial_decay
    double value = 0.0;
    double amplitude = 0.0;
    double power = 2.0;
};

struct ExperimentConfig {
    ModelParams model;
    bool schrodinger = false;
    PotentialConfig potential;
    std::string kind;
    nlohmann::json params;  ///< kind-specific parameters with defaults filled in
    std::string output_dir;
    std::uint64_t seed = 0;

    /// Normalised config (every default spelled out).
    nlohmann::json to_json() const;
};

/// Validates a parsed document and fills defaults. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a config file; syntax errors become ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);

struct ExperimentKindInfo {
    std::string name;
    std::string description;
};

const std::vector<ExperimentKindInfo>& experiment_kinds();

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct RunResult {
    std::filesystem::path output_dir;
    std::vector<CheckResult> checks;
    std::vector<std::string> files;  ///< relative to output_dir, manifest last

    const CheckResult* first_failure() const;
    /// 0 when every check passed, 1 otherwise.
    int exit_code() const { return first_failure() ? 1 : 0; }
};

/// Runs the experiment and writes its artifacts below
/// `output_root / config.output_dir`.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& output_root);

/// SHA-1 of "blob <size>\0" + content, as printed by `git hash-object`.
std::string git_blob_sha1(std::string_view content);

}  // namespace hklab
