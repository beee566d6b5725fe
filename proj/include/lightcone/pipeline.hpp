#pragma once

// Subcommands behind the lightcone CLI. Each reads a flat key=value config,
// validates every path before doing work, writes its outputs plus a
// manifest.txt into the output directory, and throws on failure; run_command
// maps exceptions to exit codes.

#include "lightcone/image.hpp"
#include "lightcone/keyvalue.hpp"
#include "lightcone/light_cones.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lightcone::pipeline {

/// Mean SSIM over 8x8 windows at stride 4 (k1 = 0.01, k2 = 0.03, range 1).
/// Frames smaller than 8 pixels use one window. Exactly symmetric.
double ssim(const Frame& a, const Frame& b);

/// Index of the decoded frame most similar to `reference`; ties go to the
/// lowest index. Throws std::invalid_argument on empty input.
std::size_t choose(std::span<const Frame> decoded, const Frame& reference);

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitEmptyIntersection = 4,
};

struct RunConfig {
    KeyValues values;
    /// Relative paths in `values` resolve against this directory.
    std::filesystem::path base_dir;
    bool full_scale = false;

    std::filesystem::path path(std::string_view key) const;
    std::filesystem::path out_dir() const;
    std::uint64_t seed() const { return values.get_u64("seed", 1); }
};

/// Reads a config file and applies command-line overrides.
RunConfig load_run_config(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed = std::nullopt,
                          std::optional<std::filesystem::path> out = std::nullopt, bool full_scale = false);

/// What a command produced. `summary` is also echoed into the manifest.
struct Outcome {
    std::filesystem::path out_dir;
    std::vector<std::filesystem::path> files;
    KeyValues summary;
};

Outcome cmd_gen_data(const RunConfig& cfg);
Outcome cmd_train(const RunConfig& cfg);
Outcome cmd_experiment1(const RunConfig& cfg);
/// Throws ZeroAccepted (after writing the report) when an intersection is
/// empty; the message carries the earliest feasible time when one exists.
Outcome cmd_predict(const RunConfig& cfg);
Outcome cmd_probe(const RunConfig& cfg);
Outcome cmd_aperture(const RunConfig& cfg);

const std::vector<std::string>& command_names();

/// Runs a named command, printing a short summary to `out` and errors to
/// `err`. Returns an ExitCode.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// One-line CSV helpers shared by commands and tests.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace lightcone::pipeline
