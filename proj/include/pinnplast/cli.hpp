#pragma once

// Command-line front end: generate, train, calibrate, discover, sweep and
// report. Every command reads an optional JSON run configuration; flags
// override its scalars. Errors map onto exit codes 2 (config), 3 (state
// mismatch) and 4 (numerical).

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pinnplast/config.hpp"
#include "pinnplast/train.hpp"

namespace pinnplast {

/// Parses argv and runs one command. Returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

/// Writes dataset.csv/.json into `dir` (or member_NNN/ subdirectories for a
/// sweep) and returns the CSV paths.
std::vector<std::filesystem::path> cmd_generate(const RunConfig& rc, const std::filesystem::path& dir);

/// Trains on one dataset and writes checkpoint.json, report.json and log.csv
/// into `dir`. Transfer and discovery modes need `basis`.
TrainReport cmd_fit(const RunConfig& rc, const Dataset& data, const std::filesystem::path& dir,
                    const std::optional<Checkpoint>& basis);

/// Generates every member of a sweep and calibrates it in its own
/// subdirectory, up to `jobs` members at a time. Without a basis each member
/// trains from scratch.
std::vector<TrainReport> cmd_sweep(const RunConfig& rc, const std::filesystem::path& dir,
                                   const std::optional<Checkpoint>& basis, std::size_t jobs);

/// Per-parameter order statistics of relative errors across runs.
struct ErrorSummary {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Collects report.json files in `dir` and its immediate subdirectories and
/// writes errors.csv, summary.csv, parameters_vs_epoch.csv and
/// loss_vs_epoch.csv. Throws MissingRun when there are none.
std::map<std::string, ErrorSummary> cmd_report(const std::filesystem::path& dir);

/// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> v, double q);

}  // namespace pinnplast
