#pragma once

// Run configuration: JSON files with a dataset section (model, parameters or
// random draws, loading, sampling, noise) and a training section, plus the
// canonical presets and seed splitting shared by the command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinnplast/constitutive.hpp"
#include "pinnplast/dataset.hpp"
#include "pinnplast/loading.hpp"
#include "pinnplast/train.hpp"

namespace pinnplast {

/// Name of the environment variable holding the default output root.
inline constexpr const char* kOutputRootEnv = "PINNPLAST_OUTPUT";

enum class SeedPurpose : std::uint64_t { Init = 1, Noise = 2, Sampling = 3 };

/// Independent stream seed for one purpose (and sweep member) of a run seed.
std::uint64_t derive_seed(std::uint64_t run_seed, SeedPurpose purpose, std::uint64_t member = 0);

/// Canonical parameters and loading of a model kind. Uniaxial von Mises
/// models use three tension cycles (1, 2, 3 % strain; damage 2, 4, 6 %) at a
/// rate of 1 % per unit time; Drucker-Prager uses two biaxial compression
/// cycles under 100 kPa confinement. Throws ConfigError for kinds without one.
MaterialParams preset_params(ModelKind kind);
ProgramDescriptor preset_program(ModelKind kind);

/// One parameter set from the exploration ranges: E, nu, sigma_y0 and one
/// hardening or damage parameter drawn uniformly per model kind (VMIH, VMKH,
/// VM_DAMAGE). Throws ConfigError for other kinds.
MaterialParams draw_exploration_params(ModelKind kind, std::mt19937_64& rng);

struct DatasetConfig {
  ModelKind kind = ModelKind::VMIH;
  std::optional<MaterialParams> params;      ///< defaults to preset_params(kind)
  std::optional<ProgramDescriptor> loading;  ///< defaults to preset_program(kind)
  std::size_t points_per_cycle = 100;
  double noise = 0.0;
  /// Number of random parameter sets to draw; 0 uses `params`.
  std::size_t sweep = 0;

  MaterialParams resolved_params() const;
  ProgramDescriptor resolved_loading() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  TrainConfig train;
  std::filesystem::path output;  ///< empty: output root from the environment
  std::optional<std::filesystem::path> basis;  ///< checkpoint for calibrate/discover

  /// Output directory, falling back to $PINNPLAST_OUTPUT and then "runs".
  std::filesystem::path output_dir() const;
};

/// Parses and validates a configuration. Unknown keys anywhere, bad types or
/// out-of-range values throw ConfigError. `mode` selects the training
/// defaults the "train" section overrides.
RunConfig parse_run_config(const nlohmann::json& j, TrainMode mode = TrainMode::Scratch);
RunConfig load_run_config(const std::filesystem::path& path, TrainMode mode = TrainMode::Scratch);

/// Applies the keys of a "train" section to `cfg`. Throws ConfigError.
void apply_train_json(const nlohmann::json& j, TrainConfig& cfg);
nlohmann::json train_config_json(const TrainConfig& cfg);

/// Runs the forward model and builds the scaled training dataset (noise,
/// finite-difference rates) for one parameter set.
Dataset generate_dataset(const DatasetConfig& dc, const MaterialParams& params,
                         std::uint64_t noise_seed);

/// Parameter sets of a configuration: the single resolved set, or `sweep`
/// draws from the run's sampling stream.
std::vector<MaterialParams> dataset_members(const RunConfig& rc);

/// Short stable hash of a JSON document (hex), used as the config digest.
std::string json_digest(const nlohmann::json& j);

}  // namespace pinnplast
