#pragma once

// Sampled strain/stress histories: resampling of forward paths, scaling to
// dimensionless form, finite-difference rates, noise and CSV/JSON files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinnplast/constitutive.hpp"
#include "pinnplast/forward.hpp"
#include "pinnplast/loading.hpp"
#include "pinnplast/tensor.hpp"

namespace pinnplast {

inline constexpr const char* kDatasetSchema = "ds-v1";

struct ScalingFactors {
  double sigma_star = 1.0;
  double eps_star = 1.0;
  double t_star = 1.0;  ///< time span; scaled time runs over [0, 1]
  double t0 = 0.0;      ///< physical start time

  double E_star() const { return sigma_star / eps_star; }
};

struct DatasetMeta {
  ProgramDescriptor program;
  ModelKind kind = ModelKind::VMIH;
  std::optional<MaterialParams> truth;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  /// Lateral condition of uniaxial programs; only "uniaxial_stress" is generated.
  std::string lateral = "uniaxial_stress";
};

/// Internal-variable history of the generating path at the sample times. Not
/// part of the file format; used as an oracle by the tests.
struct TruthHistory {
  std::vector<double> gamma;
  std::vector<double> gamma_dot;
  std::vector<Sym> beta;
  std::vector<double> F;
};

struct Dataset {
  std::vector<double> t;
  std::vector<Sym> eps, sig, eps_dot, sig_dot;
  ScalingFactors scaling;
  bool scaled = false;
  DatasetMeta meta;
  std::optional<TruthHistory> truth;  ///< physical units, physical time

  std::size_t size() const { return t.size(); }
  bool has_rates() const { return eps_dot.size() == t.size() && sig_dot.size() == t.size(); }
};

/// Uniform resampling of a path: cycles * points_per_cycle + 1 points over
/// [0, t_end]. Rates are left empty.
Dataset sample_dataset(const RawPath& path, std::size_t points_per_cycle);

/// Replaces the rates of an unscaled sampled dataset by the generating path's
/// own rates (an oracle free of finite-difference error at regime switches).
Dataset with_path_rates(const Dataset& d, const RawPath& path);

/// Number of load cycles a program descriptor represents (>= 1).
std::size_t cycles_of(const ProgramDescriptor& d);

/// Scales stress by max|sig|, strain by max|eps| and time onto [0, 1]. Rates
/// present are scaled consistently. Throws DegenerateData.
Dataset nondimensionalize(const Dataset& d);
/// Inverse of nondimensionalize.
Dataset dimensionalize(const Dataset& d);

/// Second-order finite-difference rates of eps and sig with respect to the
/// dataset's own time. Throws TooFewPoints for N < 3.
Dataset finite_diff_rates(const Dataset& d);

/// Gaussian noise with std = level * per-channel max|.|, on eps and sig
/// independently; rates are recomputed when they were present.
Dataset add_noise(const Dataset& d, double level, std::uint64_t seed);

/// Full pipeline used by the generators: sample, noise, scale, rates.
Dataset make_training_dataset(const RawPath& path, std::size_t points_per_cycle,
                              double noise_level = 0.0, std::uint64_t seed = 0);

/// Writes `<path>` (CSV) and the sidecar `<path stem>.json`.
void export_dataset(const Dataset& d, const std::filesystem::path& csv_path);
Dataset import_dataset(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

void to_json(nlohmann::json& j, const ScalingFactors& s);
void from_json(const nlohmann::json& j, ScalingFactors& s);

}  // namespace pinnplast
