#pragma once

// Full-batch training of the multiplier networks together with the material
// parameters: Adam with exponential learning-rate decay, early stopping,
// transfer recalibration from a checkpoint and discovery runs that unlock the
// pressure and quadratic-hardening terms.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pinnplast/constitutive.hpp"
#include "pinnplast/dataset.hpp"
#include "pinnplast/network.hpp"
#include "pinnplast/pinn.hpp"

namespace pinnplast {

enum class TrainMode { Scratch, Transfer, Discovery };

std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view s);

struct TrainConfig {
  TrainMode mode = TrainMode::Scratch;
  std::size_t max_epochs = 50000;
  double lr_initial = 1e-3;
  double lr_final = 5e-5;
  std::size_t early_stop_patience = 2000;
  double early_stop_min_delta = 1e-8;
  std::uint64_t seed = 0;
  /// Overrides default_trainable(kind) when set.
  std::optional<std::array<bool, kNumParams>> trainable;
  /// Loss flags; loss.gate.delta is the gate sharpness. Training detaches the
  /// gates: regime masks follow the current iterate without being optimized.
  LossOptions loss = [] {
    LossOptions o;
    o.gate.detach_gates = true;
    return o;
  }();
  MLPSpec gamma_spec;
  MLPSpec beta_spec = [] {
    MLPSpec s;
    s.output_dim = 6;
    return s;
  }();
  /// Learning-rate multiplier of the material parameters.
  double param_lr_scale = 10.0;
  /// Dimensionless starting value of every trainable parameter from scratch.
  double scratch_init = 0.5;
  std::size_t log_every = 50;
  /// Optional per-epoch CSV log (written every log_every epochs).
  std::optional<std::filesystem::path> log_path;

  double delta() const { return loss.gate.delta; }
  void validate() const;
};

/// Defaults for a mode and model kind: VMKH runs 100k epochs at lr 5e-4,
/// transfer 1000 epochs, discovery 5000.
TrainConfig default_train_config(TrainMode mode, ModelKind kind);

struct TrajectoryPoint {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  ParamSet<double> params;  ///< physical
};

struct TrainReport {
  ModelKind kind = ModelKind::VMIH;
  TrainMode mode = TrainMode::Scratch;
  std::map<std::string, double> final_losses;
  double final_total = 0.0;
  double initial_total = 0.0;
  std::vector<TrajectoryPoint> trajectory;
  MaterialParams recovered;  ///< physical
  std::optional<std::map<std::string, double>> relative_errors;
  double wall_seconds = 0.0;
  std::size_t epochs_run = 0;
  std::string stop_reason;
  std::array<bool, kNumParams> trainable{};
};

struct FitResult {
  Checkpoint checkpoint;
  TrainReport report;
};

/// lr_initial (lr_final / lr_initial)^(epoch / max_epochs), clamped at lr_final.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Adam state for one flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8) with a
/// per-coordinate learning rate. Throws NonFiniteGradient.
void adam_step(std::vector<double>& x, const std::vector<double>& grad, AdamState& st,
               const std::vector<double>& lr);

/// Trains from scratch (or from `init` when given) on a scaled dataset with
/// rates. `fixed` supplies the values of parameters that are not trained
/// (physical units); trainable ones start at cfg.scratch_init unless `init`
/// provides them. Throws Diverged, NonFiniteGradient, IncompleteContext.
FitResult fit(const Dataset& data, ModelKind kind, const TrainConfig& cfg,
              const MaterialParams& fixed, const std::optional<Checkpoint>& init = std::nullopt);

/// Continues from a trained checkpoint on a new dataset. Discovery mode
/// switches the kind to DISCOVERY_GENERAL and unlocks m and kbar2 from zero.
/// Throws SpecMismatch when cfg's network shapes differ from the checkpoint.
FitResult transfer_calibrate(const Checkpoint& basis, const Dataset& data, const TrainConfig& cfg);

/// |est - true| / |true| per trainable parameter; for a zero truth the
/// estimate is reported relative to `null_scales` (default 1).
std::map<std::string, double> relative_errors(const MaterialParams& estimated,
                                              const MaterialParams& truth,
                                              const std::map<std::string, double>& null_scales = {});

/// Per-sample KKT diagnostics of a trained checkpoint on its dataset.
struct KktHealth {
  double mean_abs_F_gdot = 0.0;
  double F_violation = 0.0;     ///< mean (S(F) F)^2
  double gdot_violation = 0.0;  ///< mean (S(-gdot) gdot)^2
  double max_gamma_drop = 0.0;  ///< largest decrease of gamma, relative to its final value
};
KktHealth kkt_health(const Checkpoint& c, const Dataset& data, const TrainConfig& cfg);

/// Composite loss of a checkpoint on a scaled dataset and its gradient, as
/// the trainer computes it. The gradient is ordered gamma weights, beta
/// weights, then the dimensionless values of `params` (all eight when empty).
struct LossGradient {
  double total = 0.0;
  std::vector<double> grad;
  std::size_t n_gamma = 0, n_beta = 0;
  std::vector<Param> params;
};
LossGradient composite_gradient(const Checkpoint& c, const Dataset& data, const TrainConfig& cfg,
                                std::vector<Param> params = {});

/// Network outputs of a checkpoint at the dataset's sample times.
NetworkValues evaluate_networks(const Checkpoint& c, const Dataset& data);

void to_json(nlohmann::json& j, const TrainReport& r);

}  // namespace pinnplast
