#pragma once

// Physics-informed loss assembly. The networks approximate the plastic
// multiplier gamma(t) (and the back stress beta(t) for kinematic models);
// strain, stress and their rates enter as data. Every residual is
// dimensionless and squared; inequality constraints are switched by sigmoid
// gates S(x) = 1 / (1 + exp(-delta x)).

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinnplast/autodiff.hpp"
#include "pinnplast/constitutive.hpp"
#include "pinnplast/dataset.hpp"
#include "pinnplast/tensor.hpp"

namespace pinnplast {

using ExprSym = SymTensor<ad::Expr>;

struct GateConfig {
  double delta = 200.0;
  /// Gates act as constant masks (no gradient through the gate argument).
  bool detach_gates = false;

  void validate() const;
};

ad::Expr sigmoid_gate(const ad::Expr& x, const GateConfig& g);
double sigmoid_gate(double x, const GateConfig& g);

/// (1/N) sum (f_n - F_n)^2. Throws LengthMismatch.
ad::Expr mse_eq(std::span<const ad::Expr> f, std::span<const double> targets);
/// (1/N) sum (S(f_n - F_n) (f_n - F_n))^2: penalizes f > F.
ad::Expr mse_le(std::span<const ad::Expr> f, std::span<const double> targets, const GateConfig& g);
/// (1/N) sum (S(F_n - f_n) (f_n - F_n))^2: penalizes f < F.
ad::Expr mse_ge(std::span<const ad::Expr> f, std::span<const double> targets, const GateConfig& g);

/// Which sign decides between loading and unloading.
enum class LoadingIndicator {
  TrialRate,  ///< n : C : eps_dot, the elastic trial stress rate
  DataRate,   ///< n : sigma_dot from the data rates
};

/// Argument of the yield gates S(+-x) on the loading rows.
enum class GateArgument {
  Yield,            ///< x = F
  Complementarity,  ///< x = F + gamma_dot: positive on the plastic branch, where F = 0
};

struct LossOptions {
  GateConfig gate;
  /// Unloading when the indicator is negative (S(-x) on the unloading row,
  /// S(x) on the loading rows). Off reproduces the opposite gate signs.
  bool strict_text_gates = true;
  LoadingIndicator indicator = LoadingIndicator::TrialRate;
  GateArgument gate_argument = GateArgument::Complementarity;
  /// Adds gamma(0)^2 (+ beta(0):beta(0)) as the term "gamma0".
  bool pin_gamma0 = true;
  /// Regularization of ||eta|| inside the residuals (dimensionless stress).
  double tol_eta = 1e-6;
  /// Per-term weights; absent names weigh 1.
  std::map<std::string, double> lambda;

  double weight(const std::string& term) const;
};

/// Everything one loss evaluation needs. Quantities are dimensionless:
/// stress / sigma*, strain / eps*, time on [0, 1]; gamma is gamma / eps* and
/// beta is beta / sigma*. Damage uses omega = gamma * eps* / alpha_s.
struct ResidualContext {
  ModelKind kind = ModelKind::VMIH;
  const Dataset* data = nullptr;  ///< scaled, with rates
  std::vector<ad::Expr> gamma, gamma_dot;
  std::vector<ExprSym> beta, beta_dot;        ///< kinematic models only
  std::vector<ExprSym> sigma, sigma_dot;      ///< optional stress network (data mode)
  ParamSet<ad::Expr> params;                  ///< dimensionless
  double eps_star = 1.0;
};

struct LossTerm {
  std::string name;
  double weight = 1.0;
  ad::Expr value;
};

/// One term per applicable residual row for ctx.kind. Throws IncompleteContext.
std::vector<LossTerm> assemble_losses(const ResidualContext& ctx, const LossOptions& opt);

/// sum weight * value.
ad::Expr composite_loss(const std::vector<LossTerm>& terms);

/// Per-sample regime gates (values only), for diagnostics and tests.
struct GateValues {
  std::vector<double> unload, load, plastic;
};
GateValues regime_gates(const ResidualContext& ctx, const LossOptions& opt);

// ---- scaling of material parameters ----------------------------------------

/// Physical -> dimensionless: moduli over E*, sigma_y0 over sigma*, kbar2
/// times eps*/E*; m and alpha_s unchanged.
ParamSet<double> to_dimensionless(const ParamSet<double>& p, const ScalingFactors& s);
ParamSet<double> to_physical(const ParamSet<double>& p, const ScalingFactors& s);

/// Network outputs at the sample times (dimensionless).
struct NetworkValues {
  std::vector<double> gamma, gamma_dot;
  std::vector<Sym> beta, beta_dot;
};

/// Records network outputs and all parameters as tape leaves and wires the
/// context. Leaves are recorded in the order gamma, gamma_dot, beta,
/// beta_dot, params.
ResidualContext bind_context(ad::Tape& tape, const Dataset& data, ModelKind kind,
                             const ParamSet<double>& dimensionless, const NetworkValues& net);

/// Internal variables of the generating path, scaled like the dataset (needs
/// d.truth and d.meta.truth). beta_dot follows the hardening law.
NetworkValues truth_network_values(const Dataset& d);

}  // namespace pinnplast
