#pragma once

/**
 * @file constitutive.hpp
 * @brief Generalized von Mises / Drucker-Prager plasticity with linear
 * kinematic hardening, (optionally quadratic) isotropic hardening and a
 * linear isotropic damage ramp.
 *
 *   F = R tau - M p - K(alpha)                    (no damage)
 *   F = (R tau - M p) / (1 - omega) - K(alpha)    (damage, effective stress)
 *   G = R tau
 *   K(alpha) = sigma_y0 + kbar alpha + kbar2 alpha^2
 *   r = R sqrt(3/2) eta/||eta||,  n = dF/dsigma = r + (M/3) 1   (p = -tr(sigma)/3)
 *
 * The shape factor R is fixed at 1. All functions are templated on the scalar
 * so they run unchanged on doubles and on tape expressions.
 */

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "pinnplast/tensor.hpp"

namespace pinnplast {

enum class Param : std::size_t { kappa = 0, mu, sigma_y0, kbar, kbar2, hbar, m, alpha_s };
inline constexpr std::size_t kNumParams = 8;
/// Serialized field names, in Param order.
inline constexpr std::array<std::string_view, kNumParams> kParamNames{
    "kappa", "mu", "sigma_y0", "kbar", "kbar2", "hbar", "m", "alpha_s"};

std::optional<Param> param_from_name(std::string_view name);
inline std::string_view param_name(Param p) { return kParamNames[static_cast<std::size_t>(p)]; }

template <class T>
struct ParamSet {
  std::array<T, kNumParams> values{};

  T& operator[](Param p) { return values[static_cast<std::size_t>(p)]; }
  const T& operator[](Param p) const { return values[static_cast<std::size_t>(p)]; }
};

/// Physical parameter set plus the trainable mask. Stresses in Pa.
struct MaterialParams {
  ParamSet<double> values;
  double r = 1.0;  ///< yield shape factor; only 1 is supported
  std::array<bool, kNumParams> trainable{};

  double operator[](Param p) const { return values[p]; }
  double& operator[](Param p) { return values[p]; }
  bool is_trainable(Param p) const { return trainable[static_cast<std::size_t>(p)]; }
  void set_trainable(Param p, bool on) { trainable[static_cast<std::size_t>(p)] = on; }
};

enum class ModelKind { VMIH, VMKH, VM_MIXED, DRUCKER_PRAGER, VM_DAMAGE, DISCOVERY_GENERAL };

struct ModelFlags {
  bool kinematic_on = false;
  bool damage_on = false;
  bool pressure_on = false;
  bool quadratic_hardening_on = false;
};

ModelFlags flags_of(ModelKind kind);
std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

/// Parameters a calibration of this model kind trains by default.
std::array<bool, kNumParams> default_trainable(ModelKind kind);

/// Validates the invariants of a parameter set for the given model kind.
/// Throws NonPositiveModulus / ConfigError.
void validate(const MaterialParams& p, ModelKind kind);

void to_json(nlohmann::json& j, const MaterialParams& p);
void from_json(const nlohmann::json& j, MaterialParams& p);

// Canonical parameter sets used by the presets and tests.
MaterialParams vmih_reference();   ///< kappa 111.11 GPa, mu 83.33 GPa, sy0 200 MPa, kbar 10 GPa
MaterialParams vmkh_reference();   ///< as VMIH with hbar 10 GPa instead of kbar
MaterialParams vmd_reference();    ///< kappa 50.2 GPa, mu 23.17 GPa, sy0 663 MPa, alpha_s 0.276
MaterialParams drucker_prager_soil();  ///< kappa 100 MPa, nu 0.25, M 0.466, sy0 100 kPa

// ---- material law -----------------------------------------------------------

/// Damage saturation cap: omega never exceeds 1 - kOmegaCapMargin.
inline constexpr double kOmegaCapMargin = 1e-6;

template <class T>
struct HardeningState {
  T alpha{};
  SymTensor<T> beta{};
};

template <class T>
struct HardeningModulus {
  T K;
  T Kprime;
};

/// K(alpha) = sigma_y0 + kbar alpha (+ kbar2 alpha^2) and its slope.
template <class T>
HardeningModulus<T> hardening_K(const T& alpha, const ParamSet<T>& p, const ModelFlags& f) {
  if (f.quadratic_hardening_on) {
    return {p[Param::sigma_y0] + p[Param::kbar] * alpha + p[Param::kbar2] * alpha * alpha,
            p[Param::kbar] + 2.0 * p[Param::kbar2] * alpha};
  }
  return {p[Param::sigma_y0] + p[Param::kbar] * alpha, p[Param::kbar]};
}

enum class DamageClamp {
  Both,       ///< clamp to [0, 1 - margin]; the strict forward-model ramp
  UpperOnly,  ///< only cap at 1 - margin; lets training see negative omega
};

template <class T>
struct DamageValue {
  T omega;
  T domega_dalpha;
};

/// omega = alpha / alpha_s (damage onset at alpha = 0), clamped.
template <class T>
DamageValue<T> damage_omega(const T& alpha, const ParamSet<T>& p,
                            DamageClamp clamp = DamageClamp::Both) {
  const T raw = alpha / p[Param::alpha_s];
  const T inv = 1.0 / p[Param::alpha_s];
  const double cap = 1.0 - kOmegaCapMargin;
  if (ad::value_of(raw) >= cap) return {ad::cap_above(raw, cap), 0.0 * inv};
  if (clamp == DamageClamp::Both && ad::value_of(raw) < 0.0) return {0.0 * raw, 0.0 * inv};
  return {raw, inv};
}

/// sigma / (1 - omega). Throws DamageSaturated at omega >= 1 - margin.
template <class S, class W>
SymTensor<decltype(std::declval<S>() / std::declval<W>())> effective_stress(
    const SymTensor<S>& sigma, const W& omega) {
  if (ad::value_of(omega) >= 1.0 - kOmegaCapMargin) {
    throw DamageSaturated("omega = " + std::to_string(ad::value_of(omega)) +
                          " leaves no load-carrying area");
  }
  return sigma / (1.0 - omega);
}

/// Yield function with an explicit damage value (pass 0 without damage).
/// `tol_eta` regularizes ||eta|| (see smooth_norm).
template <class T>
T yield_F_with_omega(const SymTensor<T>& sigma, const HardeningState<T>& state,
                     const ParamSet<T>& p, const ModelFlags& f, const T& omega,
                     double tol_eta = 0.0) {
  const auto inv = invariants(sigma, state.beta, tol_eta);
  T drive = inv.tau;  // R = 1
  if (f.pressure_on) drive = drive - p[Param::m] * inv.p;
  if (f.damage_on) drive = drive / (1.0 - omega);
  return drive - hardening_K(state.alpha, p, f).K;
}

/// Yield function; with damage on, omega follows from state.alpha and the
/// stress is the Cauchy stress. Throws DamageSaturated for a saturated ramp.
template <class T>
T yield_F(const SymTensor<T>& sigma, const HardeningState<T>& state, const ParamSet<T>& p,
          const ModelFlags& f, double tol_eta = 0.0) {
  if (!f.damage_on) return yield_F_with_omega(sigma, state, p, f, T(0.0 * state.alpha), tol_eta);
  const T omega = damage_omega(state.alpha, p).omega;
  if (ad::value_of(omega) >= 1.0 - kOmegaCapMargin) {
    throw DamageSaturated("yield evaluated at saturated damage");
  }
  return yield_F_with_omega(sigma, state, p, f, omega, tol_eta);
}

template <class T>
struct FlowDirections {
  SymTensor<T> r;  ///< dG/dsigma
  SymTensor<T> n;  ///< dF/dsigma
};

struct FlowOptions {
  double tol_eta = 0.0;
  /// Regularized norm instead of throwing DegenerateStressState (tape use).
  bool smooth = false;
};

/// Flow direction r and yield normal n from the (effective) stress. Scaling
/// the stress by 1/(1-omega) does not change either direction.
template <class T>
FlowDirections<T> flow_and_normal(const SymTensor<T>& sigma, const HardeningState<T>& state,
                                  const ParamSet<T>& p, const ModelFlags& f,
                                  const FlowOptions& opt = {}) {
  const SymTensor<T> eta = dev(sigma) - state.beta;
  T norm_eta;
  if (opt.smooth) {
    norm_eta = smooth_norm(eta, opt.tol_eta);
  } else {
    norm_eta = smooth_norm(eta, 0.0);
    if (!(ad::value_of(norm_eta) > opt.tol_eta)) {
      throw DegenerateStressState("||eta|| = " + std::to_string(ad::value_of(norm_eta)) +
                                  " at or below tol_eta; flow direction undefined");
    }
  }
  FlowDirections<T> out;
  out.r = (std::sqrt(1.5) / norm_eta) * eta;
  out.n = out.r;
  if (f.pressure_on) {
    const T third_m = p[Param::m] / 3.0;
    for (std::size_t i = 0; i < 3; ++i) out.n[i] = out.n[i] + third_m;
  }
  return out;
}

template <class T>
struct HardeningRates {
  T alpha_dot;
  SymTensor<T> beta_dot;
};

/// alpha_dot = gamma_dot sqrt(2/3 r:r), beta_dot = (2/3) hbar gamma_dot r.
template <class T>
HardeningRates<T> hardening_rates(const T& gamma_dot, const SymTensor<T>& r, const ParamSet<T>& p) {
  using std::sqrt;
  const T rr = double_contract(r, r);
  HardeningRates<T> out;
  out.alpha_dot = gamma_dot * sqrt(rr / 1.5);
  out.beta_dot = ((2.0 / 3.0) * p[Param::hbar] * gamma_dot) * r;
  return out;
}

template <class T>
struct MultiplierParts {
  T numerator;    ///< n:C:eps_dot
  T denominator;  ///< n:C:r + sqrt(2/3 r:r) K' + (2/3 r:r) H'
};

/// Numerator and denominator of the consistency-condition multiplier rate.
template <class T>
MultiplierParts<T> plastic_multiplier_parts(const FlowDirections<T>& dirs, const T& alpha,
                                            const SymTensor<T>& eps_dot, const ParamSet<T>& p,
                                            const ModelFlags& f) {
  using std::sqrt;
  const Stiffness<T> C{p[Param::kappa], p[Param::mu]};
  const T rr23 = double_contract(dirs.r, dirs.r) / 1.5;
  T den = double_contract(dirs.n, C.apply(dirs.r)) + sqrt(rr23) * hardening_K(alpha, p, f).Kprime;
  if (f.kinematic_on) den = den + rr23 * p[Param::hbar];
  return {double_contract(dirs.n, C.apply(eps_dot)), den};
}

/// gamma_dot from the consistency condition during plastic loading. The stress
/// is the effective stress when damage is on. Throws NonPositiveDenominator.
template <class T>
T plastic_multiplier_rate(const SymTensor<T>& sigma, const HardeningState<T>& state,
                          const SymTensor<T>& eps_dot, const ParamSet<T>& p, const ModelFlags& f,
                          const FlowOptions& opt = {}) {
  const auto dirs = flow_and_normal(sigma, state, p, f, opt);
  const auto parts = plastic_multiplier_parts(dirs, state.alpha, eps_dot, p, f);
  if (!(ad::value_of(parts.denominator) > 0.0)) {
    throw NonPositiveDenominator("plastic multiplier denominator " +
                                 std::to_string(ad::value_of(parts.denominator)));
  }
  return parts.numerator / parts.denominator;
}

}  // namespace pinnplast
