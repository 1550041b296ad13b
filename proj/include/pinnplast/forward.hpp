#pragma once

/**
 * @file forward.hpp
 * @brief Ground-truth generator: integrates the rate-form elastoplastic
 * (optionally damaged) constitutive ODEs at a material point under mixed
 * strain/stress control.
 *
 * State: total strain, plastic strain, alpha, beta, gamma. Stress follows as
 * sigma = (1 - omega) C:(eps - eps_p). Stress-held channels get the strain
 * rate that keeps their stress rate at zero; the regime (elastic or plastic)
 * is frozen over each step and switches are located by bisection on the dense
 * output.
 */

#include <vector>

#include "pinnplast/constitutive.hpp"
#include "pinnplast/loading.hpp"
#include "pinnplast/ode.hpp"

namespace pinnplast {

enum class Regime { Elastic, Plastic };

struct ForwardOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Yield tolerance relative to sigma_y0.
  double tol_F_rel = 1e-8;
  /// Width of the time bracket at regime switches.
  double event_tol = 1e-10;
  /// ||eta|| below this (relative to sigma_y0) makes the flow direction undefined.
  double tol_eta_rel = 1e-12;
  std::size_t max_steps = 2'000'000;
};

struct PathPoint {
  double t = 0.0;
  Sym eps{};
  Sym eps_p{};
  Sym sigma{};
  Sym beta{};
  double gamma = 0.0;
  double alpha = 0.0;
  double omega = 0.0;
  double F = 0.0;          ///< yield function (effective-stress form)
  double gamma_dot = 0.0;  ///< rate in the regime of the step ending here
  Regime regime = Regime::Elastic;
};

/// Dense integrator output. steps[i] spans points[i] .. points[i + 1].
struct RawPath {
  std::vector<PathPoint> points;
  std::vector<ode::DenseStep> steps;
  MaterialParams params;
  ModelKind kind = ModelKind::VMIH;
  LoadingProgram program;
  double state_scale = 1.0;  ///< stress-like states are stored divided by this

  double t_end() const { return points.empty() ? 0.0 : points.back().t; }
  /// Interpolated point at time t (regime and gamma_dot of the covering step).
  PathPoint at(double t) const;
  /// Strain and Cauchy stress rates at t from the dense output (right-sided
  /// at step boundaries).
  std::pair<Sym, Sym> rates_at(double t) const;
};

RawPath integrate(const LoadingProgram& program, const MaterialParams& params, ModelKind kind,
                  const ForwardOptions& opt = {});

}  // namespace pinnplast
