#pragma once

// Dormand-Prince 5(4) embedded pair with error control and the fourth-order
// continuous extension (Hairer, Norsett & Wanner, "Solving ODEs I", dopri5).

#include <array>
#include <functional>
#include <vector>

namespace pinnplast::ode {

using State = std::vector<double>;
using Rhs = std::function<void(double t, const State& y, State& dydt)>;

/// Dense output over one accepted step [t0, t0 + h].
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  std::array<State, 5> coeffs;

  double t1() const { return t0 + h; }
  State eval(double t) const;
  double eval(double t, std::size_t component) const;
  /// Time derivative of the interpolant.
  double deriv(double t, std::size_t component) const;
};

struct Tolerances {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_min = 1e-14;
};

struct StepResult {
  State y1;
  DenseStep dense;
  double h_next = 0.0;
  int rejected = 0;
};

/// One accepted adaptive step from (t, y) starting with trial size h (clipped
/// to t_max). Throws StepUnderflow when the step shrinks below h_min.
StepResult dopri5_step(const Rhs& f, double t, const State& y, double h, double t_max,
                       const Tolerances& tol);

/// Weighted RMS error norm used for step acceptance.
double error_norm(const State& err, const State& y0, const State& y1, const Tolerances& tol);

/// Starting step size heuristic (Hairer's initial-step estimate).
double initial_step(const Rhs& f, double t, const State& y, double t_max, const Tolerances& tol);

}  // namespace pinnplast::ode
