#include "pinnplast/forward.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace pinnplast {

namespace {

constexpr std::size_t kEps = 0, kEpsP = 6, kAlpha = 12, kBeta = 13, kGamma = 19, kDim = 20;

struct Model {
  ParamSet<double> p;
  ModelFlags flags;
  ModelFlags yield_flags;  // flags with damage off: yield is evaluated on effective stress
  Stiffness<double> C;
  double scale = 1.0;
  double tol_F = 0.0;
  double tol_eta = 0.0;
};

struct Unpacked {
  Sym eps, eps_p, beta;
  double alpha = 0.0, gamma = 0.0;
};

Unpacked unpack(const ode::State& y, double scale) {
  Unpacked u;
  for (std::size_t i = 0; i < 6; ++i) {
    u.eps[i] = y[kEps + i];
    u.eps_p[i] = y[kEpsP + i];
    u.beta[i] = y[kBeta + i] * scale;
  }
  u.alpha = y[kAlpha];
  u.gamma = y[kGamma];
  return u;
}

double omega_of(const Model& m, double alpha) {
  return m.flags.damage_on ? damage_omega(alpha, m.p).omega : 0.0;
}

Sym effective(const Model& m, const Unpacked& u) { return m.C.apply(u.eps - u.eps_p); }

double yield_eff(const Model& m, const Unpacked& u) {
  return yield_F(effective(m, u), HardeningState<double>{u.alpha, u.beta}, m.p, m.yield_flags);
}

struct Rates {
  Sym eps_dot, eps_p_dot, beta_dot, sigma_dot;
  double alpha_dot = 0.0, gamma_dot = 0.0;
};

Rates rates_for(const Model& m, const Unpacked& u, const Sym& eps_dot, Regime regime) {
  Rates r;
  r.eps_dot = eps_dot;
  const Sym sig_eff = effective(m, u);
  const double omega = omega_of(m, u.alpha);
  if (regime == Regime::Elastic) {
    r.sigma_dot = (1.0 - omega) * m.C.apply(eps_dot);
    return r;
  }
  const HardeningState<double> state{u.alpha, u.beta};
  const auto dirs = flow_and_normal(sig_eff, state, m.p, m.yield_flags, {m.tol_eta, false});
  const auto parts = plastic_multiplier_parts(dirs, u.alpha, eps_dot, m.p, m.yield_flags);
  if (!(parts.denominator > 0.0)) {
    throw NonPositiveDenominator(
        fmt::format("plastic multiplier denominator {} <= 0", parts.denominator));
  }
  r.gamma_dot = parts.numerator / parts.denominator;
  r.eps_p_dot = r.gamma_dot * dirs.r;
  const auto hr = hardening_rates(r.gamma_dot, dirs.r, m.p);
  r.alpha_dot = hr.alpha_dot;
  if (m.flags.kinematic_on) r.beta_dot = hr.beta_dot;
  double omega_dot = 0.0;
  if (m.flags.damage_on && u.alpha / m.p[Param::alpha_s] < 1.0 - kOmegaCapMargin &&
      u.alpha >= 0.0) {
    omega_dot = r.alpha_dot / m.p[Param::alpha_s];
  }
  const Sym sig_eff_dot = m.C.apply(eps_dot - r.eps_p_dot);
  r.sigma_dot = (1.0 - omega) * sig_eff_dot - omega_dot * sig_eff;
  return r;
}

/// Strain rate satisfying the controls: prescribed channels as given, held
/// channels chosen so their stress rate vanishes. The map eps_dot -> sigma_dot
/// is affine for a frozen regime, so Newton converges in one iteration; the
/// loop and damping guard against round-off.
Sym solve_controls(const Model& m, const Unpacked& u, const ControlSample& ctrl, Regime regime) {
  Sym eps_dot{};
  std::vector<std::size_t> held;
  for (std::size_t ch = 0; ch < 6; ++ch) {
    if (ctrl.holds_stress(ch)) {
      held.push_back(ch);
    } else {
      eps_dot[ch] = ctrl.value[ch];
    }
  }
  if (held.empty()) return eps_dot;

  const std::size_t k = held.size();
  auto residual = [&](const Sym& ed) {
    const Sym sd = rates_for(m, u, ed, regime).sigma_dot;
    Eigen::VectorXd res(k);
    for (std::size_t i = 0; i < k; ++i) res[i] = sd[held[i]];
    return res;
  };

  double rate_scale = 0.0;
  for (std::size_t ch = 0; ch < 6; ++ch) {
    if (!ctrl.holds_stress(ch)) rate_scale = std::max(rate_scale, std::abs(ctrl.value[ch]));
  }
  const double stress_rate_scale = std::max(rate_scale, 1e-30) * 3.0 * m.C.kappa;
  const double tol = 1e-13 * stress_rate_scale;

  Eigen::VectorXd res = residual(eps_dot);
  for (int iter = 0; iter < 20; ++iter) {
    if (res.norm() <= tol) return eps_dot;
    Eigen::MatrixXd J(k, k);
    for (std::size_t j = 0; j < k; ++j) {
      Sym probe = eps_dot;
      const double h = std::max(1.0, std::abs(probe[held[j]]));
      probe[held[j]] += h;
      J.col(static_cast<Eigen::Index>(j)) = (residual(probe) - res) / h;
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      throw ControlSolveFailure("singular control Jacobian for held stress channels");
    }
    const Eigen::VectorXd dx = lu.solve(-res);
    double damping = 1.0;
    for (;;) {
      Sym trial = eps_dot;
      for (std::size_t i = 0; i < k; ++i) trial[held[i]] += damping * dx[static_cast<Eigen::Index>(i)];
      const Eigen::VectorXd r2 = residual(trial);
      if (r2.norm() < res.norm() || damping < 1e-4) {
        eps_dot = trial;
        res = r2;
        break;
      }
      damping *= 0.5;
    }
  }
  if (res.norm() <= 1e3 * tol) return eps_dot;
  throw ControlSolveFailure(
      fmt::format("mixed-control Newton did not converge, residual {}", res.norm()));
}

Regime determine_regime(const Model& m, const Unpacked& u, const ControlSample& ctrl) {
  const Sym sig_eff = effective(m, u);
  const HardeningState<double> state{u.alpha, u.beta};
  const double F = yield_F(sig_eff, state, m.p, m.yield_flags);
  if (F < -m.tol_F) return Regime::Elastic;
  if (norm(dev(sig_eff) - u.beta) <= m.tol_eta) return Regime::Elastic;
  const Sym ed_elastic = solve_controls(m, u, ctrl, Regime::Elastic);
  const auto dirs = flow_and_normal(sig_eff, state, m.p, m.yield_flags);
  if (double_contract(dirs.n, m.C.apply(ed_elastic)) <= 0.0) return Regime::Elastic;
  const Sym ed_plastic = solve_controls(m, u, ctrl, Regime::Plastic);
  if (rates_for(m, u, ed_plastic, Regime::Plastic).gamma_dot <= 0.0) return Regime::Elastic;
  return Regime::Plastic;
}

struct Integrator {
  Model m;
  const LoadingProgram& program;
  ForwardOptions opt;
  ode::Tolerances tol;

  void rhs(std::size_t seg, Regime regime, double t, const ode::State& y, ode::State& dy) const {
    const Unpacked u = unpack(y, m.scale);
    const ControlSample ctrl = control_of(program, seg, t);
    const Sym ed = solve_controls(m, u, ctrl, regime);
    const Rates r = rates_for(m, u, ed, regime);
    dy.assign(kDim, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
      dy[kEps + i] = r.eps_dot[i];
      dy[kEpsP + i] = r.eps_p_dot[i];
      dy[kBeta + i] = r.beta_dot[i] / m.scale;
    }
    dy[kAlpha] = r.alpha_dot;
    dy[kGamma] = r.gamma_dot;
  }

  double gamma_dot_at(std::size_t seg, Regime regime, double t, const ode::State& y) const {
    if (regime == Regime::Elastic) return 0.0;
    const Unpacked u = unpack(y, m.scale);
    const ControlSample ctrl = control_of(program, seg, t);
    return rates_for(m, u, solve_controls(m, u, ctrl, regime), regime).gamma_dot;
  }

  /// Event function: F for elastic steps, -gamma_dot for plastic steps. The
  /// regime must switch where it turns positive.
  double event_value(std::size_t seg, Regime regime, double t, const ode::State& y) const {
    if (regime == Regime::Elastic) return yield_eff(m, unpack(y, m.scale));
    return -gamma_dot_at(seg, regime, t, y);
  }

  /// Pulls the state back onto F = 0 along the flow direction (one Newton
  /// update of gamma) to stop drift over long plastic stretches.
  void project(ode::State& y) const {
    Unpacked u = unpack(y, m.scale);
    const double F = yield_eff(m, u);
    if (F == 0.0) return;
    const Sym sig_eff = effective(m, u);
    const HardeningState<double> state{u.alpha, u.beta};
    if (norm(dev(sig_eff) - u.beta) <= m.tol_eta) return;
    const auto dirs = flow_and_normal(sig_eff, state, m.p, m.yield_flags);
    const double den =
        plastic_multiplier_parts(dirs, u.alpha, Sym{}, m.p, m.yield_flags).denominator;
    if (!(den > 0.0)) return;
    const double dg = F / den;
    const auto hr = hardening_rates(dg, dirs.r, m.p);
    for (std::size_t i = 0; i < 6; ++i) {
      y[kEpsP + i] += dg * dirs.r[i];
      if (m.flags.kinematic_on) y[kBeta + i] += hr.beta_dot[i] / m.scale;
    }
    y[kAlpha] += hr.alpha_dot;
    y[kGamma] += dg;
  }

  PathPoint make_point(double t, const ode::State& y, Regime regime, double gamma_dot) const {
    const Unpacked u = unpack(y, m.scale);
    PathPoint pt;
    pt.t = t;
    pt.eps = u.eps;
    pt.eps_p = u.eps_p;
    pt.beta = u.beta;
    pt.alpha = u.alpha;
    pt.gamma = u.gamma;
    pt.omega = omega_of(m, u.alpha);
    pt.sigma = (1.0 - pt.omega) * effective(m, u);
    pt.F = yield_eff(m, u);
    pt.regime = regime;
    pt.gamma_dot = gamma_dot;
    return pt;
  }
};

}  // namespace

PathPoint RawPath::at(double t) const {
  if (points.empty()) throw OutOfRange("empty path");
  if (t <= points.front().t) return points.front();
  if (t >= points.back().t || steps.empty()) return points.back();
  auto it = std::upper_bound(points.begin(), points.end(), t,
                             [](double v, const PathPoint& p) { return v < p.t; });
  std::size_t i = static_cast<std::size_t>(std::distance(points.begin(), it)) - 1;
  i = std::min(i, steps.size() - 1);
  const ode::State y = steps[i].eval(t);
  Unpacked u = unpack(y, state_scale);
  const ModelFlags f = flags_of(kind);
  ModelFlags yf = f;
  yf.damage_on = false;
  const Stiffness<double> C{params[Param::kappa], params[Param::mu]};
  PathPoint pt;
  pt.t = t;
  pt.eps = u.eps;
  pt.eps_p = u.eps_p;
  pt.beta = u.beta;
  pt.alpha = u.alpha;
  pt.gamma = u.gamma;
  pt.omega = f.damage_on ? damage_omega(u.alpha, params.values).omega : 0.0;
  const Sym sig_eff = C.apply(u.eps - u.eps_p);
  pt.sigma = (1.0 - pt.omega) * sig_eff;
  pt.F = yield_F(sig_eff, HardeningState<double>{u.alpha, u.beta}, params.values, yf);
  pt.regime = points[i + 1].regime;
  pt.gamma_dot = points[i + 1].gamma_dot;
  return pt;
}

std::pair<Sym, Sym> RawPath::rates_at(double t) const {
  if (steps.empty()) return {};
  auto it = std::upper_bound(points.begin(), points.end(), t,
                             [](double v, const PathPoint& p) { return v < p.t; });
  std::size_t i = it == points.begin() ? 0 : static_cast<std::size_t>(it - points.begin()) - 1;
  i = std::min(i, steps.size() - 1);
  const auto& st = steps[i];
  const ode::State y = st.eval(t);
  const Unpacked u = unpack(y, state_scale);
  const ModelFlags f = flags_of(kind);
  const Stiffness<double> C{params[Param::kappa], params[Param::mu]};
  Sym eps_dot, eps_p_dot;
  for (std::size_t k = 0; k < 6; ++k) {
    eps_dot[k] = st.deriv(t, kEps + k);
    eps_p_dot[k] = st.deriv(t, kEpsP + k);
  }
  double omega = 0.0, omega_dot = 0.0;
  if (f.damage_on) {
    const auto dw = damage_omega(u.alpha, params.values);
    omega = dw.omega;
    omega_dot = dw.domega_dalpha * st.deriv(t, kAlpha);
  }
  const Sym sig_eff = C.apply(u.eps - u.eps_p);
  const Sym sig_dot = (1.0 - omega) * C.apply(eps_dot - eps_p_dot) - omega_dot * sig_eff;
  return {eps_dot, sig_dot};
}

RawPath integrate(const LoadingProgram& program, const MaterialParams& params, ModelKind kind,
                  const ForwardOptions& opt) {
  program.validate();
  validate(params, kind);

  Integrator in{Model{}, program, opt, ode::Tolerances{opt.rtol, opt.atol, 1e-14}};
  Model& m = in.m;
  m.p = params.values;
  m.flags = flags_of(kind);
  m.yield_flags = m.flags;
  m.yield_flags.damage_on = false;
  if (!m.flags.pressure_on) m.p[Param::m] = 0.0;
  if (!m.flags.kinematic_on) m.p[Param::hbar] = 0.0;
  if (!m.flags.quadratic_hardening_on) m.p[Param::kbar2] = 0.0;
  m.C = elastic_stiffness(m.p[Param::kappa], m.p[Param::mu]);
  m.scale = m.p[Param::sigma_y0];
  m.tol_F = opt.tol_F_rel * m.p[Param::sigma_y0];
  m.tol_eta = opt.tol_eta_rel * m.p[Param::sigma_y0];

  RawPath path;
  path.params = params;
  path.params.values = m.p;
  path.kind = kind;
  path.program = program;
  path.state_scale = m.scale;

  ode::State y(kDim, 0.0);
  const Sym eps0 = m.C.inverse_apply(program.initial_stress);
  for (std::size_t i = 0; i < 6; ++i) y[kEps + i] = eps0[i];
  {
    const double F0 = yield_eff(m, unpack(y, m.scale));
    if (F0 > m.tol_F) {
      throw InvalidStressState(fmt::format("initial stress outside the yield surface, F={}", F0));
    }
  }
  path.points.push_back(in.make_point(0.0, y, Regime::Elastic, 0.0));

  const std::vector<double> bounds = program.boundaries();
  double h = 0.0;
  std::size_t nsteps = 0;
  for (std::size_t seg = 0; seg < program.segments.size(); ++seg) {
    double t = bounds[seg];
    const double t_seg_end = bounds[seg + 1];
    h = 0.0;
    while (t < t_seg_end) {
      if (++nsteps > opt.max_steps) {
        throw StepUnderflow(fmt::format("exceeded {} integrator steps", opt.max_steps));
      }
      const Unpacked u0 = unpack(y, m.scale);
      const Regime regime = determine_regime(m, u0, control_of(program, seg, t));
      const ode::Rhs f = [&](double tt, const ode::State& yy, ode::State& dy) {
        in.rhs(seg, regime, tt, yy, dy);
      };
      if (h <= 0.0) h = ode::initial_step(f, t, y, t_seg_end, in.tol);
      // Never let a step swallow more than a small slice of the segment so
      // events are bracketed tightly by the dense-output scan below.
      h = std::min(h, (t_seg_end - bounds[seg]) / 8.0);
      auto step = ode::dopri5_step(f, t, y, h, t_seg_end, in.tol);
      double t1 = step.dense.t1();

      // Locate the first sign change of the event function on the dense output
      // and redo the step up to it. The redone step's endpoint can still sit a
      // local error beyond the switch, so repeat on its own dense output.
      const double threshold = regime == Regime::Elastic ? m.tol_F : 0.0;
      for (int pass = 0; pass < 8; ++pass) {
        if (!(in.event_value(seg, regime, t1, step.y1) > threshold)) break;
        constexpr int kScan = 16;
        double a = t, b = t1;
        for (int s = 1; s <= kScan; ++s) {
          const double ts = t + (t1 - t) * s / kScan;
          if (in.event_value(seg, regime, ts, step.dense.eval(ts)) > 0.0) {
            b = ts;
            break;
          }
          a = ts;
        }
        while (b - a > opt.event_tol) {
          const double mid = 0.5 * (a + b);
          if (in.event_value(seg, regime, mid, step.dense.eval(mid)) > 0.0) {
            b = mid;
          } else {
            a = mid;
          }
        }
        if (!(b < t1)) break;
        const double keep_h = step.h_next;
        step = ode::dopri5_step(f, t, y, b - t, b, in.tol);
        t1 = step.dense.t1();
        step.h_next = std::max(keep_h, 1e-6 * (t_seg_end - bounds[seg]));
      }

      y = step.y1;
      if (regime == Regime::Plastic) in.project(y);
      const double gd = in.gamma_dot_at(seg, regime, t1, y);
      const PathPoint pt = in.make_point(t1, y, regime, gd);
      if (pt.F > m.tol_F) {
        throw InvalidStressState(
            fmt::format("F = {} exceeds tolerance {} at t = {}", pt.F, m.tol_F, t1));
      }
      if (m.flags.damage_on && pt.omega >= 1.0 - kOmegaCapMargin) {
        throw DamageSaturated(fmt::format("damage saturated at t = {}", t1));
      }
      path.points.push_back(pt);
      path.steps.push_back(step.dense);
      t = t1;
      h = step.h_next;
    }
  }
  return path;
}

}  // namespace pinnplast
