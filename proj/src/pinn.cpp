#include "pinnplast/pinn.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pinnplast/errors.hpp"

namespace pinnplast {

using ad::Expr;

void GateConfig::validate() const {
  if (!(delta > 0.0)) throw ConfigError(fmt::format("gate delta={} must be positive", delta));
}

Expr sigmoid_gate(const Expr& x, const GateConfig& g) {
  const Expr s = ad::sigmoid(x, g.delta);
  return g.detach_gates ? ad::detach(s) : s;
}

double sigmoid_gate(double x, const GateConfig& g) { return ad::sigmoid(x, g.delta); }

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw LengthMismatch(fmt::format("{} values against {} targets", a, b));
  if (a == 0) throw LengthMismatch("empty residual list");
}

Expr mean(const std::vector<Expr>& xs) {
  Expr acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc / static_cast<double>(xs.size());
}

ExprSym lift(ad::Tape& tape, const Sym& s) {
  ExprSym out;
  for (std::size_t i = 0; i < 6; ++i) out[i] = tape.variable(s[i]);
  return out;
}

Sym values(const ExprSym& s) {
  Sym out;
  for (std::size_t i = 0; i < 6; ++i) out[i] = s[i].value();
  return out;
}

struct SampleTerms {
  Expr F, gamma_dot, omega;
  Expr unload, load, ep_stress, ep_mult, kin;  // squared, gated
  bool has_mult = false;
  double g_unload = 0.0, g_load = 0.0, g_plastic = 0.0;
};

class Assembler {
 public:
  Assembler(const ResidualContext& ctx, const LossOptions& opt) : ctx_(ctx), opt_(opt) {
    validate();
    f_ = flags_of(ctx.kind);
    fy_ = f_;
    fy_.damage_on = false;
    tape_ = ctx.gamma.front().tape();
    zero_ = tape_->variable(0.0);
  }

  const ModelFlags& flags() const { return f_; }
  Expr zero() const { return zero_; }

  SampleTerms sample(std::size_t n) const {
    const Dataset& d = *ctx_.data;
    const auto& p = ctx_.params;
    const bool data_mode = !ctx_.sigma.empty();
    const ExprSym sig = data_mode ? ctx_.sigma[n] : lift(*tape_, d.sig[n]);
    const ExprSym sig_dot = data_mode ? ctx_.sigma_dot[n] : lift(*tape_, d.sig_dot[n]);
    const ExprSym eps_dot = lift(*tape_, d.eps_dot[n]);
    const Expr& g = ctx_.gamma[n];
    const Expr& gd = ctx_.gamma_dot[n];

    HardeningState<Expr> st;
    st.alpha = g;
    ExprSym beta_dot;
    for (std::size_t i = 0; i < 6; ++i) st.beta[i] = zero_;
    if (f_.kinematic_on) {
      st.beta = dev(ctx_.beta[n]);
      beta_dot = dev(ctx_.beta_dot[n]);
    }

    SampleTerms out;
    out.gamma_dot = gd;
    ExprSym sig_eff = sig;
    ExprSym sig_eff_dot = sig_dot;
    if (f_.damage_on) {
      const auto dw = damage_omega(g * ctx_.eps_star, p, DamageClamp::UpperOnly);
      out.omega = dw.omega;
      const Expr omega_dot = dw.domega_dalpha * (gd * ctx_.eps_star);
      const Expr one_m = 1.0 - dw.omega;
      sig_eff = sig / one_m;
      sig_eff_dot = sig_dot / one_m + (omega_dot / (one_m * one_m)) * sig;
    }

    out.F = yield_F_with_omega(sig_eff, st, p, fy_, zero_, opt_.tol_eta);
    const auto dirs = flow_and_normal(sig_eff, st, p, fy_, FlowOptions{opt_.tol_eta, true});
    const Stiffness<Expr> C{p[Param::kappa], p[Param::mu]};

    const Sym n_val = values(dirs.n);
    const double ind = opt_.indicator == LoadingIndicator::TrialRate
                           ? double_contract(n_val, Stiffness<double>{p[Param::kappa].value(),
                                                                      p[Param::mu].value()}
                                                        .apply(d.eps_dot[n]))
                           : double_contract(n_val, values(sig_eff_dot));
    const double s_pos = sigmoid_gate(ind, opt_.gate);
    const double s_neg = sigmoid_gate(-ind, opt_.gate);
    const double unload = opt_.strict_text_gates ? s_neg : s_pos;
    const double loading = opt_.strict_text_gates ? s_pos : s_neg;
    const Expr phi = opt_.gate_argument == GateArgument::Complementarity ? out.F + gd : out.F;
    const Expr sF = sigmoid_gate(phi, opt_.gate);
    const Expr sF_neg = sigmoid_gate(-phi, opt_.gate);
    const Expr g_load = loading * sF_neg;
    const Expr g_ep = loading * sF;
    out.g_unload = unload;
    out.g_load = g_load.value();
    out.g_plastic = g_ep.value();

    const ExprSym r_el = sig_eff_dot - C.apply(eps_dot);
    const Expr rr_el = double_contract(r_el, r_el);
    out.unload = (unload * unload) * rr_el;
    out.load = (g_load * g_load) * rr_el;
    const ExprSym r_ep = sig_eff_dot - C.apply(eps_dot - gd * dirs.r);
    out.ep_stress = (g_ep * g_ep) * double_contract(r_ep, r_ep);

    // Consistency multiplier with alpha = gamma, i.e. sqrt(2/3 r:r) = 1. The
    // library form takes that root, which is singular where eta vanishes.
    const Expr num = double_contract(dirs.n, C.apply(eps_dot));
    Expr den = double_contract(dirs.n, C.apply(dirs.r)) + hardening_K(g, p, fy_).Kprime;
    if (f_.kinematic_on) den = den + (double_contract(dirs.r, dirs.r) / 1.5) * p[Param::hbar];
    if (den.value() > 1e-12) {
      const Expr rm = gd - num / den;
      out.ep_mult = (g_ep * g_ep) * (rm * rm);
      out.has_mult = true;
    } else {
      out.ep_mult = zero_;
    }

    if (f_.kinematic_on) {
      const ExprSym rk = beta_dot - ((2.0 / 3.0) * p[Param::hbar] * gd) * dirs.r;
      out.kin = double_contract(rk, rk);
    }
    return out;
  }

  std::size_t size() const { return ctx_.data->size(); }

 private:
  void validate() const {
    if (ctx_.data == nullptr) throw IncompleteContext("no dataset bound");
    const Dataset& d = *ctx_.data;
    const std::size_t n = d.size();
    if (!d.scaled) throw IncompleteContext("dataset must be nondimensionalized");
    if (!d.has_rates()) throw IncompleteContext("dataset has no rates");
    if (n == 0) throw IncompleteContext("empty dataset");
    if (ctx_.gamma.size() != n || ctx_.gamma_dot.size() != n) {
      throw IncompleteContext(fmt::format("gamma outputs for {} of {} samples", ctx_.gamma.size(), n));
    }
    if (flags_of(ctx_.kind).kinematic_on && (ctx_.beta.size() != n || ctx_.beta_dot.size() != n)) {
      throw IncompleteContext("kinematic model needs beta outputs at every sample");
    }
    if (!ctx_.sigma.empty() && (ctx_.sigma.size() != n || ctx_.sigma_dot.size() != n)) {
      throw IncompleteContext("stress network outputs must cover every sample");
    }
    if (!(ctx_.eps_star > 0.0)) throw IncompleteContext("eps_star must be positive");
  }

  const ResidualContext& ctx_;
  const LossOptions& opt_;
  ModelFlags f_, fy_;
  ad::Tape* tape_ = nullptr;
  Expr zero_;
};

}  // namespace

Expr mse_eq(std::span<const Expr> f, std::span<const double> targets) {
  check_lengths(f.size(), targets.size());
  std::vector<Expr> sq;
  sq.reserve(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Expr e = f[i] - targets[i];
    sq.push_back(e * e);
  }
  return mean(sq);
}

Expr mse_le(std::span<const Expr> f, std::span<const double> targets, const GateConfig& g) {
  check_lengths(f.size(), targets.size());
  std::vector<Expr> sq;
  sq.reserve(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Expr e = f[i] - targets[i];
    const Expr v = sigmoid_gate(e, g) * e;
    sq.push_back(v * v);
  }
  return mean(sq);
}

Expr mse_ge(std::span<const Expr> f, std::span<const double> targets, const GateConfig& g) {
  check_lengths(f.size(), targets.size());
  std::vector<Expr> sq;
  sq.reserve(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Expr e = f[i] - targets[i];
    const Expr v = sigmoid_gate(-e, g) * e;
    sq.push_back(v * v);
  }
  return mean(sq);
}

double LossOptions::weight(const std::string& term) const {
  const auto it = lambda.find(term);
  return it == lambda.end() ? 1.0 : it->second;
}

std::vector<LossTerm> assemble_losses(const ResidualContext& ctx, const LossOptions& opt) {
  opt.gate.validate();
  if (ctx.gamma.empty()) throw IncompleteContext("no gamma outputs");
  const Assembler as(ctx, opt);
  const std::size_t n = as.size();
  const ModelFlags& f = as.flags();

  std::vector<Expr> F(n), gd(n), kkt(n), omega, unload(n), load(n), ep(n), mult(n), kin;
  for (std::size_t i = 0; i < n; ++i) {
    const SampleTerms s = as.sample(i);
    F[i] = s.F;
    gd[i] = s.gamma_dot;
    kkt[i] = s.F * s.gamma_dot;
    unload[i] = s.unload;
    load[i] = s.load;
    ep[i] = s.ep_stress;
    mult[i] = s.ep_mult;
    if (f.kinematic_on) kin.push_back(s.kin);
    if (f.damage_on) omega.push_back(s.omega);
  }
  const std::vector<double> zeros(n, 0.0);

  std::vector<LossTerm> out;
  auto add = [&](const std::string& name, const Expr& v) { out.push_back({name, opt.weight(name), v}); };
  if (!ctx.sigma.empty()) {
    std::vector<Expr> ds(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ExprSym e = ctx.sigma[i] - ctx.data->sig[i];
      ds[i] = double_contract(e, e);
    }
    add("data_sigma", mean(ds));
  }
  add("F_nonpos", mse_le(F, zeros, opt.gate));
  add("gdot_nonneg", mse_ge(gd, zeros, opt.gate));
  add("kkt", mse_eq(kkt, zeros));
  add("elastic_unload", mean(unload));
  add("elastic_load", mean(load));
  add("ep_stress", mean(ep));
  add("ep_multiplier", mean(mult));
  if (f.kinematic_on) add("kin_hardening", mean(kin));
  if (f.damage_on) {
    add("omega_nonneg", mse_ge(omega, zeros, opt.gate));
    add("omega_le_one", mse_le(omega, std::vector<double>(n, 1.0), opt.gate));
  }
  if (opt.pin_gamma0) {
    Expr v = ctx.gamma.front() * ctx.gamma.front();
    if (f.kinematic_on) {
      const ExprSym b0 = dev(ctx.beta.front());
      v = v + double_contract(b0, b0);
    }
    add("gamma0", v);
  }
  return out;
}

Expr composite_loss(const std::vector<LossTerm>& terms) {
  if (terms.empty()) throw IncompleteContext("no loss terms");
  Expr acc = terms.front().weight * terms.front().value;
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i].weight * terms[i].value;
  return acc;
}

GateValues regime_gates(const ResidualContext& ctx, const LossOptions& opt) {
  if (ctx.gamma.empty()) throw IncompleteContext("no gamma outputs");
  const Assembler as(ctx, opt);
  GateValues g;
  for (std::size_t i = 0; i < as.size(); ++i) {
    const SampleTerms s = as.sample(i);
    g.unload.push_back(s.g_unload);
    g.load.push_back(s.g_load);
    g.plastic.push_back(s.g_plastic);
  }
  return g;
}

ParamSet<double> to_dimensionless(const ParamSet<double>& p, const ScalingFactors& s) {
  const double E = s.E_star();
  ParamSet<double> out = p;
  out[Param::kappa] = p[Param::kappa] / E;
  out[Param::mu] = p[Param::mu] / E;
  out[Param::sigma_y0] = p[Param::sigma_y0] / s.sigma_star;
  out[Param::kbar] = p[Param::kbar] / E;
  out[Param::kbar2] = p[Param::kbar2] * s.eps_star / E;
  out[Param::hbar] = p[Param::hbar] / E;
  return out;
}

ParamSet<double> to_physical(const ParamSet<double>& p, const ScalingFactors& s) {
  const double E = s.E_star();
  ParamSet<double> out = p;
  out[Param::kappa] = p[Param::kappa] * E;
  out[Param::mu] = p[Param::mu] * E;
  out[Param::sigma_y0] = p[Param::sigma_y0] * s.sigma_star;
  out[Param::kbar] = p[Param::kbar] * E;
  out[Param::kbar2] = p[Param::kbar2] * E / s.eps_star;
  out[Param::hbar] = p[Param::hbar] * E;
  return out;
}

ResidualContext bind_context(ad::Tape& tape, const Dataset& data, ModelKind kind,
                             const ParamSet<double>& dimensionless, const NetworkValues& net) {
  const std::size_t n = data.size();
  if (net.gamma.size() != n || net.gamma_dot.size() != n) {
    throw LengthMismatch(fmt::format("{} gamma values for {} samples", net.gamma.size(), n));
  }
  ResidualContext ctx;
  ctx.kind = kind;
  ctx.data = &data;
  ctx.eps_star = data.scaling.eps_star;
  for (double v : net.gamma) ctx.gamma.push_back(tape.variable(v));
  for (double v : net.gamma_dot) ctx.gamma_dot.push_back(tape.variable(v));
  if (flags_of(kind).kinematic_on) {
    if (net.beta.size() != n || net.beta_dot.size() != n) {
      throw LengthMismatch("kinematic model needs beta values at every sample");
    }
    for (const auto& b : net.beta) ctx.beta.push_back(lift(tape, b));
    for (const auto& b : net.beta_dot) ctx.beta_dot.push_back(lift(tape, b));
  }
  for (std::size_t i = 0; i < kNumParams; ++i) {
    ctx.params.values[i] = tape.variable(dimensionless.values[i]);
  }
  return ctx;
}

NetworkValues truth_network_values(const Dataset& d) {
  if (!d.truth || !d.meta.truth) throw IncompleteContext("dataset carries no ground truth");
  const auto& tr = *d.truth;
  const auto& p = d.meta.truth->values;
  const auto& s = d.scaling;
  const double t_factor = d.scaled ? s.t_star : 1.0;
  const ModelFlags f = flags_of(d.meta.kind);
  ModelFlags fy = f;
  fy.damage_on = false;
  NetworkValues out;
  const double sigma_star = d.scaled ? s.sigma_star : 1.0;
  const double eps_star = d.scaled ? s.eps_star : 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.gamma.push_back(tr.gamma[i] / eps_star);
    out.gamma_dot.push_back(tr.gamma_dot[i] * t_factor / eps_star);
    out.beta.push_back(tr.beta[i] / sigma_star);
    Sym bdot{};
    if (f.kinematic_on && tr.gamma_dot[i] > 0.0) {
      const Sym sig = sigma_star * d.sig[i];
      const auto dirs = flow_and_normal(sig, HardeningState<double>{tr.gamma[i], tr.beta[i]}, p, fy);
      bdot = ((2.0 / 3.0) * p[Param::hbar] * tr.gamma_dot[i] * t_factor / sigma_star) * dirs.r;
    }
    out.beta_dot.push_back(bdot);
  }
  return out;
}

}  // namespace pinnplast
