#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pinnplast/errors.hpp"
#include "pinnplast/pinn.hpp"

using namespace pinnplast;
using ad::Expr;

namespace {

std::vector<Expr> leaves(ad::Tape& tape, const std::vector<double>& v) {
  std::vector<Expr> out;
  for (double x : v) out.push_back(tape.variable(x));
  return out;
}

// Scaled dataset whose rates come from the generating path itself.
Dataset exact_dataset(const RawPath& path, std::size_t ppc) {
  return nondimensionalize(with_path_rates(sample_dataset(path, ppc), path));
}

// Sharp gates: with delta = 200 elastic samples within ~0.02 of the yield
// surface still leak into the plastic rows.
LossOptions sharp() {
  LossOptions o;
  o.gate.delta = 1e4;
  return o;
}

double composite_at_truth(const Dataset& d, const LossOptions& opt = sharp()) {
  ad::Tape tape;
  const auto dim = to_dimensionless(d.meta.truth->values, d.scaling);
  const auto ctx = bind_context(tape, d, d.meta.kind, dim, truth_network_values(d));
  return composite_loss(assemble_losses(ctx, opt)).value();
}

const std::vector<double> kAmps{0.01, 0.02, 0.03};

}  // namespace

TEST(Gate, SigmoidValues) {
  GateConfig g;
  g.delta = 200.0;
  EXPECT_DOUBLE_EQ(sigmoid_gate(0.0, g), 0.5);
  EXPECT_NEAR(sigmoid_gate(0.05, g), 0.9999546021312976, 1e-15);
  EXPECT_NEAR(sigmoid_gate(-0.05, g), 4.5397868702434395e-05, 1e-18);
  GateConfig bad;
  bad.delta = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Gate, DetachedGateHasNoGradient) {
  ad::Tape tape;
  GateConfig g{10.0, true};
  const Expr x = tape.variable(0.1);
  const Expr y = sigmoid_gate(x, g) * x;
  const auto grad = tape.backward(y, std::vector<Expr>{x});
  EXPECT_NEAR(grad[0], sigmoid_gate(0.1, g), 1e-15);
}

TEST(Mse, EqualityExamples) {
  ad::Tape tape;
  const auto f = leaves(tape, {1.0, 3.0});
  EXPECT_DOUBLE_EQ(mse_eq(f, std::vector<double>{0.0, 0.0}).value(), 5.0);
  EXPECT_DOUBLE_EQ(mse_eq(f, std::vector<double>{1.0, 3.0}).value(), 0.0);
  const auto one = leaves(tape, {2.0});
  EXPECT_DOUBLE_EQ(mse_eq(one, std::vector<double>{-1.0}).value(), 9.0);
  EXPECT_THROW(mse_eq(f, std::vector<double>{0.0}), LengthMismatch);
  EXPECT_THROW(mse_le(f, std::vector<double>{0.0}, GateConfig{}), LengthMismatch);
}

TEST(Mse, InequalityHardLimit) {
  ad::Tape tape;
  const auto f = leaves(tape, {-1.0, 0.0, 1.0});
  const std::vector<double> z(3, 0.0);
  EXPECT_NEAR(mse_le(f, z, GateConfig{1e6, false}).value(), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(mse_ge(f, z, GateConfig{1e6, false}).value(), 1.0 / 3.0, 1e-12);
  const auto pos = leaves(tape, {1.0});
  EXPECT_LT(mse_ge(pos, std::vector<double>{0.0}, GateConfig{10.0, false}).value(), 1e-8);
  // Strictly satisfied constraints at delta = 200.
  const auto neg = leaves(tape, {-0.05, -0.2, -1.0});
  EXPECT_LT(mse_le(neg, z, GateConfig{}).value(), std::pow(4.54e-5 * 0.05, 2));
}

TEST(Mse, GateConvergesToHinge) {
  ad::Tape tape;
  const std::vector<double> fv{-0.7, -0.05, 0.02, 0.3, 1.1};
  const auto f = leaves(tape, fv);
  const std::vector<double> z(fv.size(), 0.0);
  double hinge = 0.0;
  for (double v : fv) hinge += std::pow(std::max(v, 0.0), 2);
  hinge /= static_cast<double>(fv.size());
  double prev = 1e300;
  for (double delta : {10.0, 1e2, 1e3, 1e4}) {
    const double err = std::abs(mse_le(f, z, GateConfig{delta, false}).value() - hinge);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-10);
}

TEST(Mse, KktSingleSample) {
  ad::Tape tape;
  const Expr F = tape.variable(-0.1);
  const Expr gd = tape.variable(0.2);
  const std::vector<Expr> prod{F * gd};
  EXPECT_NEAR(mse_eq(prod, std::vector<double>{0.0}).value(), 4e-4, 1e-18);
}

TEST(Composite, SumAndWeights) {
  ad::Tape tape;
  std::vector<LossTerm> terms{{"a", 1.0, tape.variable(0.3)}, {"b", 1.0, tape.variable(0.2)}};
  EXPECT_DOUBLE_EQ(composite_loss(terms).value(), 0.5);
  EXPECT_DOUBLE_EQ(composite_loss({terms[0]}).value(), 0.3);
  terms[1].weight = 4.0;
  EXPECT_DOUBLE_EQ(composite_loss(terms).value(), 0.3 + 0.8);
  EXPECT_THROW(composite_loss({}), IncompleteContext);
  LossOptions opt;
  opt.lambda["kkt"] = 2.5;
  EXPECT_EQ(opt.weight("kkt"), 2.5);
  EXPECT_EQ(opt.weight("ep_stress"), 1.0);
}

TEST(Scaling, DimensionlessRoundTrip) {
  const ScalingFactors s{3.5e8, 0.02, 6.0, 0.0};
  auto p = vmd_reference().values;
  p[Param::kbar2] = 4e9;
  p[Param::m] = 0.3;
  const auto d = to_dimensionless(p, s);
  EXPECT_DOUBLE_EQ(d[Param::kappa], p[Param::kappa] / s.E_star());
  EXPECT_DOUBLE_EQ(d[Param::sigma_y0], p[Param::sigma_y0] / s.sigma_star);
  EXPECT_DOUBLE_EQ(d[Param::alpha_s], p[Param::alpha_s]);
  EXPECT_DOUBLE_EQ(d[Param::m], 0.3);
  const auto back = to_physical(d, s);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    EXPECT_NEAR(back.values[i], p.values[i], 1e-12 * std::max(1.0, std::abs(p.values[i])));
  }
}

TEST(Residuals, ElasticOnlyGroundTruthVanishes) {
  // Peak strain 0.05% stays below the 0.1% yield strain.
  const auto path = integrate(build_uniaxial_cycles(0.01, {0.0005, 0.0005}), vmih_reference(),
                              ModelKind::VMIH);
  const auto d = finite_diff_rates(nondimensionalize(sample_dataset(path, 20)));
  ad::Tape tape;
  NetworkValues net;
  net.gamma.assign(d.size(), 0.0);
  net.gamma_dot.assign(d.size(), 0.0);
  const auto ctx = bind_context(tape, d, ModelKind::VMIH,
                                to_dimensionless(vmih_reference().values, d.scaling), net);
  const auto terms = assemble_losses(ctx, LossOptions{});
  for (const auto& t : terms) EXPECT_LT(t.value.value(), 1e-10) << t.name;
}

TEST(Residuals, VmihGroundTruthOnCyclicPath) {
  const auto path = integrate(build_uniaxial_cycles(0.01, kAmps), vmih_reference(), ModelKind::VMIH);
  const auto d = exact_dataset(path, 100);
  EXPECT_LT(composite_at_truth(d), 1e-6);
  EXPECT_LT(composite_at_truth(d, LossOptions{}), 1e-3);
  // The yield-only gate keeps half of the elastic row alive where F = 0.
  LossOptions yield = sharp();
  yield.gate_argument = GateArgument::Yield;
  EXPECT_GT(composite_at_truth(d, yield), 1.0);
}

TEST(Residuals, OtherModelsGroundTruth) {
  // 97 points per cycle: with 100 some samples fall exactly on a yield onset,
  // where the regime of the sample is ambiguous.
  {
    const auto path = integrate(build_uniaxial_cycles(0.01, kAmps), vmkh_reference(), ModelKind::VMKH);
    EXPECT_LT(composite_at_truth(exact_dataset(path, 97)), 1e-6);
  }
  {
    const auto path = integrate(build_uniaxial_cycles(0.01, {0.02, 0.04, 0.06}), vmd_reference(),
                                ModelKind::VM_DAMAGE);
    EXPECT_LT(composite_at_truth(exact_dataset(path, 97)), 1e-6);
  }
  for (auto kind : {BiaxialKind::BC, BiaxialKind::UBC}) {
    const auto path = integrate(build_biaxial(kind, -100e3, 0.005, 2), drucker_prager_soil(),
                                ModelKind::DRUCKER_PRAGER);
    EXPECT_LT(composite_at_truth(exact_dataset(path, 100)), 1e-6);
  }
}

TEST(Residuals, WrongParametersRaiseLoss) {
  const auto path = integrate(build_uniaxial_cycles(0.01, kAmps), vmih_reference(), ModelKind::VMIH);
  const auto d = exact_dataset(path, 100);
  ad::Tape tape;
  auto dim = to_dimensionless(vmih_reference().values, d.scaling);
  dim[Param::sigma_y0] *= 0.9;
  const auto ctx = bind_context(tape, d, ModelKind::VMIH, dim, truth_network_values(d));
  EXPECT_GT(composite_loss(assemble_losses(ctx, LossOptions{})).value(), 1e-4);
}

TEST(Residuals, TermNamesPerModel) {
  auto names = [](ModelKind kind, const Dataset& d) {
    ad::Tape tape;
    const auto ctx = bind_context(tape, d, kind, to_dimensionless(d.meta.truth->values, d.scaling),
                                  truth_network_values(d));
    std::vector<std::string> out;
    for (const auto& t : assemble_losses(ctx, LossOptions{})) out.push_back(t.name);
    return out;
  };
  const auto vmih = exact_dataset(
      integrate(build_uniaxial_cycles(0.01, {0.01}), vmih_reference(), ModelKind::VMIH), 20);
  EXPECT_EQ(names(ModelKind::VMIH, vmih),
            (std::vector<std::string>{"F_nonpos", "gdot_nonneg", "kkt", "elastic_unload",
                                      "elastic_load", "ep_stress", "ep_multiplier", "gamma0"}));
  auto vmd = exact_dataset(
      integrate(build_uniaxial_cycles(0.01, {0.02}), vmd_reference(), ModelKind::VM_DAMAGE), 20);
  const auto n = names(ModelKind::VM_DAMAGE, vmd);
  EXPECT_EQ(n[7], "omega_nonneg");
  EXPECT_EQ(n[8], "omega_le_one");
}

TEST(Residuals, IncompleteContext) {
  const auto d = exact_dataset(
      integrate(build_uniaxial_cycles(0.01, {0.01}), vmkh_reference(), ModelKind::VMKH), 20);
  ad::Tape tape;
  NetworkValues net;
  net.gamma.assign(d.size(), 0.0);
  net.gamma_dot.assign(d.size(), 0.0);
  auto ctx = bind_context(tape, d, ModelKind::VMIH, to_dimensionless(vmkh_reference().values, d.scaling), net);
  ctx.kind = ModelKind::VMKH;  // no beta outputs bound
  EXPECT_THROW(assemble_losses(ctx, LossOptions{}), IncompleteContext);
  ctx.kind = ModelKind::VMIH;
  ctx.gamma.pop_back();
  EXPECT_THROW(assemble_losses(ctx, LossOptions{}), IncompleteContext);
  ResidualContext empty;
  EXPECT_THROW(assemble_losses(empty, LossOptions{}), IncompleteContext);
}

TEST(Residuals, RegimeGatesPartitionUnity) {
  const auto path = integrate(build_uniaxial_cycles(0.01, kAmps), vmih_reference(), ModelKind::VMIH);
  const auto d = exact_dataset(path, 50);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 2.0);
  NetworkValues net;
  for (std::size_t i = 0; i < d.size(); ++i) {
    net.gamma.push_back(u(rng));
    net.gamma_dot.push_back(u(rng));
  }
  for (double delta : {10.0, 200.0, 1e4}) {
    for (bool strict : {true, false}) {
      ad::Tape tape;
      LossOptions opt;
      opt.gate.delta = delta;
      opt.strict_text_gates = strict;
      const auto ctx = bind_context(tape, d, ModelKind::VMIH,
                                    to_dimensionless(vmih_reference().values, d.scaling), net);
      const auto g = regime_gates(ctx, opt);
      for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_LE(g.unload[i] + g.load[i] + g.plastic[i], 1.0 + 1e-12);
        EXPECT_GE(g.unload[i], 0.0);
      }
    }
  }
}

TEST(Residuals, StrictGatesSelectPhysicalRegimes) {
  const auto path = integrate(build_uniaxial_cycles(0.01, kAmps), vmih_reference(), ModelKind::VMIH);
  const auto d = exact_dataset(path, 100);
  ad::Tape tape;
  const auto ctx = bind_context(tape, d, ModelKind::VMIH,
                                to_dimensionless(vmih_reference().values, d.scaling),
                                truth_network_values(d));
  const auto g = regime_gates(ctx, LossOptions{});
  int agree = 0, total = 0;
  for (std::size_t i = 1; i + 1 < d.size(); ++i) {
    const bool plastic = d.truth->gamma_dot[i] > 0.0;
    // Uniaxial: unloading moves the axial stress towards zero.
    if (std::abs(d.sig[i][0]) < 0.02) continue;
    const bool unloading = !plastic && d.sig[i][0] * d.eps_dot[i][0] < 0.0;
    ++total;
    if (plastic && g.plastic[i] > 0.4) ++agree;
    if (unloading && g.unload[i] > 0.99) ++agree;
    if (!plastic && !unloading && g.load[i] > 0.99) ++agree;
  }
  EXPECT_GE(agree, total - 3);
}

TEST(Residuals, GradientMatchesFiniteDifferences) {
  const auto path = integrate(build_uniaxial_cycles(0.01, {0.01}), vmkh_reference(), ModelKind::VMKH);
  const auto d = exact_dataset(path, 9);  // 10 points
  const auto truth = truth_network_values(d);
  const auto dim = to_dimensionless(vmkh_reference().values, d.scaling);
  std::vector<double> point;
  for (std::size_t i = 0; i < d.size(); ++i) {
    point.push_back(truth.gamma[i] * 1.1 + 0.01);
    point.push_back(truth.gamma_dot[i] * 0.9 + 0.02);
  }
  for (double v : dim.values) point.push_back(v * 1.05);
  LossOptions opt;
  opt.gate.delta = 10.0;
  ad::ScalarBuilder f = [&](ad::Tape& tape, std::span<const Expr> x) {
    ResidualContext ctx;
    ctx.kind = ModelKind::VMKH;
    ctx.data = &d;
    ctx.eps_star = d.scaling.eps_star;
    for (std::size_t i = 0; i < d.size(); ++i) {
      ctx.gamma.push_back(x[2 * i]);
      ctx.gamma_dot.push_back(x[2 * i + 1]);
      ExprSym b, bd;
      for (std::size_t k = 0; k < 6; ++k) {
        b[k] = tape.variable(truth.beta[i][k]);
        bd[k] = tape.variable(truth.beta_dot[i][k]);
      }
      ctx.beta.push_back(b);
      ctx.beta_dot.push_back(bd);
    }
    for (std::size_t k = 0; k < kNumParams; ++k) ctx.params.values[k] = x[2 * d.size() + k];
    return composite_loss(assemble_losses(ctx, opt));
  };
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, 2 * d.size() + 5);  // skip m, alpha_s
  std::vector<std::size_t> coords;
  for (int i = 0; i < 20; ++i) coords.push_back(pick(rng));
  const auto r = ad::grad_check(f, point, 1e-6, coords, 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-4);
}
