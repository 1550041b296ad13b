#include <gtest/gtest.h>

#include <random>

#include "pinnplast/errors.hpp"
#include "pinnplast/tensor.hpp"

using namespace pinnplast;

namespace {

Sym random_sym(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Sym a;
  for (auto& v : a.v) v = u(rng);
  return a;
}

double full_contract(const Sym& a, const Sym& b) {
  const auto A = to_matrix(a);
  const auto B = to_matrix(b);
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += A[i][j] * B[i][j];
  return s;
}

}  // namespace

TEST(Tensor, DoubleContractMatchesFullMatrix) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Sym a = random_sym(rng), b = random_sym(rng);
    EXPECT_NEAR(double_contract(a, b), full_contract(a, b), 1e-14);
  }
}

TEST(Tensor, DevIsTraceless) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 20; ++k) EXPECT_NEAR(trace(dev(random_sym(rng))), 0.0, 1e-15);
}

TEST(Tensor, UniaxialInvariants) {
  // Uniaxial stress s: p = -s/3, Mises stress = |s|.
  const auto inv = invariants(diag(300.0, 0.0, 0.0));
  EXPECT_NEAR(inv.p, -100.0, 1e-12);
  EXPECT_NEAR(inv.tau, 300.0, 1e-12);
}

TEST(Tensor, PureShearMises) {
  Sym s{};
  s[3] = 100.0;
  EXPECT_NEAR(invariants(s).tau, std::sqrt(3.0) * 100.0, 1e-10);
}

TEST(Tensor, StiffnessInverseRoundTrip) {
  std::mt19937_64 rng(3);
  const Stiffness<double> C{111.11e9, 83.33e9};
  for (int k = 0; k < 20; ++k) {
    const Sym e = random_sym(rng);
    const Sym back = C.inverse_apply(C.apply(e));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(back[i], e[i], 1e-14);
  }
}

TEST(Tensor, StiffnessIsSymmetricPositive) {
  std::mt19937_64 rng(4);
  const Stiffness<double> C{3.0, 2.0};
  for (int k = 0; k < 20; ++k) {
    const Sym a = random_sym(rng), b = random_sym(rng);
    EXPECT_NEAR(double_contract(a, C.apply(b)), double_contract(b, C.apply(a)), 1e-12);
    EXPECT_GT(double_contract(a, C.apply(a)), 0.0);
  }
}

TEST(Tensor, ModuliConversion) {
  // kappa = 111.11 GPa, mu = 83.33 GPa is E = 200 GPa, nu = 0.2.
  const auto yp = convert_moduli(111.11, 83.33);
  EXPECT_NEAR(yp.E, 200.0, 1e-2);
  EXPECT_NEAR(yp.nu, 0.2, 1e-4);
  // kappa = mu gives nu = 1/8.
  EXPECT_NEAR(convert_moduli(5.0, 5.0).nu, 0.125, 1e-15);
  const auto km = moduli_from_young(200.0, 0.2);
  EXPECT_NEAR(km.kappa, 111.111111111, 1e-6);
  EXPECT_NEAR(km.mu, 83.3333333333, 1e-6);
}

TEST(Tensor, NonPositiveModulusThrows) {
  EXPECT_THROW(elastic_stiffness(0.0, 1.0), NonPositiveModulus);
  EXPECT_THROW(elastic_stiffness(1.0, -1.0), NonPositiveModulus);
  EXPECT_THROW(convert_moduli(-1.0, 1.0), NonPositiveModulus);
}

TEST(Tensor, SmoothNormReducesToNorm) {
  const Sym a = diag(3.0, 4.0, 0.0);
  EXPECT_DOUBLE_EQ(smooth_norm(a, 0.0), 5.0);
  EXPECT_NEAR(smooth_norm(Sym{}, 1e-3), 1e-3, 1e-18);
}
