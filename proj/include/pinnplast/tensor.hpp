#pragma once

/**
 * @file tensor.hpp
 * @brief Symmetric second-order tensors in Voigt order and the isotropic
 * elastic stiffness.
 *
 * Components are stored in the order (11, 22, 33, 12, 13, 23) as tensor
 * components. Shear terms are never doubled in storage; the factor of two
 * appears only inside double_contract() and stiffness application.
 *
 * Everything is templated on the scalar type so the forward solver (double)
 * and the loss assembly (ad::Expr) share one code path. Binary operations
 * accept mixed scalar types (data tensors in double, network outputs as Expr).
 */

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>

#include "pinnplast/autodiff.hpp"
#include "pinnplast/errors.hpp"

namespace pinnplast {

template <class T>
struct SymTensor {
  std::array<T, 6> v{};

  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }
};

using Sym = SymTensor<double>;

/// Voigt channel names in storage order.
inline constexpr std::array<const char*, 6> kVoigtNames{"11", "22", "33", "12", "13", "23"};

template <class A, class B>
using SumT = decltype(std::declval<A>() + std::declval<B>());
template <class A, class B>
using ProdT = decltype(std::declval<A>() * std::declval<B>());

inline Sym identity_tensor() { return Sym{{1.0, 1.0, 1.0, 0.0, 0.0, 0.0}}; }
inline Sym zero_tensor() { return Sym{}; }
inline Sym diag(double a, double b, double c) { return Sym{{a, b, c, 0.0, 0.0, 0.0}}; }

template <class A, class B>
SymTensor<SumT<A, B>> operator+(const SymTensor<A>& a, const SymTensor<B>& b) {
  SymTensor<SumT<A, B>> r;
  for (std::size_t i = 0; i < 6; ++i) r[i] = a[i] + b[i];
  return r;
}

template <class A, class B>
SymTensor<SumT<A, B>> operator-(const SymTensor<A>& a, const SymTensor<B>& b) {
  SymTensor<SumT<A, B>> r;
  for (std::size_t i = 0; i < 6; ++i) r[i] = a[i] - b[i];
  return r;
}

template <class A>
SymTensor<A> operator-(const SymTensor<A>& a) {
  SymTensor<A> r;
  for (std::size_t i = 0; i < 6; ++i) r[i] = -a[i];
  return r;
}

template <class S, class A>
SymTensor<ProdT<S, A>> operator*(const S& s, const SymTensor<A>& a) {
  SymTensor<ProdT<S, A>> r;
  for (std::size_t i = 0; i < 6; ++i) r[i] = s * a[i];
  return r;
}

template <class A, class S>
SymTensor<ProdT<A, S>> operator/(const SymTensor<A>& a, const S& s) {
  SymTensor<ProdT<A, S>> r;
  for (std::size_t i = 0; i < 6; ++i) r[i] = a[i] / s;
  return r;
}

template <class A>
A trace(const SymTensor<A>& a) {
  return a[0] + a[1] + a[2];
}

/// x - (tr x / 3) 1
template <class A>
SymTensor<A> dev(const SymTensor<A>& a) {
  const A m = trace(a) / 3.0;
  return SymTensor<A>{{a[0] - m, a[1] - m, a[2] - m, a[3], a[4], a[5]}};
}

/// a:b with shear terms counted twice.
template <class A, class B>
ProdT<A, B> double_contract(const SymTensor<A>& a, const SymTensor<B>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5]);
}

inline double norm(const Sym& a) { return std::sqrt(double_contract(a, a)); }

/// sqrt(a:a + tol^2). Smooth everywhere for tol > 0, so it is safe on the tape
/// at a = 0; reduces to ||a|| for tol = 0.
template <class A>
A smooth_norm(const SymTensor<A>& a, double tol) {
  using std::sqrt;
  if (tol == 0.0) return sqrt(double_contract(a, a));
  return sqrt(double_contract(a, a) + tol * tol);
}

template <class P, class R = P>
struct Invariants {
  P p;               ///< mean pressure, compression positive: -tr(sigma)/3
  R tau;             ///< equivalent (Mises) stress sqrt(3/2)||eta||
  SymTensor<R> eta;  ///< dev(sigma) - beta
};

/// (p, tau, eta) of a stress with back-stress beta. `tol` regularizes the norm
/// (see smooth_norm); pass 0 for the exact value.
template <class S, class B>
Invariants<S, SumT<S, B>> invariants(const SymTensor<S>& sigma, const SymTensor<B>& beta,
                                     double tol = 0.0) {
  using R = SumT<S, B>;
  SymTensor<R> eta = dev(sigma) - beta;
  R tau = std::sqrt(1.5) * smooth_norm(eta, tol);
  S p = -(trace(sigma) / 3.0);
  return {p, tau, eta};
}

inline Invariants<double> invariants(const Sym& sigma) { return invariants(sigma, zero_tensor()); }

/// Isotropic stiffness (kappa - 2mu/3) 1(x)1 + 2mu I.
template <class K>
struct Stiffness {
  K kappa;
  K mu;

  K lambda() const { return kappa - (2.0 / 3.0) * mu; }

  /// C:eps
  template <class E>
  SymTensor<ProdT<K, E>> apply(const SymTensor<E>& eps) const {
    using R = ProdT<K, E>;
    const R vol = lambda() * trace(eps);
    const K two_mu = 2.0 * mu;
    SymTensor<R> r;
    for (std::size_t i = 0; i < 3; ++i) r[i] = vol + two_mu * eps[i];
    for (std::size_t i = 3; i < 6; ++i) r[i] = two_mu * eps[i];
    return r;
  }

  /// C^-1:sigma (requires kappa, mu > 0).
  template <class E>
  SymTensor<ProdT<K, E>> inverse_apply(const SymTensor<E>& sigma) const {
    using R = ProdT<K, E>;
    const R vol = trace(sigma) / (9.0 * kappa);
    const SymTensor<E> s = dev(sigma);
    SymTensor<R> r;
    for (std::size_t i = 0; i < 3; ++i) r[i] = vol + s[i] / (2.0 * mu);
    for (std::size_t i = 3; i < 6; ++i) r[i] = s[i] / (2.0 * mu);
    return r;
  }
};

/// Checked constructor: both moduli must be strictly positive.
template <class K>
Stiffness<K> elastic_stiffness(const K& kappa, const K& mu) {
  if (!(ad::value_of(kappa) > 0.0) || !(ad::value_of(mu) > 0.0)) {
    throw NonPositiveModulus("kappa and mu must be > 0, got kappa=" +
                             std::to_string(ad::value_of(kappa)) +
                             ", mu=" + std::to_string(ad::value_of(mu)));
  }
  return Stiffness<K>{kappa, mu};
}

struct YoungPoisson {
  double E;
  double nu;
};

struct BulkShear {
  double kappa;
  double mu;
};

/// E = 9 kappa mu / (3 kappa + mu), nu = (3 kappa - 2 mu) / (2 (3 kappa + mu)).
inline YoungPoisson convert_moduli(double kappa, double mu) {
  if (!(kappa > 0.0) || !(mu > 0.0)) {
    throw NonPositiveModulus("kappa and mu must be > 0");
  }
  const double d = 3.0 * kappa + mu;
  return {9.0 * kappa * mu / d, (3.0 * kappa - 2.0 * mu) / (2.0 * d)};
}

/// mu = E / 2(1+nu), kappa = E / 3(1-2nu).
inline BulkShear moduli_from_young(double E, double nu) {
  if (!(E > 0.0) || !(nu > -1.0) || !(nu < 0.5)) {
    throw NonPositiveModulus("need E > 0 and -1 < nu < 1/2");
  }
  return {E / (3.0 * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))};
}

/// Full 3x3 matrix of a Voigt tensor (row-major), used by tests as an oracle.
inline std::array<std::array<double, 3>, 3> to_matrix(const Sym& a) {
  return {{{a[0], a[3], a[4]}, {a[3], a[1], a[5]}, {a[4], a[5], a[2]}}};
}

}  // namespace pinnplast
