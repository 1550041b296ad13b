#include "pinnplast/ode.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pinnplast/errors.hpp"

namespace pinnplast::ode {

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace

State DenseStep::eval(double t) const {
  State y(coeffs[0].size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = eval(t, i);
  return y;
}

double DenseStep::eval(double t, std::size_t i) const {
  const double theta = h == 0.0 ? 0.0 : (t - t0) / h;
  const double theta1 = 1.0 - theta;
  return coeffs[0][i] +
         theta * (coeffs[1][i] +
                  theta1 * (coeffs[2][i] + theta * (coeffs[3][i] + theta1 * coeffs[4][i])));
}

double DenseStep::deriv(double t, std::size_t i) const {
  if (h == 0.0) return 0.0;
  const double th = (t - t0) / h;
  const double c1 = coeffs[1][i], c2 = coeffs[2][i], c3 = coeffs[3][i], c4 = coeffs[4][i];
  // y = c0 + th c1 + th(1-th) c2 + th^2(1-th) c3 + th^2(1-th)^2 c4
  const double d = c1 + (1.0 - 2.0 * th) * c2 + (2.0 * th - 3.0 * th * th) * c3 +
                   (2.0 * th * (1.0 - th) * (1.0 - 2.0 * th)) * c4;
  return d / h;
}

double error_norm(const State& err, const State& y0, const State& y1, const Tolerances& tol) {
  double acc = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double sc = tol.atol + tol.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    acc += (err[i] / sc) * (err[i] / sc);
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

double initial_step(const Rhs& f, double t, const State& y, double t_max, const Tolerances& tol) {
  const std::size_t n = y.size();
  State f0(n), y1(n), f1(n);
  f(t, y, f0);
  double dnf = 0.0, dny = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sk = tol.atol + tol.rtol * std::abs(y[i]);
    dnf += (f0[i] / sk) * (f0[i] / sk);
    dny += (y[i] / sk) * (y[i] / sk);
  }
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
  h = std::min(h, t_max - t);
  for (std::size_t i = 0; i < n; ++i) y1[i] = y[i] + h * f0[i];
  f(t + h, y1, f1);
  double der2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sk = tol.atol + tol.rtol * std::abs(y[i]);
    der2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
  }
  der2 = std::sqrt(der2) / h;
  const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, t_max - t});
}

StepResult dopri5_step(const Rhs& f, double t, const State& y, double h, double t_max,
                       const Tolerances& tol) {
  const std::size_t n = y.size();
  State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y1(n), err(n);
  f(t, y, k1);
  StepResult out;
  h = std::min(h, t_max - t);
  for (;;) {
    if (h < tol.h_min) {
      throw StepUnderflow(fmt::format("step size {} below minimum {} at t={}", h, tol.h_min, t));
    }
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    f(t + c2 * h, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    f(t + c3 * h, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(t + c4 * h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    f(t + c5 * h, tmp, k5);
    for (std::size_t i = 0; i < n; ++i) {
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    const double t_end = (t + h >= t_max) ? t_max : t + h;
    f(t_end, tmp, k6);
    for (std::size_t i = 0; i < n; ++i) {
      y1[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    }
    f(t_end, y1, k7);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    const double en = error_norm(err, y, y1, tol);
    if (!std::isfinite(en)) {
      h *= 0.1;
      ++out.rejected;
      continue;
    }
    if (en <= 1.0) {
      DenseStep& d = out.dense;
      d.t0 = t;
      d.h = h;
      for (auto& c : d.coeffs) c.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double ydiff = y1[i] - y[i];
        const double bspl = h * k1[i] - ydiff;
        d.coeffs[0][i] = y[i];
        d.coeffs[1][i] = ydiff;
        d.coeffs[2][i] = bspl;
        d.coeffs[3][i] = ydiff - h * k7[i] - bspl;
        d.coeffs[4][i] =
            h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      }
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      out.h_next = h * fac;
      out.y1 = std::move(y1);
      return out;
    }
    h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
    ++out.rejected;
  }
}

}  // namespace pinnplast::ode
