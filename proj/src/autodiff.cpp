#include "pinnplast/autodiff.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "pinnplast/errors.hpp"

namespace pinnplast::ad {

Tape::Tape(std::size_t node_budget) : budget_(node_budget) {}

void Tape::clear() {
  values_.clear();
  parents_.clear();
  partials_.clear();
  ++generation_;
}

void Tape::reserve(std::size_t nodes) {
  values_.reserve(nodes);
  parents_.reserve(2 * nodes);
  partials_.reserve(2 * nodes);
}

Expr Tape::push(double value, std::uint32_t pa, double da, std::uint32_t pb, double db) {
  if (values_.size() >= budget_) {
    throw DomainError(fmt::format("tape node budget {} exhausted", budget_));
  }
  const auto idx = static_cast<std::uint32_t>(values_.size());
  values_.push_back(value);
  parents_.push_back(pa);
  parents_.push_back(pb);
  partials_.push_back(da);
  partials_.push_back(db);
  return Expr(this, idx, generation_, value);
}

Expr Tape::variable(double value) { return push(value, kNone, 0.0, kNone, 0.0); }

void Tape::check_live(const Expr& e) const {
  if (e.tape_ != this || e.generation_ != generation_ || e.index_ >= values_.size()) {
    throw StaleExpr(fmt::format("expression #{} (generation {}) is not live on this tape "
                                "(generation {})",
                                e.index_, e.generation_, generation_));
  }
}

Expr Tape::record_unary(double value, const Expr& a, double da) {
  check_live(a);
  return push(value, a.index_, da, kNone, 0.0);
}

Expr Tape::record_binary(double value, const Expr& a, double da, const Expr& b, double db) {
  check_live(a);
  check_live(b);
  return push(value, a.index_, da, b.index_, db);
}

void Tape::backward_all(const Expr& output, std::vector<double>& adjoints) const {
  check_live(output);
  adjoints.assign(values_.size(), 0.0);
  adjoints[output.index_] = 1.0;
  for (std::size_t i = output.index_ + 1; i-- > 0;) {
    const double adj = adjoints[i];
    if (adj == 0.0) continue;
    const std::uint32_t pa = parents_[2 * i];
    const std::uint32_t pb = parents_[2 * i + 1];
    if (pa != kNone) adjoints[pa] += adj * partials_[2 * i];
    if (pb != kNone) adjoints[pb] += adj * partials_[2 * i + 1];
  }
}

std::vector<double> Tape::backward(const Expr& output, std::span<const Expr> wrt) const {
  std::vector<double> adjoints;
  backward_all(output, adjoints);
  std::vector<double> grads;
  grads.reserve(wrt.size());
  for (const Expr& w : wrt) {
    check_live(w);
    grads.push_back(adjoints[w.index()]);
  }
  return grads;
}

// ---- primitives -----------------------------------------------------------

namespace {

Tape& tape_of(const Expr& a) {
  if (a.tape() == nullptr) throw StaleExpr("default-constructed expression used in arithmetic");
  return *a.tape();
}

Tape& tape_of(const Expr& a, const Expr& b) {
  if (a.tape() != b.tape()) throw StaleExpr("operands recorded on different tapes");
  return tape_of(a);
}

}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  return tape_of(a, b).record_binary(a.value() + b.value(), a, 1.0, b, 1.0);
}
Expr operator-(const Expr& a, const Expr& b) {
  return tape_of(a, b).record_binary(a.value() - b.value(), a, 1.0, b, -1.0);
}
Expr operator*(const Expr& a, const Expr& b) {
  return tape_of(a, b).record_binary(a.value() * b.value(), a, b.value(), b, a.value());
}
Expr operator/(const Expr& a, const Expr& b) {
  if (b.value() == 0.0) {
    throw DomainError(fmt::format("division of {} by exact zero", a.value()));
  }
  const double inv = 1.0 / b.value();
  const double q = a.value() * inv;
  return tape_of(a, b).record_binary(q, a, inv, b, -q * inv);
}
Expr operator-(const Expr& a) { return tape_of(a).record_unary(-a.value(), a, -1.0); }

Expr operator+(const Expr& a, double b) { return tape_of(a).record_unary(a.value() + b, a, 1.0); }
Expr operator+(double a, const Expr& b) { return b + a; }
Expr operator-(const Expr& a, double b) { return tape_of(a).record_unary(a.value() - b, a, 1.0); }
Expr operator-(double a, const Expr& b) { return tape_of(b).record_unary(a - b.value(), b, -1.0); }
Expr operator*(const Expr& a, double b) { return tape_of(a).record_unary(a.value() * b, a, b); }
Expr operator*(double a, const Expr& b) { return b * a; }
Expr operator/(const Expr& a, double b) {
  if (b == 0.0) throw DomainError(fmt::format("division of {} by exact zero", a.value()));
  return tape_of(a).record_unary(a.value() / b, a, 1.0 / b);
}
Expr operator/(double a, const Expr& b) {
  if (b.value() == 0.0) throw DomainError(fmt::format("division of {} by exact zero", a));
  const double q = a / b.value();
  return tape_of(b).record_unary(q, b, -q / b.value());
}

Expr sqrt(const Expr& a) {
  if (!(a.value() > 0.0)) {
    throw DomainError(fmt::format("sqrt of non-positive argument {}", a.value()));
  }
  const double s = std::sqrt(a.value());
  return tape_of(a).record_unary(s, a, 0.5 / s);
}

Expr exp(const Expr& a) {
  const double e = std::exp(a.value());
  return tape_of(a).record_unary(e, a, e);
}

Expr log(const Expr& a) {
  if (!(a.value() > 0.0)) {
    throw DomainError(fmt::format("log of non-positive argument {}", a.value()));
  }
  return tape_of(a).record_unary(std::log(a.value()), a, 1.0 / a.value());
}

Expr tanh(const Expr& a) {
  const double t = std::tanh(a.value());
  return tape_of(a).record_unary(t, a, 1.0 - t * t);
}

Expr pow(const Expr& a, double exponent) {
  if (a.value() < 0.0 && exponent != std::floor(exponent)) {
    throw DomainError(fmt::format("pow of negative base {} with exponent {}", a.value(), exponent));
  }
  if (a.value() == 0.0 && exponent < 1.0) {
    throw DomainError(fmt::format("pow of zero base with exponent {}", exponent));
  }
  const double v = std::pow(a.value(), exponent);
  return tape_of(a).record_unary(v, a, exponent * std::pow(a.value(), exponent - 1.0));
}

Expr square(const Expr& a) {
  return tape_of(a).record_unary(a.value() * a.value(), a, 2.0 * a.value());
}

double sigmoid(double x, double delta) {
  const double z = delta * x;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Expr sigmoid(const Expr& x, double delta) {
  const double s = sigmoid(x.value(), delta);
  return tape_of(x).record_unary(s, x, delta * s * (1.0 - s));
}

Expr cap_above(const Expr& a, double cap) {
  if (a.value() < cap) return tape_of(a).record_unary(a.value(), a, 1.0);
  return tape_of(a).record_unary(cap, a, 0.0);
}

Expr detach(const Expr& a) { return tape_of(a).variable(a.value()); }

// ---- gradient check -------------------------------------------------------

GradCheckResult grad_check(const ScalarBuilder& f, std::span<const double> point, double h,
                           std::span<const std::size_t> coords, double floor) {
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) all[i] = i;
    coords = all;
  }

  Tape tape;
  std::vector<Expr> leaves;
  leaves.reserve(point.size());
  for (double p : point) leaves.push_back(tape.variable(p));
  const Expr out = f(tape, leaves);
  std::vector<double> adjoints;
  tape.backward_all(out, adjoints);

  auto evaluate = [&](std::span<const double> x) {
    Tape t;
    std::vector<Expr> l;
    l.reserve(x.size());
    for (double p : x) l.push_back(t.variable(p));
    return f(t, l).value();
  };

  GradCheckResult result;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t c : coords) {
    const double ad = adjoints[leaves[c].index()];
    const double x0 = x[c];
    x[c] = x0 + h;
    const double fp = evaluate(x);
    x[c] = x0 - h;
    const double fm = evaluate(x);
    x[c] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(ad - fd) / std::max(std::abs(fd), floor);
    result.max_rel_error = std::max(result.max_rel_error, err);
    result.analytic.push_back(ad);
    result.numeric.push_back(fd);
  }
  return result;
}

}  // namespace pinnplast::ad
