#pragma once

// Reverse-mode automatic differentiation over a dynamically recorded scalar
// tape. Values are computed eagerly when a node is recorded; a single reverse
// sweep accumulates adjoints for every node up to the requested output.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pinnplast::ad {

class Tape;

/// Handle to a recorded node. Only valid for the tape generation it was
/// recorded in; Tape::clear() invalidates every outstanding Expr.
class Expr {
 public:
  Expr() = default;

  double value() const noexcept { return value_; }
  std::uint32_t index() const noexcept { return index_; }
  Tape* tape() const noexcept { return tape_; }
  std::uint64_t generation() const noexcept { return generation_; }

 private:
  friend class Tape;
  Expr(Tape* tape, std::uint32_t index, std::uint64_t generation, double value)
      : tape_(tape), index_(index), generation_(generation), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  std::uint64_t generation_ = 0;
  double value_ = 0.0;
};

class Tape {
 public:
  static constexpr std::size_t kDefaultBudget = 200'000'000;

  explicit Tape(std::size_t node_budget = kDefaultBudget);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records an independent leaf.
  Expr variable(double value);

  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t generation() const noexcept { return generation_; }

  /// Drops every node and bumps the generation counter.
  void clear();
  void reserve(std::size_t nodes);

  /// Gradient of `output` with respect to each entry of `wrt`. Leaves the
  /// sweep does not reach get 0.
  std::vector<double> backward(const Expr& output, std::span<const Expr> wrt) const;

  /// Full adjoint vector (one entry per node) for callers that read many leaves.
  void backward_all(const Expr& output, std::vector<double>& adjoints) const;

  // Node recording used by the primitives below.
  Expr record_unary(double value, const Expr& a, double da);
  Expr record_binary(double value, const Expr& a, double da, const Expr& b, double db);

  void check_live(const Expr& e) const;

 private:
  static constexpr std::uint32_t kNone = UINT32_MAX;

  Expr push(double value, std::uint32_t pa, double da, std::uint32_t pb, double db);

  std::vector<double> values_;
  std::vector<std::uint32_t> parents_;  // 2 per node
  std::vector<double> partials_;        // 2 per node
  std::size_t budget_;
  std::uint64_t generation_ = 1;
};

// ---- primitives -----------------------------------------------------------

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

Expr operator+(const Expr& a, double b);
Expr operator+(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator*(double a, const Expr& b);
Expr operator/(const Expr& a, double b);
Expr operator/(double a, const Expr& b);

inline Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
inline Expr& operator-=(Expr& a, const Expr& b) { return a = a - b; }
inline Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }
inline Expr& operator+=(Expr& a, double b) { return a = a + b; }
inline Expr& operator*=(Expr& a, double b) { return a = a * b; }

Expr sqrt(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr tanh(const Expr& a);
Expr pow(const Expr& a, double exponent);
Expr square(const Expr& a);

/// Logistic gate 1/(1+exp(-delta*x)).
Expr sigmoid(const Expr& x, double delta);

/// min(a, cap); the derivative is 1 below the cap and 0 at or above it.
Expr cap_above(const Expr& a, double cap);

/// Same value, recorded as a fresh leaf: no gradient flows through it.
Expr detach(const Expr& a);

// Plain-double counterparts so templated code reads the same for both scalars.
inline double square(double a) { return a * a; }
double sigmoid(double x, double delta);
inline double cap_above(double a, double cap) { return a < cap ? a : cap; }
inline double detach(double a) { return a; }

inline double value_of(double x) { return x; }
inline double value_of(const Expr& x) { return x.value(); }

/// A function from a point to a scalar, recorded on the given tape.
using ScalarBuilder = std::function<Expr(Tape&, std::span<const Expr>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares backward() against central finite differences on the listed
/// coordinates (all when empty). Per-coordinate error is
/// |g_ad - g_fd| / max(|g_fd|, floor).
GradCheckResult grad_check(const ScalarBuilder& f, std::span<const double> point,
                           double h, std::span<const std::size_t> coords = {},
                           double floor = 1e-8);

}  // namespace pinnplast::ad
