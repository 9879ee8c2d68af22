#pragma once

// Reverse-mode tape (Var) for training losses and forward-mode duals
// (Dual<T, N>) for the narrow Jacobians needed by factors and the EKF.
// Numeric code throughout the library is templated on the scalar type, so
// the same kernel runs in plain double, records onto a tape, or propagates
// dual numbers; Dual<Var, N> composes both for Jacobians that must stay
// differentiable with respect to model parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "spinflight/errors.hpp"

namespace spinflight::ad {

class Tape {
 public:
  struct Entry {
    std::int32_t a;
    std::int32_t b;
    double pa;
    double pb;
  };

  Tape() { entries_.reserve(1u << 16); }

  std::int32_t leaf() {
    entries_.push_back({-1, -1, 0.0, 0.0});
    return last();
  }
  std::int32_t unary(std::int32_t a, double pa) {
    entries_.push_back({a, -1, pa, 0.0});
    return last();
  }
  std::int32_t binary(std::int32_t a, std::int32_t b, double pa, double pb) {
    entries_.push_back({a, b, pa, pb});
    return last();
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Adjoints of every node with respect to node y (seeded with 1).
  void backward(std::int32_t y, std::vector<double>& adjoint) const {
    adjoint.assign(entries_.size(), 0.0);
    if (y < 0) return;
    adjoint[static_cast<std::size_t>(y)] = 1.0;
    for (std::int32_t i = y; i >= 0; --i) {
      const double g = adjoint[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      const Entry& e = entries_[static_cast<std::size_t>(i)];
      if (e.a >= 0) adjoint[static_cast<std::size_t>(e.a)] += e.pa * g;
      if (e.b >= 0) adjoint[static_cast<std::size_t>(e.b)] += e.pb * g;
    }
  }

 private:
  std::int32_t last() const { return static_cast<std::int32_t>(entries_.size()) - 1; }
  std::vector<Entry> entries_;
};

inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

/// Differentiable scalar. A Var with index -1 is a constant and records
/// nothing; leaves are created through GradientTape::leaf.
struct Var {
  double v = 0.0;
  std::int32_t i = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constant lift
  bool is_const() const { return i < 0; }
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.v; }

namespace detail {
inline Tape& tape() { return *active_tape(); }
}  // namespace detail

// Adding a constant shifts the value but leaves the derivative untouched, so
// the result can alias the operand's node instead of recording a new one.
inline Var operator+(const Var& x, const Var& y) {
  Var r(x.v + y.v);
  if (x.i >= 0 && y.i >= 0) r.i = detail::tape().binary(x.i, y.i, 1.0, 1.0);
  else if (x.i >= 0) r.i = x.i;
  else if (y.i >= 0) r.i = y.i;
  return r;
}

inline Var operator-(const Var& x, const Var& y) {
  Var r(x.v - y.v);
  if (x.i >= 0 && y.i >= 0) r.i = detail::tape().binary(x.i, y.i, 1.0, -1.0);
  else if (x.i >= 0) r.i = x.i;
  else if (y.i >= 0) r.i = detail::tape().unary(y.i, -1.0);
  return r;
}

inline Var operator-(const Var& x) {
  Var r(-x.v);
  if (x.i >= 0) r.i = detail::tape().unary(x.i, -1.0);
  return r;
}

inline Var operator*(const Var& x, const Var& y) {
  Var r(x.v * y.v);
  if (x.i >= 0 && y.i >= 0) r.i = detail::tape().binary(x.i, y.i, y.v, x.v);
  else if (x.i >= 0) {
    if (y.v == 0.0) return Var(0.0);
    if (y.v == 1.0) return x;
    r.i = detail::tape().unary(x.i, y.v);
  } else if (y.i >= 0) {
    if (x.v == 0.0) return Var(0.0);
    if (x.v == 1.0) return y;
    r.i = detail::tape().unary(y.i, x.v);
  }
  return r;
}

inline Var operator/(const Var& x, const Var& y) {
  const double inv = 1.0 / y.v;
  Var r(x.v * inv);
  if (x.i >= 0 && y.i >= 0) r.i = detail::tape().binary(x.i, y.i, inv, -x.v * inv * inv);
  else if (x.i >= 0) r.i = detail::tape().unary(x.i, inv);
  else if (y.i >= 0) {
    if (x.v == 0.0) return Var(0.0);
    r.i = detail::tape().unary(y.i, -x.v * inv * inv);
  }
  return r;
}

inline Var& operator+=(Var& x, const Var& y) { return x = x + y; }
inline Var& operator-=(Var& x, const Var& y) { return x = x - y; }
inline Var& operator*=(Var& x, const Var& y) { return x = x * y; }
inline Var& operator/=(Var& x, const Var& y) { return x = x / y; }

inline bool operator<(const Var& x, const Var& y) { return x.v < y.v; }
inline bool operator>(const Var& x, const Var& y) { return x.v > y.v; }
inline bool operator<=(const Var& x, const Var& y) { return x.v <= y.v; }
inline bool operator>=(const Var& x, const Var& y) { return x.v >= y.v; }

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.v);
  Var r(s);
  if (x.i >= 0) r.i = detail::tape().unary(x.i, 0.5 / s);
  return r;
}

inline Var exp(const Var& x) {
  const double e = std::exp(x.v);
  Var r(e);
  if (x.i >= 0) r.i = detail::tape().unary(x.i, e);
  return r;
}

inline Var log(const Var& x) {
  Var r(std::log(x.v));
  if (x.i >= 0) r.i = detail::tape().unary(x.i, 1.0 / x.v);
  return r;
}

inline Var tanh(const Var& x) {
  const double t = std::tanh(x.v);
  Var r(t);
  if (x.i >= 0) r.i = detail::tape().unary(x.i, 1.0 - t * t);
  return r;
}

inline Var fabs(const Var& x) {
  Var r(std::fabs(x.v));
  if (x.i >= 0) r.i = detail::tape().unary(x.i, x.v < 0.0 ? -1.0 : 1.0);
  return r;
}

inline Var max(const Var& x, const Var& y) { return x.v >= y.v ? x : y; }
inline Var min(const Var& x, const Var& y) { return x.v <= y.v ? x : y; }

/// RAII recording context. Exactly one per thread may be live.
class GradientTape {
 public:
  GradientTape() {
    prev_ = active_tape();
    active_tape() = &tape_;
  }
  ~GradientTape() { active_tape() = prev_; }
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  Var leaf(double value) {
    Var x(value);
    x.i = tape_.leaf();
    return x;
  }

  std::vector<Var> leaves(std::span<const double> values) {
    std::vector<Var> xs;
    xs.reserve(values.size());
    for (double v : values) xs.push_back(leaf(v));
    return xs;
  }

  /// d(y)/d(xs), one entry per requested leaf.
  std::vector<double> gradient(const Var& y, std::span<const Var> xs) {
    tape_.backward(y.i, adjoint_);
    std::vector<double> g(xs.size(), 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k)
      if (xs[k].i >= 0) g[k] = adjoint_[static_cast<std::size_t>(xs[k].i)];
    return g;
  }

  std::size_t node_count() const { return tape_.size(); }

 private:
  Tape tape_;
  Tape* prev_ = nullptr;
  std::vector<double> adjoint_;
};

// ---------------------------------------------------------------------------
// Forward-mode dual numbers with N tangent directions.

template <class T, int N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() { d.fill(T(0)); }
  Dual(const T& value) : v(value) { d.fill(T(0)); }  // NOLINT
  template <class U = T, class = std::enable_if_t<!std::is_same_v<U, double>>>
  Dual(double value) : v(value) {  // NOLINT
    d.fill(T(0));
  }

  static Dual seeded(const T& value, int direction) {
    Dual x(value);
    x.d[static_cast<std::size_t>(direction)] = T(1);
    return x;
  }
};

template <class T, int N>
double value_of(const Dual<T, N>& x) {
  return value_of(x.v);
}

template <class T, int N>
Dual<T, N> operator+(const Dual<T, N>& x, const Dual<T, N>& y) {
  Dual<T, N> r(x.v + y.v);
  for (int k = 0; k < N; ++k) r.d[k] = x.d[k] + y.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& x, const Dual<T, N>& y) {
  Dual<T, N> r(x.v - y.v);
  for (int k = 0; k < N; ++k) r.d[k] = x.d[k] - y.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& x) {
  Dual<T, N> r(-x.v);
  for (int k = 0; k < N; ++k) r.d[k] = -x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& x, const Dual<T, N>& y) {
  Dual<T, N> r(x.v * y.v);
  for (int k = 0; k < N; ++k) r.d[k] = x.d[k] * y.v + x.v * y.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& x, const Dual<T, N>& y) {
  const T inv = T(1) / y.v;
  Dual<T, N> r(x.v * inv);
  for (int k = 0; k < N; ++k) r.d[k] = (x.d[k] - r.v * y.d[k]) * inv;
  return r;
}

// double-on-the-left/right conveniences so generic code can mix literals.
template <class T, int N>
Dual<T, N> operator+(double x, const Dual<T, N>& y) { return Dual<T, N>(x) + y; }
template <class T, int N>
Dual<T, N> operator+(const Dual<T, N>& x, double y) { return x + Dual<T, N>(y); }
template <class T, int N>
Dual<T, N> operator-(double x, const Dual<T, N>& y) { return Dual<T, N>(x) - y; }
template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& x, double y) { return x - Dual<T, N>(y); }
template <class T, int N>
Dual<T, N> operator*(double x, const Dual<T, N>& y) {
  Dual<T, N> r(x * y.v);
  for (int k = 0; k < N; ++k) r.d[k] = x * y.d[k];
  return r;
}
template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& x, double y) { return y * x; }
template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& x, double y) { return x * (1.0 / y); }
template <class T, int N>
Dual<T, N> operator/(double x, const Dual<T, N>& y) { return Dual<T, N>(x) / y; }

template <class T, int N>
Dual<T, N>& operator+=(Dual<T, N>& x, const Dual<T, N>& y) { return x = x + y; }
template <class T, int N>
Dual<T, N>& operator-=(Dual<T, N>& x, const Dual<T, N>& y) { return x = x - y; }
template <class T, int N>
Dual<T, N>& operator*=(Dual<T, N>& x, const Dual<T, N>& y) { return x = x * y; }

template <class T, int N>
bool operator<(const Dual<T, N>& x, const Dual<T, N>& y) { return value_of(x) < value_of(y); }
template <class T, int N>
bool operator>(const Dual<T, N>& x, const Dual<T, N>& y) { return value_of(x) > value_of(y); }
template <class T, int N>
bool operator<=(const Dual<T, N>& x, const Dual<T, N>& y) { return value_of(x) <= value_of(y); }
template <class T, int N>
bool operator>=(const Dual<T, N>& x, const Dual<T, N>& y) { return value_of(x) >= value_of(y); }

template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  using std::sqrt;
  Dual<T, N> r;
  r.v = sqrt(x.v);
  const T half_inv = T(0.5) / r.v;
  for (int k = 0; k < N; ++k) r.d[k] = half_inv * x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& x) {
  using std::exp;
  Dual<T, N> r;
  r.v = exp(x.v);
  for (int k = 0; k < N; ++k) r.d[k] = r.v * x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> log(const Dual<T, N>& x) {
  using std::log;
  Dual<T, N> r;
  r.v = log(x.v);
  const T inv = T(1) / x.v;
  for (int k = 0; k < N; ++k) r.d[k] = inv * x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> tanh(const Dual<T, N>& x) {
  using std::tanh;
  Dual<T, N> r;
  r.v = tanh(x.v);
  const T sech2 = T(1) - r.v * r.v;
  for (int k = 0; k < N; ++k) r.d[k] = sech2 * x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> fabs(const Dual<T, N>& x) {
  return value_of(x) < 0.0 ? -x : x;
}

// ---------------------------------------------------------------------------
// Generic driver operations.

struct GradientVector {
  std::vector<double> values;
  double function_value = 0.0;
};

struct JacobianMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Exact gradient of a scalar-valued callable via reverse accumulation.
/// F must be invocable as f(std::span<const Var>) -> Var.
template <class F>
GradientVector gradient(F&& f, std::span<const double> x) {
  GradientTape tape;
  std::vector<Var> xs = tape.leaves(x);
  Var y = f(std::span<const Var>(xs));
  if (!std::isfinite(y.v))
    throw numeric_error("gradient: non-finite value while evaluating function");
  GradientVector g;
  g.function_value = y.v;
  g.values = tape.gradient(y, xs);
  for (double v : g.values)
    if (!std::isfinite(v)) throw numeric_error("gradient: non-finite derivative");
  return g;
}

namespace detail {
constexpr int kJacobianChunk = 8;
}

/// Jacobian of a vector-valued callable via column-wise forward accumulation.
/// F must be invocable with spans of any supported scalar type and return a
/// std::vector of that scalar.
template <class F>
JacobianMatrix jacobian(F&& f, std::span<const double> x) {
  using D = Dual<double, detail::kJacobianChunk>;
  const int n = static_cast<int>(x.size());
  JacobianMatrix jac;
  jac.cols = n;
  std::vector<D> xs(x.size());
  for (int c0 = 0; c0 < n; c0 += detail::kJacobianChunk) {
    const int width = std::min(detail::kJacobianChunk, n - c0);
    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = D(x[static_cast<std::size_t>(i)]);
    for (int k = 0; k < width; ++k)
      xs[static_cast<std::size_t>(c0 + k)].d[static_cast<std::size_t>(k)] = 1.0;
    std::vector<D> ys = f(std::span<const D>(xs));
    if (jac.rows == 0) {
      jac.rows = static_cast<int>(ys.size());
      jac.values.assign(static_cast<std::size_t>(jac.rows) * jac.cols, 0.0);
    }
    for (int r = 0; r < jac.rows; ++r) {
      if (!std::isfinite(value_of(ys[static_cast<std::size_t>(r)])))
        throw numeric_error("jacobian: non-finite value while evaluating function");
      for (int k = 0; k < width; ++k)
        jac.at(r, c0 + k) = ys[static_cast<std::size_t>(r)].d[static_cast<std::size_t>(k)];
    }
  }
  if (jac.rows == 0) {  // zero-input function: evaluate once for the shape
    std::vector<double> xd(x.begin(), x.end());
    std::vector<double> ys = f(std::span<const double>(xd));
    jac.rows = static_cast<int>(ys.size());
  }
  return jac;
}

struct GradientCheckReport {
  double max_rel_err = 0.0;
  int worst_index = -1;
  bool pass = false;
};

/// Compares the reverse-mode gradient of f against central finite
/// differences, componentwise. Relative error uses max(|a|, |b|, 1e-8) as
/// the denominator.
template <class FVar, class FDouble>
GradientCheckReport check_gradients_impl(FVar&& fvar, FDouble&& fdouble,
                                         std::span<const double> x, double step,
                                         double tolerance) {
  if (step <= 0.0) throw contract_error("check_gradients: step must be positive");
  GradientVector g = gradient(fvar, x);
  GradientCheckReport report;
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * (1.0 + std::fabs(x[i]));
    const double saved = xp[i];
    xp[i] = saved + h;
    const double fp = fdouble(std::span<const double>(xp));
    xp[i] = saved - h;
    const double fm = fdouble(std::span<const double>(xp));
    xp[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double a = g.values[i];
    const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-8});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = static_cast<int>(i);
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

/// check_gradients for a single generic callable usable with both Var and
/// double scalars.
template <class F>
GradientCheckReport check_gradients(F&& f, std::span<const double> x, double step,
                                    double tolerance) {
  auto fd = [&f](std::span<const double> xs) { return value_of(f(xs)); };
  return check_gradients_impl(f, fd, x, step, tolerance);
}

}  // namespace spinflight::ad
