#pragma once

// Dense matrix storage with a band-aware Cholesky solve. Factor graphs over
// a time chain produce block-tridiagonal normal equations, so the solver
// takes a semi-bandwidth and skips the known-zero region; passing n-1 gives
// the plain dense algorithm. Templated so the solve can be recorded on a
// gradient tape.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "spinflight/autodiff.hpp"
#include "spinflight/errors.hpp"

namespace spinflight {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, T(0)) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  T& operator()(int r, int c) { return a_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return a_[static_cast<std::size_t>(r) * cols_ + c]; }
  void set_zero() { a_.assign(a_.size(), T(0)); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> a_;
};

/// In-place lower Cholesky A = L L^T of a symmetric positive definite matrix
/// whose entries vanish for |i-j| > bandwidth. Returns false when a pivot is
/// not strictly positive.
template <class T>
bool cholesky_factor(Matrix<T>& a, int bandwidth) {
  using std::sqrt;
  const int n = a.rows();
  for (int j = 0; j < n; ++j) {
    const int kmin = std::max(0, j - bandwidth);
    T diag = a(j, j);
    for (int k = kmin; k < j; ++k) diag -= a(j, k) * a(j, k);
    if (!(value_of(diag) > 0.0)) return false;
    const T ljj = sqrt(diag);
    a(j, j) = ljj;
    const T inv = T(1) / ljj;
    const int imax = std::min(n, j + bandwidth + 1);
    for (int i = j + 1; i < imax; ++i) {
      T s = a(i, j);
      const int k0 = std::max(kmin, i - bandwidth);
      for (int k = k0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s * inv;
    }
  }
  return true;
}

/// Solves L L^T x = b given the factor from cholesky_factor; b is replaced
/// by the solution.
template <class T>
void cholesky_solve_in_place(const Matrix<T>& l, std::vector<T>& b, int bandwidth) {
  const int n = l.rows();
  for (int i = 0; i < n; ++i) {
    T s = b[static_cast<std::size_t>(i)];
    const int k0 = std::max(0, i - bandwidth);
    for (int k = k0; k < i; ++k) s -= l(i, k) * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = s / l(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    T s = b[static_cast<std::size_t>(i)];
    const int kmax = std::min(n, i + bandwidth + 1);
    for (int k = i + 1; k < kmax; ++k) s -= l(k, i) * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = s / l(i, i);
  }
}

/// Dense SPD solve; throws when the matrix is not positive definite.
template <class T>
std::vector<T> solve_spd(Matrix<T> a, std::vector<T> b) {
  const int bw = a.rows() - 1;
  if (!cholesky_factor(a, bw)) throw numeric_error("solve_spd: matrix is not positive definite");
  cholesky_solve_in_place(a, b, bw);
  return b;
}

}  // namespace spinflight
