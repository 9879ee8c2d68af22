#pragma once

// Gram-Schmidt extraction of roto-translationally invariant features,
// basis completion, and reconstruction of world-frame vectors from
// invariant output coefficients. Works in 3D (aerodynamics) and 2D
// (bounce dynamics, invariant under rotations about z only).
//
// Inputs are direction-like quantities (velocity, spin) and never
// positions, so translation invariance is structural.

#include <array>
#include <cstddef>

#include "spinflight/errors.hpp"
#include "spinflight/vec.hpp"

namespace spinflight {

/// Inputs with an orthogonalized residual shorter than this are flagged
/// degenerate: they contribute zero feature coefficients and their frame
/// direction is completed deterministically.
constexpr double kGsDegenerateEps = 1e-8;

namespace detail {

template <class T, int D>
struct VecOf;
template <class T>
struct VecOf<T, 3> {
  using type = V3<T>;
};
template <class T>
struct VecOf<T, 2> {
  using type = V2<T>;
};

}  // namespace detail

/// Orthogonal (unnormalized) basis produced by the Gram-Schmidt sweep plus,
/// after completion, an orthonormal frame spanning the full space.
template <class T, int D>
struct GsBasis {
  using Vec = typename detail::VecOf<T, D>::type;

  int n = 0;  // number of inputs
  std::array<Vec, D> q{};
  std::array<T, D> norm{};  // |q_k|, zero when degenerate
  std::array<bool, D> degenerate{};

  bool completed = false;
  std::array<Vec, D> frame{};  // orthonormal, valid once completed
  bool has_completed_axis = false;
  Vec completed_axis{};  // 3D two-input case: unit cross product

  int rank() const {
    int r = 0;
    for (int k = 0; k < n; ++k)
      if (!degenerate[static_cast<std::size_t>(k)]) ++r;
    return r;
  }
};

/// Lower-triangular invariant coefficients c[j][k] = x_j . q_k / |q_k| for
/// k <= j, stored row-major; entries for degenerate q_k are zero.
template <class T, int D>
struct InvariantFeatures {
  static constexpr int kMaxCount = D * (D + 1) / 2;
  int n = 0;
  std::array<T, static_cast<std::size_t>(kMaxCount)> coeffs{};

  int count() const { return n * (n + 1) / 2; }
  const T& coeff(int j, int k) const { return coeffs[static_cast<std::size_t>(j * (j + 1) / 2 + k)]; }
  T& coeff(int j, int k) { return coeffs[static_cast<std::size_t>(j * (j + 1) / 2 + k)]; }
};

namespace detail {

template <class T, int D>
GsBasis<T, D> gs_sweep(const typename VecOf<T, D>::type* x, int n) {
  GsBasis<T, D> basis;
  basis.n = n;
  for (int k = 0; k < n; ++k) {
    auto qk = x[k];
    for (int j = 0; j < k; ++j) {
      if (basis.degenerate[static_cast<std::size_t>(j)]) continue;
      const T& qj_sq = basis.norm[static_cast<std::size_t>(j)];
      const T coeff = dot(basis.q[static_cast<std::size_t>(j)], x[k]) / (qj_sq * qj_sq);
      qk = qk - basis.q[static_cast<std::size_t>(j)] * coeff;
    }
    const T sq = squared_norm(qk);
    if (value_of(sq) < kGsDegenerateEps * kGsDegenerateEps) {
      basis.degenerate[static_cast<std::size_t>(k)] = true;
      basis.q[static_cast<std::size_t>(k)] = qk;
      basis.norm[static_cast<std::size_t>(k)] = T(0);
    } else {
      using std::sqrt;
      basis.q[static_cast<std::size_t>(k)] = qk;
      basis.norm[static_cast<std::size_t>(k)] = sqrt(sq);
    }
  }
  return basis;
}

// First canonical axis whose direction is not already represented by the
// frame rows accumulated so far.
template <class T>
V3<T> canonical_candidate_3d(const std::array<V3<T>, 3>& frame, int have) {
  const std::array<Vec3, 3> axes = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
  for (const Vec3& e : axes) {
    double span = 0.0;
    for (int k = 0; k < have; ++k) {
      const Vec3 f = values(frame[static_cast<std::size_t>(k)]);
      const double d = f.x * e.x + f.y * e.y + f.z * e.z;
      span += d * d;
    }
    if (span < 1.0 - 1e-6) return V3<T>(T(e.x), T(e.y), T(e.z));
  }
  return V3<T>(T(0), T(0), T(1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 3D variant.

template <class T>
GsBasis<T, 3> gs_orthogonalize(const V3<T>* x, int n) {
  if (n < 1 || n > 3) throw contract_error("gs_orthogonalize: need 1..3 input vectors");
  GsBasis<T, 3> basis = detail::gs_sweep<T, 3>(x, n);
  if (basis.rank() == 0) throw data_error("gs_orthogonalize: all inputs degenerate");
  return basis;
}

/// Completes the orthonormal frame. With exactly two non-degenerate basis
/// vectors the third direction is their unit cross product (proper rotations
/// only; reflections flip it). With fewer, missing directions fall back to
/// deterministic canonical-axis completion.
template <class T>
GsBasis<T, 3> gs_complete_basis(GsBasis<T, 3> basis) {
  int have = 0;
  for (int k = 0; k < basis.n; ++k) {
    if (basis.degenerate[static_cast<std::size_t>(k)]) continue;
    basis.frame[static_cast<std::size_t>(have++)] =
        basis.q[static_cast<std::size_t>(k)] * (T(1) / basis.norm[static_cast<std::size_t>(k)]);
  }
  if (have == 2) {
    basis.completed_axis = cross(basis.frame[0], basis.frame[1]);
    basis.has_completed_axis = true;
    basis.frame[2] = basis.completed_axis;
    have = 3;
  }
  while (have < 3) {
    V3<T> e = detail::canonical_candidate_3d<T>(basis.frame, have);
    for (int k = 0; k < have; ++k) {
      const T d = dot(basis.frame[static_cast<std::size_t>(k)], e);
      e = e - basis.frame[static_cast<std::size_t>(k)] * d;
    }
    const T len = norm(e);
    basis.frame[static_cast<std::size_t>(have++)] = e * (T(1) / len);
  }
  basis.completed = true;
  return basis;
}

template <class T>
InvariantFeatures<T, 3> gs_features_from_basis(const GsBasis<T, 3>& basis, const V3<T>* x, int n) {
  InvariantFeatures<T, 3> f;
  f.n = n;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k <= j; ++k) {
      if (basis.degenerate[static_cast<std::size_t>(k)]) {
        f.coeff(j, k) = T(0);
      } else {
        f.coeff(j, k) = dot(x[j], basis.q[static_cast<std::size_t>(k)]) / basis.norm[static_cast<std::size_t>(k)];
      }
    }
  return f;
}

template <class T>
InvariantFeatures<T, 3> gs_features(const V3<T>* x, int n) {
  return gs_features_from_basis(gs_orthogonalize(x, n), x, n);
}

/// Maps output coefficients back to a world-frame vector over the completed
/// orthonormal frame. Exact inverse of projecting a vector onto the frame.
template <class T>
V3<T> gs_reconstruct(const GsBasis<T, 3>& basis, const T* coeffs, int ncoeffs) {
  if (!basis.completed) throw contract_error("gs_reconstruct: basis not completed");
  if (ncoeffs != 3) throw contract_error("gs_reconstruct: expected 3 coefficients in 3D");
  V3<T> y{T(0), T(0), T(0)};
  for (int k = 0; k < 3; ++k) y += basis.frame[static_cast<std::size_t>(k)] * coeffs[k];
  return y;
}

// ---------------------------------------------------------------------------
// 2D variant (x- and y-axis; invariant under rotations about z).

template <class T>
GsBasis<T, 2> gs_orthogonalize(const V2<T>* x, int n) {
  if (n < 1 || n > 2) throw contract_error("gs_orthogonalize: need 1..2 input vectors");
  GsBasis<T, 2> basis = detail::gs_sweep<T, 2>(x, n);
  if (basis.rank() == 0) throw data_error("gs_orthogonalize: all inputs degenerate");
  return basis;
}

/// 2D frame completion: the missing direction is the in-plane perpendicular
/// of the first frame vector (the planar analogue of the cross product), so
/// single-input frames stay equivariant under rotations about z.
template <class T>
GsBasis<T, 2> gs_complete_basis(GsBasis<T, 2> basis) {
  int have = 0;
  for (int k = 0; k < basis.n; ++k) {
    if (basis.degenerate[static_cast<std::size_t>(k)]) continue;
    basis.frame[static_cast<std::size_t>(have++)] =
        basis.q[static_cast<std::size_t>(k)] * (T(1) / basis.norm[static_cast<std::size_t>(k)]);
  }
  if (have == 1) {
    basis.completed_axis = perp(basis.frame[0]);
    basis.has_completed_axis = true;
    basis.frame[1] = basis.completed_axis;
    have = 2;
  }
  if (have == 0) {
    basis.frame[0] = V2<T>(T(1), T(0));
    basis.frame[1] = V2<T>(T(0), T(1));
  }
  basis.completed = true;
  return basis;
}

template <class T>
InvariantFeatures<T, 2> gs_features_from_basis(const GsBasis<T, 2>& basis, const V2<T>* x, int n) {
  InvariantFeatures<T, 2> f;
  f.n = n;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k <= j; ++k) {
      if (basis.degenerate[static_cast<std::size_t>(k)]) {
        f.coeff(j, k) = T(0);
      } else {
        f.coeff(j, k) = dot(x[j], basis.q[static_cast<std::size_t>(k)]) / basis.norm[static_cast<std::size_t>(k)];
      }
    }
  return f;
}

template <class T>
InvariantFeatures<T, 2> gs_features(const V2<T>* x, int n) {
  return gs_features_from_basis(gs_orthogonalize(x, n), x, n);
}

template <class T>
V2<T> gs_reconstruct(const GsBasis<T, 2>& basis, const T* coeffs, int ncoeffs) {
  if (!basis.completed) throw contract_error("gs_reconstruct: basis not completed");
  if (ncoeffs != 2) throw contract_error("gs_reconstruct: expected 2 coefficients in 2D");
  V2<T> y{T(0), T(0)};
  for (int k = 0; k < 2; ++k) y = y + basis.frame[static_cast<std::size_t>(k)] * coeffs[k];
  return y;
}

/// Tolerant sweep used by the dynamics wrappers: never faults, returns a
/// completed frame even when every input is degenerate (canonical frame).
template <class T>
GsBasis<T, 2> gs_basis_tolerant(const V2<T>* x, int n) {
  return gs_complete_basis(detail::gs_sweep<T, 2>(x, n));
}

template <class T>
GsBasis<T, 3> gs_basis_tolerant(const V3<T>* x, int n) {
  return gs_complete_basis(detail::gs_sweep<T, 3>(x, n));
}

}  // namespace spinflight
