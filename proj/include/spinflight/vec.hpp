#pragma once

#include <array>
#include <cmath>

#include "spinflight/autodiff.hpp"

namespace spinflight {

using ad::value_of;

/// 3-vector over any differentiable scalar. Units are context-dependent:
/// metres, m/s, m/s^2, rad/s or latent spin units.
template <class T>
struct V3 {
  T x{}, y{}, z{};

  V3() = default;
  V3(T x_, T y_, T z_) : x(std::move(x_)), y(std::move(y_)), z(std::move(z_)) {}

  template <class U>
  static V3 from(const V3<U>& o) {
    return V3(T(o.x), T(o.y), T(o.z));
  }

  V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  V3 operator-() const { return {-x, -y, -z}; }
  V3 operator*(const T& s) const { return {x * s, y * s, z * s}; }
  V3& operator+=(const V3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  V3& operator-=(const V3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
};

template <class T>
V3<T> operator*(const T& s, const V3<T>& v) {
  return v * s;
}

template <class T>
V3<T> operator*(double s, const V3<T>& v) {
  return v * T(s);
}

template <class T>
T dot(const V3<T>& a, const V3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
V3<T> cross(const V3<T>& a, const V3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T squared_norm(const V3<T>& a) {
  return dot(a, a);
}

template <class T>
T norm(const V3<T>& a) {
  using std::sqrt;
  return sqrt(squared_norm(a));
}

template <class T>
V3<double> values(const V3<T>& a) {
  return {value_of(a.x), value_of(a.y), value_of(a.z)};
}

using Vec3 = V3<double>;

/// 2-vector used by the planar Gram-Schmidt variant (bounce dynamics).
template <class T>
struct V2 {
  T x{}, y{};

  V2() = default;
  V2(T x_, T y_) : x(std::move(x_)), y(std::move(y_)) {}

  V2 operator+(const V2& o) const { return {x + o.x, y + o.y}; }
  V2 operator-(const V2& o) const { return {x - o.x, y - o.y}; }
  V2 operator-() const { return {-x, -y}; }
  V2 operator*(const T& s) const { return {x * s, y * s}; }
};

template <class T>
T dot(const V2<T>& a, const V2<T>& b) {
  return a.x * b.x + a.y * b.y;
}

template <class T>
T squared_norm(const V2<T>& a) {
  return dot(a, a);
}

template <class T>
T norm(const V2<T>& a) {
  using std::sqrt;
  return sqrt(squared_norm(a));
}

/// In-plane perpendicular; the 2D analogue of completing a frame with a
/// cross product (rotate by +90 degrees).
template <class T>
V2<T> perp(const V2<T>& a) {
  return {-a.y, a.x};
}

using Vec2 = V2<double>;

inline bool finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Rotation about the z axis by angle (radians), proper rotation.
template <class T>
V3<T> rotate_z(const V3<T>& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {v.x * T(c) - v.y * T(s), v.x * T(s) + v.y * T(c), v.z};
}

/// 3x3 rotation matrix kept as plain doubles (used by tests and augmentation).
struct Rot3 {
  std::array<std::array<double, 3>, 3> m{};

  static Rot3 identity() {
    Rot3 r;
    for (int i = 0; i < 3; ++i) r.m[i][i] = 1.0;
    return r;
  }

  /// Proper rotation from an axis-angle pair; axis need not be unit length.
  static Rot3 axis_angle(const Vec3& axis, double angle) {
    const double n = std::sqrt(axis.x * axis.x + axis.y * axis.y + axis.z * axis.z);
    const double ux = axis.x / n, uy = axis.y / n, uz = axis.z / n;
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Rot3 r;
    r.m = {{{c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s},
            {uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s},
            {uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t}}};
    return r;
  }

  static Rot3 about_z(double angle) { return axis_angle({0, 0, 1}, angle); }

  template <class T>
  V3<T> apply(const V3<T>& v) const {
    return {T(m[0][0]) * v.x + T(m[0][1]) * v.y + T(m[0][2]) * v.z,
            T(m[1][0]) * v.x + T(m[1][1]) * v.y + T(m[1][2]) * v.z,
            T(m[2][0]) * v.x + T(m[2][1]) * v.y + T(m[2][2]) * v.z};
  }
};

}  // namespace spinflight
