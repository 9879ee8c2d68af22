#pragma once

// Domain types and world-frame conventions shared by every module.
//
// World frame: z up, origin at the table centre, table surface at
// z = 0.76 m. All types are immutable value types after construction.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spinflight/vec.hpp"

namespace spinflight {

/// Time-stamped ball state. Spin is in rad/s for the analytic model and in
/// latent spin units when produced by the spin embedding.
template <class T>
struct BallStateT {
  T t{};
  V3<T> p{};  // position, m
  V3<T> v{};  // velocity, m/s
  V3<T> w{};  // spin
};

using BallState = BallStateT<double>;

template <class T>
BallState state_values(const BallStateT<T>& s) {
  return {value_of(s.t), values(s.p), values(s.v), values(s.w)};
}

/// Integer launcher labels attached to each trajectory.
struct LauncherSetting {
  int topspin = 0;     // in [-3, 5]
  int sidespin = 0;    // in [-5, 5]
  int speed_level = 8; // in [8, 14]
};

struct Measurement {
  double t = 0.0;
  Vec3 p_obs{};
};

struct Trajectory {
  std::string id;
  LauncherSetting setting;
  std::vector<Measurement> measurements;
  std::optional<std::vector<BallState>> ground_truth;  // synthetic data only
};

/// Contact plane and bounds for bounce events.
struct TableGeometry {
  double surface_height = 0.76;  // m, standard table height
  double x_min = -1.37, x_max = 1.37;
  double y_min = -0.7625, y_max = 0.7625;
  double ball_radius = 0.02;  // m, standard ball

  double contact_height() const { return surface_height + ball_radius; }
};

// ---------------------------------------------------------------------------
// Validation. Violations are data, not faults: each entry names the field
// and index that breaks an invariant.

namespace detail {
inline void require_finite(double v, const std::string& what, std::vector<std::string>& out) {
  if (!std::isfinite(v)) out.push_back(what + ": non-finite value");
}
}  // namespace detail

inline std::vector<std::string> validate_trajectory(const Trajectory& traj) {
  std::vector<std::string> violations;
  if (traj.setting.topspin < -3 || traj.setting.topspin > 5)
    violations.push_back("setting.topspin: out of range [-3, 5]");
  if (traj.setting.sidespin < -5 || traj.setting.sidespin > 5)
    violations.push_back("setting.sidespin: out of range [-5, 5]");
  if (traj.setting.speed_level < 8 || traj.setting.speed_level > 14)
    violations.push_back("setting.speed_level: out of range [8, 14]");
  if (traj.measurements.size() < 2)
    violations.push_back("measurements: fewer than 2 entries");
  for (std::size_t i = 0; i < traj.measurements.size(); ++i) {
    const Measurement& m = traj.measurements[i];
    const std::string where = "measurements[" + std::to_string(i) + "]";
    detail::require_finite(m.t, where + ".t", violations);
    if (m.t < 0.0) violations.push_back(where + ".t: negative timestamp");
    if (!finite(m.p_obs)) violations.push_back(where + ".p: non-finite value");
    if (i > 0 && !(m.t > traj.measurements[i - 1].t))
      violations.push_back(where + ".t: non-increasing timestamp");
  }
  if (traj.ground_truth) {
    const auto& gt = *traj.ground_truth;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const std::string where = "ground_truth[" + std::to_string(i) + "]";
      detail::require_finite(gt[i].t, where + ".t", violations);
      if (!finite(gt[i].p) || !finite(gt[i].v) || !finite(gt[i].w))
        violations.push_back(where + ": non-finite value");
      if (i > 0 && !(gt[i].t > gt[i - 1].t))
        violations.push_back(where + ".t: non-increasing timestamp");
    }
  }
  return violations;
}

}  // namespace spinflight
