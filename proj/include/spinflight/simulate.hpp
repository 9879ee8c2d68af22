#pragma once

// Autoregressive rollout: RK4 integration of the aerodynamics model with
// bounce-event detection, contact-time bisection, and apex extraction.
//
// Contact times are located by bisection on the plain-double path and then
// re-derived in the active scalar type through one Newton correction, so
// gradients flow through the contact time into everything downstream.

#include <cmath>
#include <cstdint>
#include <vector>

#include "spinflight/core.hpp"
#include "spinflight/dynamics.hpp"
#include "spinflight/errors.hpp"

namespace spinflight {

struct RolloutOptions {
  double dt = 0.002;           // s
  int max_bounces = 10;
  bool fault_on_runaway = true;  // false: stop applying bounces, keep integrating
  double bisect_tol = 1e-12;   // s, contact-time bisection interval
};

template <class T>
struct BounceEventT {
  T t_contact;
  BallStateT<T> pre, post;
};

using BounceEvent = BounceEventT<double>;

template <class T>
struct RolloutT {
  std::vector<BallStateT<T>> states;  // on the integration grid
  std::vector<BounceEventT<T>> bounces;
  bool runaway = false;  // bounce cap hit in pass-through mode
};

namespace detail {

template <class T>
struct StateDeriv {
  V3<T> dp, dv, dw;
};

template <class T>
StateDeriv<T> state_deriv(const BallStateT<T>& s, const ModelView<T>& m) {
  const AeroOut<T> out = aero_accel(s, m);
  return {s.v, out.a, out.w_dot};
}

template <class T>
BallStateT<T> rk4_step(const BallStateT<T>& s, const T& h, const ModelView<T>& m) {
  const T half = h * T(0.5);
  const StateDeriv<T> k1 = state_deriv(s, m);
  BallStateT<T> s2{s.t + half, s.p + k1.dp * half, s.v + k1.dv * half, s.w + k1.dw * half};
  const StateDeriv<T> k2 = state_deriv(s2, m);
  BallStateT<T> s3{s.t + half, s.p + k2.dp * half, s.v + k2.dv * half, s.w + k2.dw * half};
  const StateDeriv<T> k3 = state_deriv(s3, m);
  BallStateT<T> s4{s.t + h, s.p + k3.dp * h, s.v + k3.dv * h, s.w + k3.dw * h};
  const StateDeriv<T> k4 = state_deriv(s4, m);
  const T sixth = h * T(1.0 / 6.0);
  BallStateT<T> out;
  out.t = s.t + h;
  out.p = s.p + (k1.dp + (k2.dp + k3.dp) * T(2) + k4.dp) * sixth;
  out.v = s.v + (k1.dv + (k2.dv + k3.dv) * T(2) + k4.dv) * sixth;
  out.w = s.w + (k1.dw + (k2.dw + k3.dw) * T(2) + k4.dw) * sixth;
  return out;
}

/// Event-aware stepper shared by the rollout, the dynamics factors, and the
/// EKF predict step.
template <class T>
class Stepper {
 public:
  Stepper(const ModelView<T>& mv, const ModelView<double>& dbl, const TableGeometry& table,
          const RolloutOptions& opt)
      : mv_(mv), dbl_(dbl), table_(table), opt_(opt) {}

  int bounces_applied = 0;
  bool runaway = false;
  std::vector<BounceEventT<T>>* events = nullptr;

  double defect(const BallState& s) const { return s.p.z - table_.contact_height(); }

  /// One step of length h with bounce handling; depth bounds event recursion
  /// within a single step.
  BallStateT<T> advance(const BallStateT<T>& s, const T& h, int depth = 0) {
    BallStateT<T> next = rk4_step(s, h, mv_);
    check_finite(next);
    const double d0 = defect(state_values(s));
    const double d1 = defect(state_values(next));
    constexpr double kCrossTol = 1e-12;
    if (!(d0 > kCrossTol) || !(d1 <= kCrossTol) || depth >= 8) return next;

    // locate the crossing on the value path
    const BallState sv = state_values(s);
    const double hv = value_of(h);
    double lo = 0.0, hi = hv;
    while (hi - lo > opt_.bisect_tol) {
      const double mid = 0.5 * (lo + hi);
      const double d = defect(state_values(rk4_step(BallStateT<double>{sv.t, sv.p, sv.v, sv.w}, mid, dbl_)));
      (d > 0.0 ? lo : hi) = mid;
    }
    const double tau_star = 0.5 * (lo + hi);

    BallStateT<T> pre = rk4_step(s, T(tau_star), mv_);
    if (!(value_of(pre.v.z) < 0.0)) return next;  // grazing contact, no bounce

    // Newton correction makes the contact time a differentiable function of
    // the incoming state: tau = tau* - defect(pre)/vz(pre).
    const T tau = T(tau_star) - (pre.p.z - T(table_.contact_height())) / pre.v.z;
    pre = rk4_step(s, tau, mv_);

    if (bounces_applied >= opt_.max_bounces) {
      if (opt_.fault_on_runaway)
        throw numeric_error("rollout: more than " + std::to_string(opt_.max_bounces) +
                            " bounces (runaway)");
      runaway = true;
      return next;  // keep integrating without further contacts
    }
    ++bounces_applied;
    BallStateT<T> post = bounce_map(pre, mv_);
    if (events != nullptr) events->push_back({pre.t, pre, post});
    const T rest = h - tau;
    if (value_of(rest) <= 0.0) return post;
    return advance(post, rest, depth + 1);
  }

 private:
  void check_finite(const BallStateT<T>& s) const {
    const BallState v = state_values(s);
    if (!finite(v.p) || !finite(v.v) || !finite(v.w))
      throw numeric_error("rollout: non-finite state during integration");
  }

  ModelView<T> mv_;
  ModelView<double> dbl_;
  TableGeometry table_;
  RolloutOptions opt_;
};

}  // namespace detail

/// Integrates from init over `horizon` seconds, recording states on the
/// t0 + k*dt grid. `model_values` supplies the plain-double parameter view
/// used for event location; pass model.view() (it must hold the same values
/// as mv).
template <class T>
RolloutT<T> rollout(const BallStateT<T>& init, const ModelView<T>& mv,
                    const ModelView<double>& model_values, const TableGeometry& table,
                    double horizon, const RolloutOptions& opt) {
  if (!(opt.dt > 0.0)) throw contract_error("rollout: dt must be positive");
  if (horizon < opt.dt) throw contract_error("rollout: horizon must be at least dt");
  RolloutT<T> out;
  detail::Stepper<T> stepper(mv, model_values, table, opt);
  stepper.events = &out.bounces;
  const double t0 = value_of(init.t);
  BallStateT<T> s = init;
  out.states.push_back(s);
  const int n_full = static_cast<int>(std::floor(horizon / opt.dt + 1e-9));
  for (int k = 1; k <= n_full; ++k) {
    const double t_target = t0 + k * opt.dt;
    s = stepper.advance(s, T(t_target - value_of(s.t)));
    s.t = T(t_target);
    out.states.push_back(s);
  }
  const double t_end = t0 + horizon;
  if (t_end - value_of(s.t) > 1e-9) {
    s = stepper.advance(s, T(t_end - value_of(s.t)));
    s.t = T(t_end);
    out.states.push_back(s);
  }
  out.runaway = stepper.runaway;
  return out;
}

/// Integrates a state forward to time t1 (used by dynamics factors and the
/// EKF predict step); substeps are capped at max_dt. Bounces inside the
/// interval are applied, never faulted.
template <class T>
BallStateT<T> integrate_to(const BallStateT<T>& from, double t1, const ModelView<T>& mv,
                           const ModelView<double>& model_values, const TableGeometry& table,
                           double max_dt, int max_bounces = 4) {
  const double t0 = value_of(from.t);
  if (!(t1 > t0)) {
    if (t1 == t0) return from;
    throw contract_error("integrate_to: target time precedes state time");
  }
  RolloutOptions opt;
  opt.max_bounces = max_bounces;
  opt.fault_on_runaway = false;
  detail::Stepper<T> stepper(mv, model_values, table, opt);
  const int n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / max_dt - 1e-9)));
  const double h = (t1 - t0) / n;
  BallStateT<T> s = from;
  for (int k = 0; k < n; ++k) s = stepper.advance(s, T(h));
  s.t = T(t1);
  return s;
}

// ---------------------------------------------------------------------------
// Prediction products.

struct Apex {
  int segment = 0;  // 0: before bounce #1, 1: between #1 and #2, ...
  BallState state;
};

struct PredictedTrajectory {
  std::vector<BallState> states;
  std::vector<BounceEvent> bounce_events;
  std::vector<Apex> apexes;
};

namespace detail {

/// Quadratic refinement of an interior maximum using the three samples
/// around it; falls back to the grid sample when the parabola degenerates.
inline BallState refine_apex(const BallState& a, const BallState& b, const BallState& c) {
  const double denom = a.p.z - 2.0 * b.p.z + c.p.z;
  if (!(denom < 0.0)) return b;
  const double dt = 0.5 * (c.t - a.t);
  const double shift = 0.5 * (a.p.z - c.p.z) / denom * dt;
  auto quad = [&](double fa, double fb, double fc) {
    // parabola through (-dt, fa), (0, fb), (dt, fc) evaluated at shift
    const double d2 = (fa - 2.0 * fb + fc) / (dt * dt);
    const double d1 = (fc - fa) / (2.0 * dt);
    return fb + d1 * shift + 0.5 * d2 * shift * shift;
  };
  BallState apex = b;
  apex.t = b.t + shift;
  apex.p = {quad(a.p.x, b.p.x, c.p.x), quad(a.p.y, b.p.y, c.p.y), quad(a.p.z, b.p.z, c.p.z)};
  const double u = (shift + dt) / (2.0 * dt);
  apex.v = a.v * (1.0 - u) + c.v * u;
  apex.w = a.w * (1.0 - u) + c.w * u;
  return apex;
}

inline std::vector<Apex> apexes_of_samples(const std::vector<BallState>& states,
                                           const std::vector<double>& bounce_times) {
  std::vector<Apex> apexes;
  if (states.size() < 3) return apexes;
  std::size_t begin = 0;
  for (std::size_t seg = 0; seg <= bounce_times.size(); ++seg) {
    const double t_end = seg < bounce_times.size() ? bounce_times[seg]
                                                   : states.back().t + 1.0;
    std::size_t end = begin;
    while (end < states.size() && states[end].t <= t_end) ++end;
    // interior maximum of z within [begin, end)
    if (end - begin >= 3) {
      std::size_t best = begin + 1;
      for (std::size_t i = begin + 1; i + 1 < end; ++i)
        if (states[i].p.z > states[best].p.z) best = i;
      if (states[best].p.z >= states[best - 1].p.z && states[best].p.z >= states[best + 1].p.z &&
          best > begin && best + 1 < end) {
        apexes.push_back({static_cast<int>(seg),
                          refine_apex(states[best - 1], states[best], states[best + 1])});
      }
    }
    begin = end;
    if (begin >= states.size()) break;
  }
  return apexes;
}

}  // namespace detail

/// One apex per inter-bounce segment that has an interior z-maximum.
inline std::vector<Apex> apex_points(const PredictedTrajectory& traj) {
  std::vector<double> bounce_times;
  for (const BounceEvent& e : traj.bounce_events) bounce_times.push_back(e.t_contact);
  return detail::apexes_of_samples(traj.states, bounce_times);
}

/// Bounce timestamps in a measured (or synthetic ground-truth) trajectory:
/// local minima of z below surface_height + 3 * ball_radius with a sign
/// change in the finite-difference vertical velocity.
inline std::vector<double> detect_bounces_measured(const Trajectory& traj,
                                                   const TableGeometry& table) {
  if (traj.measurements.size() < 5)
    throw contract_error("detect_bounces_measured: need at least 5 measurements");
  std::vector<double> times;
  const auto& ms = traj.measurements;
  const double limit = table.surface_height + 3.0 * table.ball_radius;
  for (std::size_t i = 1; i + 1 < ms.size(); ++i) {
    const double z = ms[i].p_obs.z;
    if (z >= limit) continue;
    const double vz_in = (ms[i].p_obs.z - ms[i - 1].p_obs.z) / (ms[i].t - ms[i - 1].t);
    const double vz_out = (ms[i + 1].p_obs.z - ms[i].p_obs.z) / (ms[i + 1].t - ms[i].t);
    if (vz_in < 0.0 && vz_out > 0.0) times.push_back(ms[i].t);
  }
  return times;
}

/// Apexes of a measured trajectory, segmented by detected bounces.
inline std::vector<Apex> apex_points(const Trajectory& traj, const TableGeometry& table) {
  std::vector<BallState> states;
  states.reserve(traj.measurements.size());
  if (traj.ground_truth && traj.ground_truth->size() >= 3) {
    states = *traj.ground_truth;
  } else {
    for (const Measurement& m : traj.measurements) states.push_back({m.t, m.p_obs, {}, {}});
  }
  Trajectory probe = traj;
  if (traj.ground_truth && traj.ground_truth->size() >= 5) {
    probe.measurements.clear();
    for (const BallState& s : *traj.ground_truth) probe.measurements.push_back({s.t, s.p});
  }
  std::vector<double> bounce_times;
  if (probe.measurements.size() >= 5) bounce_times = detect_bounces_measured(probe, table);
  return detail::apexes_of_samples(states, bounce_times);
}

/// Autoregressive prediction with the runaway fault contract (more than
/// opt.max_bounces bounces faults).
inline PredictedTrajectory predict(const BallState& init, const DynamicsModel& model,
                                   const TableGeometry& table, double horizon,
                                   double dt = 0.002) {
  RolloutOptions opt;
  opt.dt = dt;
  const RolloutT<double> r = rollout(init, model.view(), model.view(), table, horizon, opt);
  PredictedTrajectory out;
  out.states = r.states;
  for (const auto& e : r.bounces) out.bounce_events.push_back({e.t_contact, e.pre, e.post});
  out.apexes = apex_points(out);
  return out;
}

/// Rollout export: states, bounce events and apexes, canonical float format.
inline json rollout_to_json(const PredictedTrajectory& traj) {
  json j;
  auto state_json = [](const BallState& s) {
    return json{{"t", s.t}, {"p", vec3_to_json(s.p)}, {"v", vec3_to_json(s.v)}, {"w", vec3_to_json(s.w)}};
  };
  json states = json::array();
  for (const BallState& s : traj.states) states.push_back(state_json(s));
  j["states"] = std::move(states);
  json bounces = json::array();
  for (const BounceEvent& e : traj.bounce_events)
    bounces.push_back(json{{"t_contact", e.t_contact}, {"pre", state_json(e.pre)}, {"post", state_json(e.post)}});
  j["bounce_events"] = std::move(bounces);
  json apexes = json::array();
  for (const Apex& a : traj.apexes)
    apexes.push_back(json{{"segment", a.segment}, {"state", state_json(a.state)}});
  j["apexes"] = std::move(apexes);
  return j;
}

}  // namespace spinflight
