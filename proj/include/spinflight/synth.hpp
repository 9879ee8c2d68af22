#pragma once

// Synthetic dataset generator: analytic-model rollouts sampled at a fixed
// rate with Gaussian position noise; noiseless states are kept as ground
// truth. Stands in for the unreleased real dataset with the same schema.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "spinflight/simulate.hpp"
#include "spinflight/util.hpp"

namespace spinflight {

struct SynthConfig {
  int count = 50;
  AnalyticCoeffs coeffs{};
  std::uint64_t seed = 0;
  TableGeometry table{};

  // setting -> physics maps (generator conventions, not launcher claims)
  double spin_scale = 25.0;      // rad/s per spin level
  double speed_per_level = 0.5;  // m/s per speed level

  // launch distributions
  double x0_min = -1.35, x0_max = -1.2;
  double y0_min = -0.25, y0_max = 0.25;
  double height_min = 0.15, height_max = 0.35;  // above the table surface
  double elev_min_deg = 10.0, elev_max_deg = 20.0;
  double azim_half_range_deg = 12.0;  // about +x

  // label ranges
  int topspin_min = -3, topspin_max = 5;
  int sidespin_min = -5, sidespin_max = 5;
  int speed_min = 8, speed_max = 14;

  Vec3 sigma{0.005, 0.005, 0.005};  // measurement noise per axis, m
  double rate = 100.0;              // Hz
  double duration = 1.5;            // s
  double sim_dt = 0.001;            // integration grid (divides the period)
  std::string id_prefix = "synth";
};

/// Launch spin in the world frame: topspin about the horizontal pitch axis
/// (z x v), sidespin about z, scaled by spin_scale.
inline Vec3 launch_spin(const LauncherSetting& setting, const Vec3& v_dir, double spin_scale) {
  const Vec3 horiz{v_dir.x, v_dir.y, 0.0};
  const double n = std::sqrt(horiz.x * horiz.x + horiz.y * horiz.y);
  const Vec3 h = n > 1e-12 ? horiz * (1.0 / n) : Vec3{1, 0, 0};
  const Vec3 pitch_axis = cross(Vec3{0, 0, 1}, h);
  return pitch_axis * (setting.topspin * spin_scale) + Vec3{0, 0, 1} * (setting.sidespin * spin_scale);
}

inline DynamicsModel make_analytic_model(const AnalyticCoeffs& coeffs) {
  ModelSpec spec;
  spec.kind = ModelKind::analytic;
  DynamicsModel m = DynamicsModel::create(spec, 0);
  m.set_analytic(coeffs);
  return m;
}

/// Generates cfg.count trajectories with per-trajectory derived seeds; each
/// one passes validate_trajectory and carries noiseless ground truth.
inline std::vector<Trajectory> generate(const SynthConfig& cfg) {
  if (!(cfg.rate > 0.0)) throw config_error("generate: sample rate must be positive");
  if (cfg.sigma.x < 0.0 || cfg.sigma.y < 0.0 || cfg.sigma.z < 0.0)
    throw config_error("generate: noise sigma must be non-negative");
  const DynamicsModel model = make_analytic_model(cfg.coeffs);
  const double period = 1.0 / cfg.rate;
  const int steps_per_sample = std::max(1, static_cast<int>(std::llround(period / cfg.sim_dt)));
  const double dt = period / steps_per_sample;
  const int n_samples = static_cast<int>(std::floor(cfg.duration * cfg.rate + 1e-9)) + 1;

  std::vector<Trajectory> dataset(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    auto uniform = [&rng](double lo, double hi) {
      std::uniform_real_distribution<double> d(lo, hi);
      return d(rng);
    };
    auto uniform_int = [&rng](int lo, int hi) {
      std::uniform_int_distribution<int> d(lo, hi);
      return d(rng);
    };
    Trajectory traj;
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%05d", cfg.id_prefix.c_str(), i);
    traj.id = idbuf;
    traj.setting.topspin = uniform_int(cfg.topspin_min, cfg.topspin_max);
    traj.setting.sidespin = uniform_int(cfg.sidespin_min, cfg.sidespin_max);
    traj.setting.speed_level = uniform_int(cfg.speed_min, cfg.speed_max);

    const double speed = cfg.speed_per_level * traj.setting.speed_level;
    const double elev = uniform(cfg.elev_min_deg, cfg.elev_max_deg) * 3.14159265358979323846 / 180.0;
    const double azim = uniform(-cfg.azim_half_range_deg, cfg.azim_half_range_deg) * 3.14159265358979323846 / 180.0;
    BallState init;
    init.t = 0.0;
    init.p = {uniform(cfg.x0_min, cfg.x0_max), uniform(cfg.y0_min, cfg.y0_max),
              cfg.table.surface_height + uniform(cfg.height_min, cfg.height_max)};
    init.v = {speed * std::cos(elev) * std::cos(azim), speed * std::cos(elev) * std::sin(azim),
              speed * std::sin(elev)};
    init.w = launch_spin(traj.setting, init.v, cfg.spin_scale);

    RolloutOptions opt;
    opt.dt = dt;
    opt.max_bounces = 10;
    opt.fault_on_runaway = false;
    const RolloutT<double> roll =
        rollout(init, model.view(), model.view(), cfg.table, cfg.duration, opt);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<BallState> gt;
    gt.reserve(static_cast<std::size_t>(n_samples));
    traj.measurements.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
      const std::size_t k = static_cast<std::size_t>(s) * static_cast<std::size_t>(steps_per_sample);
      if (k >= roll.states.size()) break;
      BallState st = roll.states[k];
      st.t = s * period;
      gt.push_back(st);
      Measurement m;
      m.t = st.t;
      m.p_obs = st.p + Vec3{cfg.sigma.x * gauss(rng), cfg.sigma.y * gauss(rng), cfg.sigma.z * gauss(rng)};
      traj.measurements.push_back(m);
    }
    traj.ground_truth = std::move(gt);
    dataset[static_cast<std::size_t>(i)] = std::move(traj);
  }
  return dataset;
}

}  // namespace spinflight
