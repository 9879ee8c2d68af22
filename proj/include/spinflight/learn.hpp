#pragma once

// End-to-end training: factor-graph estimation of the initial state,
// autoregressive rollout, trajectory RMSE loss, and reverse-mode gradients
// into the model weights, spin embedding, gravity bias, analytic
// coefficients, and noise log-scales.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spinflight/estimate.hpp"
#include "spinflight/util.hpp"

namespace spinflight {

struct LossConfig {
  int n_obs = 20;
  int unroll_iters = 3;
  double dt = 0.01;  // rollout grid; keep it a divisor of the sample period
  double horizon = std::numeric_limits<double>::infinity();  // s after estimation start
  int max_bounces = 16;  // beyond this the rollout stops applying bounces
  LmSettings lm;
  GraphOptions graph;
  TableGeometry table;
};

/// RMSE between the rollout from the estimated state and all measurements
/// after the N_obs-th, interpolated to the measurement timestamps.
template <class T>
T trajectory_loss(const Trajectory& traj, const DynamicsModel& model, const NoiseParams& noise,
                  const PipelineViews<T>& views, const LossConfig& cfg) {
  if (static_cast<int>(traj.measurements.size()) <= cfg.n_obs)
    throw contract_error("trajectory_loss: trajectory needs more than N_obs measurements (" +
                         traj.id + ")");
  const std::span<const Measurement> all(traj.measurements);
  const EstimateResult<T> est =
      estimate_initial_state<T>(all.first(static_cast<std::size_t>(cfg.n_obs)), model, noise,
                                views, traj.setting, cfg.lm, cfg.unroll_iters, cfg.graph,
                                cfg.table);
  const BallStateT<T>& s0 = est.states.back();
  const double t0 = value_of(s0.t);
  const double horizon = std::min(traj.measurements.back().t - t0, cfg.horizon);
  if (!(horizon > 0.0)) throw contract_error("trajectory_loss: empty prediction horizon");

  RolloutOptions opt;
  opt.dt = cfg.dt;
  opt.max_bounces = cfg.max_bounces;
  opt.fault_on_runaway = false;
  const RolloutT<T> roll = rollout(s0, views.model, views.model_values, cfg.table, horizon, opt);

  T sq(0.0);
  int count = 0;
  for (std::size_t j = static_cast<std::size_t>(cfg.n_obs); j < traj.measurements.size(); ++j) {
    const Measurement& m = traj.measurements[j];
    if (m.t > t0 + horizon + 1e-9) break;
    int k = static_cast<int>(std::floor((m.t - t0) / cfg.dt + 1e-9));
    k = std::max(0, std::min(k, static_cast<int>(roll.states.size()) - 2));
    const double tk = t0 + k * cfg.dt;
    double alpha = (m.t - tk) / cfg.dt;
    alpha = std::max(0.0, std::min(1.0, alpha));
    const V3<T>& pa = roll.states[static_cast<std::size_t>(k)].p;
    const V3<T>& pb = roll.states[static_cast<std::size_t>(k) + 1].p;
    const V3<T> pred = pa * T(1.0 - alpha) + pb * T(alpha);
    const V3<T> d = pred - V3<T>(T(m.p_obs.x), T(m.p_obs.y), T(m.p_obs.z));
    sq += dot(d, d);
    ++count;
  }
  if (count == 0) throw contract_error("trajectory_loss: no measurements inside the horizon");
  using std::sqrt;
  return sqrt(sq / T(static_cast<double>(count)));
}

inline double trajectory_loss(const Trajectory& traj, const DynamicsModel& model,
                              const NoiseParams& noise, const LossConfig& cfg) {
  return trajectory_loss<double>(traj, model, noise, make_views(model, noise), cfg);
}

// ---------------------------------------------------------------------------
// Augmentation: random z-rotation about the table centre plus an xy
// translation; used by the "+Aug." baselines.

inline Trajectory augment(const Trajectory& traj, double angle, double tx, double ty) {
  const Rot3 rot = Rot3::about_z(angle);
  const Vec3 shift{tx, ty, 0.0};
  Trajectory out = traj;
  for (Measurement& m : out.measurements) m.p_obs = rot.apply(m.p_obs) + shift;
  if (out.ground_truth) {
    for (BallState& s : *out.ground_truth) {
      s.p = rot.apply(s.p) + shift;
      s.v = rot.apply(s.v);
      s.w = rot.apply(s.w);
    }
  }
  return out;
}

inline Trajectory augment(const Trajectory& traj, std::mt19937_64& rng,
                          const TableGeometry& table = {}) {
  std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> tx_dist(0.5 * table.x_min, 0.5 * table.x_max);
  std::uniform_real_distribution<double> ty_dist(0.5 * table.y_min, 0.5 * table.y_max);
  const double angle = angle_dist(rng);
  const double tx = tx_dist(rng);
  const double ty = ty_dist(rng);
  return augment(traj, angle, tx, ty);
}

// ---------------------------------------------------------------------------
// Trainer.

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int epochs = 60;
  int batch_size = 8;
  double lr = 1e-3;
  LrSchedule schedule = LrSchedule::cosine;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_split = 0.2;
  std::uint64_t seed = 0;
  bool augment = false;
  bool train_model = true;           // network weights / analytic coefficients
  bool train_spin_embedding = true;
  bool train_noise = true;           // honored only when noise.learnable
  int threads = 0;                   // 0: hardware concurrency
  LossConfig loss;
};

struct EpochStats {
  int epoch = 0;
  double train_rmse = 0.0;
  double val_rmse = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_rmse = std::numeric_limits<double>::infinity();
  double total_wall_seconds = 0.0;
  int train_count = 0;
  int val_count = 0;
};

struct TrainResult {
  DynamicsModel model;
  NoiseParams noise;
  TrainReport report;
};

using TrainEventFn = std::function<void(const json&)>;

/// Stable trajectory-id-hash split: ids hashing below the split fraction go
/// to validation.
inline bool is_validation_id(const std::string& id, double val_split) {
  return static_cast<double>(fnv1a64(id) % 10000u) < val_split * 10000.0;
}

namespace detail {

inline double lr_at(const TrainConfig& cfg, int epoch) {
  if (cfg.schedule == LrSchedule::constant) return cfg.lr;
  const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 1.0;
  return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace detail

/// Mini-batch Adam over the mean trajectory loss. Deterministic for a fixed
/// seed regardless of the thread count: per-trajectory gradients land in
/// fixed slots and are reduced in order.
inline TrainResult train(const std::vector<Trajectory>& dataset, DynamicsModel model,
                         NoiseParams noise, const TrainConfig& cfg,
                         const TrainEventFn& on_event = nullptr) {
  if (dataset.size() < 2) throw contract_error("train: need at least 2 trajectories");
  std::vector<int> train_idx, val_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (is_validation_id(dataset[i].id, cfg.val_split))
      val_idx.push_back(static_cast<int>(i));
    else
      train_idx.push_back(static_cast<int>(i));
  }
  if (train_idx.empty()) train_idx.swap(val_idx);
  if (val_idx.empty()) val_idx = train_idx;

  const int p_model = model.layout.total;
  const int p_total = p_model + 9;
  std::vector<double> theta(static_cast<std::size_t>(p_total));
  auto load_theta = [&]() {
    for (int i = 0; i < p_model; ++i) theta[static_cast<std::size_t>(i)] = model.params[static_cast<std::size_t>(i)];
    for (int i = 0; i < 3; ++i) theta[static_cast<std::size_t>(p_model + i)] = noise.log_sigma_obs[static_cast<std::size_t>(i)];
    for (int i = 0; i < 6; ++i) theta[static_cast<std::size_t>(p_model + 3 + i)] = noise.log_sigma_dyn[static_cast<std::size_t>(i)];
  };
  auto store_theta = [&]() {
    for (int i = 0; i < p_model; ++i) model.params[static_cast<std::size_t>(i)] = theta[static_cast<std::size_t>(i)];
    for (int i = 0; i < 3; ++i) noise.log_sigma_obs[static_cast<std::size_t>(i)] = theta[static_cast<std::size_t>(p_model + i)];
    for (int i = 0; i < 6; ++i) noise.log_sigma_dyn[static_cast<std::size_t>(i)] = theta[static_cast<std::size_t>(p_model + 3 + i)];
  };
  load_theta();

  std::vector<char> trainable(static_cast<std::size_t>(p_total), 0);
  {
    const ParamLayout& l = model.layout;
    auto mark = [&](int offset, int count, bool on) {
      for (int i = 0; i < count; ++i) trainable[static_cast<std::size_t>(offset + i)] = on ? 1 : 0;
    };
    if (cfg.train_model) {
      if (l.analytic >= 0) mark(l.analytic, kAnalyticCount, true);
      if (l.aero_in_w >= 0) mark(l.aero_in_w, l.gravity_bias + 3 - l.aero_in_w, true);
      if (l.bounce_in_w >= 0) mark(l.bounce_in_w, l.bounce_out_b + kNetOutputs - l.bounce_in_w, true);
    }
    mark(l.spin_w, 9, cfg.train_spin_embedding);
    const bool noise_on = cfg.train_noise && noise.learnable;
    mark(p_model, 9, noise_on);
  }

  std::vector<double> adam_m(static_cast<std::size_t>(p_total), 0.0);
  std::vector<double> adam_v(static_cast<std::size_t>(p_total), 0.0);
  long adam_t = 0;

  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  TrainReport report;
  report.train_count = static_cast<int>(train_idx.size());
  report.val_count = static_cast<int>(val_idx.size());
  std::vector<double> best_theta = theta;

  auto eval_validation = [&]() {
    std::vector<double> losses(val_idx.size(), 0.0);
    parallel_for(static_cast<int>(val_idx.size()), threads, [&](int s) {
      losses[static_cast<std::size_t>(s)] =
          trajectory_loss(dataset[static_cast<std::size_t>(val_idx[static_cast<std::size_t>(s)])], model, noise, cfg.loss);
    });
    double sum = 0.0;
    for (double v : losses) sum += v;
    return sum / static_cast<double>(losses.size());
  };

  const auto t_start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    const double lr = detail::lr_at(cfg, epoch);
    std::vector<int> order = train_idx;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x1000u + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_loss_sum = 0.0;
    int train_loss_count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const int m = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - b0));
      std::vector<std::vector<double>> grads(static_cast<std::size_t>(m));
      std::vector<double> losses(static_cast<std::size_t>(m), 0.0);
      std::vector<std::string> fail(static_cast<std::size_t>(m));
      parallel_for(m, threads, [&](int s) {
        const int idx = order[b0 + static_cast<std::size_t>(s)];
        const Trajectory* traj = &dataset[static_cast<std::size_t>(idx)];
        Trajectory augmented;
        if (cfg.augment) {
          std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
                                          static_cast<std::uint64_t>(idx)));
          augmented = augment(*traj, rng, cfg.loss.table);
          traj = &augmented;
        }
        try {
          ad::GradientTape tape;
          std::vector<ad::Var> leaves = tape.leaves(theta);
          PipelineViews<ad::Var> views;
          views.model = ModelView<ad::Var>{&model.spec, &model.layout, leaves.data()};
          views.noise = NoiseView<ad::Var>{leaves.data() + p_model, leaves.data() + p_model + 3};
          views.model_values = model.view();
          views.noise_values = view(noise);
          const ad::Var loss = trajectory_loss<ad::Var>(*traj, model, noise, views, cfg.loss);
          if (!std::isfinite(loss.v))
            throw numeric_error("train: non-finite loss at trajectory " + traj->id);
          losses[static_cast<std::size_t>(s)] = loss.v;
          grads[static_cast<std::size_t>(s)] = tape.gradient(loss, leaves);
        } catch (const spinflight::error& e) {
          fail[static_cast<std::size_t>(s)] = e.what();
        }
      });
      for (const std::string& f : fail)
        if (!f.empty()) throw numeric_error(f);

      std::vector<double> gsum(static_cast<std::size_t>(p_total), 0.0);
      for (int s = 0; s < m; ++s) {
        for (int i = 0; i < p_total; ++i)
          gsum[static_cast<std::size_t>(i)] += grads[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
        train_loss_sum += losses[static_cast<std::size_t>(s)];
        ++train_loss_count;
      }
      const double inv_m = 1.0 / static_cast<double>(m);
      ++adam_t;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
      for (int i = 0; i < p_total; ++i) {
        if (!trainable[static_cast<std::size_t>(i)]) continue;
        const double g = gsum[static_cast<std::size_t>(i)] * inv_m;
        double& mi = adam_m[static_cast<std::size_t>(i)];
        double& vi = adam_v[static_cast<std::size_t>(i)];
        mi = cfg.adam_beta1 * mi + (1.0 - cfg.adam_beta1) * g;
        vi = cfg.adam_beta2 * vi + (1.0 - cfg.adam_beta2) * g * g;
        theta[static_cast<std::size_t>(i)] -=
            lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps);
      }
      store_theta();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_rmse = train_loss_count > 0 ? train_loss_sum / train_loss_count : 0.0;
    stats.val_rmse = eval_validation();
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    report.epochs.push_back(stats);
    if (stats.val_rmse < report.best_val_rmse) {
      report.best_val_rmse = stats.val_rmse;
      report.best_epoch = epoch;
      best_theta = theta;
    }
    if (on_event) {
      json ev;
      ev["event"] = "epoch";
      ev["epoch"] = epoch;
      ev["train_rmse"] = stats.train_rmse;
      ev["val_rmse"] = stats.val_rmse;
      ev["lr"] = lr;
      on_event(ev);
    }
  }
  report.total_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  theta = best_theta;
  store_theta();
  return {std::move(model), noise, std::move(report)};
}

/// Deterministic report core (no wall-clock fields; those belong in the run
/// manifest).
inline json train_report_to_json(const TrainReport& report) {
  json j;
  j["best_epoch"] = report.best_epoch;
  j["best_val_rmse"] = report.best_val_rmse;
  j["train_count"] = report.train_count;
  j["val_count"] = report.val_count;
  json epochs = json::array();
  for (const EpochStats& e : report.epochs)
    epochs.push_back(json{{"epoch", e.epoch}, {"train_rmse", e.train_rmse}, {"val_rmse", e.val_rmse}, {"lr", e.lr}});
  j["epochs"] = std::move(epochs);
  return j;
}

}  // namespace spinflight
