#pragma once

// Initial-state estimation: sliding-window mean baseline, EKF baseline, and
// the differentiable factor graph optimized by Levenberg-Marquardt.
//
// The graph holds one 9-dimensional state variable (p, v, w) per observed
// timestep. Observation factors tie positions to measurements; dynamics
// factors tie consecutive states through the model. Dynamics residuals
// carry the velocity/spin mismatch whitened by the learnable log-sigma
// process scales plus position-consistency rows with a small fixed sigma
// (without them position observations could never inform velocity).
//
// Gradients flow through the estimator by truncated unrolling: LM first
// converges without derivative tracking, then a fixed number of iterations
// re-run from the solution in the tracked scalar type.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinflight/dynamics.hpp"
#include "spinflight/linalg.hpp"
#include "spinflight/noise.hpp"
#include "spinflight/simulate.hpp"

namespace spinflight {

constexpr int kStateDim = 9;  // p, v, w

template <class T>
BallStateT<T> unpack_state(const T* x, double t) {
  return {T(t), {x[0], x[1], x[2]}, {x[3], x[4], x[5]}, {x[6], x[7], x[8]}};
}

/// Bundles the tracked parameter views with their plain-double twins; the
/// double views feed value-path decisions (event bisection, LM acceptance).
template <class T>
struct PipelineViews {
  ModelView<T> model;
  NoiseView<T> noise;
  ModelView<double> model_values;
  NoiseView<double> noise_values;
};

inline PipelineViews<double> make_views(const DynamicsModel& model, const NoiseParams& noise) {
  PipelineViews<double> v;
  v.model = model.view();
  v.noise = view(noise);
  v.model_values = v.model;
  v.noise_values = v.noise;
  return v;
}

// ---------------------------------------------------------------------------
// Sliding-window mean baseline.

/// Least-squares slope of position versus time over the last `window`
/// measurements (the window-5 mean baseline).
inline Vec3 sliding_window_velocity(std::span<const Measurement> ms, int window = 5) {
  if (static_cast<int>(ms.size()) < window)
    throw contract_error("sliding_window_velocity: fewer measurements than window");
  if (window < 2) throw contract_error("sliding_window_velocity: window must be >= 2");
  const std::size_t begin = ms.size() - static_cast<std::size_t>(window);
  double t_mean = 0.0;
  Vec3 p_mean{};
  for (std::size_t i = begin; i < ms.size(); ++i) {
    if (i > begin && !(ms[i].t > ms[i - 1].t))
      throw contract_error("sliding_window_velocity: duplicate or decreasing timestamps");
    t_mean += ms[i].t;
    p_mean += ms[i].p_obs;
  }
  t_mean /= window;
  p_mean = p_mean * (1.0 / window);
  double var = 0.0;
  Vec3 cov{};
  for (std::size_t i = begin; i < ms.size(); ++i) {
    const double dt = ms[i].t - t_mean;
    var += dt * dt;
    cov += (ms[i].p_obs - p_mean) * dt;
  }
  if (var <= 0.0) throw contract_error("sliding_window_velocity: degenerate time spread");
  return cov * (1.0 / var);
}

/// Window-based initial state guess: position of the last window sample,
/// window slope velocity, supplied spin.
inline BallState make_window_init(std::span<const Measurement> ms, int window, const Vec3& spin) {
  if (static_cast<int>(ms.size()) < window)
    throw contract_error("make_window_init: fewer measurements than window");
  const Vec3 v = sliding_window_velocity(ms.first(static_cast<std::size_t>(window)), window);
  BallState s;
  s.t = ms[static_cast<std::size_t>(window - 1)].t;
  s.p = ms[static_cast<std::size_t>(window - 1)].p_obs;
  s.v = v;
  s.w = spin;
  return s;
}

// ---------------------------------------------------------------------------
// Factor graph.

enum class FactorKind { prior, observation, dynamics };

/// Gaussian factor with a diagonal covariance. Observation factors whiten by
/// exp(log_sigma_obs); dynamics factors by the fixed position-consistency
/// sigma and exp(log_sigma_dyn); prior factors carry their own sigmas.
struct Factor {
  FactorKind kind = FactorKind::observation;
  int vi = -1;
  int vj = -1;  // dynamics factors only
  int dim = 0;
  Vec3 obs{};                      // observation target
  std::array<int, kStateDim> comps{};    // prior component indices
  std::array<double, kStateDim> target{};  // prior targets (constant part)
  std::array<double, kStateDim> sigma{};   // prior sigmas
  bool target_is_embedding = false;  // prior target = spin_embed(setting)
};

struct GraphOptions {
  double dyn_pos_sigma = 1e-4;  // m, fixed
  double factor_max_dt = 0.01;  // s, integration substep inside factors
  bool use_spin_prior = true;
  double spin_prior_sigma = 5.0;
  std::optional<Vec3> spin_prior;  // overrides the embedding target
  int init_window = 5;
};

struct FactorGraph {
  std::vector<double> times;
  std::vector<Factor> factors;
  LauncherSetting setting;
  TableGeometry table;
  GraphOptions options;
  int n_vars() const { return static_cast<int>(times.size()); }
  int dim() const { return kStateDim * n_vars(); }
  int block_bandwidth() const {
    int bw = 0;
    for (const Factor& f : factors)
      if (f.vj >= 0) bw = std::max(bw, std::abs(f.vj - f.vi));
    return bw;
  }
};

/// One variable per measurement time; an observation factor per measurement,
/// a dynamics factor per consecutive pair, and optionally a weak spin prior
/// on the first state.
inline FactorGraph build_factor_graph(std::span<const Measurement> ms,
                                      const LauncherSetting& setting,
                                      const TableGeometry& table,
                                      const GraphOptions& options = {}) {
  if (ms.size() < 3) throw contract_error("build_factor_graph: need at least 3 measurements");
  FactorGraph g;
  g.setting = setting;
  g.table = table;
  g.options = options;
  for (const Measurement& m : ms) g.times.push_back(m.t);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    Factor f;
    f.kind = FactorKind::observation;
    f.vi = static_cast<int>(i);
    f.dim = 3;
    f.obs = ms[i].p_obs;
    g.factors.push_back(f);
  }
  for (std::size_t i = 0; i + 1 < ms.size(); ++i) {
    Factor f;
    f.kind = FactorKind::dynamics;
    f.vi = static_cast<int>(i);
    f.vj = static_cast<int>(i + 1);
    f.dim = kStateDim;
    g.factors.push_back(f);
  }
  if (options.use_spin_prior) {
    Factor f;
    f.kind = FactorKind::prior;
    f.vi = 0;
    f.dim = 3;
    f.comps = {6, 7, 8};
    if (options.spin_prior) {
      f.target = {options.spin_prior->x, options.spin_prior->y, options.spin_prior->z};
    } else {
      f.target_is_embedding = true;
    }
    f.sigma.fill(options.spin_prior_sigma);
    g.factors.push_back(f);
  }
  return g;
}

namespace detail {

/// Residual of one factor in the requested scalar type (no Jacobian).
/// xi / xj point at the 9 packed components of the connected states.
template <class T>
void factor_residual_at(const FactorGraph& g, const Factor& f, const T* xi, const T* xj,
                        const PipelineViews<T>& views, T* out) {
  switch (f.kind) {
    case FactorKind::observation: {
      for (int a = 0; a < 3; ++a) {
        using std::exp;
        const T scale = exp(-views.noise.log_sigma_obs[a]);
        out[a] = (xi[a] - T(f.obs.x * (a == 0) + f.obs.y * (a == 1) + f.obs.z * (a == 2))) * scale;
      }
      return;
    }
    case FactorKind::prior: {
      V3<T> emb{};
      if (f.target_is_embedding) emb = spin_embed(g.setting, views.model);
      const std::array<T, 3> embv = {emb.x, emb.y, emb.z};
      for (int k = 0; k < f.dim; ++k) {
        const T target = f.target_is_embedding ? embv[static_cast<std::size_t>(k)] : T(f.target[static_cast<std::size_t>(k)]);
        out[k] = (xi[f.comps[static_cast<std::size_t>(k)]] - target) * T(1.0 / f.sigma[static_cast<std::size_t>(k)]);
      }
      return;
    }
    case FactorKind::dynamics: {
      const BallStateT<T> si = unpack_state(xi, g.times[static_cast<std::size_t>(f.vi)]);
      const BallStateT<T> pred = integrate_to(si, g.times[static_cast<std::size_t>(f.vj)], views.model,
                                              views.model_values, g.table, g.options.factor_max_dt);
      const T sp = T(1.0 / g.options.dyn_pos_sigma);
      out[0] = (pred.p.x - xj[0]) * sp;
      out[1] = (pred.p.y - xj[1]) * sp;
      out[2] = (pred.p.z - xj[2]) * sp;
      using std::exp;
      const std::array<T, 3> pv = {pred.v.x, pred.v.y, pred.v.z};
      const std::array<T, 3> pw = {pred.w.x, pred.w.y, pred.w.z};
      for (int a = 0; a < 3; ++a) {
        out[3 + a] = (pv[static_cast<std::size_t>(a)] - xj[3 + a]) * exp(-views.noise.log_sigma_dyn[a]);
        out[6 + a] = (pw[static_cast<std::size_t>(a)] - xj[6 + a]) * exp(-views.noise.log_sigma_dyn[3 + a]);
      }
      return;
    }
  }
}

/// Residual addressed through the packed full variable vector.
template <class T>
void factor_residual(const FactorGraph& g, const Factor& f, const T* x,
                     const PipelineViews<T>& views, T* out) {
  const T* xi = x + kStateDim * f.vi;
  const T* xj = f.vj >= 0 ? x + kStateDim * f.vj : nullptr;
  factor_residual_at(g, f, xi, xj, views, out);
}

}  // namespace detail

/// 0.5 * sum of squared whitened residuals.
template <class T>
T graph_cost(const FactorGraph& g, const T* x, const PipelineViews<T>& views) {
  T cost(0.0);
  std::array<T, kStateDim> r;
  for (const Factor& f : g.factors) {
    detail::factor_residual(g, f, x, views, r.data());
    for (int k = 0; k < f.dim; ++k) cost += r[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(k)] * T(0.5);
  }
  return cost;
}

/// -2 log G(eta) = sum_i |err_i|^2_Sigma, the factorized likelihood of
/// the graph (up to the constant normalizer).
inline double graph_neg_log_likelihood_x2(const FactorGraph& g, const std::vector<double>& x,
                                          const DynamicsModel& model, const NoiseParams& noise) {
  const PipelineViews<double> views = make_views(model, noise);
  return 2.0 * graph_cost(g, x.data(), views);
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt.

struct LmSettings {
  int max_iters = 50;
  double lambda0 = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.3;
  double residual_tol = 1e-10;
  double step_tol = 1e-10;
  double lambda_max = 1e12;
};

struct LmResult {
  std::vector<double> x;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;  // initial cost then every accepted cost
};

namespace detail {

/// Normal-equation assembly: H = J^T J, grad = J^T r, cost = 0.5 |r|^2 over
/// whitened residuals. Dynamics factor Jacobians come from a forward-dual
/// integration seeded on the 9 components of the left state; the right
/// state's block is the negated whitening diagonal.
template <class T>
void assemble_normal_equations(const FactorGraph& g, const std::vector<T>& x,
                               const PipelineViews<T>& views,
                               const ModelView<ad::Dual<T, kStateDim>>& mv_dual,
                               const NoiseView<ad::Dual<T, kStateDim>>& nv_dual,
                               Matrix<T>& h, std::vector<T>& grad, T& cost) {
  using DT = ad::Dual<T, kStateDim>;
  const int n = g.dim();
  h = Matrix<T>(n, n);
  grad.assign(static_cast<std::size_t>(n), T(0));
  cost = T(0);
  PipelineViews<DT> dual_views;
  dual_views.model = mv_dual;
  dual_views.noise = nv_dual;
  dual_views.model_values = views.model_values;
  dual_views.noise_values = views.noise_values;

  std::array<DT, kStateDim> rd;
  std::array<T, kStateDim> r;
  for (const Factor& f : g.factors) {
    const int oi = kStateDim * f.vi;
    switch (f.kind) {
      case FactorKind::observation:
      case FactorKind::prior: {
        detail::factor_residual(g, f, x.data(), views, r.data());
        // diagonal Jacobian over the touched components
        for (int k = 0; k < f.dim; ++k) {
          const int comp = f.kind == FactorKind::observation ? k : f.comps[static_cast<std::size_t>(k)];
          T jkk;
          if (f.kind == FactorKind::observation) {
            using std::exp;
            jkk = exp(-views.noise.log_sigma_obs[k]);
          } else {
            jkk = T(1.0 / f.sigma[static_cast<std::size_t>(k)]);
          }
          const T& rk = r[static_cast<std::size_t>(k)];
          h(oi + comp, oi + comp) += jkk * jkk;
          grad[static_cast<std::size_t>(oi + comp)] += jkk * rk;
          cost += rk * rk * T(0.5);
        }
        break;
      }
      case FactorKind::dynamics: {
        const int oj = kStateDim * f.vj;
        // seed duals on the left state; the right state enters as constants
        std::array<DT, kStateDim> xi_d, xj_d;
        for (int c = 0; c < kStateDim; ++c) {
          xi_d[static_cast<std::size_t>(c)] = DT::seeded(x[static_cast<std::size_t>(oi + c)], c);
          xj_d[static_cast<std::size_t>(c)] = DT(x[static_cast<std::size_t>(oj + c)]);
        }
        detail::factor_residual_at(g, f, xi_d.data(), xj_d.data(), dual_views, rd.data());
        // whitening scales for the right-state block
        std::array<T, kStateDim> scale;
        scale[0] = scale[1] = scale[2] = T(1.0 / g.options.dyn_pos_sigma);
        using std::exp;
        for (int a = 0; a < 3; ++a) {
          scale[static_cast<std::size_t>(3 + a)] = exp(-views.noise.log_sigma_dyn[a]);
          scale[static_cast<std::size_t>(6 + a)] = exp(-views.noise.log_sigma_dyn[3 + a]);
        }
        for (int row = 0; row < kStateDim; ++row) {
          const T& rowv = rd[static_cast<std::size_t>(row)].v;
          cost += rowv * rowv * T(0.5);
        }
        // H_ii, grad_i
        for (int c1 = 0; c1 < kStateDim; ++c1) {
          T gacc(0.0);
          for (int row = 0; row < kStateDim; ++row)
            gacc += rd[static_cast<std::size_t>(row)].d[static_cast<std::size_t>(c1)] * rd[static_cast<std::size_t>(row)].v;
          grad[static_cast<std::size_t>(oi + c1)] += gacc;
          for (int c2 = c1; c2 < kStateDim; ++c2) {
            T acc(0.0);
            for (int row = 0; row < kStateDim; ++row)
              acc += rd[static_cast<std::size_t>(row)].d[static_cast<std::size_t>(c1)] *
                     rd[static_cast<std::size_t>(row)].d[static_cast<std::size_t>(c2)];
            h(oi + c1, oi + c2) += acc;
            if (c2 != c1) h(oi + c2, oi + c1) += acc;
          }
        }
        // cross block H_ij = J_i^T * (-diag(scale)) and right block/grad
        for (int c2 = 0; c2 < kStateDim; ++c2) {
          const T& s2 = scale[static_cast<std::size_t>(c2)];
          const T& r2 = rd[static_cast<std::size_t>(c2)].v;
          for (int c1 = 0; c1 < kStateDim; ++c1) {
            const T v = rd[static_cast<std::size_t>(c2)].d[static_cast<std::size_t>(c1)] * s2;
            h(oi + c1, oj + c2) -= v;
            h(oj + c2, oi + c1) -= v;
          }
          h(oj + c2, oj + c2) += s2 * s2;
          grad[static_cast<std::size_t>(oj + c2)] -= s2 * r2;
        }
        break;
      }
    }
  }
}

template <class T>
std::vector<ad::Dual<T, kStateDim>> lift_to_dual(const T* p, int count) {
  std::vector<ad::Dual<T, kStateDim>> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = ad::Dual<T, kStateDim>(p[i]);
  return out;
}

}  // namespace detail

/// Damped Gauss-Newton on the stacked whitened residuals. Steps are accepted
/// only when the cost decreases; lambda shrinks on acceptance and grows on
/// rejection.
inline LmResult lm_optimize(const FactorGraph& g, std::vector<double> x,
                            const DynamicsModel& model, const NoiseParams& noise,
                            const LmSettings& s = {}) {
  for (double v : x)
    if (!std::isfinite(v)) throw contract_error("lm_optimize: non-finite initial values");
  const PipelineViews<double> views = make_views(model, noise);
  using DT = ad::Dual<double, kStateDim>;
  const std::vector<DT> params_d = detail::lift_to_dual(model.params.data(), model.layout.total);
  std::array<DT, 3> lso_d;
  std::array<DT, 6> lsd_d;
  for (int i = 0; i < 3; ++i) lso_d[static_cast<std::size_t>(i)] = DT(noise.log_sigma_obs[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 6; ++i) lsd_d[static_cast<std::size_t>(i)] = DT(noise.log_sigma_dyn[static_cast<std::size_t>(i)]);
  ModelView<DT> mv_dual{&model.spec, &model.layout, params_d.data()};
  NoiseView<DT> nv_dual{lso_d.data(), lsd_d.data()};

  const int n = g.dim();
  const int bw = std::min(n - 1, kStateDim * std::max(1, g.block_bandwidth()) + kStateDim - 1);
  LmResult result;
  result.x = std::move(x);
  Matrix<double> h;
  std::vector<double> grad;
  double cost;
  detail::assemble_normal_equations(g, result.x, views, mv_dual, nv_dual, h, grad, cost);
  result.cost = cost;
  result.cost_trace.push_back(cost);
  double lambda = s.lambda0;

  while (result.iterations < s.max_iters) {
    ++result.iterations;
    Matrix<double> hd = h;
    for (int i = 0; i < n; ++i) hd(i, i) += lambda;
    if (!cholesky_factor(hd, bw)) {
      lambda *= s.lambda_up;
      if (lambda > s.lambda_max)
        throw numeric_error("lm_optimize: singular damped normal equations");
      continue;
    }
    std::vector<double> step(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) step[i] = -grad[i];
    cholesky_solve_in_place(hd, step, bw);
    double step_inf = 0.0;
    for (double v : step) step_inf = std::max(step_inf, std::fabs(v));

    std::vector<double> candidate = result.x;
    for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] += step[i];
    const double cand_cost = graph_cost(g, candidate.data(), views);

    if (cand_cost < result.cost) {
      const double improvement = result.cost - cand_cost;
      result.x = std::move(candidate);
      result.cost = cand_cost;
      result.cost_trace.push_back(cand_cost);
      lambda = std::max(lambda * s.lambda_down, 1e-15);
      if (improvement <= s.residual_tol * std::max(1.0, result.cost) || step_inf <= s.step_tol) {
        result.converged = true;
        break;
      }
      detail::assemble_normal_equations(g, result.x, views, mv_dual, nv_dual, h, grad, cost);
    } else {
      lambda *= s.lambda_up;
      if (step_inf <= s.step_tol) {
        result.converged = true;
        break;
      }
      if (lambda > s.lambda_max)
        throw numeric_error("lm_optimize: singular damped normal equations");
    }
  }
  return result;
}

/// Re-runs exactly `iters` LM iterations from x in the tracked scalar type;
/// acceptance decisions and lambda updates run on values only.
template <class T>
std::vector<T> lm_unrolled_iterations(const FactorGraph& g, std::vector<T> x,
                                      const PipelineViews<T>& views, double lambda, int iters,
                                      const LmSettings& s = {}) {
  using DT = ad::Dual<T, kStateDim>;
  const int p_total = views.model.layout->total;
  const std::vector<DT> params_d = detail::lift_to_dual(views.model.p, p_total);
  std::array<DT, 3> lso_d;
  std::array<DT, 6> lsd_d;
  for (int i = 0; i < 3; ++i) lso_d[static_cast<std::size_t>(i)] = DT(views.noise.log_sigma_obs[i]);
  for (int i = 0; i < 6; ++i) lsd_d[static_cast<std::size_t>(i)] = DT(views.noise.log_sigma_dyn[i]);
  ModelView<DT> mv_dual{views.model.spec, views.model.layout, params_d.data()};
  NoiseView<DT> nv_dual{lso_d.data(), lsd_d.data()};

  const int n = g.dim();
  const int bw = std::min(n - 1, kStateDim * std::max(1, g.block_bandwidth()) + kStateDim - 1);
  Matrix<T> h;
  std::vector<T> grad;
  T cost(0.0);
  double current_cost = 0.0;
  bool have_eq = false;
  for (int it = 0; it < iters; ++it) {
    if (!have_eq) {
      detail::assemble_normal_equations(g, x, views, mv_dual, nv_dual, h, grad, cost);
      current_cost = value_of(cost);
      have_eq = true;
    }
    Matrix<T> hd = h;
    for (int i = 0; i < n; ++i) hd(i, i) += T(lambda);
    if (!cholesky_factor(hd, bw)) {
      lambda *= s.lambda_up;
      if (lambda > s.lambda_max)
        throw numeric_error("lm_unrolled_iterations: singular damped normal equations");
      continue;
    }
    std::vector<T> step(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) step[i] = -grad[i];
    cholesky_solve_in_place(hd, step, bw);

    std::vector<T> candidate = x;
    for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] += step[i];
    // value-path cost of the candidate
    std::vector<double> cand_values(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i) cand_values[i] = value_of(candidate[i]);
    PipelineViews<double> dviews;
    dviews.model = views.model_values;
    dviews.noise = views.noise_values;
    dviews.model_values = views.model_values;
    dviews.noise_values = views.noise_values;
    const double cand_cost = graph_cost(g, cand_values.data(), dviews);
    if (cand_cost < current_cost) {
      x = std::move(candidate);
      current_cost = cand_cost;
      lambda = std::max(lambda * s.lambda_down, 1e-15);
      have_eq = false;
    } else {
      lambda *= s.lambda_up;
      if (lambda > s.lambda_max) break;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Full estimator.

template <class T>
struct EstimateResult {
  std::vector<BallStateT<T>> states;  // one per observed timestep
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;
};

/// Initial values for LM: positions from the observations, a window-slope
/// velocity everywhere, spin from the prior target (ground truth or the
/// spin embedding).
inline std::vector<double> initial_graph_values(std::span<const Measurement> ms,
                                                const FactorGraph& g,
                                                const DynamicsModel& model) {
  const int window = std::min<int>(g.options.init_window, static_cast<int>(ms.size()));
  const Vec3 v0 = sliding_window_velocity(ms.first(static_cast<std::size_t>(window)), window);
  Vec3 w0{};
  if (g.options.spin_prior) {
    w0 = *g.options.spin_prior;
  } else if (g.options.use_spin_prior) {
    w0 = values(spin_embed(g.setting, model.view()));
  }
  std::vector<double> x(static_cast<std::size_t>(kStateDim) * ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    double* xi = x.data() + kStateDim * i;
    xi[0] = ms[i].p_obs.x;
    xi[1] = ms[i].p_obs.y;
    xi[2] = ms[i].p_obs.z;
    xi[3] = v0.x;
    xi[4] = v0.y;
    xi[5] = v0.z;
    xi[6] = w0.x;
    xi[7] = w0.y;
    xi[8] = w0.z;
  }
  return x;
}

/// Factor-graph initial-state estimation. Runs LM to convergence untracked,
/// then `unroll_iters` tracked iterations from the solution so gradients
/// reach the model weights and noise parameters; returns all optimized
/// states (the last one is where prediction starts).
template <class T>
EstimateResult<T> estimate_initial_state(std::span<const Measurement> ms,
                                         const DynamicsModel& model, const NoiseParams& noise,
                                         const PipelineViews<T>& views,
                                         const LauncherSetting& setting,
                                         const LmSettings& lm = {}, int unroll_iters = 3,
                                         const GraphOptions& graph_options = {},
                                         const TableGeometry& table = {}) {
  const FactorGraph g = build_factor_graph(ms, setting, table, graph_options);
  LmResult base = lm_optimize(g, initial_graph_values(ms, g, model), model, noise, lm);

  std::vector<T> x(base.x.size());
  for (std::size_t i = 0; i < base.x.size(); ++i) x[i] = T(base.x[i]);
  double lambda = lm.lambda0;
  if (unroll_iters > 0) x = lm_unrolled_iterations(g, std::move(x), views, lambda, unroll_iters, lm);

  EstimateResult<T> result;
  result.final_cost = base.cost;
  result.iterations = base.iterations;
  result.converged = base.converged;
  result.cost_trace = std::move(base.cost_trace);
  result.states.reserve(g.times.size());
  for (std::size_t i = 0; i < g.times.size(); ++i)
    result.states.push_back(unpack_state(x.data() + kStateDim * i, g.times[i]));
  return result;
}

inline EstimateResult<double> estimate_initial_state(std::span<const Measurement> ms,
                                                     const DynamicsModel& model,
                                                     const NoiseParams& noise,
                                                     const LauncherSetting& setting,
                                                     const LmSettings& lm = {},
                                                     int unroll_iters = 3,
                                                     const GraphOptions& graph_options = {},
                                                     const TableGeometry& table = {}) {
  return estimate_initial_state<double>(ms, model, noise, make_views(model, noise), setting, lm,
                                        unroll_iters, graph_options, table);
}

// ---------------------------------------------------------------------------
// EKF baseline.

struct EkfOptions {
  double p0_pos = 1e-4;     // initial position variance, m^2
  double p0_vel = 0.25;     // initial velocity variance
  double p0_spin = 25.0;    // initial spin variance
  double q_pos = 1e-10;     // position process variance per transition
  int start_index = 4;      // first update after the init window
};

struct EkfResult {
  BallState state;
  Matrix<double> covariance;  // 9x9
};

/// Standard predict/update recursion: the predict step integrates the model
/// between measurements and propagates covariance through the integration
/// Jacobian; the update uses the position-only observation model.
inline EkfResult ekf_estimate(std::span<const Measurement> ms, const DynamicsModel& model,
                              const NoiseParams& noise, const BallState& init,
                              const TableGeometry& table = {}, const EkfOptions& opt = {}) {
  if (ms.empty()) throw contract_error("ekf_estimate: no measurements");
  using DT = ad::Dual<double, kStateDim>;
  const std::vector<DT> params_d = detail::lift_to_dual(model.params.data(), model.layout.total);
  ModelView<DT> mv_dual{&model.spec, &model.layout, params_d.data()};

  Matrix<double> p(kStateDim, kStateDim);
  for (int i = 0; i < 3; ++i) p(i, i) = opt.p0_pos;
  for (int i = 3; i < 6; ++i) p(i, i) = opt.p0_vel;
  for (int i = 6; i < 9; ++i) p(i, i) = opt.p0_spin;

  std::array<double, kStateDim> q{};
  q[0] = q[1] = q[2] = opt.q_pos;
  for (int a = 0; a < 3; ++a) {
    q[static_cast<std::size_t>(3 + a)] = std::exp(2.0 * noise.log_sigma_dyn[static_cast<std::size_t>(a)]);
    q[static_cast<std::size_t>(6 + a)] = std::exp(2.0 * noise.log_sigma_dyn[static_cast<std::size_t>(3 + a)]);
  }
  const std::array<double, 3> r_diag = {std::exp(2.0 * noise.log_sigma_obs[0]),
                                        std::exp(2.0 * noise.log_sigma_obs[1]),
                                        std::exp(2.0 * noise.log_sigma_obs[2])};

  BallState state = init;
  auto symmetrize = [&p]() {
    for (int i = 0; i < kStateDim; ++i)
      for (int j = i + 1; j < kStateDim; ++j) {
        const double m = 0.5 * (p(i, j) + p(j, i));
        p(i, j) = m;
        p(j, i) = m;
      }
  };
  auto check_pd = [&p]() {
    Matrix<double> c = p;
    return cholesky_factor(c, kStateDim - 1);
  };

  for (std::size_t k = 0; k < ms.size(); ++k) {
    if (ms[k].t <= state.t + 1e-12) continue;
    // predict
    std::array<DT, kStateDim> xd;
    const std::array<double, kStateDim> xs = {state.p.x, state.p.y, state.p.z, state.v.x, state.v.y,
                                              state.v.z, state.w.x, state.w.y, state.w.z};
    for (int c = 0; c < kStateDim; ++c) xd[static_cast<std::size_t>(c)] = DT::seeded(xs[static_cast<std::size_t>(c)], c);
    BallStateT<DT> sd = unpack_state(xd.data(), state.t);
    const BallStateT<DT> pred = integrate_to(sd, ms[k].t, mv_dual, model.view(), table, 0.01);
    const std::array<DT, kStateDim> pred_flat = {pred.p.x, pred.p.y, pred.p.z, pred.v.x, pred.v.y,
                                                 pred.v.z, pred.w.x, pred.w.y, pred.w.z};
    Matrix<double> f(kStateDim, kStateDim);
    for (int r = 0; r < kStateDim; ++r)
      for (int c = 0; c < kStateDim; ++c) f(r, c) = pred_flat[static_cast<std::size_t>(r)].d[static_cast<std::size_t>(c)];
    // P = F P F^T + Q
    Matrix<double> fp(kStateDim, kStateDim);
    for (int r = 0; r < kStateDim; ++r)
      for (int c = 0; c < kStateDim; ++c) {
        double acc = 0.0;
        for (int m = 0; m < kStateDim; ++m) acc += f(r, m) * p(m, c);
        fp(r, c) = acc;
      }
    for (int r = 0; r < kStateDim; ++r)
      for (int c = 0; c < kStateDim; ++c) {
        double acc = 0.0;
        for (int m = 0; m < kStateDim; ++m) acc += fp(r, m) * f(c, m);
        p(r, c) = acc;
      }
    for (int i = 0; i < kStateDim; ++i) p(i, i) += q[static_cast<std::size_t>(i)];
    state.t = ms[k].t;
    state.p = values(V3<DT>{pred_flat[0], pred_flat[1], pred_flat[2]});
    state.v = values(V3<DT>{pred_flat[3], pred_flat[4], pred_flat[5]});
    state.w = values(V3<DT>{pred_flat[6], pred_flat[7], pred_flat[8]});

    // update with z = p_obs
    Matrix<double> s3(3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s3(r, c) = p(r, c);
    for (int r = 0; r < 3; ++r) s3(r, r) += r_diag[static_cast<std::size_t>(r)];
    // K = P H^T S^-1: solve S K^T = H P
    Matrix<double> kt(3, kStateDim);
    {
      Matrix<double> s_chol = s3;
      if (!cholesky_factor(s_chol, 2)) throw numeric_error("ekf_estimate: innovation covariance not PD");
      for (int c = 0; c < kStateDim; ++c) {
        std::vector<double> col(3);
        for (int r = 0; r < 3; ++r) col[static_cast<std::size_t>(r)] = p(r, c);
        cholesky_solve_in_place(s_chol, col, 2);
        for (int r = 0; r < 3; ++r) kt(r, c) = col[static_cast<std::size_t>(r)];
      }
    }
    const std::array<double, 3> innov = {ms[k].p_obs.x - state.p.x, ms[k].p_obs.y - state.p.y,
                                         ms[k].p_obs.z - state.p.z};
    std::array<double, kStateDim> dx{};
    for (int c = 0; c < kStateDim; ++c)
      for (int r = 0; r < 3; ++r) dx[static_cast<std::size_t>(c)] += kt(r, c) * innov[static_cast<std::size_t>(r)];
    state.p += Vec3{dx[0], dx[1], dx[2]};
    state.v += Vec3{dx[3], dx[4], dx[5]};
    state.w += Vec3{dx[6], dx[7], dx[8]};

    // Joseph-form covariance update: P = (I-KH) P (I-KH)^T + K R K^T
    Matrix<double> ikh(kStateDim, kStateDim);
    for (int i = 0; i < kStateDim; ++i) ikh(i, i) = 1.0;
    for (int r = 0; r < kStateDim; ++r)
      for (int c = 0; c < 3; ++c) ikh(r, c) -= kt(c, r);
    Matrix<double> tmp(kStateDim, kStateDim);
    for (int r = 0; r < kStateDim; ++r)
      for (int c = 0; c < kStateDim; ++c) {
        double acc = 0.0;
        for (int m = 0; m < kStateDim; ++m) acc += ikh(r, m) * p(m, c);
        tmp(r, c) = acc;
      }
    for (int r = 0; r < kStateDim; ++r)
      for (int c = 0; c < kStateDim; ++c) {
        double acc = 0.0;
        for (int m = 0; m < kStateDim; ++m) acc += tmp(r, m) * ikh(c, m);
        for (int a = 0; a < 3; ++a) acc += kt(a, r) * r_diag[static_cast<std::size_t>(a)] * kt(a, c);
        p(r, c) = acc;
      }
    symmetrize();
    if (!check_pd()) {
      symmetrize();
      for (int i = 0; i < kStateDim; ++i) p(i, i) += 1e-12;
      if (!check_pd())
        throw numeric_error("ekf_estimate: covariance lost positive definiteness");
    }
  }
  return {state, p};
}

/// Estimator report entry (JSON export).
inline json estimate_report_entry(const std::string& id, const EstimateResult<double>& est) {
  const BallState& s = est.states.back();
  json j;
  j["id"] = id;
  j["state"] = {{"t", s.t}, {"p", vec3_to_json(s.p)}, {"v", vec3_to_json(s.v)}, {"w", vec3_to_json(s.w)}};
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  json trace = json::array();
  for (double c : est.cost_trace) trace.push_back(c);
  j["cost_trace"] = std::move(trace);
  return j;
}

}  // namespace spinflight
