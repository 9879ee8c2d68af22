#pragma once

// Dynamics models: the analytic aerodynamics/bounce pair with tunable
// coefficients, and the neural family (plain MLP, MLP with skip
// connections, self-multiplying network) wrapped in Gram-Schmidt feature
// extraction with a spin embedding and a gravity bias.
//
// Parameters live in one flat vector; evaluation reads them through a
// ModelView<T> so the same code runs on doubles, tape variables, and duals.
// Parameters are immutable during evaluation; updates happen only in the
// trainer between passes.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spinflight/core.hpp"
#include "spinflight/errors.hpp"
#include "spinflight/gs.hpp"
#include "spinflight/json_io.hpp"
#include "spinflight/noise.hpp"

namespace spinflight {

enum class ModelKind { analytic, mlp, skip, mnn };
enum class Activation { tanh, identity };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::analytic: return "analytic";
    case ModelKind::mlp: return "mlp";
    case ModelKind::skip: return "skip";
    case ModelKind::mnn: return "mnn";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "analytic") return ModelKind::analytic;
  if (s == "mlp") return ModelKind::mlp;
  if (s == "skip") return ModelKind::skip;
  if (s == "mnn") return ModelKind::mnn;
  throw data_error("unknown model kind: " + s);
}

struct ModelSpec {
  ModelKind kind = ModelKind::mnn;
  bool uses_gs = true;
  int hidden = 32;
  int repeats = 4;
  Activation activation = Activation::tanh;
};

constexpr int kMaxHidden = 64;
constexpr int kNetOutputs = 6;

/// Analytic coefficient slots within the parameter vector.
enum AnalyticCoeff {
  kDrag = 0,        // 1/m
  kMagnus = 1,      // Magnus scaling
  kGravity = 2,     // m/s^2, magnitude
  kRestitution = 3, // e_z in (0, 1]
  kFriction = 4,    // mu, tangential mixing
  kSpinTransfer = 5,
  kAnalyticCount = 6
};

/// Offsets of each block inside the flat parameter vector; -1 when absent.
struct ParamLayout {
  int spin_w = -1, spin_b = -1;  // 3x2 row-major, 3
  int aero_in_w = -1, aero_in_b = -1;
  int aero_f_w = -1, aero_f_b = -1;
  int aero_out_w = -1, aero_out_b = -1;
  int gravity_bias = -1;  // 3
  int bounce_in_w = -1, bounce_in_b = -1;
  int bounce_f_w = -1, bounce_f_b = -1;
  int bounce_out_w = -1, bounce_out_b = -1;
  int analytic = -1;  // 6
  int aero_in_dim = 0, bounce_in_dim = 0;
  int total = 0;
};

inline ParamLayout compute_layout(const ModelSpec& spec) {
  if (spec.hidden < 1 || spec.hidden > kMaxHidden)
    throw config_error("model hidden width must be in [1, " + std::to_string(kMaxHidden) + "]");
  if (spec.repeats < 1) throw config_error("model repeats must be >= 1");
  ParamLayout l;
  int at = 0;
  auto block = [&at](int size) {
    const int offset = at;
    at += size;
    return offset;
  };
  l.spin_w = block(6);
  l.spin_b = block(3);
  if (spec.kind == ModelKind::analytic) {
    l.analytic = block(kAnalyticCount);
  } else {
    const int h = spec.hidden;
    l.aero_in_dim = spec.uses_gs ? 3 : 6;
    l.bounce_in_dim = spec.uses_gs ? 5 : 6;
    l.aero_in_w = block(h * l.aero_in_dim);
    l.aero_in_b = block(h);
    l.aero_f_w = block(h * h);
    l.aero_f_b = block(h);
    l.aero_out_w = block(kNetOutputs * h);
    l.aero_out_b = block(kNetOutputs);
    l.gravity_bias = block(3);
    l.bounce_in_w = block(h * l.bounce_in_dim);
    l.bounce_in_b = block(h);
    l.bounce_f_w = block(h * h);
    l.bounce_f_b = block(h);
    l.bounce_out_w = block(kNetOutputs * h);
    l.bounce_out_b = block(kNetOutputs);
  }
  l.total = at;
  return l;
}

template <class T>
struct ModelView {
  const ModelSpec* spec = nullptr;
  const ParamLayout* layout = nullptr;
  const T* p = nullptr;
};

/// One network head (aerodynamics or bounce) seen through the flat vector.
template <class T>
struct NetView {
  const T* in_w;
  const T* in_b;
  const T* f_w;
  const T* f_b;
  const T* out_w;
  const T* out_b;
  int in_dim, hidden, repeats;
  ModelKind kind;
  Activation act;
};

template <class T>
NetView<T> aero_net(const ModelView<T>& m) {
  const ParamLayout& l = *m.layout;
  return {m.p + l.aero_in_w, m.p + l.aero_in_b, m.p + l.aero_f_w, m.p + l.aero_f_b,
          m.p + l.aero_out_w, m.p + l.aero_out_b, l.aero_in_dim, m.spec->hidden,
          m.spec->repeats, m.spec->kind, m.spec->activation};
}

template <class T>
NetView<T> bounce_net(const ModelView<T>& m) {
  const ParamLayout& l = *m.layout;
  return {m.p + l.bounce_in_w, m.p + l.bounce_in_b, m.p + l.bounce_f_w, m.p + l.bounce_f_b,
          m.p + l.bounce_out_w, m.p + l.bounce_out_b, l.bounce_in_dim, m.spec->hidden,
          m.spec->repeats, m.spec->kind, m.spec->activation};
}

struct AnalyticCoeffs {
  double k_drag = 0.12;
  double k_magnus = 0.01;
  double gravity = 9.81;
  double e_z = 0.93;
  double mu = 0.25;
  double spin_transfer = 0.25;

  std::array<double, kAnalyticCount> flat() const {
    return {k_drag, k_magnus, gravity, e_z, mu, spin_transfer};
  }
  static AnalyticCoeffs from_flat(const double* p) {
    return {p[kDrag], p[kMagnus], p[kGravity], p[kRestitution], p[kFriction], p[kSpinTransfer]};
  }
};

/// 3x2 linear map plus bias converting discrete launch settings into a spin
/// vector (latent units; rad/s when paired with the analytic model).
struct SpinEmbedding {
  std::array<double, 6> weight{};  // row-major 3x2
  std::array<double, 3> bias{};
};

class DynamicsModel {
 public:
  ModelSpec spec;
  ParamLayout layout;
  std::vector<double> params;

  DynamicsModel() : layout(compute_layout(spec)), params(static_cast<std::size_t>(layout.total), 0.0) {}

  /// Fresh model with fan-in-scaled uniform weights, zero biases, gravity
  /// bias at (0, 0, -9.81) and default analytic coefficients.
  static DynamicsModel create(const ModelSpec& spec, std::uint64_t seed) {
    DynamicsModel m;
    m.spec = spec;
    m.layout = compute_layout(spec);
    m.params.assign(static_cast<std::size_t>(m.layout.total), 0.0);
    std::mt19937_64 rng(seed);
    auto uniform_fan_in = [&rng, &m](int offset, int rows, int cols) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (int i = 0; i < rows * cols; ++i) m.params[static_cast<std::size_t>(offset + i)] = dist(rng);
    };
    uniform_fan_in(m.layout.spin_w, 3, 2);
    if (spec.kind == ModelKind::analytic) {
      m.set_analytic(AnalyticCoeffs{});
    } else {
      const ParamLayout& l = m.layout;
      uniform_fan_in(l.aero_in_w, spec.hidden, l.aero_in_dim);
      uniform_fan_in(l.aero_f_w, spec.hidden, spec.hidden);
      uniform_fan_in(l.aero_out_w, kNetOutputs, spec.hidden);
      uniform_fan_in(l.bounce_in_w, spec.hidden, l.bounce_in_dim);
      uniform_fan_in(l.bounce_f_w, spec.hidden, spec.hidden);
      uniform_fan_in(l.bounce_out_w, kNetOutputs, spec.hidden);
      m.params[static_cast<std::size_t>(l.gravity_bias) + 2] = -9.81;
    }
    return m;
  }

  ModelView<double> view() const { return {&spec, &layout, params.data()}; }

  AnalyticCoeffs analytic() const {
    if (layout.analytic < 0) throw contract_error("model has no analytic coefficients");
    return AnalyticCoeffs::from_flat(params.data() + layout.analytic);
  }
  void set_analytic(const AnalyticCoeffs& c) {
    if (layout.analytic < 0) throw contract_error("model has no analytic coefficients");
    const auto flat = c.flat();
    for (int i = 0; i < kAnalyticCount; ++i)
      params[static_cast<std::size_t>(layout.analytic + i)] = flat[static_cast<std::size_t>(i)];
  }

  SpinEmbedding spin_embedding() const {
    SpinEmbedding e;
    for (int i = 0; i < 6; ++i) e.weight[static_cast<std::size_t>(i)] = params[static_cast<std::size_t>(layout.spin_w + i)];
    for (int i = 0; i < 3; ++i) e.bias[static_cast<std::size_t>(i)] = params[static_cast<std::size_t>(layout.spin_b + i)];
    return e;
  }
  void set_spin_embedding(const SpinEmbedding& e) {
    for (int i = 0; i < 6; ++i) params[static_cast<std::size_t>(layout.spin_w + i)] = e.weight[static_cast<std::size_t>(i)];
    for (int i = 0; i < 3; ++i) params[static_cast<std::size_t>(layout.spin_b + i)] = e.bias[static_cast<std::size_t>(i)];
  }

  Vec3 gravity_bias() const {
    if (layout.gravity_bias < 0) return {0.0, 0.0, -analytic().gravity};
    const double* g = params.data() + layout.gravity_bias;
    return {g[0], g[1], g[2]};
  }
};

// ---------------------------------------------------------------------------
// Evaluation.

template <class T>
T activate(const T& x, Activation act) {
  using std::tanh;
  return act == Activation::tanh ? tanh(x) : x;
}

/// Converts launcher labels to a spin vector: weight * (topspin, sidespin)
/// + bias. The speed level parameterizes launch velocity, not spin, and
/// does not enter.
template <class T>
V3<T> spin_embed(const LauncherSetting& setting, const ModelView<T>& m) {
  const T* w = m.p + m.layout->spin_w;
  const T* b = m.p + m.layout->spin_b;
  const double ts = static_cast<double>(setting.topspin);
  const double ss = static_cast<double>(setting.sidespin);
  return {w[0] * ts + w[1] * ss + b[0],
          w[2] * ts + w[3] * ss + b[1],
          w[4] * ts + w[5] * ss + b[2]};
}

namespace detail {

template <class T>
void apply_f_layer(const NetView<T>& net, const T* h, T* out) {
  const int n = net.hidden;
  for (int r = 0; r < n; ++r) {
    T acc = net.f_b[r];
    const T* row = net.f_w + r * n;
    for (int c = 0; c < n; ++c) acc += row[c] * h[c];
    out[r] = activate(acc, net.act);
  }
}

}  // namespace detail

/// Repeated network body applied to the initial hidden state:
///   mnn:  h_k = h_0 (.) F(h_{k-1}) + h_{k-1}   (elementwise product)
///   skip: h_k = F(h_{k-1}) + h_{k-1}
///   mlp:  h_k = F(h_{k-1})
/// where F is the shared affine layer followed by the activation.
template <class T>
void mnn_forward(const NetView<T>& net, const T* h0, T* h_out) {
  const int n = net.hidden;
  std::array<T, kMaxHidden> h;
  std::array<T, kMaxHidden> f;
  for (int i = 0; i < n; ++i) h[static_cast<std::size_t>(i)] = h0[i];
  for (int k = 0; k < net.repeats; ++k) {
    detail::apply_f_layer(net, h.data(), f.data());
    switch (net.kind) {
      case ModelKind::mnn:
        for (int i = 0; i < n; ++i)
          h[static_cast<std::size_t>(i)] = h0[i] * f[static_cast<std::size_t>(i)] + h[static_cast<std::size_t>(i)];
        break;
      case ModelKind::skip:
        for (int i = 0; i < n; ++i)
          h[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)] + h[static_cast<std::size_t>(i)];
        break;
      default:
        for (int i = 0; i < n; ++i) h[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)];
        break;
    }
  }
  for (int i = 0; i < n; ++i) h_out[i] = h[static_cast<std::size_t>(i)];
}

/// Full head: input projection, repeated body, output projection.
template <class T>
void net_eval(const NetView<T>& net, const T* x, T* out) {
  std::array<T, kMaxHidden> h0;
  std::array<T, kMaxHidden> hn;
  for (int r = 0; r < net.hidden; ++r) {
    T acc = net.in_b[r];
    const T* row = net.in_w + r * net.in_dim;
    for (int c = 0; c < net.in_dim; ++c) acc += row[c] * x[c];
    h0[static_cast<std::size_t>(r)] = acc;
  }
  mnn_forward(net, h0.data(), hn.data());
  for (int r = 0; r < kNetOutputs; ++r) {
    T acc = net.out_b[r];
    const T* row = net.out_w + r * net.hidden;
    for (int c = 0; c < net.hidden; ++c) acc += row[c] * hn[static_cast<std::size_t>(c)];
    out[r] = acc;
  }
}

template <class T>
struct AeroOut {
  V3<T> a;      // m/s^2, world frame
  V3<T> w_dot;  // spin rate of change
};

/// Acceleration and spin derivative in the world frame. Position never
/// enters, so the map is translation invariant by construction.
template <class T>
AeroOut<T> aero_accel(const BallStateT<T>& s, const ModelView<T>& m) {
  AeroOut<T> out;
  if (m.spec->kind == ModelKind::analytic) {
    const T* c = m.p + m.layout->analytic;
    const T sq = squared_norm(s.v);
    const T speed = value_of(sq) > 0.0 ? T(sqrt(sq)) : T(0);
    out.a = V3<T>(T(0), T(0), -c[kGravity]) - s.v * (c[kDrag] * speed) + cross(s.w, s.v) * c[kMagnus];
    out.w_dot = V3<T>(T(0), T(0), T(0));
    return out;
  }
  const NetView<T> net = aero_net(m);
  const T* gb = m.p + m.layout->gravity_bias;
  std::array<T, kNetOutputs> y;
  if (m.spec->uses_gs) {
    const std::array<V3<T>, 2> inputs = {s.v, s.w};
    const GsBasis<T, 3> basis = gs_basis_tolerant(inputs.data(), 2);
    const InvariantFeatures<T, 3> feats = gs_features_from_basis(basis, inputs.data(), 2);
    net_eval(net, feats.coeffs.data(), y.data());
    out.a = gs_reconstruct(basis, y.data(), 3);
    out.w_dot = gs_reconstruct(basis, y.data() + 3, 3);
  } else {
    const std::array<T, 6> x = {s.v.x, s.v.y, s.v.z, s.w.x, s.w.y, s.w.z};
    net_eval(net, x.data(), y.data());
    out.a = {y[0], y[1], y[2]};
    out.w_dot = {y[3], y[4], y[5]};
  }
  out.a += V3<T>(gb[0], gb[1], gb[2]);
  return out;
}

/// Pre-contact to post-contact map at the table surface; t and p unchanged.
///
/// Analytic form: with contact normal z, slip s = v_t - r (w_y, -w_x) and
/// rolling target w_t* = (-v_y, v_x)/r,
///   [v'_x]   [(1-mu)      0      0       mu*r ] [v_x]
///   [v'_y] = [  0      (1-mu)  -mu*r      0   ] [v_y]
///   [w'_x]   [  0      -st/r   (1-st)     0   ] [w_x]
///   [w'_y]   [ st/r       0      0      (1-st)] [w_y]
/// plus v'_z = -e_z v_z and w'_z = w_z.
template <class T>
BallStateT<T> bounce_map(const BallStateT<T>& s, const ModelView<T>& m) {
  if (!(value_of(s.v.z) < 0.0))
    throw contract_error("bounce_map: incoming velocity must point downward");
  BallStateT<T> post = s;
  if (m.spec->kind == ModelKind::analytic) {
    const T* c = m.p + m.layout->analytic;
    const double r = 0.02;  // ball radius, m (matches TableGeometry default)
    const T mu = c[kFriction];
    const T st = c[kSpinTransfer];
    post.v.x = (T(1) - mu) * s.v.x + mu * T(r) * s.w.y;
    post.v.y = (T(1) - mu) * s.v.y - mu * T(r) * s.w.x;
    post.v.z = -c[kRestitution] * s.v.z;
    post.w.x = (T(1) - st) * s.w.x - st * s.v.y * T(1.0 / r);
    post.w.y = (T(1) - st) * s.w.y + st * s.v.x * T(1.0 / r);
    post.w.z = s.w.z;
    return post;
  }
  const NetView<T> net = bounce_net(m);
  std::array<T, kNetOutputs> y;
  if (m.spec->uses_gs) {
    const std::array<V2<T>, 2> inputs = {V2<T>(s.v.x, s.v.y), V2<T>(s.w.x, s.w.y)};
    const GsBasis<T, 2> basis = gs_basis_tolerant(inputs.data(), 2);
    const InvariantFeatures<T, 2> feats = gs_features_from_basis(basis, inputs.data(), 2);
    // invariant scalars v_z and w_z ride along with the three GS features
    const std::array<T, 5> x = {feats.coeffs[0], feats.coeffs[1], feats.coeffs[2], s.v.z, s.w.z};
    net_eval(net, x.data(), y.data());
    const V2<T> v_t = gs_reconstruct(basis, y.data(), 2);
    const V2<T> w_t = gs_reconstruct(basis, y.data() + 3, 2);
    post.v = {v_t.x, v_t.y, y[2]};
    post.w = {w_t.x, w_t.y, y[5]};
  } else {
    const std::array<T, 6> x = {s.v.x, s.v.y, s.v.z, s.w.x, s.w.y, s.w.z};
    net_eval(net, x.data(), y.data());
    post.v = {y[0], y[1], y[2]};
    post.w = {y[3], y[4], y[5]};
  }
  return post;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: single JSON document, weight arrays row-major.

inline json checkpoint_to_json(const DynamicsModel& m, const NoiseParams* noise = nullptr) {
  json j;
  j["format_version"] = 1;
  j["kind"] = to_string(m.spec.kind);
  j["uses_gs"] = m.spec.uses_gs;
  j["hidden"] = m.spec.hidden;
  j["repeats"] = m.spec.repeats;
  j["activation"] = m.spec.activation == Activation::tanh ? "tanh" : "identity";
  auto slice = [&m](int offset, int count) {
    json arr = json::array();
    for (int i = 0; i < count; ++i) arr.push_back(m.params[static_cast<std::size_t>(offset + i)]);
    return arr;
  };
  j["spin_embedding"] = {{"weight", slice(m.layout.spin_w, 6)}, {"bias", slice(m.layout.spin_b, 3)}};
  if (m.spec.kind == ModelKind::analytic) {
    const AnalyticCoeffs c = m.analytic();
    j["analytic"] = {{"k_drag", c.k_drag},   {"k_magnus", c.k_magnus},
                     {"gravity", c.gravity}, {"e_z", c.e_z},
                     {"mu", c.mu},           {"spin_transfer", c.spin_transfer}};
  } else {
    const ParamLayout& l = m.layout;
    const int h = m.spec.hidden;
    j["aero"] = {{"in_w", slice(l.aero_in_w, h * l.aero_in_dim)},
                 {"in_b", slice(l.aero_in_b, h)},
                 {"f_w", slice(l.aero_f_w, h * h)},
                 {"f_b", slice(l.aero_f_b, h)},
                 {"out_w", slice(l.aero_out_w, kNetOutputs * h)},
                 {"out_b", slice(l.aero_out_b, kNetOutputs)},
                 {"gravity_bias", slice(l.gravity_bias, 3)}};
    j["bounce"] = {{"in_w", slice(l.bounce_in_w, h * l.bounce_in_dim)},
                   {"in_b", slice(l.bounce_in_b, h)},
                   {"f_w", slice(l.bounce_f_w, h * h)},
                   {"f_b", slice(l.bounce_f_b, h)},
                   {"out_w", slice(l.bounce_out_w, kNetOutputs * h)},
                   {"out_b", slice(l.bounce_out_b, kNetOutputs)}};
  }
  if (noise != nullptr) {
    json obs = json::array(), dyn = json::array();
    for (double v : noise->log_sigma_obs) obs.push_back(v);
    for (double v : noise->log_sigma_dyn) dyn.push_back(v);
    j["noise"] = {{"log_sigma_obs", obs}, {"log_sigma_dyn", dyn}, {"learnable", noise->learnable}};
  }
  return j;
}

inline DynamicsModel checkpoint_from_json(const json& j, NoiseParams* noise = nullptr) {
  DynamicsModel m;
  try {
    if (j.at("format_version").get<int>() != 1) throw data_error("unsupported checkpoint format version");
    ModelSpec spec;
    spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
    spec.uses_gs = j.at("uses_gs").get<bool>();
    spec.hidden = j.at("hidden").get<int>();
    spec.repeats = j.at("repeats").get<int>();
    const std::string act = j.at("activation").get<std::string>();
    if (act != "tanh" && act != "identity") throw data_error("unknown activation: " + act);
    spec.activation = act == "tanh" ? Activation::tanh : Activation::identity;
    m.spec = spec;
    m.layout = compute_layout(spec);
    m.params.assign(static_cast<std::size_t>(m.layout.total), 0.0);
    auto fill = [&m](const json& arr, int offset, int count) {
      if (!arr.is_array() || static_cast<int>(arr.size()) != count)
        throw data_error("checkpoint array has wrong length");
      for (int i = 0; i < count; ++i) {
        const double v = arr[static_cast<std::size_t>(i)].get<double>();
        if (!std::isfinite(v)) throw data_error("checkpoint contains non-finite value");
        m.params[static_cast<std::size_t>(offset + i)] = v;
      }
    };
    fill(j.at("spin_embedding").at("weight"), m.layout.spin_w, 6);
    fill(j.at("spin_embedding").at("bias"), m.layout.spin_b, 3);
    if (spec.kind == ModelKind::analytic) {
      const json& a = j.at("analytic");
      AnalyticCoeffs c;
      c.k_drag = a.at("k_drag").get<double>();
      c.k_magnus = a.at("k_magnus").get<double>();
      c.gravity = a.at("gravity").get<double>();
      c.e_z = a.at("e_z").get<double>();
      c.mu = a.at("mu").get<double>();
      c.spin_transfer = a.at("spin_transfer").get<double>();
      if (!(c.e_z > 0.0 && c.e_z <= 1.0)) throw data_error("checkpoint e_z outside (0, 1]");
      if (c.k_drag < 0.0) throw data_error("checkpoint k_drag negative");
      m.set_analytic(c);
    } else {
      const ParamLayout& l = m.layout;
      const int h = spec.hidden;
      const json& a = j.at("aero");
      fill(a.at("in_w"), l.aero_in_w, h * l.aero_in_dim);
      fill(a.at("in_b"), l.aero_in_b, h);
      fill(a.at("f_w"), l.aero_f_w, h * h);
      fill(a.at("f_b"), l.aero_f_b, h);
      fill(a.at("out_w"), l.aero_out_w, kNetOutputs * h);
      fill(a.at("out_b"), l.aero_out_b, kNetOutputs);
      fill(a.at("gravity_bias"), l.gravity_bias, 3);
      const json& b = j.at("bounce");
      fill(b.at("in_w"), l.bounce_in_w, h * l.bounce_in_dim);
      fill(b.at("in_b"), l.bounce_in_b, h);
      fill(b.at("f_w"), l.bounce_f_w, h * h);
      fill(b.at("f_b"), l.bounce_f_b, h);
      fill(b.at("out_w"), l.bounce_out_w, kNetOutputs * h);
      fill(b.at("out_b"), l.bounce_out_b, kNetOutputs);
    }
    if (noise != nullptr && j.contains("noise")) {
      const json& n = j.at("noise");
      for (int i = 0; i < 3; ++i) noise->log_sigma_obs[static_cast<std::size_t>(i)] = n.at("log_sigma_obs").at(static_cast<std::size_t>(i)).get<double>();
      for (int i = 0; i < 6; ++i) noise->log_sigma_dyn[static_cast<std::size_t>(i)] = n.at("log_sigma_dyn").at(static_cast<std::size_t>(i)).get<double>();
      noise->learnable = n.value("learnable", true);
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed checkpoint: ") + e.what());
  }
  return m;
}

inline void save_checkpoint(const std::string& path, const DynamicsModel& m,
                            const NoiseParams* noise = nullptr) {
  save_json(path, checkpoint_to_json(m, noise));
}

inline DynamicsModel load_checkpoint(const std::string& path, NoiseParams* noise = nullptr) {
  return checkpoint_from_json(load_json(path), noise);
}

}  // namespace spinflight
