#pragma once

// Canonical JSON serialization: fixed field order (insertion order of an
// ordered_json tree) and floats printed with 9 significant digits, so that
// deserialize-then-serialize reproduces a file byte for byte and repeated
// runs with the same seed produce identical reports.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinflight/core.hpp"
#include "spinflight/errors.hpp"

namespace spinflight {

using json = nlohmann::ordered_json;

/// Shortest of the %.9g forms; distinct 9-digit decimals map to distinct
/// doubles, so format(parse(s)) == s for canonical input.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) throw numeric_error("format_double: non-finite value");
  if (v == 0.0) v = 0.0;  // never emit "-0"
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace detail {

inline void dump_canonical(const json& j, std::string& out, int indent, int depth) {
  const std::string pad(indent > 0 ? static_cast<std::size_t>(indent * (depth + 1)) : 0, ' ');
  const std::string pad_close(indent > 0 ? static_cast<std::size_t>(indent * depth) : 0, ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) {
          out += ',';
          out += nl;
        }
        first = false;
        out += pad;
        out += json(it.key()).dump();
        out += indent > 0 ? ": " : ":";
        dump_canonical(it.value(), out, indent, depth + 1);
      }
      out += nl;
      out += pad_close;
      out += '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      out += nl;
      bool first = true;
      for (const auto& el : j) {
        if (!first) {
          out += ',';
          out += nl;
        }
        first = false;
        out += pad;
        dump_canonical(el, out, indent, depth + 1);
      }
      out += nl;
      out += pad_close;
      out += ']';
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

/// indent <= 0 emits a single line (used for JSON-Lines datasets).
inline std::string dump_canonical(const json& j, int indent = 2) {
  std::string out;
  detail::dump_canonical(j, out, indent, 0);
  if (indent > 0) out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory file schema.

inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw data_error("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json trajectory_to_json(const Trajectory& traj) {
  json j;
  j["id"] = traj.id;
  j["setting"] = {{"topspin", traj.setting.topspin},
                  {"sidespin", traj.setting.sidespin},
                  {"speed_level", traj.setting.speed_level}};
  json ms = json::array();
  for (const Measurement& m : traj.measurements)
    ms.push_back(json{{"t", m.t}, {"p", vec3_to_json(m.p_obs)}});
  j["measurements"] = std::move(ms);
  if (traj.ground_truth) {
    json gt = json::array();
    for (const BallState& s : *traj.ground_truth)
      gt.push_back(json{{"t", s.t},
                        {"p", vec3_to_json(s.p)},
                        {"v", vec3_to_json(s.v)},
                        {"w", vec3_to_json(s.w)}});
    j["ground_truth"] = std::move(gt);
  }
  return j;
}

inline Trajectory trajectory_from_json(const json& j) {
  Trajectory traj;
  try {
    traj.id = j.at("id").get<std::string>();
    const json& s = j.at("setting");
    traj.setting.topspin = s.at("topspin").get<int>();
    traj.setting.sidespin = s.at("sidespin").get<int>();
    traj.setting.speed_level = s.at("speed_level").get<int>();
    for (const json& m : j.at("measurements")) {
      traj.measurements.push_back(
          {m.at("t").get<double>(), vec3_from_json(m.at("p"))});
    }
    if (j.contains("ground_truth")) {
      std::vector<BallState> gt;
      for (const json& g : j.at("ground_truth")) {
        BallState st;
        st.t = g.at("t").get<double>();
        st.p = vec3_from_json(g.at("p"));
        st.v = vec3_from_json(g.at("v"));
        st.w = vec3_from_json(g.at("w"));
        gt.push_back(st);
      }
      traj.ground_truth = std::move(gt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed trajectory JSON: ") + e.what());
  }
  return traj;
}

inline std::string trajectory_to_line(const Trajectory& traj) {
  return dump_canonical(trajectory_to_json(traj), 0);
}

inline Trajectory trajectory_from_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed trajectory JSON: ") + e.what());
  }
  return trajectory_from_json(j);
}

/// Dataset file: JSON Lines, one trajectory per line.
inline void save_dataset(const std::string& path, const std::vector<Trajectory>& dataset) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open for writing: " + path);
  for (const Trajectory& traj : dataset) out << trajectory_to_line(traj) << '\n';
}

inline std::vector<Trajectory> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset file: " + path);
  std::vector<Trajectory> dataset;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      dataset.push_back(trajectory_from_line(line));
    } catch (const data_error& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dataset;
}

inline void save_json(const std::string& path, const json& j, int indent = 2) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open for writing: " + path);
  out << dump_canonical(j, indent);
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": " + e.what());
  }
}

}  // namespace spinflight
