#pragma once

// CSV serialization of trajectories and point clouds. Columns are
// (t or point id, mode, sign, logmag); the planar part uses modes "x" and
// "y" with sign and log|value| like any other coordinate.

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "manelab/geometry.hpp"
#include "manelab/nonlinear.hpp"

namespace manelab {

/// %.17g, with inf/nan spelled as in C.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {
inline void write_planar(std::ostream& os, const std::string& key, double x, double y) {
  for (int k = 0; k < 2; ++k) {
    const double v = k == 0 ? x : y;
    if (v == 0.0) continue;
    os << key << ',' << (k == 0 ? "x" : "y") << ',' << (v > 0 ? 1 : -1) << ',' << fmt17(std::log(std::abs(v))) << '\n';
  }
}

inline void write_modal(std::ostream& os, const std::string& key, const LogModeVector& w) {
  for (const auto& e : w.entries()) os << key << ',' << e.mode << ',' << e.value.sign << ',' << fmt17(e.value.log_mag) << '\n';
}
}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& r) {
  os << "t,mode,sign,logmag\n";
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    const std::string key = fmt17(r.times[i]);
    detail::write_planar(os, key, r.states[i].x, r.states[i].y);
    detail::write_modal(os, key, r.states[i].w);
  }
}

inline void write_cloud_csv(std::ostream& os, const PointCloud& c) {
  os << "point,mode,sign,logmag\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::string key = std::to_string(i);
    detail::write_planar(os, key, c.planar(i)[0], c.planar(i)[1]);
    detail::write_modal(os, key, c.modal(i));
    if (c.modal(i).empty() && c.planar(i)[0] == 0.0 && c.planar(i)[1] == 0.0) os << key << ",0,0,-inf\n";
  }
}

class CloudParseError : public std::runtime_error {
 public:
  CloudParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads the format written by write_cloud_csv. Point ids must be
/// contiguous from 0 and rows of one point adjacent; mode 0 with sign 0 is
/// the origin marker.
inline PointCloud read_cloud_csv(std::istream& is, PointCloud cloud) {
  std::string line;
  std::size_t ln = 0;
  long current = -1;
  LogModeVector w;
  std::array<double, 2> planar{0.0, 0.0};
  auto flush = [&] {
    if (current >= 0) cloud.add(w, "", planar);
    w = {};
    planar = {0.0, 0.0};
  };
  while (std::getline(is, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (ln == 1 && line.rfind("point", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 4) throw CloudParseError(ln, "expected 4 fields, got " + std::to_string(f.size()));
    long id = 0;
    int sign = 0;
    double lm = 0.0;
    try {
      std::size_t pos = 0;
      id = std::stol(f[0], &pos);
      if (pos != f[0].size() || id < 0) throw std::invalid_argument("id");
      sign = std::stoi(f[2], &pos);
      if (pos != f[2].size() || sign < -1 || sign > 1) throw std::invalid_argument("sign");
      lm = f[3] == "-inf" ? neg_inf : std::stod(f[3], &pos);
    } catch (const std::exception&) {
      throw CloudParseError(ln, "malformed number in '" + line + "'");
    }
    if (id != current) {
      if (id != current + 1) throw CloudParseError(ln, "point ids must be contiguous, expected " + std::to_string(current + 1));
      flush();
      current = id;
    }
    if (f[1] == "x" || f[1] == "y") {
      if (sign == 0 || !std::isfinite(lm)) throw CloudParseError(ln, "planar coordinate needs a sign and finite logmag");
      planar[f[1] == "x" ? 0 : 1] = sign * std::exp(lm);
      continue;
    }
    std::size_t mode = 0;
    try {
      std::size_t pos = 0;
      mode = std::stoul(f[1], &pos);
      if (pos != f[1].size()) throw std::invalid_argument("mode");
    } catch (const std::exception&) {
      throw CloudParseError(ln, "mode must be x, y or a positive integer");
    }
    if (mode == 0) {
      if (sign != 0) throw CloudParseError(ln, "mode 0 is reserved for the origin marker");
      continue;
    }
    if (sign == 0 || !std::isfinite(lm)) throw CloudParseError(ln, "coordinate needs a sign and finite logmag");
    if (!cloud.log_lambda().empty() && mode > cloud.log_lambda().size())
      throw CloudParseError(ln, "mode " + std::to_string(mode) + " beyond the spectrum");
    w.set(mode, {sign, lm});
  }
  flush();
  return cloud;
}

}  // namespace manelab
