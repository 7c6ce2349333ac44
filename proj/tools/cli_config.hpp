#pragma once

// Scenario configuration: schema check, defaults and content hash.

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace manelab::cli {

using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::vector<std::string>& problems)
      : std::runtime_error(join(problems)), problems_(problems) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid config:";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

/// Every accepted key with its default. The type of the default is the
/// type the key must have (integers also accept whole floats).
inline const json& config_defaults() {
  static const json d = json::parse(R"({
    "spectrum": {"family": "linear", "params": {}, "n_max": 64},
    "drive": {"amplitude": 1.0, "tau": 4.0, "plateau_fraction": 0.8, "T_scale": 1.0},
    "dynamics": {"L": 2.5, "n0": 1, "n_max": 4, "kappa": 0.05, "kappa_seg": 0.5, "beta_scale": 1.0,
                 "n_trunc": 16, "periods": 6, "rtol": 1e-11, "atol": 1e-14, "rotation": true,
                 "zero_separation": false, "gammas": [0.5, 0.0]},
    "geometry": {"cloud": "bad_cube", "levels": [4, 16, 36, 64], "scales": [], "s_list": [0.0, 2.0, 3.0],
                 "n_max": 32, "laws": "log-critical", "grid_n": 32, "file": ""},
    "output": {"dir": "out", "formats": ["csv", "json"]},
    "expect": {"gap_check": "", "floquet_pattern": true, "simulate": "", "modulus": [], "dimension": []}
  })");
  return d;
}

/// Allowed parameter keys per spectrum family.
inline const json& family_params() {
  static const json p = json::parse(R"({
    "linear": {"c": 1.0}, "power": {"kappa": 1.5}, "quadratic": {}, "explicit": {"values": []}
  })");
  return p;
}

namespace detail {
inline const char* type_name(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer() || j.is_number_unsigned()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

inline bool type_ok(const json& want, const json& got) {
  if (want.is_boolean()) return got.is_boolean();
  if (want.is_number_integer() || want.is_number_unsigned())
    return got.is_number_integer() || got.is_number_unsigned() ||
           (got.is_number_float() && got.get<double>() == static_cast<double>(static_cast<long long>(got.get<double>())));
  if (want.is_number()) return got.is_number();
  if (want.is_string()) return got.is_string();
  if (want.is_array()) return got.is_array();
  if (want.is_object()) return got.is_object();
  return false;
}

inline void one_of(std::vector<std::string>& errs, const json& v, const std::string& path,
                   std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string msg = path + ": '" + v.get<std::string>() + "' is not one of";
  for (const char* a : allowed) msg += std::string(" ") + a;
  errs.push_back(msg);
}
}  // namespace detail

/// Validates `in` against the schema and returns it with every default
/// materialized. Throws ConfigError listing all problems.
inline json resolve_config(const json& in) {
  std::vector<std::string> errs;
  json out = config_defaults();
  if (!in.is_object()) throw ConfigError({"top level must be an object"});
  for (auto it = in.begin(); it != in.end(); ++it) {
    if (!out.contains(it.key())) {
      errs.push_back("unknown section '" + it.key() + "'");
      continue;
    }
    if (!it->is_object()) {
      errs.push_back(it.key() + ": expected object, got " + detail::type_name(*it));
      continue;
    }
    auto& sec = out[it.key()];
    for (auto kv = it->begin(); kv != it->end(); ++kv) {
      const std::string path = it.key() + "." + kv.key();
      if (!sec.contains(kv.key())) {
        errs.push_back("unknown key '" + path + "'");
        continue;
      }
      if (!detail::type_ok(sec[kv.key()], *kv)) {
        errs.push_back(path + ": expected " + detail::type_name(sec[kv.key()]) + ", got " + detail::type_name(*kv));
        continue;
      }
      sec[kv.key()] = *kv;
    }
  }
  if (!errs.empty()) throw ConfigError(errs);

  // spectrum parameters depend on the family
  const std::string fam = out["spectrum"]["family"];
  if (!family_params().contains(fam)) {
    detail::one_of(errs, out["spectrum"]["family"], "spectrum.family", {"linear", "power", "quadratic", "explicit"});
  } else {
    json params = family_params()[fam];
    for (auto kv = out["spectrum"]["params"].begin(); kv != out["spectrum"]["params"].end(); ++kv) {
      if (!params.contains(kv.key())) errs.push_back("unknown key 'spectrum.params." + kv.key() + "' for family " + fam);
      else if (!detail::type_ok(params[kv.key()], *kv)) errs.push_back("spectrum.params." + kv.key() + ": wrong type");
      else params[kv.key()] = *kv;
    }
    out["spectrum"]["params"] = params;
  }
  auto positive = [&](const char* sec, const char* key) {
    if (!(out[sec][key].get<double>() > 0)) errs.push_back(std::string(sec) + "." + key + ": must be positive");
  };
  positive("drive", "amplitude");
  positive("drive", "T_scale");
  positive("dynamics", "kappa");
  positive("dynamics", "beta_scale");
  positive("dynamics", "rtol");
  positive("dynamics", "atol");
  if (out["drive"]["tau"].get<double>() < 0) errs.push_back("drive.tau: must be >= 0");
  const double pf = out["drive"]["plateau_fraction"];
  if (!(pf > 0 && pf < 1)) errs.push_back("drive.plateau_fraction: must lie in (0, 1)");
  if (out["spectrum"]["n_max"].get<long long>() < 2) errs.push_back("spectrum.n_max: must be >= 2");
  for (const char* k : {"n0", "n_max", "n_trunc", "periods"})
    if (out["dynamics"][k].get<long long>() < 1) errs.push_back(std::string("dynamics.") + k + ": must be >= 1");
  detail::one_of(errs, out["geometry"]["cloud"], "geometry.cloud", {"bad_cube", "cone", "grid", "segment", "file"});
  detail::one_of(errs, out["geometry"]["laws"], "geometry.laws", {"log-critical", "exp-sqrt"});
  for (const auto& f : out["output"]["formats"])
    if (!(f == "csv" || f == "json")) errs.push_back("output.formats: only csv and json are supported");
  for (const char* k : {"levels", "scales", "s_list"})
    for (const auto& v : out["geometry"][k])
      if (!v.is_number()) errs.push_back(std::string("geometry.") + k + ": entries must be numbers");
  for (const auto& v : out["dynamics"]["gammas"])
    if (!v.is_number()) errs.push_back("dynamics.gammas: entries must be numbers");
  for (const char* k : {"modulus", "dimension"})
    for (const auto& v : out["expect"][k])
      if (!v.is_string()) errs.push_back(std::string("expect.") + k + ": entries must be strings");
  if (!errs.empty()) throw ConfigError(errs);
  return out;
}

/// FNV-1a 64 over the canonical dump (keys sorted).
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const json& resolved) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved.dump())));
  return buf;
}

/// "a:b:n" -> n geometric scales from a down to b.
inline std::vector<double> parse_scales(const std::string& s) {
  std::stringstream ss(s);
  std::string a, b, n;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, n) || n.empty())
    throw ConfigError({"--scales: expected a:b:n, got '" + s + "'"});
  double hi = 0, lo = 0;
  long count = 0;
  try {
    hi = std::stod(a);
    lo = std::stod(b);
    count = std::stol(n);
  } catch (const std::exception&) {
    throw ConfigError({"--scales: malformed number in '" + s + "'"});
  }
  if (!(hi > 0 && lo > 0) || count < 2) throw ConfigError({"--scales: need positive ends and n >= 2"});
  std::vector<double> out;
  const double r = std::log(lo / hi) / static_cast<double>(count - 1);
  for (long i = 0; i < count; ++i) out.push_back(hi * std::exp(r * static_cast<double>(i)));
  return out;
}

}  // namespace manelab::cli
