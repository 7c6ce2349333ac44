#pragma once

// Signed log-magnitude arithmetic and the sparse mode vector used as the
// universal state/point representation. Magnitudes such as exp(-b*N^2)
// leave the double range quickly, so every coordinate is kept as
// (sign, log|value|).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace manelab {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
inline double log_add(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// log(sum exp(v_i)) over a range, max-factored.
inline double log_sum_exp(std::span<const double> v) {
  double hi = neg_inf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == neg_inf) return neg_inf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

/// A real number stored as sign * exp(log_mag). sign == 0 means zero.
struct SignedLog {
  int sign = 0;
  double log_mag = neg_inf;

  static SignedLog from_value(double v) {
    if (v == 0.0) return {};
    return {v > 0 ? 1 : -1, std::log(std::abs(v))};
  }
  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_mag); }
  bool is_zero() const { return sign == 0; }
};

/// a - b in signed-log form.
inline SignedLog log_subtract(SignedLog a, SignedLog b) {
  if (b.is_zero()) return a;
  if (a.is_zero()) return {-b.sign, b.log_mag};
  if (a.sign != b.sign) {
    return {a.sign, log_add(a.log_mag, b.log_mag)};
  }
  if (a.log_mag == b.log_mag) return {};
  const bool a_bigger = a.log_mag > b.log_mag;
  const double hi = a_bigger ? a.log_mag : b.log_mag;
  const double lo = a_bigger ? b.log_mag : a.log_mag;
  return {a_bigger ? a.sign : -a.sign, hi + std::log1p(-std::exp(lo - hi))};
}

inline SignedLog log_add_signed(SignedLog a, SignedLog b) {
  return log_subtract(a, {-b.sign, b.log_mag});
}

/// Sobolev scale exponent s: mode n carries weight lambda_n^{s/2} in the norm.
struct SobolevIndex {
  double s = 0.0;
};

/// Result of converting a log vector back to doubles.
struct DenseResult {
  std::vector<double> values;  // values[i] is mode i+1
  bool underflow = false;
};

/// Sparse map from 1-based mode index to (sign, log-magnitude). Absent
/// entries are zero; stored entries always have sign != 0.
class LogModeVector {
 public:
  struct Entry {
    std::size_t mode;
    SignedLog value;
  };

  LogModeVector() = default;

  static LogModeVector from_dense(std::span<const double> dense) {
    LogModeVector v;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (!std::isfinite(dense[i])) throw std::invalid_argument("LogModeVector: non-finite coordinate");
      if (dense[i] != 0.0) v.entries_.push_back({i + 1, SignedLog::from_value(dense[i])});
    }
    return v;
  }

  static LogModeVector unit(std::size_t mode, double log_mag = 0.0, int sign = 1) {
    LogModeVector v;
    v.set(mode, {sign, log_mag});
    return v;
  }

  void set(std::size_t mode, SignedLog value) {
    if (mode == 0) throw std::invalid_argument("LogModeVector: modes are 1-based");
    if (std::isnan(value.log_mag)) throw std::invalid_argument("LogModeVector: NaN log-magnitude");
    auto it = std::lower_bound(entries_.begin(), entries_.end(), mode,
                               [](const Entry& e, std::size_t m) { return e.mode < m; });
    const bool zero = value.sign == 0 || value.log_mag == neg_inf;
    if (it != entries_.end() && it->mode == mode) {
      if (zero) entries_.erase(it);
      else it->value = value;
    } else if (!zero) {
      entries_.insert(it, {mode, value});
    }
  }

  SignedLog get(std::size_t mode) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), mode,
                               [](const Entry& e, std::size_t m) { return e.mode < m; });
    if (it != entries_.end() && it->mode == mode) return it->value;
    return {};
  }

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t max_mode() const { return entries_.empty() ? 0 : entries_.back().mode; }

  /// Multiply every coordinate by exp(log_factor) (and by sign).
  LogModeVector scaled(double log_factor, int sign = 1) const {
    LogModeVector out = *this;
    for (auto& e : out.entries_) {
      e.value.log_mag += log_factor;
      e.value.sign *= sign;
    }
    return out;
  }

  /// Dense conversion over modes 1..n. Entries that would fall below the
  /// smallest normal double set the underflow flag instead of silently
  /// flushing.
  DenseResult to_dense(std::size_t n) const {
    DenseResult r;
    r.values.assign(n, 0.0);
    const double min_log = std::log(std::numeric_limits<double>::min());
    for (const auto& e : entries_) {
      if (e.mode > n) continue;
      if (e.value.log_mag < min_log) {
        r.underflow = true;
        continue;
      }
      r.values[e.mode - 1] = e.value.value();
    }
    return r;
  }

  friend bool operator==(const LogModeVector& a, const LogModeVector& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.mode != y.mode || x.value.sign != y.value.sign || x.value.log_mag != y.value.log_mag) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

/// Per-mode log weight for the H^s norm: (s/2) * log(lambda_n).
template <class LogLambda>
double log_sobolev_norm(const LogModeVector& v, SobolevIndex s, LogLambda&& log_lambda) {
  std::vector<double> terms;
  terms.reserve(v.size());
  for (const auto& e : v.entries()) terms.push_back(2.0 * e.value.log_mag + s.s * log_lambda(e.mode));
  return 0.5 * log_sum_exp(terms);
}

/// log ||a - b||_{H^s}; -inf when a == b.
template <class LogLambda>
double log_sobolev_distance(const LogModeVector& a, const LogModeVector& b, SobolevIndex s,
                            LogLambda&& log_lambda) {
  std::vector<double> terms;
  terms.reserve(a.size() + b.size());
  const auto& ea = a.entries();
  const auto& eb = b.entries();
  std::size_t i = 0, j = 0;
  while (i < ea.size() || j < eb.size()) {
    std::size_t mode;
    SignedLog d;
    if (j == eb.size() || (i < ea.size() && ea[i].mode < eb[j].mode)) {
      mode = ea[i].mode;
      d = ea[i++].value;
    } else if (i == ea.size() || eb[j].mode < ea[i].mode) {
      mode = eb[j].mode;
      d = eb[j++].value;
    } else {
      mode = ea[i].mode;
      d = log_subtract(ea[i++].value, eb[j++].value);
    }
    if (!d.is_zero()) terms.push_back(2.0 * d.log_mag + s.s * log_lambda(mode));
  }
  return 0.5 * log_sum_exp(terms);
}

}  // namespace manelab
