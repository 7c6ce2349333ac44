#pragma once

// C-infinity cut-offs built from the mollifier exp(-1/(1-x^2)): single
// bumps, Kronecker families over disjoint intervals, the odd periodic
// drive, and the planar radial field of the cone attractor.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace manelab {

/// Smooth monotone transition S on R: 0 for t <= -1, 1 for t >= 1,
/// S' = phi / Z with phi(x) = exp(-1/(1-x^2)).
class MollifierTransition {
 public:
  static const MollifierTransition& instance() {
    static const MollifierTransition t;
    return t;
  }

  static double mollifier(double x) {
    if (x <= -1.0 || x >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - x * x));
  }

  double normalization() const { return z_; }

  double value(double t) const {
    if (t <= -1.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double pos = (t + 1.0) / panel_;
    auto k = static_cast<std::size_t>(pos);
    if (k >= kPanels) k = kPanels - 1;
    const double lo = -1.0 + panel_ * static_cast<double>(k);
    return std::clamp((cumulative_[k] + integrate(lo, t)) / z_, 0.0, 1.0);
  }

  /// d^m S / dt^m for m >= 0.
  double derivative(unsigned m, double t) const {
    if (m == 0) return value(t);
    if (t <= -1.0 || t >= 1.0) return 0.0;
    return mollifier_derivative(m - 1, t) / z_;
  }

  /// j-th derivative of phi at x via Taylor-series arithmetic on
  /// exp(-1/(1-x^2)).
  static double mollifier_derivative(unsigned j, double x) {
    if (x <= -1.0 || x >= 1.0) return 0.0;
    const double u0 = 1.0 - x * x;
    const double e0 = std::exp(-1.0 / u0);
    if (e0 == 0.0) return 0.0;
    if (j == 0) return e0;
    std::vector<double> u(j + 1, 0.0), r(j + 1, 0.0), e(j + 1, 0.0);
    u[0] = u0;
    if (j >= 1) u[1] = -2.0 * x;
    if (j >= 2) u[2] = -1.0;
    r[0] = 1.0 / u0;
    for (unsigned k = 1; k <= j; ++k) {
      double acc = 0.0;
      for (unsigned i = 1; i <= std::min(k, 2u); ++i) acc += u[i] * r[k - i];
      r[k] = -acc / u0;
    }
    // g = -r; e = exp(g)
    e[0] = e0;
    for (unsigned k = 1; k <= j; ++k) {
      double acc = 0.0;
      for (unsigned i = 1; i <= k; ++i) acc += static_cast<double>(i) * (-r[i]) * e[k - i];
      e[k] = acc / static_cast<double>(k);
    }
    double fact = 1.0;
    for (unsigned k = 2; k <= j; ++k) fact *= static_cast<double>(k);
    return e[j] * fact;
  }

 private:
  static constexpr std::size_t kPanels = 512;

  MollifierTransition() : rule_(gauss_legendre(16)), panel_(2.0 / static_cast<double>(kPanels)) {
    cumulative_.resize(kPanels + 1, 0.0);
    for (std::size_t k = 0; k < kPanels; ++k) {
      const double lo = -1.0 + panel_ * static_cast<double>(k);
      cumulative_[k + 1] = cumulative_[k] + integrate(lo, lo + panel_);
    }
    z_ = cumulative_[kPanels];
  }

  double integrate(double a, double b) const {
    if (b <= a) return 0.0;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule_.nodes.size(); ++i) acc += rule_.weights[i] * mollifier(mid + half * rule_.nodes[i]);
    return acc * half;
  }

  GaussRule rule_;
  double panel_;
  std::vector<double> cumulative_;
  double z_ = 0.0;
};

/// Smooth bump: 0 outside [a, b], 1 on [plateau_lo, plateau_hi], monotone
/// transitions in between. Derivatives up to `order_cap` are available.
class BumpFunction {
 public:
  BumpFunction(double a, double plateau_lo, double plateau_hi, double b, unsigned order_cap = 4)
      : a_(a), lo_(plateau_lo), hi_(plateau_hi), b_(b), cap_(order_cap) {
    if (!(a < plateau_lo && plateau_lo <= plateau_hi && plateau_hi < b))
      throw std::invalid_argument("BumpFunction: need a < plateau_lo <= plateau_hi < b");
  }

  double support_lo() const { return a_; }
  double support_hi() const { return b_; }
  double plateau_lo() const { return lo_; }
  double plateau_hi() const { return hi_; }
  unsigned order_cap() const { return cap_; }

  double operator()(double x) const { return derivative(0, x); }

  double derivative(unsigned m, double x) const {
    if (m > cap_) throw std::invalid_argument("BumpFunction: derivative order above cap");
    if (x <= a_ || x >= b_) return 0.0;
    if (x >= lo_ && x <= hi_) return m == 0 ? 1.0 : 0.0;
    const auto& s = MollifierTransition::instance();
    if (x < lo_) {
      const double w = lo_ - a_;
      const double t = 2.0 * (x - a_) / w - 1.0;
      return std::pow(2.0 / w, m) * s.derivative(m, t);
    }
    const double w = b_ - hi_;
    const double t = 2.0 * (b_ - x) / w - 1.0;
    const double sign = (m % 2 == 0) ? 1.0 : -1.0;
    return sign * std::pow(2.0 / w, m) * s.derivative(m, t);
  }

  /// sup |d^m/dx^m| over `samples` equispaced points of the support.
  double sampled_sup(unsigned m, std::size_t samples = 4096) const {
    double sup = 0.0;
    for (std::size_t i = 0; i <= samples; ++i) {
      const double x = a_ + (b_ - a_) * static_cast<double>(i) / static_cast<double>(samples);
      sup = std::max(sup, std::abs(derivative(m, x)));
    }
    return sup;
  }

 private:
  double a_, lo_, hi_, b_;
  unsigned cap_;
};

inline BumpFunction mollifier_bump(double a, double b, double plateau_lo, double plateau_hi, unsigned order_cap = 4) {
  return BumpFunction(a, plateau_lo, plateau_hi, b, order_cap);
}

struct Interval {
  double lo, hi;
  double length() const { return hi - lo; }
};

/// How the derivative growth of a family is measured.
struct BoundLaw {
  enum class Kind { interval_power, dyadic_level } kind = Kind::interval_power;
  unsigned order = 1;  // k for C_k |I|^-k, R for M_R 2^{2Rn}

  static BoundLaw interval_power(unsigned k) { return {Kind::interval_power, k}; }
  static BoundLaw dyadic_level(unsigned r) { return {Kind::dyadic_level, r}; }
};

/// Cut-offs psi_n with psi_n(anchor_m) = delta_nm and reported empirical
/// C^k constants.
class CutoffFamily {
 public:
  const std::vector<Interval>& intervals() const { return intervals_; }
  const std::vector<double>& anchors() const { return anchors_; }
  const std::vector<BumpFunction>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  const BoundLaw& law() const { return law_; }

  /// Per-member constant: sup|psi^(k)| |I|^k, or max_{j<=R} sup|psi^(j)| / 2^{2Rn}.
  const std::vector<double>& member_constants() const { return member_constants_; }
  double constant() const { return *std::max_element(member_constants_.begin(), member_constants_.end()); }
  bool violation() const { return violation_; }

  /// Value of the member that owns x (at most one is nonzero).
  double operator()(std::size_t member, double x) const { return members_.at(member)(x); }

  /// Index of the only member whose support contains x, if any.
  std::optional<std::size_t> owner(double x) const {
    auto it = std::upper_bound(intervals_.begin(), intervals_.end(), x,
                               [](double v, const Interval& iv) { return v < iv.lo; });
    if (it == intervals_.begin()) return std::nullopt;
    --it;
    if (x > it->lo && x < it->hi) return static_cast<std::size_t>(it - intervals_.begin());
    return std::nullopt;
  }

 private:
  friend CutoffFamily build_cutoff_family(std::vector<Interval>, std::vector<double>, BoundLaw,
                                          std::optional<double>, double, std::vector<unsigned>, std::size_t);
  std::vector<Interval> intervals_;
  std::vector<double> anchors_;
  std::vector<BumpFunction> members_;
  std::vector<double> member_constants_;
  BoundLaw law_;
  bool violation_ = false;
};

/// Builds one bump per interval, supported on the interval, with a plateau
/// of relative half-width `plateau_fraction` around the anchor. Intervals
/// must be sorted or sortable into a disjoint sequence. `levels` gives the
/// dyadic level n of each member for the 2^{2Rn} law (defaults to 1, 2, ...).
inline CutoffFamily build_cutoff_family(std::vector<Interval> intervals, std::vector<double> anchors, BoundLaw law,
                                        std::optional<double> declared_constant = std::nullopt,
                                        double plateau_fraction = 0.25, std::vector<unsigned> levels = {},
                                        std::size_t samples = 4096) {
  if (intervals.size() != anchors.size() || intervals.empty())
    throw std::invalid_argument("build_cutoff_family: one anchor per interval required");
  if (!(plateau_fraction >= 0 && plateau_fraction < 1))
    throw std::invalid_argument("build_cutoff_family: plateau_fraction must be in [0, 1)");
  std::vector<std::size_t> order(intervals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return intervals[i].lo < intervals[j].lo; });
  if (levels.empty())
    for (std::size_t i = 0; i < intervals.size(); ++i) levels.push_back(static_cast<unsigned>(i + 1));
  if (levels.size() != intervals.size()) throw std::invalid_argument("build_cutoff_family: levels size mismatch");

  CutoffFamily f;
  f.law_ = law;
  std::vector<unsigned> sorted_levels;
  for (std::size_t idx : order) {
    const Interval iv = intervals[idx];
    const double anchor = anchors[idx];
    if (!(iv.lo < iv.hi)) throw std::invalid_argument("build_cutoff_family: degenerate interval");
    if (!(anchor > iv.lo && anchor < iv.hi)) throw std::invalid_argument("build_cutoff_family: anchor not interior");
    if (!f.intervals_.empty() && iv.lo < f.intervals_.back().hi)
      throw std::invalid_argument("build_cutoff_family: overlapping intervals at [" + std::to_string(iv.lo) + ", " +
                                  std::to_string(iv.hi) + "]");
    const double half = plateau_fraction * std::min(anchor - iv.lo, iv.hi - anchor);
    f.intervals_.push_back(iv);
    f.anchors_.push_back(anchor);
    f.members_.emplace_back(iv.lo, anchor - half, anchor + half, iv.hi, std::max(law.order, 1u));
    sorted_levels.push_back(levels[idx]);
  }
  for (std::size_t i = 0; i < f.members_.size(); ++i) {
    const auto& m = f.members_[i];
    double c = 0.0;
    if (law.kind == BoundLaw::Kind::interval_power) {
      c = m.sampled_sup(law.order, samples) * std::pow(f.intervals_[i].length(), law.order);
    } else {
      double sup = 0.0;
      for (unsigned j = 0; j <= law.order; ++j) sup = std::max(sup, m.sampled_sup(j, samples));
      c = sup / std::pow(2.0, 2.0 * law.order * sorted_levels[i]);
    }
    f.member_constants_.push_back(c);
    if (declared_constant && c > *declared_constant) f.violation_ = true;
  }
  return f;
}

/// Smoothed square wave of period 2*tau: odd, x(tau - t) = x(t), minimum
/// -amplitude at tau/2, maximum +amplitude at -tau/2. Negative on (0, tau).
class PeriodicDrive {
 public:
  PeriodicDrive(double amplitude, double half_period, double plateau_fraction)
      : amp_(amplitude), tau_(half_period), frac_(plateau_fraction), width_((1.0 - plateau_fraction) * half_period) {
    if (!(amplitude > 0) || !(half_period > 0)) throw std::invalid_argument("PeriodicDrive: amplitude and tau must be positive");
    if (!(plateau_fraction > 0.5 && plateau_fraction < 1.0))
      throw std::invalid_argument("PeriodicDrive: plateau_fraction must lie in (0.5, 1)");
  }

  double amplitude() const { return amp_; }
  double half_period() const { return tau_; }
  double period() const { return 2.0 * tau_; }
  double plateau_fraction() const { return frac_; }
  double transition_width() const { return width_; }

  double operator()(double t) const { return eval(0, t); }
  double derivative(double t) const { return eval(1, t); }

  /// First time in (0, tau/2) with |x| = amplitude/4.
  double quarter_crossing() const {
    return bisect([&](double t) { return profile(0, t) - 0.25; }, 0.0, 0.5 * tau_, 1e-13);
  }

 private:
  // Profile g on [0, tau]: 0 at the ends, 1 on the plateau.
  double profile(unsigned m, double t) const {
    const auto& s = MollifierTransition::instance();
    if (t < width_) return std::pow(2.0 / width_, m) * s.derivative(m, 2.0 * t / width_ - 1.0);
    if (t > tau_ - width_) {
      const double sign = m % 2 == 0 ? 1.0 : -1.0;
      return sign * std::pow(2.0 / width_, m) * s.derivative(m, 2.0 * (tau_ - t) / width_ - 1.0);
    }
    return m == 0 ? 1.0 : 0.0;
  }

  double eval(unsigned m, double t) const {
    const double p = 2.0 * tau_;
    double r = std::fmod(t + tau_, p);
    if (r < 0) r += p;
    r -= tau_;  // r in [-tau, tau)
    if (r >= 0) return -amp_ * profile(m, r);
    // x(r) = -x(-r) = amp * g(-r); d/dr picks up (-1)^m.
    const double sign = m % 2 == 0 ? 1.0 : -1.0;
    return sign * amp_ * profile(m, -r);
  }

  double amp_, tau_, frac_, width_;
};

inline PeriodicDrive periodic_drive(double amplitude, double half_period, double plateau_fraction) {
  return PeriodicDrive(amplitude, half_period, plateau_fraction);
}

/// x' = -x (x^2 + y^2 - 1), y' = -y (x^2 + y^2 - 1).
inline std::array<double, 2> planar_rhs(double x, double y) {
  const double f = x * x + y * y - 1.0;
  return {-x * f, -y * f};
}

/// Closed-form radius of the planar field: R^2 = 1 / (1 + (R0^-2 - 1) e^{-2t}).
inline double planar_radius(double r0, double t) {
  if (r0 == 0.0) return 0.0;
  return 1.0 / std::sqrt(1.0 + (1.0 / (r0 * r0) - 1.0) * std::exp(-2.0 * t));
}

}  // namespace manelab
