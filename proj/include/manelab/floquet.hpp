#pragma once

// Time-periodic rotation operator, its exact weighted-shift Poincare map,
// and a numeric propagator to compare against.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "manelab/cutoffs.hpp"
#include "manelab/log_vector.hpp"
#include "manelab/numerics.hpp"
#include "manelab/ode.hpp"
#include "manelab/spectral.hpp"

namespace manelab {

struct FloquetOptions {
  double amplitude = 1.0;
  double plateau_fraction = 0.8;
  bool diagonal_terms = true;  // the theta_2 averaging terms
  bool mu0_correction = true;  // extra growth on e_1 during the positive half
};

/// pi / (2 * active measure).
inline double calibrate_epsilon(double active_measure) {
  if (!(active_measure > 0)) throw std::invalid_argument("calibrate_epsilon: zero active window");
  return std::numbers::pi / (2.0 * active_measure);
}

/// Integral of theta_1(-x(t)) over [T0, T - T0].
inline double active_measure(const PeriodicDrive& drive, const BumpFunction& theta1, double t0, double t) {
  if (!(t - t0 > t0)) return 0.0;
  return adaptive_simpson([&](double s) { return theta1(-drive(s)); }, t0, t - t0, 1e-15, 256);
}

inline double calibrate_epsilon(const PeriodicDrive& drive, const BumpFunction& theta1, double t0, double t) {
  return calibrate_epsilon(active_measure(drive, theta1, t0, t));
}

/// Phi(t) on modes 1, 2, ...: pairs (2n-1, 2n) rotate while x < 0, pairs
/// (2n, 2n+1) while x > 0, with the drive of half-period T.
class PeriodicOperator {
 public:
  PeriodicOperator(Spectrum spectrum, double half_period, FloquetOptions opt = {})
      : spec_(std::move(spectrum)),
        opt_(opt),
        drive_(opt.amplitude, half_period, opt.plateau_fraction),
        theta1_(0.25 * opt.amplitude, 0.5 * opt.amplitude, opt.amplitude, 1.25 * opt.amplitude, 4),
        theta2_(0.0, 0.25 * opt.amplitude, 2.0 * opt.amplitude, 3.0 * opt.amplitude, 4),
        t_(half_period) {
    if (spec_.size() < 3) throw std::invalid_argument("PeriodicOperator: need at least 3 modes");
    t0_ = drive_.quarter_crossing();
    epsilon_ = calibrate_epsilon(drive_, theta1_, t0_, t_);
    theta2_measure_ = adaptive_simpson([&](double s) { return theta2_(-drive_(s)); }, 0.0, t_, 1e-13, 256);
    mu0_coeff_ = opt_.mu0_correction && opt_.diagonal_terms ? spec_(1) * t_ / (2.0 * theta2_measure_) : 0.0;
  }

  const Spectrum& spectrum() const { return spec_; }
  const PeriodicDrive& drive() const { return drive_; }
  const BumpFunction& theta1() const { return theta1_; }
  const BumpFunction& theta2() const { return theta2_; }
  const FloquetOptions& options() const { return opt_; }
  double half_period() const { return t_; }
  double period() const { return 2.0 * t_; }
  double t0() const { return t0_; }
  double epsilon() const { return epsilon_; }
  double mu0_coefficient() const { return mu0_coeff_; }

  /// Replaces the calibrated rotation rate (0 switches the rotation off).
  void set_epsilon(double eps) { epsilon_ = eps; }

  double x(double t) const { return drive_(t); }

  /// Rotation rate of the pair active at time t.
  double rotation(double t) const { return rotation_at_x(drive_(t)); }
  double rotation_at_x(double xv) const { return epsilon_ * (xv < 0 ? theta1_(-xv) : theta1_(xv)); }

  /// Weight of the diagonal averaging term at time t.
  double averaging(double t) const { return averaging_at_x(drive_(t)); }
  double averaging_at_x(double xv) const {
    if (!opt_.diagonal_terms) return 0.0;
    return xv < 0 ? theta2_(-xv) : theta2_(xv);
  }

  /// True when the pairs (2n-1, 2n) are the active ones.
  bool minus_phase(double t) const { return drive_(t) <= 0; }

  /// Dense Phi(t) on modes 1..n (pairs cut by the truncation are left out).
  Eigen::MatrixXd matrix(double t, std::size_t n) const { return matrix_at_x(drive_(t), n); }

  /// Phi as a function of the drive value x.
  Eigen::MatrixXd matrix_at_x(double xv, std::size_t n) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const bool minus = xv <= 0;
    const double th2 = averaging_at_x(xv);
    const double c = rotation_at_x(xv);
    if (!minus && n >= 1) m(0, 0) = mu0_coeff_ * th2;
    for (std::size_t a = minus ? 1 : 2; a + 1 <= n; a += 2) {
      const std::size_t b = a + 1;
      const double half_gap = 0.5 * (spec_(a) - spec_(b));
      const auto ia = static_cast<Eigen::Index>(a - 1), ib = static_cast<Eigen::Index>(b - 1);
      m(ia, ia) = half_gap * th2;
      m(ib, ib) = -half_gap * th2;
      m(ia, ib) = -c;
      m(ib, ia) = c;
    }
    return m;
  }

  /// Phi(x) w on the first w.size() modes without forming the matrix.
  void apply_at_x(double xv, const Eigen::VectorXd& w, Eigen::VectorXd& out) const {
    const std::size_t n = static_cast<std::size_t>(w.size());
    out.setZero(w.size());
    const bool minus = xv <= 0;
    const double th2 = averaging_at_x(xv);
    const double c = rotation_at_x(xv);
    if (!minus && n >= 1) out(0) = mu0_coeff_ * th2 * w(0);
    if (th2 == 0.0 && c == 0.0) return;
    for (std::size_t a = minus ? 1 : 2; a + 1 <= n; a += 2) {
      const double half_gap = 0.5 * (spec_(a) - spec_(a + 1));
      const auto ia = static_cast<Eigen::Index>(a - 1), ib = static_cast<Eigen::Index>(a);
      out(ia) = half_gap * th2 * w(ia) - c * w(ib);
      out(ib) = -half_gap * th2 * w(ib) + c * w(ia);
    }
  }

  /// Operator norm of the rotating pairs of Phi(t) over modes 1..n; the
  /// block [[d, -c], [c, -d]] has norm |d| + |c|.
  double pair_norm(double t, std::size_t n) const {
    const bool minus = minus_phase(t);
    const double th2 = averaging(t), c = rotation(t);
    double best = 0.0;
    for (std::size_t a = minus ? 1 : 2; a + 1 <= n; a += 2) {
      const double d = 0.5 * (spec_(a + 1) - spec_(a)) * th2;
      best = std::max(best, std::abs(d) + std::abs(c));
    }
    return best;
  }

  /// Operator norm of Phi(t) over modes 1..n including the e_1 term.
  double norm(double t, std::size_t n) const {
    return std::max(pair_norm(t, n), minus_phase(t) ? 0.0 : mu0_coeff_ * averaging(t));
  }

  /// Times where the coefficients change character inside [lo, hi].
  std::vector<double> breakpoints(double lo, double hi) const {
    const double w = drive_.transition_width();
    std::vector<double> pts{lo, hi};
    for (double base : {0.0, t_, 2.0 * t_})
      for (double off : {0.0, w, t0_, t_ - t0_, t_ - w})
        if (base + off > lo && base + off < hi) pts.push_back(base + off);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
              pts.end());
    return pts;
  }

 private:
  Spectrum spec_;
  FloquetOptions opt_;
  PeriodicDrive drive_;
  BumpFunction theta1_, theta2_;
  double t_;
  double t0_ = 0.0;
  double epsilon_ = 0.0;
  double theta2_measure_ = 0.0;
  double mu0_coeff_ = 0.0;
};

struct ShiftEntry {
  std::size_t image = 0;
  double log_mult = 0.0;
  int sign = 1;
};

/// e_m -> sign * exp(log_mult) * e_image on a finite mode range.
class WeightedShift {
 public:
  WeightedShift() = default;
  explicit WeightedShift(std::vector<ShiftEntry> entries, double half_period = std::numeric_limits<double>::quiet_NaN(),
                         std::vector<double> lambdas = {})
      : entries_(std::move(entries)), t_(half_period), lambdas_(std::move(lambdas)) {}

  std::size_t domain() const { return entries_.size(); }
  bool contains(std::size_t mode) const { return mode >= 1 && mode <= entries_.size(); }
  const ShiftEntry& at(std::size_t mode) const {
    if (!contains(mode)) throw std::out_of_range("WeightedShift: mode " + std::to_string(mode) + " outside domain");
    return entries_[mode - 1];
  }
  std::size_t image(std::size_t mode) const { return at(mode).image; }
  double log_multiplier(std::size_t mode) const { return at(mode).log_mult; }
  double half_period() const { return t_; }
  const std::vector<double>& lambdas() const { return lambdas_; }

  LogModeVector apply(const LogModeVector& v) const {
    LogModeVector out;
    for (const auto& e : v.entries()) {
      const auto& s = at(e.mode);
      const SignedLog add{e.value.sign * s.sign, e.value.log_mag + s.log_mult};
      out.set(s.image, log_add_signed(out.get(s.image), add));
    }
    return out;
  }

 private:
  std::vector<ShiftEntry> entries_;
  double t_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> lambdas_;
};

struct PoincarePrediction {
  WeightedShift full;   // P = P_plus P_minus
  WeightedShift minus;  // U(T, 0)
  WeightedShift plus;   // U(2T, T)
};

/// Exact shift from the spectrum: P e_{2n-1} = mu e_{2n+1}, P e_{2n} = mu e_{2n-2},
/// P e_2 = -mu_0 e_1. The domain of P stops where lambda_{m+2} is needed.
inline PoincarePrediction poincare_predicted(const Spectrum& spec, double half_period) {
  if (spec.size() < 3) throw std::invalid_argument("poincare_predicted: need at least 3 modes");
  const double t = half_period;
  const std::size_t n = spec.size();
  std::vector<ShiftEntry> minus, plus, full;
  for (std::size_t m = 1; m <= n; ++m) {
    if (m % 2 == 1) {
      if (m + 1 <= n) minus.push_back({m + 1, -t * (spec(m) + spec(m + 1)) / 2, 1});
    } else {
      minus.push_back({m - 1, -t * (spec(m - 1) + spec(m)) / 2, -1});
    }
  }
  for (std::size_t m = 1; m <= n; ++m) {
    if (m == 1) {
      plus.push_back({1, -t * spec(1) / 2, 1});
    } else if (m % 2 == 0) {
      if (m + 1 > n) break;
      plus.push_back({m + 1, -t * (spec(m) + spec(m + 1)) / 2, 1});
    } else {
      plus.push_back({m - 1, -t * (spec(m - 1) + spec(m)) / 2, -1});
    }
  }
  for (std::size_t m = 1; m <= n; ++m) {
    if (m % 2 == 1) {
      if (m + 2 > n) break;
      full.push_back({m + 2, -t * (spec(m) + 2 * spec(m + 1) + spec(m + 2)) / 2, 1});
    } else if (m == 2) {
      full.push_back({1, -t * (2 * spec(1) + spec(2)) / 2, -1});
    } else {
      full.push_back({m - 2, -t * (spec(m - 2) + 2 * spec(m - 1) + spec(m)) / 2, 1});
    }
  }
  return {WeightedShift(full, t, spec.values()), WeightedShift(minus, t, spec.values()),
          WeightedShift(plus, t, spec.values())};
}

struct IterateNorms {
  std::size_t mode = 1;
  std::size_t n = 0;
  double lognorm = 0.0;
  std::size_t final_mode = 1;
  int sign = 1;
};

/// Exact log of ||P^N e_mode|| by following the shift orbit.
inline IterateNorms iterate_norm(const WeightedShift& shift, std::size_t mode, std::size_t n) {
  IterateNorms r{mode, n, 0.0, mode, 1};
  for (std::size_t step = 1; step <= n; ++step) {
    if (!shift.contains(r.final_mode))
      throw std::out_of_range("iterate_norm: orbit of e_" + std::to_string(mode) + " leaves the truncation at step " +
                              std::to_string(step) + " (mode " + std::to_string(r.final_mode) + ")");
    const auto& e = shift.at(r.final_mode);
    r.lognorm += e.log_mult;
    r.sign *= e.sign;
    r.final_mode = e.image;
  }
  return r;
}

struct DecayCertificate {
  std::size_t mode = 2;
  std::size_t n_max = 0;
  double log_c = 0.0;        // ||P^N e|| ~ exp(log_c - linear N - beta N^2)
  double linear = 0.0;
  double beta = 0.0;
  double r2 = 0.0;
  double beta_analytic = std::numeric_limits<double>::quiet_NaN();
  bool passed = false;
  std::vector<double> neg_lognorms;  // index N
};

/// 2 c T for an asymptotically linear spectrum of slope c measured over the
/// modes 1..m_hi.
inline double arithmetic_series_beta(const WeightedShift& shift, std::size_t m_hi) {
  const auto& l = shift.lambdas();
  if (l.size() < 2 || std::isnan(shift.half_period())) return std::numeric_limits<double>::quiet_NaN();
  m_hi = std::min(std::max<std::size_t>(m_hi, 2), l.size());
  const double c = (l[m_hi - 1] - l[0]) / static_cast<double>(m_hi - 1);
  return 2.0 * c * shift.half_period();
}

/// Quadratic fit of -log ||P^N e_mode|| over N = 0..n_max.
inline DecayCertificate decay_certificate(const WeightedShift& shift, std::size_t mode, std::size_t n_max) {
  if (n_max < 4) throw std::invalid_argument("decay_certificate: need n_max >= 4");
  DecayCertificate c;
  c.mode = mode;
  c.n_max = n_max;
  std::vector<double> ns;
  std::size_t m_hi = mode;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const auto it = iterate_norm(shift, mode, n);
    c.neg_lognorms.push_back(-it.lognorm);
    ns.push_back(static_cast<double>(n));
    m_hi = std::max(m_hi, it.final_mode);
  }
  const auto fit = polyfit(ns, c.neg_lognorms, 2);
  c.log_c = -fit.coeffs[0];
  c.linear = fit.coeffs[1];
  c.beta = fit.coeffs[2];
  c.r2 = fit.r2;
  double y_max = 1.0;
  for (double y : c.neg_lognorms) y_max = std::max(y_max, std::abs(y));
  const double floor = 1e-9 * y_max / static_cast<double>(n_max * n_max);
  c.passed = c.beta > floor && c.r2 >= 0.999;
  c.beta_analytic = arithmetic_series_beta(shift, m_hi);
  return c;
}

struct RatioReport {
  std::size_t n = 0, k = 0, iterations = 0;
  double log_norm_e1 = 0.0;
  std::vector<double> log_norm_even;  // s = n .. n + k
  double beta = 0.0;   // min_s (log||P^N e_2s|| - log||P^N e_1||) / n^2
  double gamma = 0.0;  // max |log ratio| over s1, s2 / n^{3/2}
  bool first_holds = false;
  bool second_holds = false;

  /// Checks both inequalities for externally supplied constants.
  bool holds_with(double b, double g) const {
    const double n2 = static_cast<double>(n * n), n32 = std::pow(static_cast<double>(n), 1.5);
    for (double ls : log_norm_even)
      if (log_norm_e1 - ls > -b * n2 + 1e-12 * std::abs(log_norm_e1)) return false;
    for (double a : log_norm_even)
      for (double b2 : log_norm_even)
        if (std::abs(a - b2) > g * n32 + 1e-12 * std::abs(a)) return false;
    return true;
  }
};

inline std::size_t isqrt_ceil(std::size_t n) {
  auto k = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (k * k < n) ++k;
  while (k > 0 && (k - 1) * (k - 1) >= n) --k;
  return k;
}

inline RatioReport ratio_bounds_check(const WeightedShift& shift, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ratio_bounds_check: n >= 1");
  RatioReport r;
  r.n = n;
  r.k = isqrt_ceil(n);
  r.iterations = 2 * n + r.k;
  const std::size_t need = std::max(2 * r.iterations - 1, 2 * (n + r.k));
  if (shift.domain() < need)
    throw std::invalid_argument("ratio_bounds_check: truncation too small (need modes up to " + std::to_string(need) +
                                ", have " + std::to_string(shift.domain()) + ")");
  r.log_norm_e1 = iterate_norm(shift, 1, r.iterations).lognorm;
  for (std::size_t s = n; s <= n + r.k; ++s) r.log_norm_even.push_back(iterate_norm(shift, 2 * s, r.iterations).lognorm);
  const double n2 = static_cast<double>(n * n), n32 = std::pow(static_cast<double>(n), 1.5);
  r.beta = std::numeric_limits<double>::infinity();
  for (double ls : r.log_norm_even) r.beta = std::min(r.beta, (ls - r.log_norm_e1) / n2);
  for (double a : r.log_norm_even)
    for (double b : r.log_norm_even) r.gamma = std::max(r.gamma, std::abs(a - b) / n32);
  r.first_holds = r.beta > 0;
  r.second_holds = std::isfinite(r.gamma);
  return r;
}

struct EqualizerRecord {
  std::size_t n = 0, k = 0, iterations = 0;
  double log_b = 0.0;
  std::vector<double> log_a;  // k = 0 .. ceil(sqrt n)
  double max_equalized_dev = 0.0;
  double gamma = 0.0;
  bool a_bounds_hold = false;
};

inline EqualizerRecord equalizers(const WeightedShift& shift, std::size_t n) {
  const auto ratio = ratio_bounds_check(shift, n);
  EqualizerRecord e;
  e.n = n;
  e.k = ratio.k;
  e.iterations = ratio.iterations;
  e.gamma = ratio.gamma;
  e.log_b = *std::min_element(ratio.log_norm_even.begin(), ratio.log_norm_even.end());
  const double lower = -2.0 * e.gamma * std::pow(static_cast<double>(n), 1.5);
  e.a_bounds_hold = true;
  for (double ln : ratio.log_norm_even) {
    const double la = e.log_b - ln;
    e.log_a.push_back(la);
    e.max_equalized_dev = std::max(e.max_equalized_dev, std::abs(la + ln - e.log_b));
    if (la > 0 || la < lower) e.a_bounds_hold = false;
  }
  return e;
}

struct EqualizerConstants {
  double gamma1 = 0.0, gamma2 = 0.0;  // exp(-gamma2 n^2) <= B(n) <= exp(-gamma1 n^2)
  std::vector<std::size_t> ns;
  std::vector<double> log_b;
  bool holds = false;
};

inline EqualizerConstants fit_equalizer_constants(const WeightedShift& shift, const std::vector<std::size_t>& ns) {
  EqualizerConstants c;
  c.gamma1 = std::numeric_limits<double>::infinity();
  c.gamma2 = 0.0;
  for (std::size_t n : ns) {
    const double lb = equalizers(shift, n).log_b;
    const double g = -lb / static_cast<double>(n * n);
    c.ns.push_back(n);
    c.log_b.push_back(lb);
    c.gamma1 = std::min(c.gamma1, g);
    c.gamma2 = std::max(c.gamma2, g);
  }
  c.holds = c.gamma1 > 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double n2 = static_cast<double>(ns[i] * ns[i]);
    if (c.log_b[i] > -c.gamma1 * n2 * (1 - 1e-12) || c.log_b[i] < -c.gamma2 * n2 * (1 + 1e-12)) c.holds = false;
  }
  return c;
}

struct KickGain {
  double lambda = 0.0;
  double kappa = 0.0;
  double theta_integral = 0.0;
  double log_forward = 0.0;   // log of int e^{-lambda h} theta(h) dh over (-kappa, 0)
  double log_reversed = 0.0;  // log of int e^{+lambda h} theta(h) dh, the one used as the gain
  double fitted_c = std::numeric_limits<double>::quiet_NaN();  // K_rev = 2^{-C lambda}
  bool within_unit = false;
};

namespace detail {
// log int_a^b e^{r (h - h_ref)} f(h) dh + r h_ref, with h_ref the endpoint where the exponential peaks.
template <class F>
double log_weighted_integral(const F& f, double a, double b, double rate) {
  const double ref = rate >= 0 ? b : a;
  auto g = [&](double h) { return std::exp(rate * (h - ref)) * f(h); };
  const double coarse = adaptive_simpson(g, a, b, 1e-6 * (b - a), 512, 20);
  if (!(coarse > 0)) return neg_inf;
  const double fine = adaptive_simpson(g, a, b, 1e-11 * coarse, 512, 40);
  return std::log(fine) + rate * ref;
}
}  // namespace detail

/// Gain of a kick bump theta living in phase time h in (-kappa, 0).
inline KickGain kick_gain(const BumpFunction& theta, double lambda, double kappa, double scale = 1.0) {
  if (!(kappa > 0)) throw std::invalid_argument("kick_gain: empty support window");
  if (theta.support_lo() < -kappa - 1e-15 || theta.support_hi() > 1e-15)
    throw std::invalid_argument("kick_gain: theta must be supported in (-kappa, 0)");
  KickGain k;
  k.lambda = lambda;
  k.kappa = kappa;
  const double a = theta.support_lo(), b = theta.support_hi();
  auto f = [&](double h) { return scale * theta(h); };
  k.theta_integral = adaptive_simpson(f, a, b, 1e-13, 512);
  k.log_forward = detail::log_weighted_integral(f, a, b, -lambda);
  k.log_reversed = detail::log_weighted_integral(f, a, b, lambda);
  if (lambda > 0) k.fitted_c = -k.log_reversed / (lambda * std::numbers::ln2);
  k.within_unit = k.log_reversed <= 0.0;
  return k;
}

struct PoincareNumericOptions {
  std::size_t guard = 2;
  double rtol = 1e-13;
  double atol = 1e-16;
};

struct PoincareNumeric {
  std::size_t n_trunc = 0;
  std::size_t modes = 0;  // n_trunc + guard
  Eigen::MatrixXd full, minus, plus;
};

namespace detail {
// Propagator of one half-period on modes 1..m. Pairs start at `first`; a
// leading singleton e_1 (plus phase) carries the mu_0 term.
inline Eigen::MatrixXd half_propagator(const PeriodicOperator& op, std::size_t m, double lo, double hi, bool minus,
                                       const PoincareNumericOptions& opt) {
  const auto& spec = op.spectrum();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  const auto pts = op.breakpoints(lo, hi);
  auto integrate_scalar = [&](auto&& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) acc += adaptive_simpson(f, pts[i], pts[i + 1], 1e-13, 64);
    return acc;
  };
  OdeOptions ode;
  ode.rtol = opt.rtol;
  ode.atol = opt.atol;
  ode.h_max = (hi - lo) / 100.0;

  std::size_t first = 1;
  if (!minus) {
    const double l1 = spec(1);
    const double log_g = integrate_scalar([&](double t) { return -l1 + op.mu0_coefficient() * op.averaging(t); });
    u(0, 0) = std::exp(log_g);
    first = 2;
  }
  std::size_t a = first;
  for (; a + 1 <= m; a += 2) {
    const std::size_t b = a + 1;
    const double la = spec(a), lb = spec(b);
    // decay rates d = lambda - diag(Phi); u = exp(-int mean) z
    auto da = [&](double t) { return la - 0.5 * (la - lb) * op.averaging(t); };
    auto db = [&](double t) { return lb + 0.5 * (la - lb) * op.averaging(t); };
    const double log_mean = -integrate_scalar([&](double t) { return 0.5 * (da(t) + db(t)); });
    auto rhs = [&](double t, const Eigen::VectorXd& z) {
      const double d = 0.5 * (da(t) - db(t));
      const double c = op.rotation(t);
      Eigen::VectorXd out(4);
      // z = [z_aa, z_ba, z_ab, z_bb] (column-major 2x2)
      for (int col = 0; col < 2; ++col) {
        const double za = z(2 * col), zb = z(2 * col + 1);
        out(2 * col) = -d * za - c * zb;
        out(2 * col + 1) = d * zb + c * za;
      }
      return out;
    };
    Eigen::VectorXd z(4);
    z << 1, 0, 0, 1;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) z = dopri5(rhs, pts[i], pts[i + 1], z, ode);
    const double g = std::exp(log_mean);
    const auto ia = static_cast<Eigen::Index>(a - 1), ib = static_cast<Eigen::Index>(b - 1);
    u(ia, ia) = g * z(0);
    u(ib, ia) = g * z(1);
    u(ia, ib) = g * z(2);
    u(ib, ib) = g * z(3);
  }
  if (a == m) {
    // partner cut off by the truncation: plain heat decay
    u(static_cast<Eigen::Index>(a - 1), static_cast<Eigen::Index>(a - 1)) = std::exp(-spec(a) * (hi - lo));
  }
  return u;
}
}  // namespace detail

/// Numeric U(2T, 0) on n_trunc + guard modes; column j is P e_j.
inline PoincareNumeric poincare_numeric(const PeriodicOperator& op, std::size_t n_trunc,
                                        const PoincareNumericOptions& opt = {}) {
  PoincareNumeric p;
  p.n_trunc = n_trunc;
  p.modes = n_trunc + opt.guard;
  if (p.modes > op.spectrum().size())
    throw std::invalid_argument("poincare_numeric: spectrum has " + std::to_string(op.spectrum().size()) +
                                " modes, need " + std::to_string(p.modes));
  const double t = op.half_period();
  p.minus = detail::half_propagator(op, p.modes, 0.0, t, true, opt);
  p.plus = detail::half_propagator(op, p.modes, t, 2.0 * t, false, opt);
  p.full = p.plus * p.minus;
  return p;
}

struct ShiftMatchReport {
  bool pattern_ok = false;
  bool signs_ok = true;
  double max_log_rel_err = 0.0;
  double max_off_pattern = 0.0;  // relative to the column norm
  std::size_t columns_checked = 0;
};

/// Compares columns 1..n_trunc of a numeric map with the predicted shift.
inline ShiftMatchReport compare_shift(const Eigen::MatrixXd& numeric, std::size_t n_trunc, const WeightedShift& shift,
                                      double log_tol = 1e-6, double off_tol = 1e-8) {
  ShiftMatchReport r;
  for (std::size_t j = 1; j <= n_trunc; ++j) {
    if (!shift.contains(j)) continue;
    const auto& e = shift.at(j);
    if (e.image > static_cast<std::size_t>(numeric.rows())) continue;
    const auto col = numeric.col(static_cast<Eigen::Index>(j - 1));
    const double norm = col.norm();
    const double v = col(static_cast<Eigen::Index>(e.image - 1));
    ++r.columns_checked;
    if (v == 0.0 || (v > 0) != (e.sign > 0)) r.signs_ok = false;
    const double denom = std::max(std::abs(e.log_mult), 1e-300);
    const double err = e.log_mult == 0.0 ? std::abs(std::log(std::abs(v))) : std::abs(std::log(std::abs(v)) - e.log_mult) / denom;
    r.max_log_rel_err = std::max(r.max_log_rel_err, err);
    for (Eigen::Index i = 0; i < col.size(); ++i)
      if (static_cast<std::size_t>(i + 1) != e.image) r.max_off_pattern = std::max(r.max_off_pattern, std::abs(col(i)) / norm);
  }
  r.pattern_ok = r.signs_ok && r.max_log_rel_err <= log_tol && r.max_off_pattern <= off_tol && r.columns_checked > 0;
  return r;
}

}  // namespace manelab
