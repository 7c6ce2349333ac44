#pragma once

// Coupled planar + parabolic systems, the trajectory-pair experiment, the
// cube kick construction and the attractor samples built on top of them.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "manelab/cutoffs.hpp"
#include "manelab/floquet.hpp"
#include "manelab/geometry.hpp"
#include "manelab/log_vector.hpp"
#include "manelab/numerics.hpp"
#include "manelab/ode.hpp"
#include "manelab/spectral.hpp"

namespace manelab {

struct Scenario {
  Spectrum spectrum = Spectrum::linear(1.0, 64);
  double L = 2.5;
  double half_period = 4.0;
  double amplitude = 1.0;
  double plateau_fraction = 0.8;
  std::size_t n_trunc = 16;
  std::size_t periods = 6;
  std::size_t n0 = 1, n_max = 4;
  double kappa = 0.05;
  double kappa_seg = 0.5;
  double beta_scale = 1.0;
  double rtol = 1e-11, atol = 1e-14;
  std::string output_dir = "out";

  /// Throws when L <= max{L_0 / 2, lambda_2} or the shapes are inconsistent.
  void validate() const {
    const auto gap = spectral_gap(spectrum);
    const double lam2 = spectrum(2);
    if (!gap.unbounded && !(L > std::max(0.5 * gap.value, lam2)))
      throw std::invalid_argument("scenario: L = " + std::to_string(L) + " must exceed max{L0/2, lambda_2} = " +
                                  std::to_string(std::max(0.5 * gap.value, lam2)));
    if (!(half_period > 0)) throw std::invalid_argument("scenario: half period must be positive");
    if (!(amplitude > 0)) throw std::invalid_argument("scenario: amplitude must be positive");
    if (n_trunc + 2 > spectrum.size()) throw std::invalid_argument("scenario: spectrum shorter than n_trunc + 2");
    if (n0 == 0 || n_max < n0) throw std::invalid_argument("scenario: kick range must satisfy 1 <= n0 <= n_max");
    if (!(kappa > 0) || !(kappa_seg > 0 && kappa_seg < 1)) throw std::invalid_argument("scenario: bad kick windows");
  }
};

struct CoupledState {
  double x = 0.0, y = 0.0;
  LogModeVector w;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<CoupledState> states;
  std::vector<double> log_norm;  // log ||w||, -inf when w = 0
  std::vector<double> x_crossings;
  std::vector<double> period_marks;
  std::size_t accepted = 0, rejected = 0;
};

/// Nonlinear pieces add N(t, x, y, w) * exp(-log_scale) to `out`, where the
/// parabolic part is w = exp(log_scale) * w_hat.
using CouplingPiece = std::function<void(double t, double x, double y, const Eigen::VectorXd& w_hat, double log_scale,
                                         Eigen::VectorXd& out)>;

struct CoupledSystem {
  std::vector<double> lambda;  // diagonal of A on modes 1..M
  std::function<std::array<double, 2>(double t, double x, double y)> planar;  // empty: frozen
  std::vector<CouplingPiece> pieces;
  std::function<std::vector<double>(double lo, double hi)> breakpoints;
  std::function<double(double t, double x, double y)> sync_error;
  double sync_tol = 1e-8;
  double period = 0.0;  // for period marks; 0 for none

  std::size_t modes() const { return lambda.size(); }
};

struct IntegrateOptions {
  double rtol = 1e-11;
  double atol = 1e-13;
  double h_init = 0.0;
  double h_max = std::numeric_limits<double>::infinity();
  double h_min = 1e-13;
  std::size_t max_steps = 5'000'000;
  std::size_t fixed_steps = 0;   // per segment, no error control
  std::vector<double> samples;   // recorded times; empty records every step
};

namespace detail {
struct Scaled {
  std::int64_t exp2 = 0;  // w = 2^exp2 * w_hat
  Eigen::VectorXd w_hat;
  double log_scale() const { return static_cast<double>(exp2) * std::numbers::ln2; }
};

inline Scaled to_scaled(const LogModeVector& w, std::size_t m) {
  if (w.max_mode() > m)
    throw std::invalid_argument("integrate: initial mode " + std::to_string(w.max_mode()) + " beyond truncation " +
                                std::to_string(m));
  Scaled s;
  s.w_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  if (w.empty()) return s;
  double hi = neg_inf;
  for (const auto& e : w.entries()) hi = std::max(hi, e.value.log_mag);
  s.exp2 = static_cast<std::int64_t>(std::floor(hi / std::numbers::ln2)) + 1;
  for (const auto& e : w.entries())
    s.w_hat(static_cast<Eigen::Index>(e.mode - 1)) = e.value.sign * std::exp(e.value.log_mag - s.log_scale());
  return s;
}

inline LogModeVector to_log(const Scaled& s) {
  LogModeVector v;
  for (Eigen::Index i = 0; i < s.w_hat.size(); ++i)
    if (s.w_hat(i) != 0.0)
      v.set(static_cast<std::size_t>(i + 1),
            {s.w_hat(i) > 0 ? 1 : -1, s.log_scale() + std::log(std::abs(s.w_hat(i)))});
  return v;
}

inline void renormalize(Scaled& s) {
  const double m = s.w_hat.size() > 0 ? s.w_hat.cwiseAbs().maxCoeff() : 0.0;
  if (!(m > 0) || !std::isfinite(m)) return;
  int e = 0;
  std::frexp(m, &e);
  for (Eigen::Index i = 0; i < s.w_hat.size(); ++i) s.w_hat(i) = std::ldexp(s.w_hat(i), -e);
  s.exp2 += e;
}

inline double log_norm(const Scaled& s) {
  const double n = s.w_hat.norm();
  return n == 0.0 ? neg_inf : s.log_scale() + std::log(n);
}
}  // namespace detail

/// Lawson-type exponential DOPRI5: e^{-lambda_n dt} is applied exactly in
/// every step and the remaining terms are stepped explicitly. The parabolic
/// part carries one power-of-two scale so magnitudes far below double range
/// stay representable.
inline TrajectoryRecord integrate(const CoupledSystem& sys, const CoupledState& initial, double t0, double t_end,
                                  const IntegrateOptions& opt = {}) {
  if (!(t_end >= t0)) throw std::invalid_argument("integrate: t_end < t0");
  if (!std::isfinite(initial.x) || !std::isfinite(initial.y)) throw std::invalid_argument("integrate: non-finite planar part");
  const std::size_t m = sys.modes();
  const auto mi = static_cast<Eigen::Index>(m);
  detail::Scaled sc = detail::to_scaled(initial.w, m);
  detail::renormalize(sc);
  double x = initial.x, y = initial.y;

  std::vector<double> stops{t0, t_end};
  if (sys.breakpoints)
    for (double b : sys.breakpoints(t0, t_end))
      if (b > t0 && b < t_end) stops.push_back(b);
  std::vector<double> samples = opt.samples;
  std::sort(samples.begin(), samples.end());
  for (double s : samples)
    if (s > t0 && s < t_end) stops.push_back(s);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  TrajectoryRecord rec;
  auto record = [&](double t) {
    rec.times.push_back(t);
    rec.states.push_back({x, y, detail::to_log(sc)});
    rec.log_norm.push_back(detail::log_norm(sc));
  };
  auto is_sample = [&](double t) {
    if (samples.empty()) return true;
    return std::binary_search(samples.begin(), samples.end(), t);
  };
  record(t0);
  if (sys.period > 0)
    for (double k = std::floor(t0 / sys.period) + 1; k * sys.period <= t_end; k += 1.0) rec.period_marks.push_back(k * sys.period);

  Eigen::VectorXd nbuf(mi), what(mi);
  double t = t0;
  auto g = [&](double tau, const Eigen::VectorXd& yy) -> Eigen::VectorXd {
    Eigen::VectorXd d(yy.size());
    const double tt = t + tau;
    if (sys.planar) {
      const auto p = sys.planar(tt, yy(0), yy(1));
      d(0) = p[0];
      d(1) = p[1];
    } else {
      d(0) = d(1) = 0.0;
    }
    if (m > 0) {
      for (Eigen::Index i = 0; i < mi; ++i) what(i) = std::exp(-sys.lambda[static_cast<std::size_t>(i)] * tau) * yy(2 + i);
      nbuf.setZero();
      for (const auto& piece : sys.pieces) piece(tt, yy(0), yy(1), what, sc.log_scale(), nbuf);
      for (Eigen::Index i = 0; i < mi; ++i) d(2 + i) = std::exp(sys.lambda[static_cast<std::size_t>(i)] * tau) * nbuf(i);
    }
    return d;
  };

  auto fail = [&](const std::string& why, double h) {
    std::ostringstream os;
    os.precision(17);
    os << "integrate: " << why << " at t=" << t << " (h=" << h << ", x=" << x << ", y=" << y
       << ", log|w|=" << detail::log_norm(sc) << ")";
    return StepUnderflow(os.str());
  };

  double h = opt.h_init > 0 ? opt.h_init : 0.0;
  double err_prev = 1e-4;
  Eigen::VectorXd yy(2 + mi), k7, err;
  for (std::size_t seg = 0; seg + 1 < stops.size(); ++seg) {
    const double t_stop = stops[seg + 1];
    if (opt.fixed_steps > 0) h = (t_stop - t) / static_cast<double>(opt.fixed_steps);
    else if (h <= 0) h = std::min(opt.h_max, (t_stop - t) / 16.0);
    while (t < t_stop) {
      if (rec.accepted + rec.rejected > opt.max_steps) throw fail("step budget exhausted", h);
      bool last = false;
      double hs = std::min(h, opt.h_max);
      if (t + hs >= t_stop - 1e-14 * std::max(1.0, std::abs(t_stop)) || (opt.fixed_steps > 0 && t + 1.5 * hs > t_stop)) {
        hs = t_stop - t;
        last = true;
      }
      yy(0) = x;
      yy(1) = y;
      yy.tail(mi) = sc.w_hat;
      const Eigen::VectorXd k1 = g(0.0, yy);
      Eigen::VectorXd yn = detail::dp_step(g, 0.0, yy, k1, hs, k7, err);
      for (Eigen::Index i = 0; i < mi; ++i) {
        const double f = std::exp(-sys.lambda[static_cast<std::size_t>(i)] * hs);
        yn(2 + i) *= f;
        err(2 + i) *= f;
      }
      double e = 0.0;
      for (Eigen::Index i = 0; i < yn.size(); ++i) {
        const double s = opt.atol + opt.rtol * std::max(std::abs(yy(i)), std::abs(yn(i)));
        e = std::max(e, std::abs(err(i)) / s);
      }
      if (!std::isfinite(e)) e = 1e10;
      if (opt.fixed_steps > 0 || e <= 1.0) {
        if (!yn.allFinite()) throw fail("non-finite state", hs);
        const double x_old = x;
        t = last ? t_stop : t + hs;
        x = yn(0);
        y = yn(1);
        sc.w_hat = yn.tail(mi);
        detail::renormalize(sc);
        ++rec.accepted;
        if ((x_old < 0) != (x < 0) && x != x_old) rec.x_crossings.push_back(t - hs * x / (x - x_old));
        if (sys.sync_error) {
          const double se = sys.sync_error(t, x, y);
          if (!(se <= sys.sync_tol)) throw fail("drive desynchronized by " + std::to_string(se), hs);
        }
        if (opt.fixed_steps == 0) {
          const double fac =
              e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.7 / 5) * std::pow(err_prev, 0.4 / 5), 0.2, 5.0);
          err_prev = std::max(e, 1e-4);
          if (!last) h = hs * fac;
          else h = std::max(h, hs * fac);
        }
        if (samples.empty() && !last) record(t);
      } else {
        ++rec.rejected;
        h = hs * std::max(0.2, 0.9 * std::pow(e, -0.2));
        if (h < opt.h_min) throw fail("step-size underflow (err=" + std::to_string(e) + ")", h);
      }
    }
    if (is_sample(t_stop)) record(t_stop);
  }
  return rec;
}

// ---------------------------------------------------------------- systems

inline std::vector<double> lambda_prefix(const Spectrum& spec, std::size_t modes) {
  if (modes > spec.size()) throw std::invalid_argument("system: spectrum shorter than the requested modes");
  return std::vector<double>(spec.values().begin(), spec.values().begin() + static_cast<std::ptrdiff_t>(modes));
}

/// w' = -A w with a frozen planar part.
inline CoupledSystem decay_system(const Spectrum& spec, std::size_t modes) {
  CoupledSystem s;
  s.lambda = lambda_prefix(spec, modes);
  return s;
}

/// Planar circle x' = -x(R^2 - 1) - y, y' = -y(R^2 - 1) + x, decoupled w.
inline CoupledSystem circle_system(const Spectrum& spec, std::size_t modes) {
  CoupledSystem s = decay_system(spec, modes);
  s.planar = [](double, double x, double y) { return planar_rhs(x, y); };
  return s;
}

/// Breakpoints of a periodic operator over an arbitrary time range.
inline std::vector<double> periodic_breakpoints(const PeriodicOperator& op, double lo, double hi) {
  const double p = op.period();
  std::vector<double> out;
  for (double j = std::floor(lo / p) - 1; j * p <= hi + p; j += 1.0)
    for (double b : op.breakpoints(0.0, p))
      if (j * p + b > lo && j * p + b < hi) out.push_back(j * p + b);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [](double a, double b) { return std::abs(a - b) < 1e-13; }), out.end());
  return out;
}

/// w' = -A w + Phi(x) w with the planar part locked to the drive:
/// x' = drive'(y), y' = 1 (y is the drive phase).
inline CoupledSystem floquet_system(std::shared_ptr<const PeriodicOperator> op, std::size_t modes) {
  CoupledSystem s;
  s.lambda = lambda_prefix(op->spectrum(), modes);
  s.planar = [op](double, double, double y) { return std::array<double, 2>{op->drive().derivative(y), 1.0}; };
  s.pieces.push_back([op](double, double x, double, const Eigen::VectorXd& w, double, Eigen::VectorXd& out) {
    Eigen::VectorXd tmp;
    op->apply_at_x(x, w, tmp);
    out += tmp;
  });
  s.breakpoints = [op](double lo, double hi) { return periodic_breakpoints(*op, lo, hi); };
  s.sync_error = [op](double, double x, double y) { return std::abs(x - op->drive()(y)); };
  s.period = op->period();
  return s;
}

/// State on the drive at time t with parabolic part w.
inline CoupledState drive_state(const PeriodicOperator& op, double t, LogModeVector w) {
  return {op.drive()(t), t, std::move(w)};
}

// ------------------------------------------------- trajectory pair experiment

struct PairExperimentOptions {
  std::size_t n_trunc = 16;
  std::size_t periods = 6;
  double half_period = 4.0;
  bool rotation = true;
  bool zero_separation = false;
  std::size_t samples_per_period = 16;
  double rtol = 1e-11, atol = 1e-14;
  FloquetOptions floquet{};
};

struct PairExperiment {
  std::string status;  // super_exponential | exponential_only | degenerate | inconclusive
  double kappa_fit = 0.0;   // t^2 coefficient of -log ||w||
  double linear = 0.0;      // t coefficient
  double r2 = 0.0;
  double linear_r2 = 0.0;   // R^2 of the best straight line
  double kappa_analytic = std::numeric_limits<double>::quiet_NaN();  // beta / (2T)^2
  double beta = std::numeric_limits<double>::quiet_NaN();            // shift decay rate of e_1
  double window_lo = 0.0, window_hi = 0.0;
  std::vector<double> boundary_times, boundary_neg_log;
  TrajectoryRecord u, v;
  double seconds = 0.0;
};

/// Integrates u = (x, y, 0) and v = (x, y, w) with w(0) = e_1 under the
/// drive-locked Floquet coupling and fits -log ||u - v|| = a + b t + kappa t^2
/// at whole periods.
inline PairExperiment trajectory_pair_experiment(const Spectrum& spec, const PairExperimentOptions& o = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (o.periods < 4) throw std::invalid_argument("trajectory_pair_experiment: need >= 4 periods");
  auto op = std::make_shared<PeriodicOperator>(spec, o.half_period, o.floquet);
  if (!o.rotation) op->set_epsilon(0.0);
  const std::size_t m = o.n_trunc;
  if (2 * o.periods + 2 > m) throw std::invalid_argument("trajectory_pair_experiment: truncation too small for the periods");
  const auto sys = floquet_system(op, m);
  const double p = op->period(), t_end = p * static_cast<double>(o.periods);
  IntegrateOptions io;
  io.rtol = o.rtol;
  io.atol = o.atol;
  io.h_max = o.half_period / 20.0;
  for (std::size_t i = 0; i <= o.periods * o.samples_per_period; ++i)
    io.samples.push_back(t_end * static_cast<double>(i) / static_cast<double>(o.periods * o.samples_per_period));
  PairExperiment r;
  r.u = integrate(sys, drive_state(*op, 0.0, {}), 0.0, t_end, io);
  r.v = integrate(sys, drive_state(*op, 0.0, o.zero_separation ? LogModeVector{} : LogModeVector::unit(1)), 0.0, t_end, io);
  r.window_lo = 0.0;
  r.window_hi = t_end;
  for (std::size_t i = 0; i < r.v.times.size(); ++i) {
    const double t = r.v.times[i];
    const double k = std::round(t / p);
    if (std::abs(t - k * p) > 1e-9 * p) continue;
    const auto& a = r.u.states[i];
    const auto& b = r.v.states[i];
    if (std::abs(a.x - b.x) > 1e-8 || std::abs(a.y - b.y) > 1e-8) throw std::runtime_error("trajectory_pair_experiment: planar parts diverged");
    r.boundary_times.push_back(t);
    r.boundary_neg_log.push_back(-log_sobolev_distance(a.w, b.w, {}, [](std::size_t) { return 0.0; }));
  }
  const auto shift = poincare_predicted(spec, o.half_period).full;
  if (o.rotation) {
    r.beta = decay_certificate(shift, 1, o.periods).beta;
    r.kappa_analytic = r.beta / (p * p);
  }
  bool degenerate = true;
  for (double v : r.boundary_neg_log)
    if (std::isfinite(v)) degenerate = false;
  if (degenerate) {
    r.status = "degenerate";
  } else {
    const auto q = polyfit(r.boundary_times, r.boundary_neg_log, 2);
    const auto l = polyfit(r.boundary_times, r.boundary_neg_log, 1);
    r.kappa_fit = q.coeffs[2];
    r.linear = q.coeffs[1];
    r.r2 = q.r2;
    r.linear_r2 = l.r2;
    const double drop = r.boundary_neg_log.back() - r.boundary_neg_log.front();
    const double quad_share = r.kappa_fit * t_end * t_end / std::max(std::abs(drop), 1e-300);
    if (r.kappa_fit > 0 && r.r2 >= 0.99 && quad_share >= 0.05) r.status = "super_exponential";
    else if (l.r2 >= 0.99) r.status = "exponential_only";
    else r.status = "inconclusive";
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ------------------------------------------------------- log-Lipschitz modulus

struct ModulusReport {
  double gamma = 0.0, s = 0.0;
  std::vector<double> times;
  std::vector<double> log_ratio;
  std::size_t skipped = 0;
  bool empty = true;
  double log_c0 = 0.0;
  double log_sup = neg_inf, log_sup_first = neg_inf, log_sup_last = neg_inf;
  double slope_last = 0.0;  // of log ratio against t over the second half
  BoundVerdict verdict = BoundVerdict::bounded;
};

/// sup ||A(u1 - u2)|| / (d (log(C0 / d))^gamma) with d = ||u1 - u2||_{H^s}
/// and C0 = e * max d. Bounded when the sup over the second half of the
/// window is at most 1.1 times the sup over the first half.
inline ModulusReport log_lipschitz_modulus(const TrajectoryRecord& a, const TrajectoryRecord& b, const Spectrum& spec,
                                           double gamma, double s = 0.0) {
  if (a.times != b.times) throw std::invalid_argument("log_lipschitz_modulus: sample times differ");
  ModulusReport r;
  r.gamma = gamma;
  r.s = s;
  auto ll = [&](std::size_t mode) { return spec.log_lambda(mode); };
  std::vector<double> ld, la;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    const auto& p = a.states[i];
    const auto& q = b.states[i];
    const double p2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
    const double lp = p2 > 0 ? 0.5 * std::log(p2) : neg_inf;
    const double d = log_add(lp, log_sobolev_distance(p.w, q.w, {s}, ll));
    const double ad = log_add(lp, log_sobolev_distance(p.w, q.w, {s + 2.0}, ll));
    ld.push_back(d);
    la.push_back(ad);
  }
  double dmax = neg_inf;
  for (double d : ld) dmax = std::max(dmax, d);
  r.log_c0 = 1.0 + dmax;
  for (std::size_t i = 0; i < ld.size(); ++i) {
    if (ld[i] == neg_inf) {
      ++r.skipped;
      continue;
    }
    r.times.push_back(a.times[i]);
    r.log_ratio.push_back(la[i] - ld[i] - gamma * std::log(r.log_c0 - ld[i]));
  }
  r.empty = r.times.empty();
  if (r.empty) return r;
  const double mid = 0.5 * (r.times.front() + r.times.back());
  std::vector<double> tx, ty;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    r.log_sup = std::max(r.log_sup, r.log_ratio[i]);
    if (r.times[i] <= mid) r.log_sup_first = std::max(r.log_sup_first, r.log_ratio[i]);
    else {
      r.log_sup_last = std::max(r.log_sup_last, r.log_ratio[i]);
      tx.push_back(r.times[i]);
      ty.push_back(r.log_ratio[i]);
    }
  }
  if (tx.size() >= 2) r.slope_last = fit_slope(tx, ty);
  r.verdict = r.log_sup_last <= r.log_sup_first + std::log(1.1) ? BoundVerdict::bounded : BoundVerdict::unbounded;
  return r;
}

// ------------------------------------------------------------ kick operator

struct KickOptions {
  std::size_t n0 = 1, n_max = 4;
  double kappa = 0.05;        // kick window (-kappa, 0) in phase time
  double kappa_seg = 0.5;     // labels live in [1 - kappa_seg, 1]
  double residual_max = 1e-2; // allowed remainder / eps_n
  unsigned smoothness_order = 1;
  std::optional<double> beta;  // defaults to the ratio-bound beta over the range
};

struct KickTerm {
  std::size_t n = 0, p = 0, k = 0;
  std::size_t member = 0;  // cut-off family index
  double anchor = 0.0;     // label s_{n,p}
  std::vector<std::size_t> modes;        // 2(n + j) for the set bits of g_p
  std::vector<std::size_t> coords;       // the j's
  std::vector<double> log_target;        // log |w_mode(0)| = -beta n^2 / 2 + log A_j(n)
  std::vector<int> sign;                 // sign of w_mode(0)
  std::vector<double> log_gain;          // physical gain of the forced mode over the window
  std::vector<std::size_t> final_modes;  // image after N periods
};

struct KickLevel {
  std::size_t n = 0, k = 0, iterations = 0;
  double log_b = 0.0;
  double log_eps = 0.0;
  double log_remainder_ratio = 0.0;  // log(||P^N e_1|| / eps_n)
  bool residual_ok = false;
  double log_norm = neg_inf;         // largest forcing amplitude times the cut-off constant
  double budget_exponent = 0.0;      // (log_norm + beta n^2 / 2) / (n ln 2)
};

class KickRejected : public std::runtime_error {
 public:
  KickRejected(const std::string& what, std::size_t minimal_n0) : std::runtime_error(what), minimal_n0_(minimal_n0) {}
  std::size_t minimal_n0() const { return minimal_n0_; }

 private:
  std::size_t minimal_n0_;
};

inline double fitted_beta(const WeightedShift& shift, std::size_t n_lo, std::size_t n_hi) {
  double b = std::numeric_limits<double>::infinity();
  for (std::size_t n = n_lo; n <= n_hi; ++n) b = std::min(b, ratio_bounds_check(shift, n).beta);
  return b;
}

class KickOperator {
 public:
  const std::vector<KickTerm>& terms() const { return terms_; }
  const std::vector<KickLevel>& levels() const { return levels_; }
  double beta() const { return beta_; }
  std::size_t n0() const { return n0_; }
  double kappa() const { return kappa_; }
  double kappa_seg() const { return kappa_seg_; }
  const BumpFunction& theta() const { return *theta_; }
  const CutoffFamily& family() const { return family_; }
  const PeriodicOperator& op() const { return *op_; }
  std::shared_ptr<const PeriodicOperator> op_ptr() const { return op_; }

  /// Phase time in (-2T, 0] relative to the next period boundary.
  double phase(double t) const {
    const double p = op_->period();
    return t - p * std::ceil(t / p - 1e-15);
  }

  /// int_h^0 d_1 for the scalar e_1 dynamics on the plus phase.
  double log_decay_mode1(double h) const { return decay_integral(1, h); }

  /// w_1 propagated to the next period boundary; NaN outside the window.
  double label(double t, double w1) const {
    const double h = phase(t);
    if (!(h > -kappa_)) return std::numeric_limits<double>::quiet_NaN();
    return w1 * std::exp(-log_decay_mode1(h));
  }

  /// Index of the only term that can be nonzero at (t, w_1).
  std::optional<std::size_t> active_term(double t, double w1) const {
    const double s = label(t, w1);
    if (std::isnan(s) || s <= 1.0 - kappa_seg_) return std::nullopt;
    if ((*theta_)(phase(t)) == 0.0) return std::nullopt;
    const auto mem = family_.owner(s);
    if (!mem) return std::nullopt;
    if (family_(*mem, s) == 0.0) return std::nullopt;
    return member_term_[*mem];
  }

  /// Value of term i at (t, w_1) as a forcing vector.
  LogModeVector term_value(std::size_t i, double t, double w1) const {
    LogModeVector v;
    const double s = label(t, w1);
    if (std::isnan(s)) return v;
    const auto& term = terms_.at(i);
    const double f = (*theta_)(phase(t)) * family_(term.member, s);
    if (f == 0.0) return v;
    for (std::size_t j = 0; j < term.modes.size(); ++j)
      v.set(term.modes[j], {term.sign[j], term.log_target[j] - term.log_gain[j] + std::log(f)});
    return v;
  }

  /// Assembled forcing at (t, w_1).
  LogModeVector evaluate(double t, double w1) const {
    const auto i = active_term(t, w1);
    return i ? term_value(*i, t, w1) : LogModeVector{};
  }

  /// Coupling piece for integrate.
  CouplingPiece piece() const {
    return [this](double t, double, double, const Eigen::VectorXd& w, double log_scale, Eigen::VectorXd& out) {
      if (w.size() == 0) return;
      const double w1 = w(0) * std::exp(log_scale);
      const auto i = active_term(t, w1);
      if (!i) return;
      const auto& term = terms_[*i];
      const double f = (*theta_)(phase(t)) * family_(term.member, label(t, w1));
      for (std::size_t j = 0; j < term.modes.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(term.modes[j] - 1);
        if (row < out.size()) out(row) += term.sign[j] * f * std::exp(term.log_target[j] - term.log_gain[j] - log_scale);
      }
    };
  }

  /// Start of the kicked trajectory v_{n,p} at t = -kappa.
  CoupledState initial_state(const KickTerm& term) const {
    const double w1 = term.anchor * std::exp(log_decay_mode1(-kappa_));
    return drive_state(*op_, -kappa_, LogModeVector::unit(1, std::log(w1)));
  }

  /// State after N periods predicted by the shift: eps_n on the images of
  /// the cube coordinates plus the e_1 remainder.
  LogModeVector predicted_final(const KickTerm& term, const WeightedShift& shift) const {
    const auto& lvl = level(term.n);
    LogModeVector v;
    for (std::size_t j = 0; j < term.modes.size(); ++j) v.set(term.final_modes[j], {1, lvl.log_eps});
    const auto e1 = iterate_norm(shift, 1, lvl.iterations);
    v.set(e1.final_mode, {e1.sign, std::log(term.anchor) + e1.lognorm});
    return v;
  }

  const KickLevel& level(std::size_t n) const {
    for (const auto& l : levels_)
      if (l.n == n) return l;
    throw std::out_of_range("KickOperator: no level " + std::to_string(n));
  }

  const KickTerm& term(std::size_t n, std::size_t p) const {
    for (const auto& t : terms_)
      if (t.n == n && t.p == p) return t;
    throw std::out_of_range("KickOperator: no term (" + std::to_string(n) + ", " + std::to_string(p) + ")");
  }

  /// log of int theta(h) exp(-int_h^0 d_m) dh with d_m the plus-phase
  /// diagonal rate of mode m.
  double physical_log_gain(std::size_t m) const {
    auto f = [&](double h) { return (*theta_)(h) * std::exp(lambda_shift(m, h)); };
    return detail::log_weighted_integral(f, theta_->support_lo(), theta_->support_hi(), op_->spectrum()(m));
  }

 private:
  friend KickOperator build_kick_operator(std::shared_ptr<const PeriodicOperator>, const WeightedShift&,
                                          const KickOptions&);

  // int_h^0 theta_2(x(tau)) dtau
  double theta2_integral(double h) const {
    static const GaussRule rule = gauss_legendre(24);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double tau = 0.5 * h * (1.0 - rule.nodes[i]);
      acc += rule.weights[i] * op_->averaging(tau);
    }
    return -0.5 * h * acc;
  }

  // -int_h^0 (d_m - lambda_m) for the plus-phase pair containing m (m even)
  double lambda_shift(std::size_t m, double h) const {
    const auto& sp = op_->spectrum();
    const double half_gap = 0.5 * (sp(m) - sp(m + 1));
    return half_gap * theta2_integral(h);
  }

  double decay_integral(std::size_t m, double h) const {
    const double lam = op_->spectrum()(m);
    return -lam * h - op_->mu0_coefficient() * theta2_integral(h);
  }

  std::shared_ptr<const PeriodicOperator> op_;
  std::shared_ptr<BumpFunction> theta_;
  CutoffFamily family_;
  std::vector<KickTerm> terms_;
  std::vector<std::size_t> member_term_;
  std::vector<KickLevel> levels_;
  double beta_ = 0.0;
  std::size_t n0_ = 1;
  double kappa_ = 0.0, kappa_seg_ = 0.0;
};

/// Sum over n0 <= n <= n_max and cube vertices p of the forcings that put
/// e^{-beta n^2/2} A_j(n) on e_{2(n+j)} at the end of the window, for the
/// trajectory whose e_1 label is s_{n,p}.
inline KickOperator build_kick_operator(std::shared_ptr<const PeriodicOperator> op, const WeightedShift& shift,
                                        const KickOptions& o) {
  if (o.n0 == 0 || o.n_max < o.n0) throw std::invalid_argument("build_kick_operator: need 1 <= n0 <= n_max");
  if (!(o.kappa > 0) || !(o.kappa < op->t0()))
    throw std::invalid_argument("build_kick_operator: kick window must lie inside (-T0, 0), T0 = " + std::to_string(op->t0()));
  if (!(o.kappa_seg > 0 && o.kappa_seg < 1)) throw std::invalid_argument("build_kick_operator: kappa_seg in (0, 1)");
  KickOperator K;
  K.op_ = op;
  K.kappa_ = o.kappa;
  K.kappa_seg_ = o.kappa_seg;
  K.theta_ = std::make_shared<BumpFunction>(-o.kappa, -0.75 * o.kappa, -0.25 * o.kappa, 0.0);
  K.beta_ = o.beta ? *o.beta : fitted_beta(shift, o.n0, o.n_max);
  if (!(K.beta_ > 0)) throw std::invalid_argument("build_kick_operator: beta must be positive");

  // Residual check first: it decides n0.
  std::vector<KickLevel> levels;
  for (std::size_t n = o.n0; n <= o.n_max; ++n) {
    const auto eq = equalizers(shift, n);
    KickLevel l;
    l.n = n;
    l.k = eq.k;
    l.iterations = eq.iterations;
    l.log_b = eq.log_b;
    l.log_eps = -0.5 * K.beta_ * static_cast<double>(n * n) + eq.log_b;
    l.log_remainder_ratio = iterate_norm(shift, 1, eq.iterations).lognorm - l.log_eps;
    l.residual_ok = l.log_remainder_ratio <= std::log(o.residual_max);
    levels.push_back(l);
  }
  std::size_t minimal = o.n_max + 1;
  for (std::size_t i = levels.size(); i-- > 0;) {
    if (!levels[i].residual_ok) break;
    minimal = levels[i].n;
  }
  if (minimal != o.n0)
    throw KickRejected("build_kick_operator: remainder bound fails; minimal admissible n0 = " + std::to_string(minimal),
                       minimal);

  std::vector<Interval> intervals;
  std::vector<double> anchors;
  std::vector<unsigned> lv;
  struct Pending {
    std::size_t n, p, k;
  };
  std::vector<Pending> pend;
  for (const auto& l : levels) {
    const double lo_n = 1.0 - o.kappa_seg * std::ldexp(1.0, 1 - static_cast<int>(l.n));
    const double len = o.kappa_seg * std::ldexp(1.0, -static_cast<int>(l.n + l.k));
    if (len < 1e-13)
      throw std::invalid_argument("build_kick_operator: label intervals at n = " + std::to_string(l.n) +
                                  " fall below double resolution");
    const std::size_t count = std::size_t{1} << l.k;
    for (std::size_t p = 1; p <= count; ++p) {
      const double lo = lo_n + static_cast<double>(p - 1) * len;
      intervals.push_back({lo, lo + len});
      anchors.push_back(lo + 0.5 * len);
      lv.push_back(static_cast<unsigned>(l.n));
      pend.push_back({l.n, p, l.k});
    }
  }
  K.family_ = build_cutoff_family(intervals, anchors, BoundLaw::dyadic_level(o.smoothness_order), std::nullopt, 0.25, lv, 512);
  // intervals were generated in increasing order, so member i is pend[i]
  std::map<std::size_t, double> gain_cache;
  auto gain = [&](std::size_t m) {
    auto it = gain_cache.find(m);
    if (it != gain_cache.end()) return it->second;
    return gain_cache[m] = K.physical_log_gain(m);
  };
  for (std::size_t i = 0; i < pend.size(); ++i) {
    const auto& pd = pend[i];
    const auto eq = equalizers(shift, pd.n);
    KickTerm t;
    t.n = pd.n;
    t.p = pd.p;
    t.k = pd.k;
    t.member = i;
    t.anchor = anchors[i];
    const std::size_t mask = (std::size_t{1} << pd.k) - pd.p;
    for (std::size_t j = 1; j <= pd.k; ++j) {
      if (!((mask >> (j - 1)) & 1u)) continue;
      const std::size_t mode = 2 * (pd.n + j);
      const auto orbit = iterate_norm(shift, mode, eq.iterations);
      t.coords.push_back(j);
      t.modes.push_back(mode);
      t.log_target.push_back(-0.5 * K.beta_ * static_cast<double>(pd.n * pd.n) + eq.log_a[j]);
      t.sign.push_back(orbit.sign);
      t.log_gain.push_back(gain(mode));
      t.final_modes.push_back(orbit.final_mode);
    }
    K.terms_.push_back(t);
    K.member_term_.push_back(K.terms_.size() - 1);
  }
  for (auto& l : levels) {
    for (const auto& t : K.terms_) {
      if (t.n != l.n) continue;
      for (std::size_t j = 0; j < t.modes.size(); ++j)
        l.log_norm = std::max(l.log_norm, t.log_target[j] - t.log_gain[j] + std::log(K.family_.member_constants()[t.member]) +
                                              2.0 * o.smoothness_order * static_cast<double>(l.n) * std::numbers::ln2);
    }
    l.budget_exponent = (l.log_norm + 0.5 * K.beta_ * static_cast<double>(l.n * l.n)) /
                        (static_cast<double>(l.n) * std::numbers::ln2);
  }
  K.levels_ = std::move(levels);
  K.n0_ = o.n0;
  return K;
}

struct KickValidation {
  double max_rel_log_err = 0.0;     // over the cube coordinates after N periods
  double window_rel_log_err = 0.0;  // over the forced modes at the end of the window
  TrajectoryRecord record;
};

/// Integrates v_{n,p} from -kappa through the kick and N periods.
inline KickValidation integrate_kicked(const KickOperator& K, const KickTerm& term, const WeightedShift& shift,
                                       IntegrateOptions io = {}) {
  const auto& lvl = K.level(term.n);
  const std::size_t modes = 2 * lvl.iterations + 3;
  auto sys = floquet_system(K.op_ptr(), modes);
  sys.pieces.push_back(K.piece());
  const double t_end = K.op().period() * static_cast<double>(lvl.iterations);
  io.samples = {0.0, t_end};
  if (!std::isfinite(io.h_max)) io.h_max = K.op().half_period() / 20.0;
  KickValidation v;
  v.record = integrate(sys, K.initial_state(term), -K.kappa(), t_end, io);
  auto rel = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
  const auto& mid = v.record.states[1].w;
  for (std::size_t j = 0; j < term.modes.size(); ++j)
    v.window_rel_log_err = std::max(v.window_rel_log_err, rel(mid.get(term.modes[j]).log_mag, term.log_target[j]));
  const auto& fin = v.record.states.back().w;
  for (std::size_t j = 0; j < term.modes.size(); ++j) {
    const auto got = fin.get(term.final_modes[j]);
    double e = rel(got.log_mag, lvl.log_eps);
    if (got.sign != 1) e = std::numeric_limits<double>::infinity();
    v.max_rel_log_err = std::max(v.max_rel_log_err, e);
  }
  (void)shift;
  return v;
}

// ----------------------------------------------------------- bad cube cloud

struct CubeLevel {
  std::size_t n = 0, k = 0;
  double log_eps = 0.0;
  std::vector<std::size_t> indices;  // cloud indices of the level's vertices (origin included)
};

struct BadCubeCloud {
  PointCloud cloud;
  std::vector<CubeLevel> levels;
  double beta = 0.0;
};

/// All 2^k vertices of eps_n {0,1}^k on e_{2(n+1)}, ..., e_{2(n+k)},
/// k = ceil(sqrt n), eps_n = e^{-beta n^2/2} B(n); the shared origin is
/// stored once.
inline BadCubeCloud bad_cube_cloud(const WeightedShift& shift, std::size_t n0, std::size_t n_max,
                                   std::optional<double> beta = std::nullopt, SobolevIndex s = {}) {
  if (n0 == 0 || n_max < n0) throw std::invalid_argument("bad_cube_cloud: need 1 <= n0 <= n_max");
  BadCubeCloud c;
  std::vector<double> ll;
  for (double l : shift.lambdas()) ll.push_back(std::log(l));
  c.cloud = PointCloud(ll, s);
  c.beta = beta ? *beta : fitted_beta(shift, n0, n_max);
  c.cloud.add(LogModeVector{}, "origin");
  for (std::size_t n = n0; n <= n_max; ++n) {
    const auto eq = equalizers(shift, n);
    CubeLevel lv;
    lv.n = n;
    lv.k = eq.k;
    lv.log_eps = -0.5 * c.beta * static_cast<double>(n * n) + eq.log_b;
    lv.indices.push_back(0);
    for (std::size_t mask = 1; mask < (std::size_t{1} << lv.k); ++mask) {
      LogModeVector v;
      for (std::size_t j = 1; j <= lv.k; ++j)
        if ((mask >> (j - 1)) & 1u) v.set(2 * (n + j), {1, lv.log_eps});
      lv.indices.push_back(c.cloud.size());
      c.cloud.add(std::move(v), "cube n=" + std::to_string(n));
    }
    c.levels.push_back(std::move(lv));
  }
  return c;
}

struct CubeLevelReport {
  std::size_t n = 0, k = 0;
  std::size_t cover_half_eps = 0;   // N_{eps_n/2} over the level's vertices
  double log2_doubling = 0.0;       // max over chain scales
  double best_scale = 0.0;          // in units of eps_n
  double min_log_pairwise_gap = 0.0; // min log d(p, q) - log eps_n over vertex pairs
  bool cover_bound = false;          // N >= 2^k
  bool doubling_bound = false;       // log2 D >= sqrt(n) / 2
};

/// Exhaustive check on one level: covering number at eps_n / 2 and the
/// doubling factor over the chain scales eps_n * {1/2, ..., 2 r_n}.
inline CubeLevelReport cube_level_check(const BadCubeCloud& c, const CubeLevel& lv) {
  CubeLevelReport r;
  r.n = lv.n;
  r.k = lv.k;
  const PointCloud level = c.cloud.subset(lv.indices);
  DistanceEngine eng(level);
  r.min_log_pairwise_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < level.size(); ++i)
    for (std::size_t j = i + 1; j < level.size(); ++j)
      r.min_log_pairwise_gap = std::min(r.min_log_pairwise_gap, eng.log_distance(i, j) - lv.log_eps);
  r.cover_half_eps = covering_number_log(eng, lv.log_eps - std::numbers::ln2, CoverMethod::greedy).count;
  const double rn = std::pow(static_cast<double>(lv.n), 0.25) / 2.0;
  std::vector<double> factors{0.5, 1.0, std::sqrt(2.0), std::sqrt(3.0), 2.0 * (1.0 - 1e-9), 2.0};
  for (double f = 2.5; f <= std::max(2.0, 2.0 * rn) + 1e-12; f += 0.5) factors.push_back(f);
  std::size_t best = 1;
  for (double f : factors) {
    const auto d = doubling_factor_log(eng, lv.log_eps + std::log(f));
    if (d.value > best) {
      best = d.value;
      r.best_scale = f;
    }
  }
  r.log2_doubling = std::log2(static_cast<double>(best));
  r.cover_bound = r.cover_half_eps >= (std::size_t{1} << lv.k);
  r.doubling_bound = r.log2_doubling >= 0.5 * std::sqrt(static_cast<double>(lv.n));
  return r;
}

// --------------------------------------------------------- cone attractor sample

struct SequenceLaws {
  std::string name;
  LogSequence log_a, log_b;
  std::size_t n_first = 1;
};

/// B_n = e^{-sqrt n}, A_n = c / n^2 with sum_{n <= n_max} A_n = 2 pi - 0.1.
inline SequenceLaws exp_sqrt_laws(std::size_t n_max) {
  double h = 0.0;
  for (std::size_t n = 1; n <= n_max; ++n) h += 1.0 / static_cast<double>(n * n);
  const double log_c = std::log((2.0 * std::numbers::pi - 0.1) / h);
  SequenceLaws l;
  l.name = "exp-sqrt";
  l.log_b = [](std::size_t n, const Spectrum&) { return -std::sqrt(static_cast<double>(n)); };
  l.log_a = [log_c](std::size_t n, const Spectrum&) { return log_c - 2.0 * std::log(static_cast<double>(n)); };
  return l;
}

/// A_n = 1 / (lambda_n^{1/2} (log lambda_n)^2), B_n = A_n / log lambda_n.
inline SequenceLaws log_critical_laws() {
  SequenceLaws l;
  l.name = "log-critical";
  l.n_first = 2;
  l.log_a = [](std::size_t n, const Spectrum& sp) {
    const double ll = sp.log_lambda(n);
    return -0.5 * ll - 2.0 * std::log(ll);
  };
  l.log_b = [](std::size_t n, const Spectrum& sp) {
    const double ll = sp.log_lambda(n);
    return -0.5 * ll - 3.0 * std::log(ll);
  };
  return l;
}

struct ConeOptions {
  double cone_spacing = 1.0 / 32;
  std::size_t segment_points = 64;
  double segment_ratio = 0.8;
  std::size_t verify_upto = 8;
  double verify_time = 10.0;
};

/// beta F(x, y) = beta sum_n B_n theta(R) psi_n(phi) e_n.
struct ConeForcing {
  CutoffFamily psi;
  BumpFunction theta{0.0, 0.5, 1.5, 2.0};
  std::vector<std::size_t> modes;
  std::vector<double> log_coeff;  // log(beta B_n)

  void add(double x, double y, double log_scale, Eigen::VectorXd& out) const {
    const double th = theta(std::hypot(x, y));
    if (th == 0.0) return;
    double phi = std::atan2(y, x);
    if (phi < 0) phi += 2.0 * std::numbers::pi;
    const auto mem = psi.owner(phi);
    if (!mem) return;
    const auto row = static_cast<Eigen::Index>(modes[*mem] - 1);
    if (row >= out.size()) return;
    out(row) += th * psi(*mem, phi) * std::exp(log_coeff[*mem] - log_scale);
  }
};

struct ConeAttractor {
  PointCloud cloud;
  std::shared_ptr<const ConeForcing> forcing;
  std::vector<std::size_t> modes;
  std::vector<double> phi;
  std::vector<double> log_amplitude;  // log(beta B_n / lambda_n)
  double sum_a = 0.0;
  double max_residual = 0.0;          // rhs at P_n, n <= verify_upto
  double max_drift = 0.0;             // integrated drift from P_n over [0, verify_time]
};

inline CoupledSystem cone_system(const Spectrum& spec, std::shared_ptr<const ConeForcing> f, std::size_t modes) {
  CoupledSystem s = circle_system(spec, modes);
  s.pieces.push_back([f](double, double x, double y, const Eigen::VectorXd&, double ls, Eigen::VectorXd& out) {
    f->add(x, y, ls, out);
  });
  return s;
}

/// Cone {R <= 1} (planar grid), equilibria P_n and the heteroclinic
/// segments above (cos phi_n, sin phi_n).
inline ConeAttractor cone_attractor(const SequenceLaws& laws, const Spectrum& spec, std::size_t n_max,
                                            double beta_scale = 1.0, const ConeOptions& o = {}) {
  if (n_max > spec.size()) throw std::invalid_argument("cone_attractor: n_max beyond spectrum");
  if (!(beta_scale > 0)) throw std::invalid_argument("cone_attractor: beta_scale must be positive");
  ConeAttractor a;
  auto f = std::make_shared<ConeForcing>();
  std::vector<Interval> iv;
  std::vector<double> anchors;
  double acc = 0.0, prev_b = std::numeric_limits<double>::infinity();
  for (std::size_t n = laws.n_first; n <= n_max; ++n) {
    const double la = laws.log_a(n, spec), lb = laws.log_b(n, spec);
    if (!(lb < prev_b)) throw std::invalid_argument("cone_attractor: B_n not strictly decreasing at n = " + std::to_string(n));
    prev_b = lb;
    const double len = std::exp(la);
    iv.push_back({acc, acc + len});
    anchors.push_back(acc + 0.5 * len);
    acc += len;
    a.modes.push_back(n);
    a.phi.push_back(anchors.back());
    a.log_amplitude.push_back(std::log(beta_scale) + lb - spec.log_lambda(n));
    f->modes.push_back(n);
    f->log_coeff.push_back(std::log(beta_scale) + lb);
  }
  a.sum_a = acc;
  if (!(acc < 2.0 * std::numbers::pi))
    throw std::invalid_argument("cone_attractor: sum of A_n = " + std::to_string(acc) + " is not below 2 pi");
  f->psi = build_cutoff_family(iv, anchors, BoundLaw::interval_power(1), std::nullopt, 0.25, {}, 256);
  a.forcing = f;

  a.cloud = PointCloud::from_spectrum(spec);
  const double h = o.cone_spacing;
  const int steps = static_cast<int>(std::floor(1.0 / h + 1e-9));
  for (int i = -steps; i <= steps; ++i)
    for (int j = -steps; j <= steps; ++j) {
      const double x = i * h, y = j * h;
      if (x * x + y * y <= 1.0 + 1e-12) a.cloud.add_planar(x, y, "cone");
    }
  for (std::size_t i = 0; i < a.modes.size(); ++i) {
    const std::array<double, 2> base{std::cos(a.phi[i]), std::sin(a.phi[i])};
    a.cloud.add(LogModeVector::unit(a.modes[i], a.log_amplitude[i]), "equilibrium", base);
    a.cloud.add(LogModeVector{}, "segment", base);
    for (std::size_t j = 1; j < o.segment_points; ++j)
      a.cloud.add(LogModeVector::unit(a.modes[i], a.log_amplitude[i] + static_cast<double>(j) * std::log(o.segment_ratio)),
                  "segment", base);
  }

  // equilibrium residuals and drift
  const std::size_t top = std::min<std::size_t>(o.verify_upto, n_max);
  if (top >= laws.n_first) {
    const auto sys = cone_system(spec, f, top);
    for (std::size_t i = 0; i < a.modes.size() && a.modes[i] <= top; ++i) {
      const std::size_t n = a.modes[i];
      const double x = std::cos(a.phi[i]), y = std::sin(a.phi[i]);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(top));
      const double amp = std::exp(a.log_amplitude[i]);
      w(static_cast<Eigen::Index>(n - 1)) = amp;
      Eigen::VectorXd out = Eigen::VectorXd::Zero(w.size());
      for (const auto& p : sys.pieces) p(0.0, x, y, w, 0.0, out);
      for (Eigen::Index r = 0; r < w.size(); ++r) out(r) -= sys.lambda[static_cast<std::size_t>(r)] * w(r);
      const auto pr = planar_rhs(x, y);
      a.max_residual = std::max({a.max_residual, out.cwiseAbs().maxCoeff(), std::abs(pr[0]), std::abs(pr[1])});
      IntegrateOptions io;
      io.rtol = 1e-12;
      io.atol = 1e-14;
      for (int k = 0; k <= 10; ++k) io.samples.push_back(o.verify_time * k / 10.0);
      const auto rec = integrate(sys, {x, y, LogModeVector::unit(n, a.log_amplitude[i])}, 0.0, o.verify_time, io);
      for (const auto& st : rec.states) {
        const auto dense = st.w.to_dense(top).values;
        double d = std::max(std::abs(st.x - x), std::abs(st.y - y));
        for (std::size_t r = 0; r < top; ++r) d = std::max(d, std::abs(dense[r] - (r + 1 == n ? amp : 0.0)));
        a.max_drift = std::max(a.max_drift, d);
      }
    }
  }
  return a;
}

}  // namespace manelab
