#pragma once

// Dormand-Prince 5(4) with PI step control, plus a fixed-step mode used for
// order checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace manelab {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;  // 0 picks a starting step from the interval length
  double h_max = std::numeric_limits<double>::infinity();
  double h_min = 1e-14;
  std::size_t max_steps = 10'000'000;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double last_h = 0.0;
};

class StepUnderflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
// Dormand-Prince tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;

// One DP step; returns the 5th-order solution and writes the embedded error.
template <class F>
Eigen::VectorXd dp_step(const F& f, double t, const Eigen::VectorXd& y, const Eigen::VectorXd& k1, double h,
                        Eigen::VectorXd& k7, Eigen::VectorXd& err) {
  const Eigen::VectorXd k2 = f(t + c2 * h, y + h * a21 * k1);
  const Eigen::VectorXd k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
  const Eigen::VectorXd k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
  const Eigen::VectorXd k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Eigen::VectorXd k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  Eigen::VectorXd y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  k7 = f(t + h, y5);
  err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  return y5;
}
}  // namespace detail

/// Adaptive DOPRI5 from t0 to t1 (t1 > t0). `f(t, y)` returns y'.
template <class F>
Eigen::VectorXd dopri5(const F& f, double t0, double t1, Eigen::VectorXd y, const OdeOptions& opt = {},
                       OdeStats* stats = nullptr) {
  if (!(t1 >= t0)) throw std::invalid_argument("dopri5: need t1 >= t0");
  if (t1 == t0) return y;
  double t = t0;
  double h = opt.h_init > 0 ? opt.h_init : std::min(opt.h_max, (t1 - t0) / 100.0);
  Eigen::VectorXd k1 = f(t, y), k7, err;
  double err_prev = 1e-4;
  OdeStats local;
  while (t < t1) {
    if (local.accepted + local.rejected > opt.max_steps) throw StepUnderflow("dopri5: step budget exhausted");
    bool last = false;
    if (t + h >= t1) {
      h = t1 - t;
      last = true;
    }
    Eigen::VectorXd y_new = detail::dp_step(f, t, y, k1, h, k7, err);
    double e = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(y_new(i)));
      e = std::max(e, std::abs(err(i)) / sc);
    }
    if (!std::isfinite(e)) e = 1e10;
    if (e <= 1.0) {
      t = last ? t1 : t + h;
      y = std::move(y_new);
      k1 = k7;
      ++local.accepted;
      local.last_h = h;
      const double fac = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.7 / 5) * std::pow(err_prev, 0.4 / 5), 0.2, 5.0);
      err_prev = std::max(e, 1e-4);
      h = std::min(opt.h_max, h * fac);
    } else {
      ++local.rejected;
      h *= std::max(0.2, 0.9 * std::pow(e, -0.2));
      if (h < opt.h_min) {
        std::ostringstream os;
        os << "dopri5: step-size underflow at t=" << t << " (h=" << h << ", err=" << e << ")";
        throw StepUnderflow(os.str());
      }
    }
  }
  if (stats) *stats = local;
  return y;
}

/// Fixed-step DOPRI5 (5th-order solution, no error control).
template <class F>
Eigen::VectorXd dopri5_fixed(const F& f, double t0, double t1, Eigen::VectorXd y, std::size_t steps) {
  const double h = (t1 - t0) / static_cast<double>(steps);
  Eigen::VectorXd k7, err;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = t0 + h * static_cast<double>(i);
    y = detail::dp_step(f, t, y, f(t, y), h, k7, err);
  }
  return y;
}

}  // namespace manelab
