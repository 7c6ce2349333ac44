#pragma once

// Quadrature, root finding, and least-squares fits shared by the modules.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace manelab {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule by Newton iteration on P_n.
inline GaussRule gauss_legendre(std::size_t n) {
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.nodes[i] = x;
    r.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

namespace detail {
template <class F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                    int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson with Richardson correction. The interval is first cut
/// into `panels` pieces so plateau-shaped integrands are not mistaken for
/// constants by the initial coarse estimate.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double abs_tol = 1e-12, std::size_t panels = 64,
                        int max_depth = 40) {
  if (b == a) return 0.0;
  double total = 0.0;
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t i = 0; i < panels; ++i) {
    const double lo = a + h * static_cast<double>(i);
    const double hi = i + 1 == panels ? b : lo + h;
    const double flo = f(lo), fhi = f(hi), fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
    total += detail::simpson_step(f, lo, hi, flo, fm, fhi, whole, abs_tol / static_cast<double>(panels),
                                  max_depth);
  }
  return total;
}

/// Bisection for a sign change of f on [a, b].
template <class F>
double bisect(const F& f, double a, double b, double tol = 1e-12) {
  double fa = f(a);
  const double fb = f(b);
  if (fa == 0) return a;
  if (fb == 0) return b;
  if ((fa > 0) == (fb > 0)) throw std::invalid_argument("bisect: no sign change on bracket");
  while (b - a > tol) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if ((fm > 0) == (fa > 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

struct PolyFit {
  std::vector<double> coeffs;  // coeffs[k] multiplies x^k
  double r2 = 0.0;
};

/// Least-squares polynomial fit of the given degree (QR solve).
inline PolyFit polyfit(std::span<const double> x, std::span<const double> y, std::size_t degree) {
  if (x.size() != y.size() || x.size() < degree + 1) throw std::invalid_argument("polyfit: not enough samples");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, static_cast<Eigen::Index>(degree + 1));
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 1.0;
    for (std::size_t k = 0; k <= degree; ++k) {
      a(i, static_cast<Eigen::Index>(k)) = p;
      p *= x[static_cast<std::size_t>(i)];
    }
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
  PolyFit fit;
  fit.coeffs.assign(c.data(), c.data() + c.size());
  const Eigen::VectorXd res = b - a * c;
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  const double ss_res = res.squaredNorm();
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

/// Slope of the straight-line least-squares fit.
inline double fit_slope(std::span<const double> x, std::span<const double> y) { return polyfit(x, y, 1).coeffs[1]; }

/// Geometric sequence from `hi` down to `lo` with `count` points.
inline std::vector<double> geometric_scales(double hi, double lo, std::size_t count) {
  if (!(hi > 0 && lo > 0) || count < 2) throw std::invalid_argument("geometric_scales: need positive ends and count >= 2");
  std::vector<double> out;
  const double r = std::log(lo / hi) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(hi * std::exp(r * static_cast<double>(i)));
  return out;
}

}  // namespace manelab
