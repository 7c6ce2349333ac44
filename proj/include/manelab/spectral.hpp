#pragma once

// Eigenvalue sequences of the dissipative operator, spectral-gap
// quantities, and the linearization spectra at the two equilibria +-N e_1
// used for the C^1 obstruction.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "log_vector.hpp"

namespace manelab {

enum class SpectrumFamily { linear, power, quadratic, explicit_list };

inline const char* to_string(SpectrumFamily f) {
  switch (f) {
    case SpectrumFamily::linear: return "linear";
    case SpectrumFamily::power: return "power";
    case SpectrumFamily::quadratic: return "quadratic";
    case SpectrumFamily::explicit_list: return "explicit";
  }
  return "?";
}

/// Rejection of an explicit eigenvalue list; `index` is the 1-based
/// position of the first offending value.
class SpectrumError : public std::invalid_argument {
 public:
  SpectrumError(const std::string& what, std::size_t index)
      : std::invalid_argument(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Truncated eigenvalue sequence lambda_1 <= ... <= lambda_{n_max}, all > 0.
class Spectrum {
 public:
  SpectrumFamily family() const { return family_; }
  /// c for linear, kappa for power, unused otherwise.
  double parameter() const { return param_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }

  /// 1-based access.
  double operator()(std::size_t n) const {
    if (n == 0 || n > values_.size())
      throw std::out_of_range("Spectrum: mode " + std::to_string(n) + " outside truncation " +
                              std::to_string(values_.size()));
    return values_[n - 1];
  }
  double log_lambda(std::size_t n) const { return std::log((*this)(n)); }

  /// Prefix truncation (keeps family metadata).
  Spectrum prefix(std::size_t n) const {
    if (n == 0 || n > values_.size()) throw std::invalid_argument("Spectrum::prefix: bad length");
    Spectrum s = *this;
    s.values_.resize(n);
    return s;
  }

  static Spectrum linear(double c, std::size_t n_max) {
    check_common(n_max);
    if (!(c > 0)) throw std::invalid_argument("linear spectrum: c must be positive");
    Spectrum s(SpectrumFamily::linear, c);
    for (std::size_t n = 1; n <= n_max; ++n) s.values_.push_back(c * static_cast<double>(n));
    return s;
  }

  static Spectrum power(double kappa, std::size_t n_max) {
    check_common(n_max);
    if (!(kappa > 0)) throw std::invalid_argument("power spectrum: kappa must be positive");
    Spectrum s(SpectrumFamily::power, kappa);
    for (std::size_t n = 1; n <= n_max; ++n) s.values_.push_back(std::pow(static_cast<double>(n), kappa));
    return s;
  }

  static Spectrum quadratic(std::size_t n_max) {
    check_common(n_max);
    Spectrum s(SpectrumFamily::quadratic, 2.0);
    for (std::size_t n = 1; n <= n_max; ++n) s.values_.push_back(static_cast<double>(n * n));
    return s;
  }

  static Spectrum explicit_list(std::vector<double> values) {
    check_common(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0) || !std::isfinite(values[i]))
        throw SpectrumError("explicit spectrum: value at index " + std::to_string(i + 1) + " is not positive",
                            i + 1);
      if (i > 0 && values[i] < values[i - 1])
        throw SpectrumError("explicit spectrum: not monotone at index " + std::to_string(i + 1), i + 1);
    }
    Spectrum s(SpectrumFamily::explicit_list, 0.0);
    s.values_ = std::move(values);
    return s;
  }

 private:
  Spectrum(SpectrumFamily f, double p) : family_(f), param_(p) {}
  static void check_common(std::size_t n_max) {
    if (n_max < 2) throw std::invalid_argument("spectrum: n_max must be >= 2");
  }

  SpectrumFamily family_;
  double param_;
  std::vector<double> values_;
};

struct GapResult {
  bool unbounded = false;
  double value = 0.0;  // sup of consecutive gaps when bounded
};

/// L_0 = sup (lambda_{n+1} - lambda_n). Families whose analytic gap diverges
/// report unbounded no matter the truncation.
inline GapResult spectral_gap(const Spectrum& spec) {
  switch (spec.family()) {
    case SpectrumFamily::quadratic: return {true, 0.0};
    case SpectrumFamily::power:
      if (spec.parameter() > 1.0) return {true, 0.0};
      break;
    case SpectrumFamily::linear: return {false, spec.parameter()};
    case SpectrumFamily::explicit_list: break;
  }
  double g = 0.0;
  const auto& v = spec.values();
  for (std::size_t i = 1; i < v.size(); ++i) g = std::max(g, v[i] - v[i - 1]);
  return {false, g};
}

using Complex = std::complex<double>;

/// Roots of mu^2 + (a+b) mu + a b + L^2 = 0, the characteristic polynomial
/// of the rotated 2x2 block [[-a, L], [-L, -b]]. First root has Im >= 0.
inline std::pair<Complex, Complex> block_eigenvalues(double lambda_a, double lambda_b, double coupling) {
  if (!(lambda_a > 0) || lambda_b < lambda_a || coupling < 0)
    throw std::invalid_argument("block_eigenvalues: need lambda_b >= lambda_a > 0 and L >= 0");
  const double sum = lambda_a + lambda_b;
  const double gap = lambda_b - lambda_a;
  const double disc = (gap - 2.0 * coupling) * (gap + 2.0 * coupling);
  if (disc < 0) {
    const double im = 0.5 * std::sqrt(-disc);
    return {Complex(-0.5 * sum, im), Complex(-0.5 * sum, -im)};
  }
  const double q = -0.5 * (sum + std::sqrt(disc));
  const double prod = lambda_a * lambda_b + coupling * coupling;
  return {Complex(q, 0.0), Complex(prod / q, 0.0)};
}

/// |Im| <= 1e-9 (1 + |Re|).
inline bool is_real_eigenvalue(Complex z) { return std::abs(z.imag()) <= 1e-9 * (1.0 + std::abs(z.real())); }

enum class EquilibriumSite { minus, plus };

struct LinearizationSpectrum {
  std::vector<Complex> eigenvalues;  // block order
  std::size_t real_count = 0;
  double max_dense_deviation = 0.0;  // block formula vs dense eigensolver
};

/// Jacobian -A + F'(u_+-) on the first n modes. Minus site pairs
/// (2k-1, 2k); plus site isolates mode 1 (eigenvalue L - lambda_1) and
/// pairs (2k, 2k+1).
inline Eigen::MatrixXd linearization_matrix(const Spectrum& spec, double coupling, EquilibriumSite site,
                                            std::size_t n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) m(i, i) = -spec(i + 1);
  std::size_t first = 0;
  if (site == EquilibriumSite::plus) {
    m(0, 0) = coupling - spec(1);
    first = 1;
  }
  for (std::size_t i = first; i + 1 < n; i += 2) {
    m(i, i + 1) = coupling;
    m(i + 1, i) = -coupling;
  }
  return m;
}

namespace detail {
inline void sort_eigenvalues(std::vector<Complex>& v) {
  std::sort(v.begin(), v.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

// Compares two multisets of eigenvalues by greedy nearest matching.
inline double multiset_distance(std::vector<Complex> a, std::vector<Complex> b) {
  double worst = 0.0;
  std::vector<bool> used(b.size(), false);
  for (Complex z : a) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(z - b[j]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    used[arg] = true;
    worst = std::max(worst, best);
  }
  return worst;
}
}  // namespace detail

/// Eigenvalues of the truncated linearization at u_- or u_+, assembled
/// block by block and cross-checked against a dense eigensolver.
inline LinearizationSpectrum linearization_spectrum(const Spectrum& spec, double coupling, EquilibriumSite site,
                                                    std::size_t n_trunc) {
  if (n_trunc > spec.size()) throw std::invalid_argument("linearization_spectrum: truncation exceeds spectrum");
  if (site == EquilibriumSite::minus && n_trunc % 2 != 0)
    throw std::invalid_argument("linearization_spectrum: minus site needs an even truncation (mode " +
                                std::to_string(n_trunc) + " orphaned)");
  if (site == EquilibriumSite::plus && n_trunc % 2 != 1)
    throw std::invalid_argument("linearization_spectrum: plus site needs an odd truncation (mode " +
                                std::to_string(n_trunc) + " orphaned)");
  LinearizationSpectrum out;
  std::size_t first = 1;
  if (site == EquilibriumSite::plus) {
    out.eigenvalues.emplace_back(coupling - spec(1), 0.0);
    first = 2;
  }
  for (std::size_t k = first; k + 1 <= n_trunc; k += 2) {
    auto [r1, r2] = block_eigenvalues(spec(k), spec(k + 1), coupling);
    out.eigenvalues.push_back(r1);
    out.eigenvalues.push_back(r2);
  }
  for (Complex z : out.eigenvalues)
    if (is_real_eigenvalue(z)) ++out.real_count;

  Eigen::EigenSolver<Eigen::MatrixXd> solver(linearization_matrix(spec, coupling, site, n_trunc), false);
  std::vector<Complex> dense;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) dense.push_back(solver.eigenvalues()(i));
  auto blocks = out.eigenvalues;
  detail::sort_eigenvalues(blocks);
  detail::sort_eigenvalues(dense);
  out.max_dense_deviation = detail::multiset_distance(blocks, dense);
  return out;
}

struct ObstructionVerdict {
  bool regime_holds = false;  // L > max{L_0/2, lambda_1} with a bounded gap
  std::size_t minus_real_count = 0;
  std::size_t plus_real_count = 0;
  double plus_real_eigenvalue = 0.0;  // the isolated L - lambda_1
  bool parity_contradiction = false;
  std::string note;
};

/// A finite-dimensional invariant C^1 manifold through u_- must be even
/// dimensional when the minus site has no real eigenvalues, and odd when
/// the plus site has exactly one (unstable) real eigenvalue.
inline ObstructionVerdict c1_obstruction_check(const Spectrum& spec, double coupling, std::size_t n_trunc) {
  if (n_trunc < 3 || n_trunc > spec.size())
    throw std::invalid_argument("c1_obstruction_check: truncation must be in [3, n_max]");
  ObstructionVerdict v;
  const GapResult gap = spectral_gap(spec);
  const std::size_t n_minus = n_trunc - (n_trunc % 2);
  const std::size_t n_plus = n_trunc % 2 == 1 ? n_trunc : n_trunc - 1;
  const auto minus = linearization_spectrum(spec, coupling, EquilibriumSite::minus, n_minus);
  const auto plus = linearization_spectrum(spec, coupling, EquilibriumSite::plus, n_plus);
  v.minus_real_count = minus.real_count;
  v.plus_real_count = plus.real_count;
  v.plus_real_eigenvalue = plus.eigenvalues.front().real();
  v.regime_holds = !gap.unbounded && coupling > std::max(0.5 * gap.value, spec(1));
  if (!v.regime_holds) {
    v.note = gap.unbounded ? "unbounded gap: no obstruction certified" : "outside L > max{L0/2, lambda_1}: no obstruction certified";
    return v;
  }
  v.parity_contradiction = v.minus_real_count == 0 && v.plus_real_count == 1 && v.plus_real_eigenvalue > 0;
  v.note = v.parity_contradiction ? "minus site forces even dimension, plus site forces odd" : "no parity clash at this truncation";
  return v;
}

}  // namespace manelab
