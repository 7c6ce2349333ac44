#pragma once

// Covering numbers, box-counting slopes and doubling factors on point
// clouds whose coordinates may lie far outside double range.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "manelab/log_vector.hpp"
#include "manelab/numerics.hpp"
#include "manelab/spectral.hpp"

namespace manelab {

/// Finite set of points (planar part + modal part) with an H^s norm
/// selector. Planar coordinates count as two extra modes of weight 1.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<double> log_lambda, SobolevIndex s = {}) : log_lambda_(std::move(log_lambda)), s_(s) {}

  static PointCloud from_spectrum(const Spectrum& spec, SobolevIndex s = {}) {
    std::vector<double> ll;
    for (std::size_t n = 1; n <= spec.size(); ++n) ll.push_back(spec.log_lambda(n));
    return PointCloud(std::move(ll), s);
  }

  /// Cloud without a spectrum: every mode has weight 1 at every s.
  static PointCloud unweighted() { return PointCloud(); }

  void add(LogModeVector modal, std::string tag = {}, std::array<double, 2> planar = {0.0, 0.0}) {
    if (!log_lambda_.empty() && modal.max_mode() > log_lambda_.size())
      throw std::invalid_argument("PointCloud: mode " + std::to_string(modal.max_mode()) + " beyond spectrum");
    for (const auto& e : modal.entries())
      if (!std::isfinite(e.value.log_mag)) throw std::invalid_argument("PointCloud: non-finite coordinate");
    if (!std::isfinite(planar[0]) || !std::isfinite(planar[1])) throw std::invalid_argument("PointCloud: non-finite planar part");
    modal_.push_back(std::move(modal));
    planar_.push_back(planar);
    tags_.push_back(std::move(tag));
  }

  void add_planar(double x, double y, std::string tag = {}) { add(LogModeVector{}, std::move(tag), {x, y}); }

  std::size_t size() const { return modal_.size(); }
  bool empty() const { return modal_.empty(); }
  const LogModeVector& modal(std::size_t i) const { return modal_[i]; }
  const std::array<double, 2>& planar(std::size_t i) const { return planar_[i]; }
  const std::string& tag(std::size_t i) const { return tags_[i]; }
  SobolevIndex norm() const { return s_; }
  const std::vector<double>& log_lambda() const { return log_lambda_; }

  /// Same points under another Sobolev index.
  PointCloud with_norm(SobolevIndex s) const {
    PointCloud c = *this;
    c.s_ = s;
    return c;
  }

  /// Drops the planar part (the Q_2 projection).
  PointCloud modal_projection() const {
    PointCloud c = *this;
    for (auto& p : c.planar_) p = {0.0, 0.0};
    return c;
  }

  /// Subset by index.
  PointCloud subset(const std::vector<std::size_t>& idx) const {
    PointCloud c(log_lambda_, s_);
    for (std::size_t i : idx) {
      c.modal_.push_back(modal_[i]);
      c.planar_.push_back(planar_[i]);
      c.tags_.push_back(tags_[i]);
    }
    return c;
  }

  /// Every point multiplied by exp(log_factor).
  PointCloud scaled(double log_factor) const {
    PointCloud c = *this;
    for (auto& m : c.modal_) m = m.scaled(log_factor);
    for (auto& p : c.planar_) p = {p[0] * std::exp(log_factor), p[1] * std::exp(log_factor)};
    return c;
  }

  /// (s/2) log lambda_mode, 0 without a spectrum.
  double log_weight(std::size_t mode) const {
    if (log_lambda_.empty()) return 0.0;
    return 0.5 * s_.s * log_lambda_[mode - 1];
  }

  /// log of the H^s norm of point i (planar part included).
  double log_norm(std::size_t i) const {
    std::vector<double> terms;
    for (const auto& e : modal_[i].entries()) terms.push_back(2.0 * (e.value.log_mag + log_weight(e.mode)));
    const double p2 = planar_[i][0] * planar_[i][0] + planar_[i][1] * planar_[i][1];
    if (p2 > 0) terms.push_back(std::log(p2));
    return 0.5 * log_sum_exp(terms);
  }

 private:
  std::vector<double> log_lambda_;
  SobolevIndex s_{};
  std::vector<LogModeVector> modal_;
  std::vector<std::array<double, 2>> planar_;
  std::vector<std::string> tags_;
};

/// Pairwise log-distances. Uses one common scale and plain doubles when
/// the cloud's dynamic range allows, otherwise signed-log merging.
class DistanceEngine {
 public:
  explicit DistanceEngine(const PointCloud& cloud) : cloud_(&cloud) {
    double hi = neg_inf, lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (const auto& e : cloud.modal(i).entries()) {
        const double l = e.value.log_mag + cloud.log_weight(e.mode);
        hi = std::max(hi, l);
        lo = std::min(lo, l);
      }
      for (double v : cloud.planar(i))
        if (v != 0.0) {
          hi = std::max(hi, std::log(std::abs(v)));
          lo = std::min(lo, std::log(std::abs(v)));
        }
    }
    if (hi == neg_inf) hi = lo = 0.0;
    dense_ = hi - lo <= 300.0;
    scale_ = hi;
    if (dense_) {
      sparse_.resize(cloud.size());
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto& row = sparse_[i];
        for (int k = 0; k < 2; ++k)
          if (cloud.planar(i)[k] != 0.0) row.push_back({static_cast<std::size_t>(k), cloud.planar(i)[k] * std::exp(-scale_)});
        for (const auto& e : cloud.modal(i).entries())
          row.push_back({e.mode + 1, e.value.sign * std::exp(e.value.log_mag + cloud.log_weight(e.mode) - scale_)});
      }
    }
    choose_key();
  }

  bool dense() const { return dense_; }
  std::size_t size() const { return cloud_->size(); }

  /// log d(i, j); -inf for coincident points.
  double log_distance(std::size_t i, std::size_t j) const {
    if (i == j) return neg_inf;
    if (dense_) {
      const auto& a = sparse_[i];
      const auto& b = sparse_[j];
      double acc = 0.0;
      std::size_t p = 0, q = 0;
      while (p < a.size() || q < b.size()) {
        if (q == b.size() || (p < a.size() && a[p].slot < b[q].slot)) {
          acc += a[p].v * a[p].v;
          ++p;
        } else if (p == a.size() || b[q].slot < a[p].slot) {
          acc += b[q].v * b[q].v;
          ++q;
        } else {
          const double d = a[p].v - b[q].v;
          acc += d * d;
          ++p;
          ++q;
        }
      }
      return acc == 0.0 ? neg_inf : scale_ + 0.5 * std::log(acc);
    }
    const auto& c = *cloud_;
    const double lm = log_sobolev_distance(c.modal(i), c.modal(j), c.norm(), [&](std::size_t m) {
      return c.log_lambda().empty() ? 0.0 : c.log_lambda()[m - 1];
    });
    const double dx = c.planar(i)[0] - c.planar(j)[0], dy = c.planar(i)[1] - c.planar(j)[1];
    const double p2 = dx * dx + dy * dy;
    if (p2 == 0.0) return lm;
    return 0.5 * log_add(2.0 * lm, std::log(p2));
  }

  bool within(std::size_t i, std::size_t j, double log_eps) const { return log_distance(i, j) <= log_eps; }

  /// 1-Lipschitz sort key: planar x or the norm, whichever spreads more.
  double key(std::size_t i) const { return key_[i]; }

 private:
  struct Slot {
    std::size_t slot;
    double v;
  };
  const PointCloud* cloud_;
  bool dense_ = true;
  double scale_ = 0.0;
  std::vector<std::vector<Slot>> sparse_;
  std::vector<double> key_;

  void choose_key() {
    const std::size_t n = cloud_->size();
    std::vector<double> xs(n), ns(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = cloud_->planar(i)[0];
      ns[i] = std::exp(cloud_->log_norm(i));
    }
    auto spread = [](const std::vector<double>& v) {
      if (v.empty()) return 0.0;
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      return std::isfinite(*hi) ? *hi - *lo : 0.0;
    };
    key_ = spread(ns) > spread(xs) ? std::move(ns) : std::move(xs);
  }
};

enum class CoverMethod { greedy, exact };

inline const char* to_string(CoverMethod m) { return m == CoverMethod::greedy ? "greedy" : "exact"; }

struct CoverReport {
  double log_eps = 0.0;
  std::size_t count = 0;
  CoverMethod method = CoverMethod::greedy;
  std::vector<std::size_t> centers;  // indices into the covered index set
};

namespace detail {
// Positions of an index subset sorted by the engine key. Key gaps never
// exceed the distance, so only a strip of width 2 eps needs checking.
class Strip {
 public:
  Strip(const DistanceEngine& eng, const std::vector<std::size_t>& idx) : order_(idx.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    std::sort(order_.begin(), order_.end(),
              [&](std::size_t a, std::size_t b) { return eng.key(idx[a]) < eng.key(idx[b]); });
    for (std::size_t a : order_) xs_.push_back(eng.key(idx[a]));
  }

  template <class F>
  void for_each(double x, double log_eps, F&& f) const {
    const double r = std::exp(log_eps) * (1.0 + 1e-9);
    auto it = std::lower_bound(xs_.begin(), xs_.end(), x - r);
    for (auto k = static_cast<std::size_t>(it - xs_.begin()); k < xs_.size() && xs_[k] <= x + r; ++k) f(order_[k]);
  }

 private:
  std::vector<std::size_t> order_;
  std::vector<double> xs_;
};

// Neighbour lists within log_eps over an index subset (positions into idx).
inline std::vector<std::vector<std::uint32_t>> neighbours(const DistanceEngine& eng, const std::vector<std::size_t>& idx,
                                                          double log_eps) {
  const Strip strip(eng, idx);
  std::vector<std::vector<std::uint32_t>> nb(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    strip.for_each(eng.key(idx[a]), log_eps, [&](std::size_t b) {
      if (b == a || eng.within(idx[a], idx[b], log_eps)) nb[a].push_back(static_cast<std::uint32_t>(b));
    });
    std::sort(nb[a].begin(), nb[a].end());
  }
  return nb;
}

// Max-coverage greedy set cover, lowest index wins ties. Distances are
// recomputed instead of stored so memory stays linear in the subset size.
inline std::vector<std::size_t> greedy_cover(const DistanceEngine& eng, const std::vector<std::size_t>& idx,
                                             double log_eps) {
  const std::size_t n = idx.size();
  const Strip strip(eng, idx);
  auto near = [&](std::size_t a, auto&& f) {
    strip.for_each(eng.key(idx[a]), log_eps, [&](std::size_t b) {
      if (b == a || eng.within(idx[a], idx[b], log_eps)) f(b);
    });
  };
  std::vector<std::size_t> count(n, 0);
  for (std::size_t a = 0; a < n; ++a) near(a, [&](std::size_t) { ++count[a]; });
  std::vector<char> covered(n, 0);
  std::size_t left = n;
  std::vector<std::size_t> centers;
  std::vector<std::size_t> fresh;
  while (left > 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (count[i] > count[best]) best = i;
    centers.push_back(best);
    fresh.clear();
    near(best, [&](std::size_t j) {
      if (!covered[j]) fresh.push_back(j);
    });
    for (std::size_t j : fresh) {
      covered[j] = 1;
      --left;
      near(j, [&](std::size_t i) { --count[i]; });
    }
  }
  return centers;
}

// Minimal center-restricted cover by exhaustive search (n <= 24).
inline std::vector<std::size_t> exact_cover(const std::vector<std::vector<std::uint32_t>>& nb) {
  const std::size_t n = nb.size();
  if (n == 0) return {};
  std::vector<std::uint32_t> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t j : nb[i]) mask[i] |= (1u << j);
  const std::uint32_t full = n == 32 ? 0xffffffffu : ((1u << n) - 1u);
  for (std::size_t k = 1; k <= n; ++k) {
    std::vector<std::size_t> pick(k);
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
      std::uint32_t m = 0;
      for (std::size_t p : pick) m |= mask[p];
      if (m == full) return pick;
      // next combination in lexicographic order
      std::size_t i = k;
      while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return {};
}
}  // namespace detail

/// Cover of the points `idx` (all points when empty) by balls of radius
/// exp(log_eps) centred at points of the same subset.
inline CoverReport covering_number_log(const DistanceEngine& eng, double log_eps, CoverMethod method,
                                       std::vector<std::size_t> idx = {}) {
  if (std::isnan(log_eps) || log_eps == neg_inf) throw std::invalid_argument("covering_number: eps must be > 0");
  if (idx.empty()) {
    idx.resize(eng.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  if (method == CoverMethod::exact && idx.size() > 24)
    throw std::invalid_argument("covering_number: exact method limited to 24 points");
  CoverReport r;
  r.log_eps = log_eps;
  r.method = method;
  const auto centers = method == CoverMethod::greedy ? detail::greedy_cover(eng, idx, log_eps)
                                                     : detail::exact_cover(detail::neighbours(eng, idx, log_eps));
  for (std::size_t c : centers) r.centers.push_back(idx[c]);
  r.count = r.centers.size();
  return r;
}

inline CoverReport covering_number(const PointCloud& cloud, double eps, CoverMethod method = CoverMethod::greedy) {
  if (!(eps > 0)) throw std::invalid_argument("covering_number: eps must be > 0");
  if (cloud.empty()) return {std::log(eps), 0, method, {}};
  DistanceEngine eng(cloud);
  return covering_number_log(eng, std::log(eps), method);
}

/// True when every point lies within exp(log_eps) of some center.
inline bool cover_is_valid(const DistanceEngine& eng, const CoverReport& r, const std::vector<std::size_t>& idx = {}) {
  std::vector<std::size_t> all = idx;
  if (all.empty()) {
    all.resize(eng.size());
    std::iota(all.begin(), all.end(), 0);
  }
  for (std::size_t p : all) {
    bool ok = false;
    for (std::size_t c : r.centers)
      if (p == c || eng.within(p, c, r.log_eps)) {
        ok = true;
        break;
      }
    if (!ok) return false;
  }
  return true;
}

struct DimensionEstimate {
  double slope = 0.0;
  double r2 = 1.0;
  std::vector<double> log_eps;          // decreasing
  std::vector<std::size_t> counts;
  std::vector<double> local_slopes;     // between consecutive scales
};

/// Slope of log N_eps against log(1/eps) over the given scales (log eps).
inline DimensionEstimate fractal_dimension_log(const DistanceEngine& eng, std::vector<double> log_scales,
                                               CoverMethod method = CoverMethod::greedy) {
  if (log_scales.size() < 4) throw std::invalid_argument("fractal_dimension_estimate: need >= 4 scales");
  std::sort(log_scales.begin(), log_scales.end(), std::greater<>());
  DimensionEstimate d;
  d.log_eps = log_scales;
  if (eng.size() <= 1) {
    d.counts.assign(log_scales.size(), eng.size());
    d.local_slopes.assign(log_scales.size() - 1, 0.0);
    return d;
  }
  std::vector<double> x, y;
  for (double le : log_scales) {
    const auto r = covering_number_log(eng, le, method);
    d.counts.push_back(r.count);
    x.push_back(-le);
    y.push_back(std::log(static_cast<double>(r.count)));
  }
  for (std::size_t i = 0; i + 1 < x.size(); ++i) d.local_slopes.push_back((y[i + 1] - y[i]) / (x[i + 1] - x[i]));
  const auto fit = polyfit(x, y, 1);
  d.slope = fit.coeffs[1];
  d.r2 = fit.r2;
  return d;
}

inline DimensionEstimate fractal_dimension_estimate(const PointCloud& cloud, const std::vector<double>& scales,
                                                    CoverMethod method = CoverMethod::greedy) {
  std::vector<double> ls;
  for (double e : scales) {
    if (!(e > 0)) throw std::invalid_argument("fractal_dimension_estimate: scales must be positive");
    ls.push_back(std::log(e));
  }
  DistanceEngine eng(cloud);
  return fractal_dimension_log(eng, ls, method);
}

/// Indices within exp(log_r) of point c (c included).
inline std::vector<std::size_t> ball(const DistanceEngine& eng, std::size_t c, double log_r) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < eng.size(); ++j)
    if (j == c || eng.within(c, j, log_r)) out.push_back(j);
  return out;
}

namespace detail {
inline std::vector<std::size_t> ball(const DistanceEngine& eng, const Strip& all, std::size_t c, double log_r) {
  std::vector<std::size_t> out;
  all.for_each(eng.key(c), log_r, [&](std::size_t j) {
    if (j == c || eng.within(c, j, log_r)) out.push_back(j);
  });
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace detail

struct DoublingReport {
  double log_eps = 0.0;
  std::size_t value = 1;    // D_eps
  std::size_t witness = 0;  // center attaining the sup
};

/// D_eps = max over points x of N_{eps/2}(B(eps, x)).
inline DoublingReport doubling_factor_log(const DistanceEngine& eng, double log_eps,
                                          CoverMethod method = CoverMethod::greedy) {
  DoublingReport r;
  r.log_eps = log_eps;
  std::vector<std::size_t> all(eng.size());
  std::iota(all.begin(), all.end(), 0);
  const detail::Strip strip(eng, all);
  for (std::size_t c = 0; c < eng.size(); ++c) {
    const auto b = detail::ball(eng, strip, c, log_eps);
    if (b.size() <= r.value) continue;
    const auto m = b.size() > 24 ? CoverMethod::greedy : method;
    const auto cov = covering_number_log(eng, log_eps - std::numbers::ln2, m, b);
    if (cov.count > r.value) {
      r.value = cov.count;
      r.witness = c;
    }
  }
  return r;
}

inline std::size_t doubling_factor(const PointCloud& cloud, double eps, CoverMethod method = CoverMethod::greedy) {
  if (!(eps > 0)) throw std::invalid_argument("doubling_factor: eps must be > 0");
  if (cloud.empty()) return 1;
  DistanceEngine eng(cloud);
  return doubling_factor_log(eng, std::log(eps), method).value;
}

enum class GrowthVerdict { finite, diverging };

inline const char* to_string(GrowthVerdict v) { return v == GrowthVerdict::finite ? "finite" : "diverging"; }

struct LogDoublingEstimate {
  std::vector<double> log_eps;  // decreasing
  std::vector<std::size_t> doubling;
  std::vector<double> ratios;   // log D / log log(1/eps)
  double slope = 0.0;           // of log D against log log(1/eps)
  double estimate = 0.0;        // equals slope
  GrowthVerdict verdict = GrowthVerdict::finite;
};

/// Verdict on a sequence observed along shrinking scales: diverging when it
/// increases strictly over the last half of the window.
inline GrowthVerdict trend_verdict(const std::vector<double>& seq) {
  if (seq.size() < 2) return GrowthVerdict::finite;
  const std::size_t start = seq.size() / 2 > 0 ? seq.size() / 2 - (seq.size() % 2 == 0 ? 1 : 0) : 0;
  for (std::size_t i = start; i + 1 < seq.size(); ++i)
    if (!(seq[i + 1] > seq[i])) return GrowthVerdict::finite;
  return GrowthVerdict::diverging;
}

/// log D_eps / log log(1/eps) from given doubling values.
inline LogDoublingEstimate log_doubling_from_values(std::vector<double> log_eps, std::vector<std::size_t> doubling) {
  LogDoublingEstimate e;
  std::vector<std::size_t> order(log_eps.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return log_eps[a] > log_eps[b]; });
  std::vector<double> x, y;
  for (std::size_t i : order) {
    if (!(log_eps[i] < -1.0)) throw std::invalid_argument("log_doubling_estimate: scales must be below 1/e");
    e.log_eps.push_back(log_eps[i]);
    e.doubling.push_back(doubling[i]);
    const double ll = std::log(-log_eps[i]);
    const double ld = std::log(static_cast<double>(doubling[i]));
    e.ratios.push_back(ld / ll);
    x.push_back(ll);
    y.push_back(ld);
  }
  if (x.size() >= 2) e.slope = fit_slope(x, y);
  e.estimate = e.slope;
  e.verdict = trend_verdict(e.ratios);
  return e;
}

inline LogDoublingEstimate log_doubling_estimate(const PointCloud& cloud, const std::vector<double>& scales,
                                                 CoverMethod method = CoverMethod::greedy) {
  DistanceEngine eng(cloud);
  std::vector<double> le;
  std::vector<std::size_t> d;
  for (double s : scales) {
    le.push_back(std::log(s));
    d.push_back(doubling_factor_log(eng, std::log(s), method).value);
  }
  return log_doubling_from_values(le, d);
}

struct ChainBound {
  std::size_t lhs = 0;       // N_{eps/2}(B(r eps, x))
  double rhs = 0.0;          // product of D over the halving chain
  std::size_t chain_length = 0;
  bool holds = false;
};

/// Halving chain from radius r*eps down to eps/2: N_{eps/2}(B(r eps, x)) <=
/// prod_{i < L} D_{r eps / 2^i} with L = ceil(log2 r) + 1.
inline ChainBound chained_cover_bound(const DistanceEngine& eng, std::size_t x, double r, double log_eps,
                                      CoverMethod method = CoverMethod::exact) {
  if (!(r >= 1)) throw std::invalid_argument("chained_cover_bound: r >= 1");
  ChainBound c;
  const double log_r = std::log(r);
  const auto b = ball(eng, x, log_eps + log_r);
  const auto m = b.size() > 24 ? CoverMethod::greedy : method;
  c.lhs = covering_number_log(eng, log_eps - std::numbers::ln2, m, b).count;
  c.chain_length = static_cast<std::size_t>(std::ceil(std::log2(r) - 1e-12)) + 1;
  c.rhs = 1.0;
  for (std::size_t i = 0; i < c.chain_length; ++i)
    c.rhs *= static_cast<double>(doubling_factor_log(eng, log_eps + log_r - static_cast<double>(i) * std::numbers::ln2, method).value);
  c.holds = static_cast<double>(c.lhs) <= c.rhs;
  return c;
}

enum class BoundVerdict { bounded, unbounded };

inline const char* to_string(BoundVerdict v) { return v == BoundVerdict::bounded ? "bounded" : "unbounded"; }

/// log of a positive sequence a_n given the spectrum.
using LogSequence = std::function<double(std::size_t n, const Spectrum& spec)>;

struct SmoothnessReport {
  double s = 0.0, k = 0.0;
  std::size_t n_first = 1, n_max = 0;
  std::vector<double> values;               // log(B_n lambda_n^{s/2} A_n^{-k}), index n - n_first
  std::vector<std::size_t> witness;          // indices where a new running maximum occurs
  BoundVerdict verdict = BoundVerdict::bounded;
};

/// sup_n B_n lambda_n^{s/2} A_n^{-k} (the H^s norm weighs mode n by
/// lambda_n^{s/2}); unbounded when the last quartile increases strictly.
inline SmoothnessReport smoothness_criterion(const LogSequence& log_b, const LogSequence& log_a, const Spectrum& spec,
                                             double s, double k, std::size_t n_max, std::size_t n_first = 1) {
  if (n_max > spec.size()) throw std::invalid_argument("smoothness_criterion: n_max beyond spectrum");
  if (n_max < n_first + 7) throw std::invalid_argument("smoothness_criterion: need at least 8 terms");
  SmoothnessReport r;
  r.s = s;
  r.k = k;
  r.n_first = n_first;
  r.n_max = n_max;
  double best = neg_inf;
  for (std::size_t n = n_first; n <= n_max; ++n) {
    const double v = log_b(n, spec) + 0.5 * s * spec.log_lambda(n) - k * log_a(n, spec);
    r.values.push_back(v);
    if (v > best) {
      best = v;
      r.witness.push_back(n);
    }
  }
  const std::size_t q = r.values.size() - r.values.size() / 4;
  bool increasing = true;
  for (std::size_t i = q; i < r.values.size(); ++i)
    if (!(r.values[i] > r.values[i - 1])) increasing = false;
  r.verdict = increasing ? BoundVerdict::unbounded : BoundVerdict::bounded;
  return r;
}

struct DimensionScan {
  std::vector<double> s_list;
  std::vector<DimensionEstimate> estimates;
  std::vector<GrowthVerdict> local_slope_trend;  // strictly increasing over the last 4 scales
};

inline DimensionScan dimension_vs_s_scan(const PointCloud& cloud, const std::vector<double>& s_list,
                                         const std::vector<double>& scales) {
  DimensionScan scan;
  for (double s : s_list) {
    const auto c = cloud.with_norm({s});
    const auto est = fractal_dimension_estimate(c, scales);
    scan.s_list.push_back(s);
    std::vector<double> tail(est.local_slopes.end() - std::min<std::ptrdiff_t>(4, static_cast<std::ptrdiff_t>(est.local_slopes.size())),
                             est.local_slopes.end());
    bool up = tail.size() >= 2;
    for (std::size_t i = 1; i < tail.size(); ++i)
      if (!(tail[i] > tail[i - 1])) up = false;
    scan.local_slope_trend.push_back(up ? GrowthVerdict::diverging : GrowthVerdict::finite);
    scan.estimates.push_back(est);
  }
  return scan;
}

/// N_eps for the separated cloud {0} u {c_n e_n : n >= n_first} with c_n
/// decreasing and centers at the points: every point with c_n > eps needs
/// its own ball, the rest fall into the ball at the origin.
inline double separated_cloud_count(const std::function<double(double)>& log_c, double log_eps, double n_first,
                                    double log_n_hi = 700.0) {
  if (!(log_c(n_first) > log_eps)) return 1.0;
  // largest real n with log c(n) > log eps, by bisection in log n
  double lo = std::log(n_first), hi = log_n_hi;
  if (log_c(std::exp(hi)) > log_eps) return std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (log_c(std::exp(mid)) > log_eps) lo = mid;
    else hi = mid;
  }
  const double n_last = std::floor(std::exp(lo) + 1e-9);
  return 1.0 + (n_last - n_first + 1.0);
}

}  // namespace manelab
