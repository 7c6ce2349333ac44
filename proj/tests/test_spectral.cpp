#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "manelab/spectral.hpp"

using namespace manelab;

namespace {
// Independent oracle: companion-matrix roots of mu^2 + p mu + q.
std::pair<Complex, Complex> companion_roots(double p, double q) {
  Eigen::Matrix2d c;
  c << 0, -q, 1, -p;
  Eigen::EigenSolver<Eigen::Matrix2d> es(c);
  Complex a = es.eigenvalues()(0), b = es.eigenvalues()(1);
  if (a.imag() < b.imag()) std::swap(a, b);
  return {a, b};
}
}  // namespace

TEST(MakeSpectrum, Families) {
  auto lin = Spectrum::linear(1.0, 5);
  EXPECT_EQ(lin.values(), (std::vector<double>{1, 2, 3, 4, 5}));
  auto quad = Spectrum::quadratic(4);
  EXPECT_EQ(quad.values(), (std::vector<double>{1, 4, 9, 16}));
  auto pw = Spectrum::power(1.5, 3);
  for (std::size_t n = 1; n <= 3; ++n) EXPECT_NEAR(pw(n), std::exp(1.5 * std::log(double(n))), 1e-13);
  EXPECT_NEAR(pw(2), 2.8284271247461903, 1e-13);
  EXPECT_NEAR(pw(3), 5.196152422706632, 1e-13);
}

TEST(MakeSpectrum, RejectsNonMonotoneListWithIndex) {
  try {
    Spectrum::explicit_list({1, 2, 1.5, 4});
    FAIL();
  } catch (const SpectrumError& e) {
    EXPECT_EQ(e.index(), 3u);
  }
  EXPECT_THROW(Spectrum::linear(1.0, 1), std::invalid_argument);
  EXPECT_THROW(Spectrum::linear(-1.0, 4), std::invalid_argument);
}

TEST(SpectralGap, Examples) {
  EXPECT_DOUBLE_EQ(spectral_gap(Spectrum::linear(1.0, 10)).value, 1.0);
  EXPECT_TRUE(spectral_gap(Spectrum::quadratic(10)).unbounded);
  EXPECT_TRUE(spectral_gap(Spectrum::power(1.5, 10)).unbounded);
  auto g = spectral_gap(Spectrum::explicit_list({1, 2, 4, 5, 7, 8}));
  EXPECT_FALSE(g.unbounded);
  EXPECT_DOUBLE_EQ(g.value, 2.0);
}

TEST(SpectralGap, PrefixMonotonicity) {
  auto s = Spectrum::explicit_list({1, 1.5, 3, 3.2, 6, 6.1, 6.2, 9});
  double full = spectral_gap(s).value;
  for (std::size_t n = 2; n <= s.size(); ++n) EXPECT_LE(spectral_gap(s.prefix(n)).value, full);
}

TEST(BlockEigenvalues, MatchCompanionOracle) {
  auto [a, b] = block_eigenvalues(1, 2, 1);
  EXPECT_NEAR(a.real(), -1.5, 1e-14);
  EXPECT_NEAR(a.imag(), 0.8660254037844386, 1e-14);
  EXPECT_NEAR(b.imag(), -0.8660254037844386, 1e-14);
  auto [c, d] = block_eigenvalues(2, 3, 2);
  EXPECT_NEAR(c.real(), -2.5, 1e-14);
  EXPECT_NEAR(c.imag(), 1.9364916731037085, 1e-14);
  (void)d;
  auto oracle = companion_roots(5.0, 6.0 + 4.0);
  EXPECT_NEAR(std::abs(oracle.first - c), 0.0, 1e-12);
}

TEST(BlockEigenvalues, DiscriminantBoundaryIsDoubleRealRoot) {
  auto [a, b] = block_eigenvalues(1, 2, 0.5);
  EXPECT_TRUE(is_real_eigenvalue(a));
  EXPECT_TRUE(is_real_eigenvalue(b));
  EXPECT_NEAR(a.real(), -1.5, 1e-12);
  EXPECT_NEAR(b.real(), -1.5, 1e-12);
}

TEST(BlockEigenvalues, RootsSatisfyCharacteristicPolynomial) {
  for (double la : {0.5, 1.0, 3.0, 10.0})
    for (double gap : {0.0, 0.3, 1.0, 4.0})
      for (double L : {0.0, 0.1, 0.7, 2.0, 9.0}) {
        auto [r1, r2] = block_eigenvalues(la, la + gap, L);
        for (Complex z : {r1, r2}) {
          Complex p = z * z + (2 * la + gap) * z + la * (la + gap) + L * L;
          double scale = std::norm(z) + (2 * la + gap) * std::abs(z) + la * (la + gap) + L * L;
          EXPECT_LE(std::abs(p) / scale, 1e-12);
        }
        EXPECT_EQ(!is_real_eigenvalue(r1), 2 * L > gap + 1e-12 || (2 * L > gap && std::abs(r1.imag()) > 0));
      }
}

TEST(LinearizationSpectrum, MinusSiteHasNoRealEigenvalues) {
  auto spec = Spectrum::linear(1.0, 16);
  auto r = linearization_spectrum(spec, 1.0, EquilibriumSite::minus, 8);
  EXPECT_EQ(r.real_count, 0u);
  EXPECT_LE(r.max_dense_deviation, 1e-9);
}

TEST(LinearizationSpectrum, PlusSiteHasOneUnstableRealEigenvalue) {
  auto spec = Spectrum::linear(1.0, 16);
  auto r = linearization_spectrum(spec, 2.0, EquilibriumSite::plus, 9);
  EXPECT_EQ(r.real_count, 1u);
  EXPECT_NEAR(r.eigenvalues.front().real(), 1.0, 1e-12);
  EXPECT_LE(r.max_dense_deviation, 1e-9);
}

TEST(LinearizationSpectrum, SmallCouplingGivesAllReal) {
  auto spec = Spectrum::linear(1.0, 16);
  auto r = linearization_spectrum(spec, 0.4, EquilibriumSite::minus, 8);
  EXPECT_EQ(r.real_count, 8u);
}

TEST(LinearizationSpectrum, OrphanedModeRejected) {
  auto spec = Spectrum::linear(1.0, 16);
  EXPECT_THROW(linearization_spectrum(spec, 1.0, EquilibriumSite::minus, 7), std::invalid_argument);
  EXPECT_THROW(linearization_spectrum(spec, 1.0, EquilibriumSite::plus, 8), std::invalid_argument);
}

TEST(LinearizationSpectrum, BlockAssemblyMatchesDenseUpTo64Modes) {
  for (double L : {0.27, 0.45, 1.0, 2.0, 3.7}) {
    auto spec = Spectrum::explicit_list([] {
      std::vector<double> v;
      double x = 0.5;
      for (int i = 0; i < 65; ++i) v.push_back(x += 0.2 + 0.8 * ((i * 7) % 5) / 4.0);
      return v;
    }());
    EXPECT_LE(linearization_spectrum(spec, L, EquilibriumSite::minus, 64).max_dense_deviation, 1e-9);
    EXPECT_LE(linearization_spectrum(spec, L, EquilibriumSite::plus, 63).max_dense_deviation, 1e-9);
  }
}

TEST(LinearizationSpectrum, DefectiveBlockWithinSqrtEps) {
  // 2L equal to a gap gives a Jordan block; dense eigenvalues are only sqrt(eps) accurate there.
  auto spec = Spectrum::linear(1.0, 64);
  auto r = linearization_spectrum(spec, 0.5, EquilibriumSite::minus, 64);
  EXPECT_LE(r.max_dense_deviation, 1e-6);
  EXPECT_EQ(r.real_count, 64u);
}

TEST(C1Obstruction, LinearSpectrumRegime) {
  auto spec = Spectrum::linear(1.0, 64);
  auto v = c1_obstruction_check(spec, 2.0, 33);
  EXPECT_TRUE(v.regime_holds);
  EXPECT_EQ(v.minus_real_count, 0u);
  EXPECT_EQ(v.plus_real_count, 1u);
  EXPECT_TRUE(v.parity_contradiction);
  auto w = c1_obstruction_check(spec, 0.4, 32);
  EXPECT_FALSE(w.parity_contradiction);
}

TEST(C1Obstruction, ExplicitSpectrumAgainstDenseOracle) {
  auto spec = Spectrum::explicit_list({1, 2, 4, 5});
  // Dense oracle on the assembled matrices: count real eigenvalues directly.
  auto count_real = [&](EquilibriumSite site, std::size_t n, double L) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(linearization_matrix(spec, L, site, n), false);
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) c += is_real_eigenvalue(es.eigenvalues()(i));
    return c;
  };
  auto v = c1_obstruction_check(spec, 1.6, 4);
  EXPECT_EQ(v.minus_real_count, count_real(EquilibriumSite::minus, 4, 1.6));
  EXPECT_EQ(v.plus_real_count, count_real(EquilibriumSite::plus, 3, 1.6));
  // 2L = 3.2 exceeds every gap, so both blocks are complex at the minus site
  EXPECT_EQ(v.minus_real_count, 0u);
  EXPECT_TRUE(v.parity_contradiction);
  // below half the largest gap the (2,3) pair turns real at the plus site
  auto w = c1_obstruction_check(spec, 0.9, 4);
  EXPECT_EQ(w.plus_real_count, count_real(EquilibriumSite::plus, 3, 0.9));
  EXPECT_EQ(w.plus_real_count, 3u);
  EXPECT_FALSE(w.parity_contradiction);
}

TEST(C1Obstruction, UnboundedGapNeverCertified) {
  auto v = c1_obstruction_check(Spectrum::quadratic(20), 50.0, 19);
  EXPECT_FALSE(v.regime_holds);
  EXPECT_FALSE(v.parity_contradiction);
}
