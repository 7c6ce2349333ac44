#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "manelab/nonlinear.hpp"

using namespace manelab;

namespace {
double rel(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

// Classical RK4 for w' = a(t) w + f(t) on [t0, t1].
template <class A, class F>
double rk4_scalar(const A& a, const F& f, double t0, double t1, double w0, std::size_t steps) {
  const double h = (t1 - t0) / static_cast<double>(steps);
  double w = w0;
  auto rhs = [&](double t, double v) { return a(t) * v + f(t); };
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = t0 + h * static_cast<double>(i);
    const double k1 = rhs(t, w), k2 = rhs(t + h / 2, w + h / 2 * k1), k3 = rhs(t + h / 2, w + h / 2 * k2),
                 k4 = rhs(t + h, w + h * k3);
    w += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return w;
}

struct KickFixture {
  Spectrum spec = Spectrum::linear(1.0, 300);
  std::shared_ptr<PeriodicOperator> op = std::make_shared<PeriodicOperator>(spec, 1.0);
  WeightedShift shift = poincare_predicted(spec, 1.0).full;
  KickOperator K = build_kick_operator(op, shift, KickOptions{});

  double w1_for_label(double t, double s) const { return s * std::exp(K.log_decay_mode1(K.phase(t))); }
};

const KickFixture& kick() {
  static const KickFixture f;
  return f;
}
}  // namespace

TEST(Scenario, LipschitzRegimeEnforced) {
  Scenario s;
  EXPECT_NO_THROW(s.validate());
  s.L = 2.0;  // equals lambda_2
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.L = 2.5;
  s.kappa_seg = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Integrate, PureDecay) {
  const auto sys = decay_system(Spectrum::linear(1.0, 8), 6);
  IntegrateOptions io;
  io.samples = {10.0};
  const auto rec = integrate(sys, {0.0, 0.0, LogModeVector::unit(1)}, 0.0, 10.0, io);
  EXPECT_LE(rel(rec.log_norm.back(), -10.0), 1e-8);
  EXPECT_EQ(rec.states.back().w.get(1).sign, 1);
}

TEST(Integrate, LinearPartExactPerStep) {
  const auto spec = Spectrum::linear(1.0, 12);
  const auto sys = decay_system(spec, 10);
  LogModeVector w0;
  for (std::size_t m = 1; m <= 10; ++m) w0.set(m, {m % 2 ? 1 : -1, -0.1 * static_cast<double>(m)});
  IntegrateOptions io;
  io.fixed_steps = 7;
  const auto rec = integrate(sys, {0.0, 0.0, w0}, 0.0, 3.0, io);
  ASSERT_EQ(rec.times.size(), 8u);
  for (std::size_t i = 0; i < rec.times.size(); ++i)
    for (std::size_t m = 1; m <= 10; ++m) {
      const auto v = rec.states[i].w.get(m);
      EXPECT_EQ(v.sign, w0.get(m).sign);
      EXPECT_NEAR(v.log_mag, w0.get(m).log_mag - spec(m) * rec.times[i], 1e-13) << i << " " << m;
    }
}

TEST(Integrate, FarBelowDoubleRange) {
  const auto spec = Spectrum::linear(1.0, 6);
  const auto sys = decay_system(spec, 4);
  LogModeVector w0;
  w0.set(1, {1, -800.0});
  w0.set(3, {-1, -790.0});
  const auto rec = integrate(sys, {0.0, 0.0, w0}, 0.0, 50.0);
  const auto& w = rec.states.back().w;
  EXPECT_NEAR(w.get(1).log_mag, -850.0, 1e-9);
  EXPECT_NEAR(w.get(3).log_mag, -940.0, 1e-9);
  EXPECT_EQ(w.get(3).sign, -1);
  for (double l : rec.log_norm) EXPECT_FALSE(std::isnan(l));
}

TEST(Integrate, PlanarCircleConverges) {
  const auto sys = circle_system(Spectrum::linear(1.0, 4), 2);
  IntegrateOptions io;
  for (int k = 0; k <= 40; ++k) io.samples.push_back(0.5 * k);
  const auto rec = integrate(sys, {0.5, 0.0, {}}, 0.0, 20.0, io);
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    const double r = std::hypot(rec.states[i].x, rec.states[i].y);
    EXPECT_NEAR(r, planar_radius(0.5, rec.times[i]), 1e-8) << rec.times[i];
  }
  EXPECT_LE(std::abs(std::hypot(rec.states.back().x, rec.states.back().y) - 1.0), 1e-6);
  EXPECT_EQ(rec.log_norm.back(), neg_inf);
}

TEST(Integrate, FifthOrderOnPlanarCircle) {
  const auto sys = circle_system(Spectrum::linear(1.0, 4), 2);
  auto err = [&](std::size_t steps) {
    IntegrateOptions io;
    io.fixed_steps = steps;
    const auto rec = integrate(sys, {0.5, 0.0, {}}, 0.0, 4.0, io);
    return std::abs(std::hypot(rec.states.back().x, rec.states.back().y) - planar_radius(0.5, 4.0));
  };
  const double e1 = err(40), e2 = err(80);
  EXPECT_GE(e1 / e2, 8.0) << e1 << " " << e2;
}

TEST(Integrate, TighterToleranceNeverWorse) {
  const auto sys = circle_system(Spectrum::linear(1.0, 4), 2);
  auto err = [&](double tol) {
    IntegrateOptions io;
    io.rtol = tol;
    io.atol = tol * 1e-2;
    const auto rec = integrate(sys, {0.5, 0.0, {}}, 0.0, 4.0, io);
    return std::abs(std::hypot(rec.states.back().x, rec.states.back().y) - planar_radius(0.5, 4.0));
  };
  EXPECT_LE(err(1e-10), err(1e-6));
}

TEST(Integrate, BlowUpReportsDiagnostics) {
  CoupledSystem s;
  s.planar = [](double, double x, double) { return std::array<double, 2>{x * x, 0.0}; };
  try {
    integrate(s, {1.0, 0.0, {}}, 0.0, 2.0);
    FAIL() << "expected a failure";
  } catch (const StepUnderflow& e) {
    EXPECT_NE(std::string(e.what()).find("t="), std::string::npos);
  }
}

TEST(Integrate, DesynchronizedDriveFails) {
  auto op = std::make_shared<PeriodicOperator>(Spectrum::linear(1.0, 10), 1.0);
  const auto sys = floquet_system(op, 6);
  auto st = drive_state(*op, 0.0, LogModeVector::unit(1));
  st.x += 1e-3;
  EXPECT_THROW(integrate(sys, st, 0.0, 1.0), StepUnderflow);
}

TEST(PairExperiment, SuperExponentialAtHalfPeriodFour) {
  const auto r = trajectory_pair_experiment(Spectrum::linear(1.0, 40));
  EXPECT_EQ(r.status, "super_exponential");
  EXPECT_GT(r.kappa_fit, 0.0);
  EXPECT_GE(r.r2, 0.99);
  // analytic rate beta / (2T)^2
  EXPECT_NEAR(r.kappa_analytic, 1.0 / 8.0, 1e-12);
  EXPECT_LE(std::abs(r.kappa_fit - r.kappa_analytic), 0.2 * r.kappa_analytic);
}

TEST(PairExperiment, MatchesAnalyticRateAtShortPeriod) {
  PairExperimentOptions o;
  o.half_period = 0.5;
  o.rtol = 1e-13;
  o.atol = 1e-16;
  const auto r = trajectory_pair_experiment(Spectrum::linear(1.0, 40), o);
  EXPECT_EQ(r.status, "super_exponential");
  EXPECT_NEAR(r.kappa_analytic, 1.0, 1e-12);
  EXPECT_LE(std::abs(r.kappa_fit - r.kappa_analytic), 0.2 * r.kappa_analytic);
  // -log||w|| at period k equals the shift orbit sum
  for (std::size_t i = 0; i < r.boundary_times.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::lround(r.boundary_times[i] / 1.0));
    const double want = -iterate_norm(poincare_predicted(Spectrum::linear(1.0, 40), 0.5).full, 1, k).lognorm;
    EXPECT_LE(rel(r.boundary_neg_log[i], want), 1e-3) << k;
  }
}

TEST(PairExperiment, NoRotationIsExponentialOnly) {
  PairExperimentOptions o;
  o.rotation = false;
  const auto r = trajectory_pair_experiment(Spectrum::linear(1.0, 40), o);
  EXPECT_EQ(r.status, "exponential_only");
  EXPECT_NEAR(r.kappa_fit, 0.0, 1e-8);
}

TEST(PairExperiment, RejectsShortRuns) {
  PairExperimentOptions o;
  o.periods = 3;
  EXPECT_THROW(trajectory_pair_experiment(Spectrum::linear(1.0, 40), o), std::invalid_argument);
  o.periods = 8;
  o.n_trunc = 16;
  EXPECT_THROW(trajectory_pair_experiment(Spectrum::linear(1.0, 40), o), std::invalid_argument);
}

TEST(PairExperiment, ZeroSeparationIsDegenerate) {
  PairExperimentOptions o;
  o.zero_separation = true;
  const auto r = trajectory_pair_experiment(Spectrum::linear(1.0, 40), o);
  EXPECT_EQ(r.status, "degenerate");
  for (double v : r.boundary_neg_log) EXPECT_EQ(v, std::numeric_limits<double>::infinity());
}

TEST(Modulus, HalfLogLipschitzBoundedPlainLipschitzNot) {
  PairExperimentOptions o;
  o.half_period = 0.5;
  o.rtol = 1e-13;
  o.atol = 1e-16;
  const auto spec = Spectrum::linear(1.0, 40);
  const auto r = trajectory_pair_experiment(spec, o);
  const auto half = log_lipschitz_modulus(r.u, r.v, spec, 0.5);
  const auto plain = log_lipschitz_modulus(r.u, r.v, spec, 0.0);
  EXPECT_EQ(half.verdict, BoundVerdict::bounded);
  EXPECT_EQ(plain.verdict, BoundVerdict::unbounded);
  EXPECT_EQ(half.skipped, 0u);
  EXPECT_FALSE(half.empty);
}

TEST(Modulus, IdenticalTrajectoriesGiveEmptyReport) {
  PairExperimentOptions o;
  o.periods = 4;
  o.n_trunc = 10;
  const auto r = trajectory_pair_experiment(Spectrum::linear(1.0, 20), o);
  const auto m = log_lipschitz_modulus(r.u, r.u, Spectrum::linear(1.0, 20), 0.5);
  EXPECT_TRUE(m.empty);
  EXPECT_EQ(m.skipped, r.u.times.size());
}

TEST(Kick, ZeroBelowThresholdAndOutsideWindow) {
  const auto& f = kick();
  const double t = -0.5 * f.K.kappa();
  EXPECT_TRUE(f.K.evaluate(t, 0.0).empty());
  EXPECT_TRUE(f.K.evaluate(t, f.w1_for_label(t, 0.3)).empty());
  EXPECT_TRUE(f.K.evaluate(t, f.w1_for_label(t, 1.0 - f.K.kappa_seg())).empty());
  EXPECT_TRUE(f.K.evaluate(-0.5, f.w1_for_label(-0.5, 0.9)).empty());
  EXPECT_TRUE(f.K.evaluate(0.3, 0.9).empty());
}

TEST(Kick, LocalityOnDenseGrid) {
  const auto& f = kick();
  const std::size_t n_terms = f.K.terms().size();
  EXPECT_EQ(n_terms, 2u + 4u + 4u + 4u);
  for (double t : {-0.049, -0.03, -0.0125, -0.001})
    for (int i = 0; i <= 4000; ++i) {
      const double s = 0.45 + 0.55 * i / 4000.0;
      const double w1 = f.w1_for_label(t, s);
      std::size_t nonzero = 0;
      for (std::size_t k = 0; k < n_terms; ++k)
        if (!f.K.term_value(k, t, w1).empty()) ++nonzero;
      ASSERT_LE(nonzero, 1u) << t << " " << s;
      EXPECT_EQ(nonzero == 1, !f.K.evaluate(t, w1).empty());
    }
}

TEST(Kick, KroneckerOnOtherAnchors) {
  const auto& f = kick();
  const double t = -0.5 * f.K.kappa();
  for (const auto& a : f.K.terms())
    for (std::size_t i = 0; i < f.K.terms().size(); ++i) {
      const auto& b = f.K.terms()[i];
      const double w1 = f.w1_for_label(t, a.anchor);
      if (a.n == b.n && a.p == b.p) {
        EXPECT_EQ(f.K.active_term(t, w1), i);
        EXPECT_EQ(f.K.term_value(i, t, w1).size(), b.modes.size());
      } else {
        EXPECT_TRUE(f.K.term_value(i, t, w1).empty()) << a.n << "," << a.p << " vs " << b.n << "," << b.p;
      }
    }
}

TEST(Kick, VertexMasks) {
  const auto& f = kick();
  // g_p = 2^k - p: p = 1 switches on every coordinate
  for (const auto& t : f.K.terms()) {
    const std::size_t mask = (std::size_t{1} << t.k) - t.p;
    EXPECT_EQ(t.modes.size(), static_cast<std::size_t>(std::popcount(mask)));
    for (std::size_t j = 0; j < t.coords.size(); ++j) EXPECT_EQ(t.modes[j], 2 * (t.n + t.coords[j]));
  }
  EXPECT_EQ(f.K.term(4, 1).modes, (std::vector<std::size_t>{10, 12}));
  EXPECT_TRUE(f.K.term(4, 4).modes.empty());
}

TEST(Kick, GainMatchesSingleModeOde) {
  const auto& f = kick();
  for (std::size_t m : {4u, 6u, 12u}) {
    auto a = [&](double t) { return -f.spec(m) + f.op->matrix(t, m + 1)(static_cast<Eigen::Index>(m - 1), static_cast<Eigen::Index>(m - 1)); };
    auto th = [&](double t) { return f.K.theta()(t); };
    const double g = rk4_scalar(a, th, -f.K.kappa(), 0.0, 0.0, 20000);
    EXPECT_LE(rel(std::log(g), f.K.physical_log_gain(m)), 1e-9) << m;
  }
}

TEST(Kick, WindowValueMatchesForcedOde) {
  const auto& f = kick();
  const auto& term = f.K.term(f.K.n0(), 1);
  const double psi = f.K.family()(term.member, term.anchor);
  for (std::size_t j = 0; j < term.modes.size(); ++j) {
    const std::size_t m = term.modes[j];
    auto a = [&](double t) { return -f.spec(m) + f.op->matrix(t, m + 1)(static_cast<Eigen::Index>(m - 1), static_cast<Eigen::Index>(m - 1)); };
    auto force = [&](double t) { return f.K.theta()(t) * psi * std::exp(term.log_target[j] - term.log_gain[j]); };
    const double w = rk4_scalar(a, force, -f.K.kappa(), 0.0, 0.0, 20000);
    EXPECT_LE(rel(std::log(std::abs(w)), term.log_target[j]), 1e-9) << m;
  }
}

TEST(Kick, IntegratedLowestLevelMatchesCubeCloud) {
  const auto& f = kick();
  const auto& term = f.K.term(f.K.n0(), 1);
  const auto v = integrate_kicked(f.K, term, f.shift);
  EXPECT_LE(v.window_rel_log_err, 1e-8);
  EXPECT_LE(v.max_rel_log_err, 1e-4);
  const auto cube = bad_cube_cloud(f.shift, f.K.n0(), f.K.n0(), f.K.beta());
  EXPECT_DOUBLE_EQ(cube.levels[0].log_eps, f.K.level(f.K.n0()).log_eps);
  const auto& fin = v.record.states.back().w;
  for (std::size_t j = 0; j < term.modes.size(); ++j)
    EXPECT_LE(rel(fin.get(term.final_modes[j]).log_mag, cube.levels[0].log_eps), 1e-4);
}

TEST(Kick, RemainderBelowEpsAndBudgetReported) {
  const auto& f = kick();
  for (const auto& l : f.K.levels()) {
    EXPECT_TRUE(l.residual_ok) << l.n;
    EXPECT_LT(l.log_remainder_ratio, std::log(1e-2));
    EXPECT_TRUE(std::isfinite(l.budget_exponent));
  }
}

TEST(Kick, RejectsWithMinimalN0) {
  const auto& f = kick();
  KickOptions o;
  o.residual_max = 1e-5;
  try {
    build_kick_operator(f.op, f.shift, o);
    FAIL() << "expected rejection";
  } catch (const KickRejected& e) {
    EXPECT_EQ(e.minimal_n0(), 2u);
  }
  o.n0 = 2;
  EXPECT_NO_THROW(build_kick_operator(f.op, f.shift, o));
}

TEST(Kick, WindowMustFitBeforeRotation) {
  const auto& f = kick();
  KickOptions o;
  o.kappa = f.op->t0() * 1.01;
  EXPECT_THROW(build_kick_operator(f.op, f.shift, o), std::invalid_argument);
}

TEST(CubeCloud, LevelFourHasFourVertices) {
  const auto& f = kick();
  const auto c = bad_cube_cloud(f.shift, 4, 4);
  ASSERT_EQ(c.levels.size(), 1u);
  const auto& lv = c.levels[0];
  EXPECT_EQ(lv.k, 2u);
  EXPECT_EQ(lv.indices.size(), 4u);
  for (std::size_t i : lv.indices)
    for (const auto& e : c.cloud.modal(i).entries()) EXPECT_TRUE(e.mode == 10 || e.mode == 12);
}

TEST(CubeCloud, NormsAndSeparation) {
  const auto& f = kick();
  const auto c = bad_cube_cloud(f.shift, 4, 16);
  DistanceEngine eng(c.cloud);
  for (const auto& lv : c.levels)
    for (std::size_t a = 0; a < lv.indices.size(); ++a) {
      const std::size_t i = lv.indices[a];
      if (i != 0) {
        const double active = static_cast<double>(c.cloud.modal(i).size());
        EXPECT_NEAR(c.cloud.log_norm(i), lv.log_eps + 0.5 * std::log(active), 1e-12);
      }
      for (std::size_t b = a + 1; b < lv.indices.size(); ++b)
        EXPECT_GE(eng.log_distance(i, lv.indices[b]), lv.log_eps - 1e-12);
    }
}

TEST(CubeCloud, EpsRatioExact) {
  const auto& f = kick();
  const auto c = bad_cube_cloud(f.shift, 9, 16);
  const double want = -0.5 * c.beta * (256.0 - 81.0) + equalizers(f.shift, 16).log_b - equalizers(f.shift, 9).log_b;
  EXPECT_NEAR(c.levels.back().log_eps - c.levels.front().log_eps, want, 1e-12 * std::abs(want));
}

TEST(ConeAttractor, EquilibriaAndSegments) {
  const auto spec = Spectrum::quadratic(64);
  const auto a = cone_attractor(log_critical_laws(), spec, 32);
  EXPECT_LE(a.max_residual, 1e-10);
  EXPECT_LE(a.max_drift, 1e-8);
  EXPECT_LT(a.sum_a, 2 * std::numbers::pi);
  std::size_t bases = 0;
  for (std::size_t i = 0; i < a.cloud.size(); ++i) {
    if (a.cloud.tag(i) != "segment" || !a.cloud.modal(i).empty()) continue;
    ++bases;
    EXPECT_NEAR(std::hypot(a.cloud.planar(i)[0], a.cloud.planar(i)[1]), 1.0, 1e-15);
  }
  EXPECT_EQ(bases, a.modes.size());
}

TEST(ConeAttractor, H3NormOfProjectedEquilibria) {
  const auto spec = Spectrum::quadratic(64);
  const auto a = cone_attractor(log_critical_laws(), spec, 32);
  const auto q = a.cloud.modal_projection().with_norm({3.0});
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q.tag(i) != "equilibrium") continue;
    const std::size_t n = q.modal(i).max_mode();
    EXPECT_NEAR(q.log_norm(i), -3.0 * std::log(spec.log_lambda(n)), 1e-12) << n;
  }
}

TEST(ConeAttractor, RejectsBadLaws) {
  const auto spec = Spectrum::quadratic(16);
  SequenceLaws wide;
  wide.log_a = [](std::size_t, const Spectrum&) { return 0.0; };
  wide.log_b = [](std::size_t n, const Spectrum&) { return -static_cast<double>(n); };
  EXPECT_THROW(cone_attractor(wide, spec, 8), std::invalid_argument);
  SequenceLaws flat = log_critical_laws();
  flat.log_b = [](std::size_t, const Spectrum&) { return -1.0; };
  EXPECT_THROW(cone_attractor(flat, spec, 8), std::invalid_argument);
}

TEST(Projection, NeverIncreasesNorm) {
  const auto& f = kick();
  const auto c = bad_cube_cloud(f.shift, 4, 9);
  PointCloud mixed = c.cloud;
  mixed.add(LogModeVector::unit(3, -2.0), "", {0.3, -0.4});
  for (double s : {0.0, 1.0, 3.0}) {
    const auto p = mixed.with_norm({s});
    const auto q = p.modal_projection();
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(q.log_norm(i), p.log_norm(i));
  }
}
