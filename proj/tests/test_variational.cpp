#include "pauli_lab/variational.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace plab;

namespace {

constexpr double L = 1.0;

MinimizationProblem box_problem(int cells) {
  MinimizationProblem pr{Grid::line(L, cells, Boundary::dirichlet_zero)};
  pr.objective = ObjectiveKind::fisher;
  return pr;
}

double box_density(double x) { return 2.0 / L * std::pow(std::sin(pi * x / L), 2); }

PolarFields analytic_box(const Grid& g) {
  PolarFields p(g);
  p.P = ScalarField::sample(g, [](Vec3 x) { return box_density(x[0]); });
  return p;
}

double ground_value() { return std::pow(2.0 * pi / L, 2); }

}  // namespace

TEST(VariationalBox, ConvergesToGroundStateAt512Cells) {
  auto pr = box_problem(512);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = minimize(pr);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(r.converged);
  EXPECT_LT(std::abs(r.objective - ground_value()) / ground_value(), 1e-2);
  double dev = 0.0;
  for (int i = 0; i < pr.grid.cells(0); ++i)
    dev = std::max(dev, std::abs(r.fields.P[i] - box_density(pr.grid.coordinate(0, i))));
  EXPECT_LT(dev / (2.0 / L), 2e-2);
  EXPECT_NEAR(r.mu, r.objective, 1e-9 * r.objective);
  EXPECT_LT(secs, 30.0);
}

TEST(VariationalBox, AnalyticOptimumIsStationary) {
  auto pr = box_problem(257);
  const auto p = analytic_box(pr.grid);
  const auto [norm, mu] = stationarity_measure(pr, p);
  EXPECT_LT(norm, 1e-6 * std::abs(mu));
  EXPECT_NEAR(mu, objective_value(pr, p), 1e-9 * mu);
}

TEST(VariationalBox, AnalyticStartTakesZeroIterations) {
  auto pr = box_problem(257);
  pr.initial = analytic_box(pr.grid);
  pr.multistart = 1;
  const auto r = minimize(pr);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
}

TEST(VariationalBox, DescentIsMonotone) {
  auto pr = box_problem(200);
  pr.multistart = 1;
  const auto r = minimize(pr);
  ASSERT_GT(r.trace.size(), 2u);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k].objective, r.trace[k - 1].objective);
}

TEST(VariationalBox, ConstraintsHoldAtResult) {
  auto pr = box_problem(200);
  pr.max_iterations = 7;  // stop early so an unconverged iterate is examined
  const auto r = minimize(pr);
  EXPECT_NEAR(integrate(r.fields.P), 1.0, 1e-8);
  for (double v : r.fields.P.values) EXPECT_GE(v, 0.0);
}

TEST(VariationalBox, TranslatedStartsReachTheSameValue) {
  auto pr = box_problem(256);
  pr.multistart = 1;
  std::vector<double> values;
  for (int shift : {0, 7, 31, 64}) {
    PolarFields p(pr.grid);
    p.P = ScalarField::sample(pr.grid, [&](Vec3 x) {
      const double c = 0.3 + shift * pr.grid.spacing(0);
      const double bump = std::exp(-std::pow((x[0] - c) / 0.1, 2));
      return bump * std::pow(std::sin(pi * x[0] / L), 2) + 1e-3;
    });
    p.P = normalize(p.P);
    pr.initial = p;
    const auto r = minimize(pr);
    EXPECT_TRUE(r.converged);
    values.push_back(r.objective);
  }
  for (double v : values) EXPECT_NEAR(v, values.front(), 2.0 * pr.gradient_tolerance * values.front());
}

TEST(VariationalBox, MultistartIsDeterministic) {
  auto pr = box_problem(128);
  pr.seed = 9;
  const auto a = minimize(pr);
  const auto b = minimize(pr);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.multistart_index, b.multistart_index);
  EXPECT_EQ(a.fields.P.values, b.fields.P.values);
}

TEST(VariationalBox, RefinementReducesError) {
  double prev = 1e300;
  for (int n : {33, 65, 129}) {
    auto pr = box_problem(n);
    pr.multistart = 1;
    const double err = std::abs(minimize(pr).objective - ground_value());
    EXPECT_LT(err, prev / 3.5);
    prev = err;
  }
}

TEST(VariationalBox, LengthScaleDropsOut) {
  // the iteration is unit-free: a 1 nm box follows the unit box exactly
  for (double scale : {1e-9, 3e4}) {
    MinimizationProblem a{Grid::line(1.0, 128, Boundary::dirichlet_zero)};
    MinimizationProblem b{Grid::line(scale, 128, Boundary::dirichlet_zero)};
    a.multistart = b.multistart = 2;
    const auto ra = minimize(a), rb = minimize(b);
    ASSERT_TRUE(rb.converged);
    EXPECT_EQ(ra.iterations, rb.iterations);
    EXPECT_NEAR(rb.objective * scale * scale / ra.objective, 1.0, 1e-9);
    for (std::size_t i = 0; i < ra.fields.P.size(); ++i) ASSERT_NEAR(rb.fields.P[i] * scale, ra.fields.P[i], 1e-8);
  }
}

TEST(VariationalPeriodic, UniformIsOptimalWithoutPotential) {
  MinimizationProblem pr{Grid::line(L, 64, Boundary::periodic)};
  pr.multistart = 3;
  const auto r = minimize(pr);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.objective, 1e-10);
}

TEST(VariationalToy, TwoCellProblemMatchesExhaustiveSearch) {
  // nodes 0 and 3 are pinned, so the free cells 1 and 2 lie on a 1-simplex
  const Grid g = Grid::line(3.0, 4, Boundary::dirichlet_zero);
  MinimizationProblem pr{g};
  pr.objective = ObjectiveKind::total;
  pr.consts = PhysicalConstants::natural();
  EMConfiguration em(g);
  em.u[1] = 0.8;
  em.u[2] = -0.5;
  pr.em = em;
  pr.multistart = 4;
  pr.gradient_tolerance = 1e-9;
  const auto r = minimize(pr);
  EXPECT_TRUE(r.converged);

  const double h = g.spacing(0), lam = pr.consts.lambda;
  auto J = [&](double p1) {
    const double p2 = 1.0 / h - p1;
    const double s1 = std::sqrt(p1), s2 = std::sqrt(p2);
    return lam * 4.0 / h * (p1 + (s1 - s2) * (s1 - s2) + p2) + h * (p1 * em.u[1] + p2 * em.u[2]);
  };
  double lo = 0.0, hi = 1.0 / h, best = 0.0;
  for (int level = 0; level < 3; ++level) {
    const int n = 200000;
    double bv = 1e300;
    for (int k = 0; k <= n; ++k) {
      const double p = lo + (hi - lo) * k / n;
      const double v = J(p);
      if (v < bv) {
        bv = v;
        best = p;
      }
    }
    const double w = (hi - lo) / n;
    lo = std::max(0.0, best - 2 * w);
    hi = std::min(1.0 / h, best + 2 * w);
  }
  EXPECT_NEAR(r.objective, J(best), 1e-6 * std::abs(J(best)));
  EXPECT_NEAR(r.fields.P[1], best, 1e-6 / h);
}

TEST(VariationalGradientCheck, MatchesFiniteDifferences) {
  const Grid g = Grid::line(L, 24, Boundary::dirichlet_zero);
  MinimizationProblem pr{g};
  pr.objective = ObjectiveKind::total;
  pr.free_theta = true;
  std::mt19937_64 rng(5);
  RandomFieldSpec spec;
  spec.amplitude = 0.5;
  EMConfiguration em(g);
  em.u = random_smooth_field(g, rng, spec);
  em.B.components[2].assign(g.size(), 0.7);
  em.B.components[0].assign(g.size(), 0.3);
  em.A.components[0] = random_smooth_field(g, rng, spec).values;
  pr.em = em;
  pr.S = random_smooth_field(g, rng, spec);
  pr.phi = random_smooth_field(g, rng, spec);
  PolarFields f(g);
  f.P = ScalarField::sample(g, [](Vec3 x) { return 0.1 + box_density(x[0]); });
  f.theta = random_smooth_field(g, rng, spec);
  for (auto& v : f.theta.values) v += 1.0;
  f.S = *pr.S;
  f.phi = *pr.phi;
  const auto grad = functional_gradient(pr, f);
  const double hstep = 1e-6;
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    for (int which = 0; which < 2; ++which) {
      PolarFields a = f, b = f;
      auto& va = which == 0 ? a.P[i] : a.theta[i];
      auto& vb = which == 0 ? b.P[i] : b.theta[i];
      va += hstep;
      vb -= hstep;
      const double fd = (objective_value(pr, a) - objective_value(pr, b)) / (2 * hstep);
      const double an = which == 0 ? grad.P[i] : grad.theta[i];
      EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd))) << "cell " << i << " field " << which;
    }
  }
}

TEST(VariationalGradientCheck, FloorViolationIsReported) {
  auto pr = box_problem(16);
  auto f = analytic_box(pr.grid);
  f.P[5] = 0.0;
  EXPECT_THROW(functional_gradient(pr, f), std::domain_error);
}

TEST(VariationalTotal, PotentialWellShiftsDensity) {
  const Grid g = Grid::line(L, 129, Boundary::dirichlet_zero);
  MinimizationProblem pr{g};
  pr.objective = ObjectiveKind::total;
  EMConfiguration em(g);
  em.u = ScalarField::sample(g, [](Vec3 x) { return 200.0 * x[0]; });
  pr.em = em;
  const auto r = minimize(pr);
  EXPECT_TRUE(r.converged);
  double mean = 0.0;
  ScalarField xP(g);
  for (std::size_t i = 0; i < g.size(); ++i) xP[i] = g.coordinate(0, i) * r.fields.P[i];
  mean = integrate(xP);
  EXPECT_LT(mean, 0.5 * L - 0.05);
}

TEST(VariationalTotal, FreeThetaAlignsWithField) {
  // with only a uniform B along z, the moment term favours cos(theta) = 1
  const Grid g = Grid::line(L, 65, Boundary::dirichlet_zero);
  MinimizationProblem pr{g};
  pr.objective = ObjectiveKind::total;
  pr.free_theta = true;
  pr.em = EMConfiguration::uniform(g, {0.0, 0.0, 2.0}, {0.0, 0.0, 0.0});
  PolarFields init(g);
  init.P = normalize(ScalarField::sample(g, [](Vec3 x) { return std::pow(x[0] * (L - x[0]), 2); }));
  init.theta = ScalarField(g, 1.2);
  pr.initial = init;
  pr.multistart = 1;
  pr.max_iterations = 20000;
  const auto r = minimize(pr);
  EXPECT_TRUE(r.converged);
  // theta is weighted by P, so alignment is measured with that weight
  ScalarField misalign(g);
  for (std::size_t i = 0; i < g.size(); ++i) misalign[i] = r.fields.P[i] * (1.0 - std::cos(r.fields.theta[i]));
  EXPECT_LT(integrate(misalign), 1e-8);
  for (std::size_t i = g.size() / 4; i < 3 * g.size() / 4; ++i) EXPECT_GT(std::cos(r.fields.theta[i]), 1.0 - 1e-6);
}

TEST(VariationalSpectrum, FirstThreeModes) {
  auto pr = box_problem(512);
  const auto t0 = std::chrono::steady_clock::now();
  const auto scan = spectrum_scan(pr, 3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_TRUE(scan.complete());
  for (int n = 1; n <= 3; ++n) {
    const double exact = std::pow(2.0 * pi * n / L, 2);
    EXPECT_LT(std::abs(scan.modes[n - 1].objective - exact) / exact, 1e-2) << "mode " << n;
    EXPECT_GE(scan.modes[n - 1].objective, 0.99 * ground_value());
    EXPECT_NEAR(integrate(scan.modes[n - 1].fields.P), 1.0, 1e-10);
  }
  EXPECT_LT(secs, 60.0);
}

TEST(VariationalSpectrum, ModeDensitiesHaveNodes) {
  auto pr = box_problem(201);
  const auto scan = spectrum_scan(pr, 3);
  ASSERT_TRUE(scan.complete());
  // mode n has n - 1 interior zeros of the amplitude; check the density minima
  for (int n = 2; n <= 3; ++n) {
    int minima = 0;
    const auto& P = scan.modes[n - 1].fields.P.values;
    for (std::size_t i = 2; i + 2 < P.size(); ++i)
      if (P[i] < P[i - 1] && P[i] <= P[i + 1] && P[i] < 1e-2) ++minima;
    EXPECT_EQ(minima, n - 1) << "mode " << n;
  }
}

TEST(VariationalSpectrum, RejectsUnsupportedProblems) {
  auto pr = box_problem(32);
  pr.objective = ObjectiveKind::total;
  EXPECT_THROW(spectrum_scan(pr, 2), std::invalid_argument);
  pr = box_problem(32);
  EXPECT_THROW(spectrum_scan(pr, 0), std::invalid_argument);
}

TEST(VariationalInputs, BadSettingsAreRejected) {
  auto pr = box_problem(32);
  pr.multistart = 0;
  EXPECT_THROW(minimize(pr), std::invalid_argument);
  EXPECT_EQ(objective_from_string("total"), ObjectiveKind::total);
  EXPECT_THROW(objective_from_string("x"), std::invalid_argument);
}
