#include "pauli_lab/pauli_solver.hpp"
#include "pauli_lab/random_fields.hpp"

#include <gtest/gtest.h>

using namespace plab;

namespace {

double max_diff(const SpinorField& a, const SpinorField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max({m, std::abs(a.up[i] - b.up[i]), std::abs(a.down[i] - b.down[i])});
  return m;
}

double max_abs_field(const SpinorField& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max({m, std::abs(a.up[i]), std::abs(a.down[i])});
  return m;
}

SpinorField uniform_spinor(const Grid& g, Complex up, Complex down) {
  SpinorField f(g);
  const double s = 1.0 / std::sqrt(g.volume() * (std::norm(up) + std::norm(down)));
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.up[i] = s * up;
    f.down[i] = s * down;
  }
  return f;
}

SpinorField random_spinor(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SpinorField f(g);
  RandomFieldSpec spec;
  spec.max_mode = 3;
  const auto a = random_smooth_field(g, rng, spec), b = random_smooth_field(g, rng, spec);
  const auto c = random_smooth_field(g, rng, spec), d = random_smooth_field(g, rng, spec);
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.up[i] = Complex(a[i], b[i]);
    f.down[i] = Complex(c[i], d[i]);
  }
  return f;
}

SolverConfig neutral_config(const Grid& g, double mu, Scheme scheme, double dt) {
  SolverConfig cfg;
  cfg.scheme = scheme;
  cfg.dt = dt;
  cfg.consts = PhysicalConstants::neutral(1.0, 1.0, mu);
  cfg.neutral = true;
  cfg.em = EMConfiguration(g);
  return cfg;
}

void set_uniform_B(EMConfiguration& em, Vec3 B) {
  for (int a = 0; a < 3; ++a) em.B.components[a].assign(em.B.components[a].size(), B[a]);
}

// First time the record sequence crosses zero downward/upward, linearly interpolated.
std::vector<double> zero_crossings(const std::vector<double>& t, const std::vector<double>& v) {
  std::vector<double> z;
  for (std::size_t k = 1; k < v.size(); ++k)
    if ((v[k - 1] > 0.0) != (v[k] > 0.0)) z.push_back(t[k - 1] + (t[k] - t[k - 1]) * v[k - 1] / (v[k - 1] - v[k]));
  return z;
}

}  // namespace

TEST(Hamiltonian, PlaneWaveEigenvalue) {
  const Grid g = Grid::line(2.0 * pi, 64, Boundary::periodic);
  SolverConfig cfg;
  cfg.em = EMConfiguration(g);
  cfg.consts = PhysicalConstants::pauli_identification(1.3, 0.7, 1.0);
  const double k = 3.0;
  SpinorField f(g);
  for (std::size_t i = 0; i < g.size(); ++i) f.up[i] = std::polar(1.0, k * g.coordinate(0, int(i)));
  const auto h = apply_hamiltonian(f, cfg);
  const double e = cfg.consts.hbar * cfg.consts.hbar * k * k / (2.0 * cfg.consts.m);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(std::abs(h.up[i] - e * f.up[i]), 0.0, 1e-11);
    EXPECT_EQ(h.down[i], Complex(0.0));
  }
}

TEST(Hamiltonian, UniformSpinUpInFieldAlongZ) {
  const Grid g = Grid::line(1.0, 16, Boundary::periodic);
  auto cfg = neutral_config(g, 0.8, Scheme::split_operator, 1e-3);
  set_uniform_B(cfg.em, {0.0, 0.0, 1.5});
  const auto f = uniform_spinor(g, 1.0, 0.0);
  const auto h = apply_hamiltonian(f, cfg);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(std::abs(h.up[i] + 0.8 * 1.5 * f.up[i]), 0.0, 1e-12);
}

TEST(Hamiltonian, IsLinear) {
  const Grid g = Grid::square(1.0, 16, Boundary::periodic);
  SolverConfig cfg;
  std::mt19937_64 rng(3);
  cfg.em = EMConfiguration(g);
  cfg.em.u = random_smooth_field(g, rng);
  cfg.em.A = random_smooth_vector_field(g, rng);
  cfg.em.B = random_smooth_vector_field(g, rng);
  const auto a = random_spinor(g, 1), b = random_spinor(g, 2);
  const Complex ca(0.3, -1.2), cb(2.0, 0.5);
  SpinorField mix(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    mix.up[i] = ca * a.up[i] + cb * b.up[i];
    mix.down[i] = ca * a.down[i] + cb * b.down[i];
  }
  const auto hm = apply_hamiltonian(mix, cfg), ha = apply_hamiltonian(a, cfg), hb = apply_hamiltonian(b, cfg);
  SpinorField comb(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    comb.up[i] = ca * ha.up[i] + cb * hb.up[i];
    comb.down[i] = ca * ha.down[i] + cb * hb.down[i];
  }
  EXPECT_LT(max_diff(hm, comb), 1e-12 * max_abs_field(comb));
}

TEST(Hamiltonian, IsHermitianOnEveryDiscretization) {
  struct Case {
    Boundary b;
    DerivativeMode m;
  };
  for (const auto& c : {Case{Boundary::periodic, DerivativeMode::spectral}, Case{Boundary::periodic, DerivativeMode::central},
                        Case{Boundary::dirichlet_zero, DerivativeMode::central}}) {
    const Grid g = Grid::square(1.0, 20, c.b);
    SolverConfig cfg;
    cfg.mode = c.m;
    std::mt19937_64 rng(11);
    cfg.em = EMConfiguration(g);
    cfg.em.u = random_smooth_field(g, rng);
    cfg.em.A = random_smooth_vector_field(g, rng);
    cfg.em.B = random_smooth_vector_field(g, rng);
    auto a = random_spinor(g, 4), b = random_spinor(g, 5);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.is_boundary_node(i)) a.up[i] = a.down[i] = b.up[i] = b.down[i] = 0.0;
    const Complex lhs = detail::cdot(a, apply_hamiltonian(b, cfg));
    const Complex rhs = std::conj(detail::cdot(b, apply_hamiltonian(a, cfg)));
    EXPECT_LT(std::abs(lhs - rhs), 1e-11 * std::abs(lhs)) << to_string(c.b) << " " << to_string(c.m);
  }
}

TEST(Step, TrivialHamiltonianIsIdentity) {
  const Grid g = Grid::line(1.0, 32, Boundary::periodic);
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    auto cfg = neutral_config(g, 1.0, s, 0.01);
    const PauliState st{uniform_spinor(g, 0.6, Complex(0.0, 0.8)), 0.0};
    const auto next = step(st, cfg);
    EXPECT_LT(max_diff(next.phi, st.phi), 1e-13);
    EXPECT_DOUBLE_EQ(next.t, 0.01);
  }
}

TEST(Step, RejectsUnnormalizedState) {
  const Grid g = Grid::line(1.0, 16, Boundary::periodic);
  auto cfg = neutral_config(g, 1.0, Scheme::split_operator, 0.01);
  PauliState st{uniform_spinor(g, 1.0, 0.0), 0.0};
  st.phi.up[0] *= 2.0;
  EXPECT_THROW(step(st, cfg), std::invalid_argument);
}

TEST(Step, LarmorPrecessionOverOnePeriod) {
  const Grid g = Grid::line(1.0, 8, Boundary::periodic);
  const double mu = 0.7, B = 1.3;
  const double omega = 2.0 * mu * B;  // hbar = 1
  const double period = 2.0 * pi / omega;
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    // split-operator is exact for a uniform field; the Cayley phase error
    // (omega dt)^3 / 12 per step needs the finer step to stay below 1e-6
    const int steps = s == Scheme::split_operator ? 1000 : 5000;
    auto cfg = neutral_config(g, mu, s, period / steps);
    set_uniform_B(cfg.em, {0.0, 0.0, B});
    PauliState st{uniform_spinor(g, 1.0, 1.0), 0.0};
    Propagator p(g, cfg);
    double worst = 0.0;
    for (int k = 1; k <= steps; ++k) {
      p.step(st.phi, st.t);
      st.t = k * cfg.dt;
      worst = std::max(worst, std::abs(observables(st).spin[0] - std::cos(omega * st.t)));
    }
    EXPECT_LT(worst, 1e-6) << to_string(s);
  }
}

TEST(Evolve, LarmorFrequencyFromZeroCrossings) {
  const Grid g = Grid::line(1.0, 8, Boundary::periodic);
  const double B = 0.9;
  struct Case {
    PhysicalConstants c;
    bool neutral;
    double expected;
  };
  const auto charged = PhysicalConstants::pauli_identification(1.0, 1.5, 2.0);
  const Case cases[] = {{PhysicalConstants::neutral(1.0, 1.0, 0.6), true, 2.0 * 0.6 * B},
                        {charged, false, charged.q * B / charged.m}};
  for (const auto& c : cases) {
    SolverConfig cfg;
    cfg.consts = c.c;
    cfg.neutral = c.neutral;
    cfg.em = EMConfiguration(g);
    // the orbital coupling is off (A = 0); only the spin sees B
    set_uniform_B(cfg.em, {0.0, 0.0, B});
    const double period = 2.0 * pi / c.expected;
    cfg.dt = period / 400.0;
    const auto tr = evolve({uniform_spinor(g, 1.0, 1.0), 0.0}, cfg, 4000 * cfg.dt, 1);
    std::vector<double> t, sx;
    for (const auto& r : tr.records) {
      t.push_back(r.t);
      sx.push_back(r.spin[0]);
    }
    const auto z = zero_crossings(t, sx);
    ASSERT_GE(z.size(), 19u);
    const double measured = pi * (z.size() - 1) / (z.back() - z.front());
    EXPECT_LT(std::abs(measured - c.expected) / c.expected, 1e-3);
  }
}

TEST(Unitarity, NormDriftOverThousandSteps) {
  std::mt19937_64 rng(21);
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    const Grid g = s == Scheme::split_operator ? Grid::line(20.0, 256, Boundary::periodic)
                                               : Grid::line(20.0, 257, Boundary::dirichlet_zero);
    auto cfg = neutral_config(g, 0.5, s, 0.005);
    cfg.em.u = ScalarField::sample(g, [](Vec3 x) { return 0.05 * (x[0] - 10.0) * (x[0] - 10.0); });
    RandomFieldSpec spec;
    spec.amplitude = 1.0;
    cfg.em.B = random_smooth_vector_field(g, rng, spec);
    PauliState st{gaussian_packet(g, {10.0, 0.0, 0.0}, 1.0, {1.0, 0.0, 0.0}, 0.8, Complex(0.0, 0.6)), 0.0};
    const auto tr = evolve(st, cfg, 1000 * cfg.dt, 100);
    double drift = 0.0;
    for (const auto& r : tr.records) drift = std::max(drift, std::abs(r.norm - 1.0));
    EXPECT_LT(drift, 1e-10) << to_string(s);
  }
}

TEST(Evolve, FreePacketSpreading) {
  const double sigma = 1.0, T = 4.0;
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    const Grid g = s == Scheme::split_operator ? Grid::line(60.0, 512, Boundary::periodic)
                                               : Grid::line(60.0, 1201, Boundary::dirichlet_zero);
    auto cfg = neutral_config(g, 0.0, s, 0.01);
    PauliState st{gaussian_packet(g, {30.0, 0.0, 0.0}, sigma, {0.0, 0.0, 0.0}, 1.0, 0.0), 0.0};
    const auto tr = evolve(st, cfg, T, 400, 400);
    const auto& last = tr.snapshots.back();
    const double expected = sigma * sigma + std::pow(T / (2.0 * sigma), 2);
    EXPECT_LT(std::abs(position_variance(last.phi, 0) - expected) / expected, 5e-3) << to_string(s);
    EXPECT_NEAR(tr.records.back().mean_position[0], 30.0, 1e-6);
  }
}

TEST(Evolve, UniformElectricFieldParabola) {
  // gauge phi_pot = 0, A = -E t, so E = -dA/dt is uniform
  const Grid g = Grid::line(80.0, 1024, Boundary::periodic);
  SolverConfig cfg;
  cfg.consts = PhysicalConstants::pauli_identification(1.0, 1.0, 1.0);
  cfg.em = EMConfiguration(g);
  cfg.dt = 0.005;
  const double E = 0.5, T = 4.0, x0 = 30.0;
  cfg.time_dependence = [E](double t, EMConfiguration& em) {
    em.A.components[0].assign(em.A.components[0].size(), -E * t);
    em.E.components[0].assign(em.E.components[0].size(), E);
  };
  PauliState st{gaussian_packet(g, {x0, 0.0, 0.0}, 1.0, {0.0, 0.0, 0.0}, 1.0, 0.0), 0.0};
  const auto tr = evolve(st, cfg, T, 100);
  for (const auto& r : tr.records) {
    if (r.t == 0.0) continue;
    const double shift = cfg.consts.q * E / (2.0 * cfg.consts.m) * r.t * r.t;
    EXPECT_LT(std::abs(r.mean_position[0] - x0 - shift) / shift, 1e-3) << "t = " << r.t;
  }
}

TEST(Evolve, ZeroDurationGivesInitialObservables) {
  const Grid g = Grid::line(1.0, 16, Boundary::periodic);
  auto cfg = neutral_config(g, 1.0, Scheme::split_operator, 0.01);
  const auto tr = evolve({uniform_spinor(g, 1.0, 0.0), 0.0}, cfg, 0.0, 1);
  ASSERT_EQ(tr.records.size(), 1u);
  EXPECT_NEAR(tr.records[0].spin[2], 1.0, 1e-14);
  EXPECT_THROW(evolve({uniform_spinor(g, 1.0, 0.0), 0.0}, cfg, 0.015, 1), std::invalid_argument);
}

TEST(Evolve, LinearInTheInitialState) {
  const Grid g = Grid::line(10.0, 128, Boundary::periodic);
  auto cfg = neutral_config(g, 0.5, Scheme::split_operator, 0.01);
  std::mt19937_64 rng(8);
  cfg.em.u = random_smooth_field(g, rng);
  cfg.em.B = random_smooth_vector_field(g, rng);
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    cfg.scheme = s;
    const auto a = random_spinor(g, 6), b = random_spinor(g, 7);
    const Complex ca(0.7, 0.2), cb(-1.1, 0.4);
    SpinorField mix(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      mix.up[i] = ca * a.up[i] + cb * b.up[i];
      mix.down[i] = ca * a.down[i] + cb * b.down[i];
    }
    const auto em = propagate(mix, cfg, 0.0, 100), ea = propagate(a, cfg, 0.0, 100), eb = propagate(b, cfg, 0.0, 100);
    SpinorField comb(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      comb.up[i] = ca * ea.up[i] + cb * eb.up[i];
      comb.down[i] = ca * ea.down[i] + cb * eb.down[i];
    }
    EXPECT_LT(max_diff(em, comb), 1e-8 * max_abs_field(comb)) << to_string(s);
  }
}

TEST(Evolve, SpinAndSpaceFactorizeInUniformField) {
  const Grid g = Grid::line(20.0, 256, Boundary::periodic);
  auto cfg = neutral_config(g, 0.5, Scheme::split_operator, 0.01);
  cfg.em.u = ScalarField::sample(g, [](Vec3 x) { return 0.02 * (x[0] - 10.0) * (x[0] - 10.0); });
  set_uniform_B(cfg.em, {0.3, -0.4, 1.1});
  const auto a = gaussian_packet(g, {8.0, 0.0, 0.0}, 1.0, {0.5, 0.0, 0.0}, 1.0, 0.0);
  const auto b = gaussian_packet(g, {8.0, 0.0, 0.0}, 1.0, {0.5, 0.0, 0.0}, 0.6, Complex(0.0, 0.8));
  const auto ea = propagate(a, cfg, 0.0, 300), eb = propagate(b, cfg, 0.0, 300);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double da = std::norm(ea.up[i]) + std::norm(ea.down[i]);
    const double db = std::norm(eb.up[i]) + std::norm(eb.down[i]);
    worst = std::max(worst, std::abs(da - db));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Evolve, NeutralPathEqualsChargedPathWithZeroCharge) {
  const Grid g = Grid::line(10.0, 128, Boundary::periodic);
  std::mt19937_64 rng(9);
  SolverConfig charged;
  charged.consts = PhysicalConstants::natural();
  charged.consts.q = 0.0;
  charged.consts.gamma = 1.7;
  charged.em = EMConfiguration(g);
  charged.em.u = random_smooth_field(g, rng);
  charged.em.phi_pot = random_smooth_field(g, rng);
  charged.em.B = random_smooth_vector_field(g, rng);
  charged.em.A.components[0].assign(g.size(), 0.4);
  charged.dt = 0.01;
  SolverConfig neutral = charged;
  neutral.consts.q = 3.0;  // ignored on the neutral path
  neutral.neutral = true;
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    charged.scheme = neutral.scheme = s;
    const auto f = gaussian_packet(g, {5.0, 0.0, 0.0}, 1.0, {1.0, 0.0, 0.0}, 0.6, 0.8);
    EXPECT_LT(max_diff(propagate(f, charged, 0.0, 50), propagate(f, neutral, 0.0, 50)), 1e-12) << to_string(s);
  }
}

TEST(Evolve, SplitOperatorNeedsPeriodicGridAndUniformA) {
  const Grid d = Grid::line(1.0, 16, Boundary::dirichlet_zero);
  auto cfg = neutral_config(d, 1.0, Scheme::split_operator, 0.01);
  EXPECT_THROW(Propagator(d, cfg), std::invalid_argument);
  const Grid p = Grid::line(1.0, 16, Boundary::periodic);
  SolverConfig c2;
  c2.em = EMConfiguration(p);
  for (std::size_t i = 0; i < p.size(); ++i) c2.em.A.components[0][i] = 0.1 * i;
  EXPECT_THROW(Propagator(p, c2), std::invalid_argument);
  auto c3 = neutral_config(p, 1.0, Scheme::split_operator, 0.0);
  EXPECT_THROW(Propagator(p, c3), std::invalid_argument);
}

TEST(Evolve, IterativeSolveFailureIsReported) {
  const Grid g = Grid::line(10.0, 128, Boundary::dirichlet_zero);
  auto cfg = neutral_config(g, 0.5, Scheme::crank_nicolson, 0.5);
  cfg.cn_max_iterations = 1;
  const auto f = gaussian_packet(g, {5.0, 0.0, 0.0}, 0.5, {2.0, 0.0, 0.0}, 1.0, 0.0);
  EXPECT_THROW(propagate(f, cfg, 0.0, 1), SolverError);
}

TEST(Observables, SimpleSpinStates) {
  const Grid g = Grid::line(2.0, 16, Boundary::periodic);
  const auto up = observables({uniform_spinor(g, 1.0, 0.0), 0.0});
  EXPECT_NEAR(up.spin[2], 1.0, 1e-14);
  EXPECT_EQ(up.mass_down, 0.0);
  for (double v : up.density_down.values) EXPECT_EQ(v, 0.0);
  const auto x = observables({uniform_spinor(g, 1.0, 1.0), 0.0});
  EXPECT_NEAR(x.spin[0], 1.0, 1e-14);
  EXPECT_NEAR(x.spin[2], 0.0, 1e-14);
  EXPECT_NEAR(x.norm, 1.0, 1e-14);
}

TEST(Observables, SpinMatchesPolarAngles) {
  const Grid g = Grid::square(1.0, 24, Boundary::periodic);
  const auto c = PhysicalConstants::natural();
  auto f = random_spinor(g, 31);
  const double n = std::sqrt(norm(f));
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.up[i] /= n;
    f.down[i] /= n;
  }
  const auto o = observables({f, 0.0});
  const auto p = polar_from_spinor(f, c);
  ScalarField sx(g), sy(g), sz(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 m = moment_direction(p.theta[i], p.phi[i]);
    sx[i] = p.P[i] * m[0];
    sy[i] = p.P[i] * m[1];
    sz[i] = p.P[i] * m[2];
  }
  EXPECT_NEAR(o.spin[0], integrate(sx), 1e-10);
  EXPECT_NEAR(o.spin[1], integrate(sy), 1e-10);
  EXPECT_NEAR(o.spin[2], integrate(sz), 1e-10);
}

namespace {

SternGerlachSetup sg_setup(double b) {
  SternGerlachSetup s;
  s.grid = Grid::line(80.0, 2048, Boundary::periodic);
  s.consts = PhysicalConstants::neutral(1.0, 1.0, 0.5);
  s.z0 = 40.0;
  s.sigma = 1.0;
  s.b = b;
  s.B0 = 25.0;
  s.flight_time = 3.0;
  s.dt = 0.002;
  s.record_every = 50;
  return s;
}

}  // namespace

TEST(SternGerlach, SeparationGrowsQuadratically) {
  const auto s = sg_setup(2.0);
  const auto r = stern_gerlach(s);
  const double mu = s.consts.spin_coupling();
  for (const auto& rec : r.records) {
    if (rec.t == 0.0) continue;
    const double expected = mu * s.b / s.consts.m * rec.t * rec.t;
    EXPECT_LT(std::abs(rec.separation - expected) / expected, 1e-2) << "t = " << rec.t;
  }
  for (std::size_t k = 1; k < r.records.size(); ++k) EXPECT_LE(r.records[k].overlap, r.records[k - 1].overlap + 1e-15);
  EXPECT_LT(r.records.back().overlap, 0.5);
}

TEST(SternGerlach, NoGradientGivesExactlyZeroSeparation) {
  const auto r = stern_gerlach(sg_setup(0.0));
  for (const auto& rec : r.records) EXPECT_EQ(rec.separation, 0.0);
}

TEST(SternGerlach, PureSpinUpAccelerates) {
  auto s = sg_setup(2.0);
  s.up = 1.0;
  s.down = 0.0;
  const auto r = stern_gerlach(s);
  const double mu = s.consts.spin_coupling();
  const auto& last = r.records.back();
  const double shift = mu * s.b / (2.0 * s.consts.m) * last.t * last.t;
  EXPECT_LT(std::abs(last.z_up - s.z0 - shift) / shift, 1e-2);
}

TEST(SternGerlach, UniformOffsetOnlyRotatesSpin) {
  auto a = sg_setup(1.0), b = sg_setup(1.0);
  b.B0 = 0.0;
  const auto ra = stern_gerlach(a), rb = stern_gerlach(b);
  EXPECT_NEAR(ra.records.back().separation, rb.records.back().separation, 1e-12);
  // in the lab frame sx + i sy picks up exp(-2 i mu B0 t / hbar)
  const auto oa = observables(ra.final_state), ob = observables(rb.final_state);
  const double ang = 2.0 * a.consts.spin_coupling() * a.B0 * ra.final_state.t;
  EXPECT_NEAR(oa.spin[0], std::cos(ang) * ob.spin[0] + std::sin(ang) * ob.spin[1], 1e-10);
  EXPECT_NEAR(oa.spin[1], std::cos(ang) * ob.spin[1] - std::sin(ang) * ob.spin[0], 1e-10);
  EXPECT_NEAR(oa.spin[2], ob.spin[2], 1e-12);
}

TEST(SternGerlach, BoundaryContactAborts) {
  auto s = sg_setup(2.0);
  s.flight_time = 8.0;
  EXPECT_THROW(stern_gerlach(s), BoundaryError);
}
