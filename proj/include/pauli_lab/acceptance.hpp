#pragma once

// Acceptance suite, criteria 1-9. Tolerances are fixed here; the fast level
// lowers resolution where a criterion allows it and keeps every tolerance.

#include "pauli_lab/classical.hpp"
#include "pauli_lab/field_sets.hpp"
#include "pauli_lab/pauli_solver.hpp"
#include "pauli_lab/report.hpp"
#include "pauli_lab/variational.hpp"

#include <functional>

namespace plab {

enum class AcceptanceLevel { full, fast };

inline std::string to_string(AcceptanceLevel l) { return l == AcceptanceLevel::full ? "full" : "fast"; }

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<CheckRecord> checks;
  double seconds = 0.0;

  bool pass() const {
    if (checks.empty()) return false;
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  json to_json() const {
    json j;
    j["id"] = id;
    j["title"] = title;
    j["pass"] = pass();
    j["seconds"] = seconds;
    json cs = json::array();
    for (const auto& c : checks) cs.push_back(c.to_json());
    j["checks"] = cs;
    return j;
  }
};

namespace acceptance {

inline constexpr int criterion_count = 9;

inline const char* title(int id) {
  switch (id) {
    case 1: return "box Fisher minimum and excited family";
    case 2: return "functional equivalence";
    case 3: return "evidence structure";
    case 4: return "Gaussian Fisher oracle";
    case 5: return "Pauli solver unitarity and spectroscopy";
    case 6: return "classical correspondence";
    case 7: return "Ehrenfest checks";
    case 8: return "gradient correctness";
    case 9: return "statistical sampling";
  }
  return "unknown";
}

// ----- 1 --------------------------------------------------------------------

inline void box_minimum(AcceptanceLevel level, std::vector<CheckRecord>& out) {
  const double L = 1.0;
  const int cells = level == AcceptanceLevel::full ? 512 : 128;
  MinimizationProblem pr{Grid::line(L, cells, Boundary::dirichlet_zero)};
  pr.objective = ObjectiveKind::fisher;
  const double ground = std::pow(2.0 * pi / L, 2);
  Stopwatch sw;
  const auto r = minimize(pr);
  const double secs = sw.seconds();
  double dev = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double x = pr.grid.coordinate(0, i);
    dev = std::max(dev, std::abs(r.fields.P[i] - 2.0 / L * std::pow(std::sin(pi * x / L), 2)));
  }
  out.push_back(check_equal("ground.converged", r.converged ? 1.0 : 0.0, 1.0));
  out.push_back(check_less("ground.fisher_rel_error", std::abs(r.objective - ground) / ground, 1e-2));
  out.push_back(check_less("ground.density_max_rel_error", dev / (2.0 / L), 2e-2));
  out.push_back(check_less("ground.runtime_s", secs, 30.0));
  const auto scan = spectrum_scan(pr, 3);
  out.push_back(check_equal("spectrum.modes_found", static_cast<double>(scan.modes.size()), 3.0));
  for (std::size_t n = 1; n <= scan.modes.size(); ++n) {
    const double exact = std::pow(2.0 * pi * n / L, 2);
    out.push_back(check_less("spectrum.mode" + std::to_string(n) + "_rel_error",
                             std::abs(scan.modes[n - 1].objective - exact) / exact, 1e-2));
  }
}

// ----- 2 --------------------------------------------------------------------

inline void functional_equivalence(AcceptanceLevel, std::vector<CheckRecord>& out) {
  Stopwatch sw;
  const auto c = PhysicalConstants::natural();
  // coarser grids alias the products in Q_spinor; both levels use 24 cells
  const int n = 24;
  const Grid g = Grid::cube(2 * pi, n, Boundary::periodic);
  double worst_rel = 0.0, worst_spinor = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cfg = random_configuration(g, 1000 + seed);
    EvalOptions o;
    o.mode = DerivativeMode::spectral;
    o.dt = cfg.dt;
    const auto r = equivalence_residual(cfg.polar, cfg.em, c, o);
    worst_rel = std::max(worst_rel, r.rel);
    worst_spinor = std::max(worst_spinor, r.spinor_rel);
  }
  out.push_back(check_less("spectral.max_rel_qpolar_vs_functional", worst_rel, 1e-8, "20 seeded field sets"));
  out.push_back(check_less("spectral.max_rel_qspinor_vs_qpolar", worst_spinor, 1e-8, "20 seeded field sets"));
  std::vector<double> res;
  for (int m : {32, 64, 128}) {
    const Grid s = Grid::square(2 * pi, m, Boundary::periodic);
    RandomConfigSpec spec;
    spec.snapshots = 1;
    spec.em_mode = DerivativeMode::central;
    const auto cfg = random_configuration(s, 5, spec);
    EvalOptions o;
    o.dt = cfg.dt;
    res.push_back(equivalence_residual(cfg.polar, cfg.em, c, o).spinor_abs);
  }
  out.push_back(check_within("central.refinement_ratio_1", res[0] / res[1], 3.5, 4.5));
  out.push_back(check_within("central.refinement_ratio_2", res[1] / res[2], 3.5, 4.5));
  out.push_back(check_less("runtime_s", sw.seconds(), 60.0));
}

// ----- 3 --------------------------------------------------------------------

inline IProbTable gaussian_line_table(double sigma, int cells = 200) {
  const Grid g = Grid::line(cells, cells, Boundary::periodic);
  return make_table(g, {Vec3{cells / 2.0, 0, 0}},
                    [&](int, int, Vec3 d) { return std::exp(-d[0] * d[0] / (2 * sigma * sigma)); });
}

inline IProbTable skewed_line_table() {
  const Grid g = Grid::line(200, 200, Boundary::periodic);
  return make_table(g, {Vec3{100, 0, 0}}, [](int, int k, Vec3 d) {
    const double x = d[0];
    return (k == 1 ? 1.0 : 0.6) * (std::exp(-x * x / 128.0) + 0.5 * std::exp(-(x - 12) * (x - 12) / 32.0));
  });
}

inline void evidence_structure(AcceptanceLevel, std::vector<CheckRecord>& out) {
  const double N = 1e6, eps = 0.4;
  double first = 0.0, curv = 0.0;
  for (const auto& t : {gaussian_line_table(10.0), skewed_line_table()}) {
    const auto terms = evidence_taylor_terms(t, expected_counts(t, N), {Vec3{eps, 0, 0}});
    first = std::max(first, std::abs(terms.first_order));
    curv = std::max(curv, std::abs(terms.second_order_curvature));
  }
  out.push_back(check_at_most("taylor.first_order_over_N", first / N, 1e-12));
  out.push_back(check_at_most("taylor.curvature_over_N", curv / N, 1e-12));
  const auto t = skewed_line_table();
  const auto counts = expected_counts(t, N);
  auto residual = [&](double e) {
    const std::vector<Vec3> s{Vec3{e, 0, 0}};
    return std::abs(evidence(t, counts, s) + 0.5 * evidence_taylor_terms(t, counts, s).second_order_square);
  };
  out.push_back(check_within("cubic_residual_halving_factor", residual(eps) / residual(eps / 2), 6.0, 10.0));
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-0.5, 0.5), w(2.0, 6.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Grid g = Grid::square(24, 24, Boundary::periodic);
    const double sx = w(rng), sy = w(rng), tilt = u(rng);
    const auto tab = make_table(g, {Vec3{12, 12, 0}, Vec3{11, 13, 0}}, [&](int tau, int k, Vec3 d) {
      const double x = d[0] + tilt * d[1];
      return (k == 1 ? 1.0 + tau : 1.5) * std::exp(-x * x / (2 * sx * sx) - d[1] * d[1] / (2 * sy * sy));
    });
    const std::vector<Vec3> shifts{Vec3{u(rng), u(rng), 0}, Vec3{u(rng), u(rng), 0}};
    const auto b = cauchy_schwarz_bound(tab, shifts, 1000.0);
    worst = std::max(worst, b.ev_second_order / b.bound);
  }
  out.push_back(check_at_most("cauchy_schwarz.max_ratio_100_pairs", worst, 1.0 + 1e-12));
}

// ----- 4 --------------------------------------------------------------------

inline void gaussian_fisher(AcceptanceLevel, std::vector<CheckRecord>& out) {
  const double sigma = 10.0;  // lattice spacing 1
  const double discrete = discrete_fisher(gaussian_line_table(sigma));
  out.push_back(check_less("discrete_rel_error", std::abs(discrete * sigma * sigma - 1.0), 2e-2));
  const double s = 1.0, h = s / 10.0;
  const Grid g = Grid::line(200 * h, 200, Boundary::periodic);
  PolarFields p(g);
  p.P = normalize(ScalarField::sample(g, [&](Vec3 x) { return std::exp(-std::pow(x[0] - 10.0, 2) / (2 * s * s)); }));
  const std::vector<PolarFields> seq{p};
  out.push_back(check_less("continuum_rel_error", std::abs(fisher_continuum(seq) * s * s - 1.0), 2e-2,
                           "second-order stencils, sigma = 10 cells"));
}

// ----- 5 --------------------------------------------------------------------

inline SolverConfig neutral_solver(const Grid& g, double mu, Scheme s, double dt) {
  SolverConfig cfg;
  cfg.scheme = s;
  cfg.dt = dt;
  cfg.consts = PhysicalConstants::neutral(1.0, 1.0, mu);
  cfg.neutral = true;
  cfg.em = EMConfiguration(g);
  return cfg;
}

inline void set_uniform(VectorField3& f, Vec3 v) {
  for (int a = 0; a < 3; ++a) f.components[a].assign(f.size(), v[a]);
}

inline SpinorField uniform_spinor(const Grid& g, Complex up, Complex down) {
  SpinorField f(g);
  const double s = 1.0 / std::sqrt(g.volume() * (std::norm(up) + std::norm(down)));
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.up[i] = s * up;
    f.down[i] = s * down;
  }
  return f;
}

inline std::vector<double> zero_crossings(const std::vector<double>& t, const std::vector<double>& v) {
  std::vector<double> z;
  for (std::size_t k = 1; k < v.size(); ++k)
    if ((v[k - 1] > 0.0) != (v[k] > 0.0)) z.push_back(t[k - 1] + (t[k] - t[k - 1]) * v[k - 1] / (v[k - 1] - v[k]));
  return z;
}

inline void pauli_unitarity(AcceptanceLevel level, std::vector<CheckRecord>& out) {
  const bool full = level == AcceptanceLevel::full;
  for (Scheme s : {Scheme::split_operator, Scheme::crank_nicolson}) {
    const std::string tag = to_string(s);
    {
      const int n = full ? 256 : 128;
      const Grid g = s == Scheme::split_operator ? Grid::line(20.0, n, Boundary::periodic)
                                                 : Grid::line(20.0, n + 1, Boundary::dirichlet_zero);
      auto cfg = neutral_solver(g, 0.5, s, 0.005);
      cfg.em.u = ScalarField::sample(g, [](Vec3 x) { return 0.05 * (x[0] - 10.0) * (x[0] - 10.0); });
      std::mt19937_64 rng(21);
      RandomFieldSpec spec;
      spec.amplitude = 1.0;
      cfg.em.B = random_smooth_vector_field(g, rng, spec);
      PauliState st{gaussian_packet(g, {10.0, 0.0, 0.0}, 1.0, {1.0, 0.0, 0.0}, 0.8, Complex(0.0, 0.6)), 0.0};
      const auto tr = evolve(st, cfg, 1000 * cfg.dt, 10);
      double drift = 0.0;
      for (const auto& r : tr.records) drift = std::max(drift, std::abs(r.norm - 1.0));
      out.push_back(check_less(tag + ".norm_drift_1000_steps", drift, 1e-10));
    }
    {
      const Grid g = Grid::line(1.0, 8, Boundary::periodic);
      const double mu = 0.6, B = 0.9, omega = 2.0 * mu * B, period = 2.0 * pi / omega;
      auto cfg = neutral_solver(g, mu, s, period / 200.0);
      set_uniform(cfg.em.B, {0.0, 0.0, B});
      const auto tr = evolve({uniform_spinor(g, 1.0, 1.0), 0.0}, cfg, 2000 * cfg.dt, 1);
      std::vector<double> t, sx;
      for (const auto& r : tr.records) {
        t.push_back(r.t);
        sx.push_back(r.spin[0]);
      }
      const auto z = zero_crossings(t, sx);
      const double measured = z.size() >= 2 ? pi * (z.size() - 1) / (z.back() - z.front()) : 0.0;
      out.push_back(check_less(tag + ".precession_rel_error_10_periods", std::abs(measured - omega) / omega, 1e-3));
    }
    {
      const double sigma = 1.0, T = 4.0;
      const Grid g = s == Scheme::split_operator ? Grid::line(60.0, full ? 512 : 256, Boundary::periodic)
                                                 : Grid::line(60.0, full ? 1201 : 601, Boundary::dirichlet_zero);
      auto cfg = neutral_solver(g, 0.0, s, 0.01);
      PauliState st{gaussian_packet(g, {30.0, 0.0, 0.0}, sigma, {0.0, 0.0, 0.0}, 1.0, 0.0), 0.0};
      const auto tr = evolve(st, cfg, T, 400, 400);
      const double expected = sigma * sigma + std::pow(T / (2.0 * sigma), 2);
      out.push_back(check_less(tag + ".spreading_rel_error",
                               std::abs(position_variance(tr.snapshots.back().phi, 0) - expected) / expected, 5e-3));
    }
  }
}

// ----- 6 --------------------------------------------------------------------

inline double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(length(cross(a, b)), detail::dotv(a, b)); }

inline void classical_correspondence(AcceptanceLevel, std::vector<CheckRecord>& out) {
  {
    const Grid g = Grid::line(1.0, 8, Boundary::periodic);
    const double mu = 0.6;
    const Vec3 B{0.3, -0.5, 0.9};
    auto cfg = neutral_solver(g, mu, Scheme::split_operator, 1.0);
    set_uniform(cfg.em.B, B);
    const double gamma_cl = classical_gamma(cfg.consts);
    const double period = 2.0 * pi / (gamma_cl * length(B));
    cfg.dt = period / 500;
    const double th = 1.1, ph = 0.4;
    const auto f = uniform_spinor(g, std::cos(th / 2), std::polar(std::sin(th / 2), ph));
    const auto q = evolve({f, 0.0}, cfg, 5000 * cfg.dt, 10);
    const Vec3 m0{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
    const auto cl = torque_evolve(m0, constant_field(B), gamma_cl, 5000 * cfg.dt, cfg.dt);
    double worst = 0.0;
    for (std::size_t k = 0; k < q.records.size(); ++k)
      for (int a = 0; a < 3; ++a) worst = std::max(worst, std::abs(q.records[k].spin[a] - cl.m[10 * k][a]));
    out.push_back(check_less("spin_vs_torque_max_abs_10_periods", worst, 1e-3, "gamma_cl = 2 mu / hbar"));
  }
  {
    const Vec3 B{0.5, -0.4, 1.0};
    const double gamma = 1.1, phi0 = 0.7, z0 = 0.2;
    const auto c = canonical_evolve(phi0, z0, constant_field(B), gamma, 30.0, 0.001);
    const auto t = torque_evolve(moment_from_canonical(phi0, z0), constant_field(B), gamma, 30.0, 0.001,
                                 TorqueMethod::exact_rotation);
    double worst = 0.0;
    for (std::size_t k = 0; k < c.t.size(); ++k)
      worst = std::max(worst, angle_between(moment_from_canonical(c.phi[k], c.z[k]), t.m[k]));
    out.push_back(check_less("torque_vs_canonical_max_angle_rad", worst, 1e-6));
  }
  {
    const FieldOfTime B = [](double t) { return Vec3{0.3 + 0.2 * std::sin(t), -0.5, 1.1 * std::cos(0.7 * t)}; };
    const auto tr = torque_evolve(Vec3{0.0, 0.6, 0.8}, B, 1.3, 100.0, 0.01);
    double drift = 0.0;
    for (const auto& m : tr.m) drift = std::max(drift, std::abs(length(m) - 1.0));
    out.push_back(check_less("unit_length_drift_1e4_steps", drift, 1e-9));
  }
  {
    const Vec3 B{0.6, 0.2, 0.8};
    const double gamma = 1.4;
    const auto tr = canonical_evolve(0.3, 0.1, constant_field(B), gamma, 20.0, 0.002);
    const double H0 = moment_hamiltonian(tr.phi[0], tr.z[0], B, gamma);
    double drift = 0.0;
    for (std::size_t k = 0; k < tr.t.size(); ++k)
      drift = std::max(drift, std::abs(moment_hamiltonian(tr.phi[k], tr.z[k], B, gamma) - H0));
    out.push_back(check_less("moment_energy_rel_drift_1e4_steps", drift / std::abs(H0), 1e-8));
  }
}

// ----- 7 --------------------------------------------------------------------

inline SternGerlachSetup sg_setup(AcceptanceLevel level, double b) {
  SternGerlachSetup s;
  const bool full = level == AcceptanceLevel::full;
  s.grid = Grid::line(80.0, full ? 2048 : 1024, Boundary::periodic);
  s.consts = PhysicalConstants::neutral(1.0, 1.0, 0.5);
  s.z0 = 40.0;
  s.sigma = 1.0;
  s.b = b;
  s.B0 = 25.0;
  s.flight_time = 3.0;
  s.dt = full ? 0.002 : 0.004;
  s.record_every = full ? 50 : 25;
  return s;
}

inline void ehrenfest(AcceptanceLevel level, std::vector<CheckRecord>& out) {
  {
    const Grid g = Grid::line(80.0, level == AcceptanceLevel::full ? 1024 : 512, Boundary::periodic);
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
    double worst = 0.0;
    for (const auto& r : tr.records) {
      if (r.t == 0.0) continue;
      const double shift = cfg.consts.q * E / (2.0 * cfg.consts.m) * r.t * r.t;
      worst = std::max(worst, std::abs(r.mean_position[0] - x0 - shift) / shift);
    }
    out.push_back(check_less("uniform_E.parabola_max_rel_error", worst, 1e-3));
  }
  {
    const auto s = sg_setup(level, 2.0);
    const auto r = stern_gerlach(s);
    const double mu = s.consts.spin_coupling();
    double worst = 0.0;
    for (const auto& rec : r.records) {
      if (rec.t == 0.0) continue;
      const double expected = mu * s.b / s.consts.m * rec.t * rec.t;
      worst = std::max(worst, std::abs(rec.separation - expected) / expected);
    }
    out.push_back(check_less("stern_gerlach.separation_max_rel_error", worst, 1e-2));
  }
  {
    const auto r = stern_gerlach(sg_setup(level, 0.0));
    double worst = 0.0;
    for (const auto& rec : r.records) worst = std::max(worst, std::abs(rec.separation));
    out.push_back(check_equal("stern_gerlach.zero_gradient_max_separation", worst, 0.0));
  }
}

// ----- 8 --------------------------------------------------------------------

inline void gradient_correctness(AcceptanceLevel, std::vector<CheckRecord>& out) {
  for (auto mode : {DerivativeMode::central, DerivativeMode::spectral}) {
    const Grid g = Grid::cube(2 * pi, 8, Boundary::periodic);
    RandomConfigSpec spec;
    spec.dt = 0.05;
    spec.em_mode = mode;
    auto cfg = random_configuration(g, 55, spec);
    PhysicalConstants c = PhysicalConstants::natural();
    c.gamma = 0.8;
    EvalOptions o;
    o.dt = cfg.dt;
    o.mode = mode;
    o.require_normalized = false;
    const auto grad = total_functional_gradient(cfg.polar, cfg.em, c, o);
    double gmax = 0.0;
    for (const auto& gp : grad)
      for (const auto* f : {&gp.P, &gp.theta, &gp.S, &gp.phi}) gmax = std::max(gmax, max_abs(f->values));
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pick_cell(0, g.size() - 1);
    std::uniform_int_distribution<int> pick_field(0, 3), pick_t(0, spec.snapshots - 1);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int fi = pick_field(rng), t = pick_t(rng);
      const std::size_t i = pick_cell(rng);
      auto member = [&](PolarFields& p) -> double& {
        switch (fi) {
          case 0: return p.P[i];
          case 1: return p.theta[i];
          case 2: return p.S[i];
          default: return p.phi[i];
        }
      };
      double& x = member(cfg.polar[t]);
      const double x0 = x, h = 1e-5 * std::max(1.0, std::abs(x0)) * (fi == 0 ? 1e-2 : 1.0);
      x = x0 + h;
      const double fp = total_functional(cfg.polar, cfg.em, c, o);
      x = x0 - h;
      const double fm = total_functional(cfg.polar, cfg.em, c, o);
      x = x0;
      const double fd = (fp - fm) / (2 * h);
      PolarFields gt = grad[t];
      const double an = member(gt);
      worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(an), 1e-6 * gmax));
    }
    out.push_back(check_less(to_string(mode) + ".max_rel_error_100_components", worst, 1e-5));
  }
}

// ----- 9 --------------------------------------------------------------------

inline double max_binomial_z(const IProbTable& t, const DetectionDataset& d) {
  double worst = 0.0;
  for (int tau = 0; tau < t.times; ++tau)
    for (int c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < t.cells(); ++j) {
        const double p = t.at(tau, c, j), n = static_cast<double>(d.count(tau, c, j));
        if (p <= 0.0) {
          if (n != 0.0) return std::numeric_limits<double>::infinity();
          continue;
        }
        const double sd = std::sqrt(d.N * p * (1.0 - p));
        worst = std::max(worst, std::abs(n - d.N * p) / sd);
      }
  return worst;
}

inline void statistical_sampling(AcceptanceLevel, std::vector<CheckRecord>& out) {
  const std::int64_t N = 1000000;
  const Grid g = Grid::line(4, 4, Boundary::periodic);
  const auto uniform = make_table(g, {Vec3{0, 0, 0}}, [](int, int, Vec3) { return 1.0; });
  const Grid gl = Grid::line(60, 60, Boundary::periodic);
  const auto gauss = make_table(gl, {Vec3{30, 0, 0}, Vec3{27, 0, 0}}, [](int, int k, Vec3 d) {
    return (k == 1 ? 1.0 : 0.4) * std::exp(-d[0] * d[0] / 50.0);
  });
  struct Case {
    const char* name;
    const IProbTable* table;
    std::uint64_t seed;
  };
  for (const Case& c : {Case{"uniform", &uniform, 42}, Case{"gaussian_two_slices", &gauss, 7}}) {
    const auto a = sample_dataset(*c.table, N, c.seed);
    const auto b = sample_dataset(*c.table, N, c.seed);
    out.push_back(check_at_most(std::string(c.name) + ".max_cell_z_score", max_binomial_z(*c.table, a), 4.0,
                                "N = 1e6, binomial sigma per cell"));
    out.push_back(check_equal(std::string(c.name) + ".rerun_byte_identical", dataset_csv(a) == dataset_csv(b) ? 1.0 : 0.0, 1.0));
  }
}

}  // namespace acceptance

inline CriterionResult run_criterion(int id, AcceptanceLevel level) {
  if (id < 1 || id > acceptance::criterion_count)
    throw std::invalid_argument("no acceptance criterion " + std::to_string(id));
  CriterionResult r;
  r.id = id;
  r.title = acceptance::title(id);
  Stopwatch sw;
  try {
    switch (id) {
      case 1: acceptance::box_minimum(level, r.checks); break;
      case 2: acceptance::functional_equivalence(level, r.checks); break;
      case 3: acceptance::evidence_structure(level, r.checks); break;
      case 4: acceptance::gaussian_fisher(level, r.checks); break;
      case 5: acceptance::pauli_unitarity(level, r.checks); break;
      case 6: acceptance::classical_correspondence(level, r.checks); break;
      case 7: acceptance::ehrenfest(level, r.checks); break;
      case 8: acceptance::gradient_correctness(level, r.checks); break;
      default: acceptance::statistical_sampling(level, r.checks); break;
    }
  } catch (const std::exception& e) {
    r.checks.push_back(check_failed("execution", e.what()));
  }
  r.seconds = sw.seconds();
  return r;
}

using CriterionCallback = std::function<void(const CriterionResult&)>;

inline std::vector<CriterionResult> run_acceptance(AcceptanceLevel level, const std::vector<int>& ids,
                                                   const CriterionCallback& on_done = {}) {
  std::vector<CriterionResult> out;
  for (int id : ids) {
    out.push_back(run_criterion(id, level));
    if (on_done) on_done(out.back());
  }
  return out;
}

inline std::vector<int> all_criteria() {
  std::vector<int> ids;
  for (int i = 1; i <= acceptance::criterion_count; ++i) ids.push_back(i);
  return ids;
}

}  // namespace plab
