#pragma once

// Scenario execution. Each kind writes its data files into a staging
// directory next to the target; report.json goes last and the staging
// directory is then renamed onto output_dir.

#include "pauli_lab/acceptance.hpp"
#include "pauli_lab/scenario.hpp"

#include <random>

namespace plab {

/// Failure while executing a valid scenario. Nothing is written.
class ScenarioRuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputFile {
  std::string name;
  std::uintmax_t bytes = 0;
  std::string fnv1a64;
};

inline std::string fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunReport {
  Scenario scenario;
  double wall_time_s = 0.0;
  std::vector<CheckRecord> checks;
  std::vector<OutputFile> outputs;
  json summary = json::object();
  std::filesystem::path directory;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
  }
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const CheckRecord& c) { return !c.pass; }));
  }

  json to_json() const {
    json j;
    j["artifact"] = "pauli_lab";
    j["version"] = artifact_version;
    j["scenario"] = scenario.to_json();
    j["units"] = scenario.units().to_json();
    j["wall_time_s"] = wall_time_s;
    j["pass"] = pass();
    j["failures"] = failures();
    json cs = json::array();
    for (const auto& c : checks) cs.push_back(c.to_json());
    j["checks"] = cs;
    j["summary"] = summary;
    json os = json::array();
    for (const auto& o : outputs) os.push_back({{"file", o.name}, {"bytes", o.bytes}, {"fnv1a64", o.fnv1a64}});
    j["outputs"] = os;
    return j;
  }
};

using ProgressCallback = std::function<void(const std::string&)>;

struct RunOptions {
  ProgressCallback progress;
};

namespace run_detail {

namespace fs = std::filesystem;

class Stage {
 public:
  explicit Stage(fs::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, const std::string& body) { add(name, [&](const fs::path& p) { write_text(p, body); }); }
  void csv(const std::string& name, const CsvWriter& w) { text(name, w.str()); }
  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
  void dataset(const std::string& name, const DetectionDataset& d) { text(name, dataset_csv(d)); }
  template <class Field>
  void field(const std::string& name, const Field& f, const json& meta = json::object()) {
    add(name, [&](const fs::path& p) { write_field(p, f, meta); });
    names_.push_back(name + ".json");
  }

  std::vector<OutputFile> manifest() const {
    std::vector<OutputFile> out;
    for (const auto& n : names_) {
      const auto data = read_text(dir_ / n);
      out.push_back({n, data.size(), fnv1a64(data)});
    }
    return out;
  }

 private:
  template <class F>
  void add(const std::string& name, F&& write) {
    write(dir_ / name);
    names_.push_back(name);
  }
  fs::path dir_;
  std::vector<std::string> names_;
};

struct Context {
  const Scenario& s;
  Stage& out;
  RunReport& report;
  const RunOptions& opt;

  void progress(const std::string& msg) const {
    if (opt.progress) opt.progress(msg);
  }
};

inline Grid box_grid(int dim, double L, int cells, Boundary b) {
  return Grid(dim, {L, L, L}, {cells, cells, cells}, b);
}

inline Vec3 centre_of(const Grid& g) {
  Vec3 c{0.0, 0.0, 0.0};
  for (int a = 0; a < g.dim(); ++a) c[a] = g.periodic() ? 0.5 * g.extent(a) : 0.5 * (g.cells(a) - 1) * g.spacing(a);
  return c;
}

inline Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const Vec3 nxv = cross(axis, v);
  const double nv = detail::dotv(axis, v);
  Vec3 r;
  for (int a = 0; a < 3; ++a) r[a] = v[a] * c + nxv[a] * s + axis[a] * nv * (1.0 - c);
  return r;
}

/// Exact precession under dm/dt = gamma m x B with static B.
inline Vec3 precessed(const Vec3& m0, const Vec3& B, double gamma, double t) {
  const double b = length(B);
  if (b == 0.0) return m0;
  return rotate(m0, scale(B, 1.0 / b), -gamma * b * t);
}

inline PhysicalConstants species_constants(const Scenario& s) {
  if (s.text("species") == "neutral") return PhysicalConstants::neutral(s.number("hbar"), s.number("mass"), s.number("mu"));
  return PhysicalConstants::pauli_identification(s.number("hbar"), s.number("mass"), s.number("charge"));
}

// ----- i-prob tables ---------------------------------------------------------

inline IProbTable scenario_table(const Scenario& s) {
  const int cells = static_cast<int>(s.integer("cells"));
  const double L = s.number("length"), sigma = s.number("sigma"), f = s.number("plus_fraction");
  const int slices = static_cast<int>(s.integer("slices"));
  const Grid g = Grid::line(L, cells, Boundary::periodic);
  std::vector<Vec3> X;
  for (int tau = 0; tau < slices; ++tau) X.push_back({0.5 * L + tau * s.number("drift"), 0.0, 0.0});
  return make_table(g, X, [&](int, int k, Vec3 d) {
    return (k == 1 ? f : 1.0 - f) * std::exp(-d[0] * d[0] / (2.0 * sigma * sigma));
  });
}

inline void run_sample(Context& c) {
  const auto table = scenario_table(c.s);
  const auto N = static_cast<std::int64_t>(c.s.integer("N"));
  const auto d = sample_dataset(table, N, c.s.seed);
  c.out.dataset("dataset.csv", d);
  CsvWriter w({"tau", "color", "cell", "x", "probability", "count", "frequency"});
  const double min_expected = 10.0;
  double worst = 0.0;
  std::size_t tested = 0;
  bool totals_ok = true;
  for (int tau = 0; tau < table.times; ++tau) {
    std::int64_t total = 0;
    for (int ci = 0; ci < 2; ++ci)
      for (std::size_t j = 0; j < table.cells(); ++j) {
        const double p = table.at(tau, ci, j), n = static_cast<double>(d.count(tau, ci, j));
        total += d.count(tau, ci, j);
        w.row({double(tau), double(color_value(ci)), double(j), table.lattice.coordinate(0, static_cast<int>(j)), p, n,
               N > 0 ? n / N : 0.0});
        if (N * p >= min_expected && p < 1.0) {
          ++tested;
          worst = std::max(worst, std::abs(n - N * p) / std::sqrt(N * p * (1.0 - p)));
        }
      }
    totals_ok = totals_ok && total == N;
  }
  c.out.csv("frequencies.csv", w);
  c.report.checks.push_back(check_equal("counts.slice_totals_equal_N", totals_ok ? 1.0 : 0.0, 1.0));
  if (tested > 0)
    c.report.checks.push_back(check_at_most("counts.max_cell_z_score", worst, 4.0,
                                            "binomial sigma, cells with N P >= 10 (" + std::to_string(tested) + " cells)"));
  c.report.summary = {{"events_per_slice", N}, {"slices", table.times}, {"cells_tested", tested}, {"max_z", worst}};
}

inline void run_evidence(Context& c) {
  const auto table = scenario_table(c.s);
  const double N = c.s.number("N");
  const bool expected = c.s.text("counts") == "expected";
  std::vector<double> counts;
  if (expected) {
    counts = expected_counts(table, N);
  } else {
    const auto d = sample_dataset(table, static_cast<std::int64_t>(std::llround(N)), c.s.seed);
    c.out.dataset("dataset.csv", d);
    counts = d.weights();
  }
  CsvWriter w({"epsilon", "evidence", "first_order", "second_order_square", "second_order_curvature", "truncated",
               "remainder", "cs_second_order", "cs_bound"});
  double first = 0.0, curv = 0.0, cs = 0.0;
  std::vector<double> remainder;
  const int levels = static_cast<int>(c.s.integer("levels"));
  for (int k = 0; k < levels; ++k) {
    const double e = c.s.number("epsilon") / std::pow(2.0, k);
    const std::vector<Vec3> shifts(table.times, Vec3{e, 0.0, 0.0});
    const double ev = evidence(table, counts, shifts);
    const auto t = evidence_taylor_terms(table, counts, shifts);
    const auto b = cauchy_schwarz_bound(table, shifts, N);
    remainder.push_back(std::abs(ev - t.truncated()));
    first = std::max(first, std::abs(t.first_order));
    curv = std::max(curv, std::abs(t.second_order_curvature));
    cs = std::max(cs, b.ev_second_order / b.bound);
    w.row({e, ev, t.first_order, t.second_order_square, t.second_order_curvature, t.truncated(), remainder.back(),
           b.ev_second_order, b.bound});
  }
  c.out.csv("evidence.csv", w);
  if (expected) {
    c.report.checks.push_back(check_at_most("taylor.first_order_over_N", first / N, 1e-12, "counts N P"));
    c.report.checks.push_back(check_at_most("taylor.curvature_over_N", curv / N, 1e-12, "counts N P"));
  }
  if (levels >= 2) {
    const double r = remainder[levels - 2] / remainder[levels - 1];
    c.report.checks.push_back(check_at_least("taylor.remainder_halving_factor", r, 6.0, "O(eps^3) remainder, last halving"));
  }
  c.report.checks.push_back(check_at_most("cauchy_schwarz.max_ratio", cs, 1.0 + 1e-12));
  c.report.summary = {{"counts", c.s.text("counts")}, {"levels", levels}};
}

inline void run_fisher_discrete(Context& c) {
  const auto table = scenario_table(c.s);
  const double sigma = c.s.number("sigma");
  const double I = discrete_fisher(table), oracle = table.times / (sigma * sigma);
  CsvWriter w({"slices", "sigma", "spacing", "discrete_fisher", "gaussian_oracle", "rel_error"});
  const double rel = std::abs(I - oracle) / oracle;
  w.row({double(table.times), sigma, table.lattice.spacing(0), I, oracle, rel});
  c.out.csv("fisher.csv", w);
  c.report.checks.push_back(check_less("fisher.rel_error_vs_slices_over_sigma2", rel, 2e-2));
  c.report.summary = {{"discrete_fisher", I}, {"oracle", oracle}};
}

// ----- variational -----------------------------------------------------------

inline void run_box_minimize(Context& c) {
  const double L = c.s.number("length");
  const int cells = static_cast<int>(c.s.integer("cells"));
  const int modes = static_cast<int>(c.s.integer("modes"));
  MinimizationProblem pr{Grid::line(L, cells, Boundary::dirichlet_zero)};
  pr.objective = ObjectiveKind::fisher;
  pr.multistart = static_cast<int>(c.s.integer("multistart"));
  pr.gradient_tolerance = c.s.number("gradient_tolerance");
  pr.max_iterations = static_cast<int>(c.s.integer("max_iterations"));
  pr.seed = c.s.seed;
  std::vector<SpectrumEntry> found;
  if (modes == 1) {
    const auto r = minimize(pr);
    found.push_back({r.objective, r.fields, r.converged, r.iterations});
  } else {
    found = spectrum_scan(pr, modes).modes;
  }
  CsvWriter m({"mode", "objective", "exact", "rel_error", "converged", "iterations"});
  std::vector<std::string> cols{"x"};
  for (std::size_t n = 1; n <= found.size(); ++n) {
    cols.push_back("P_" + std::to_string(n));
    cols.push_back("exact_" + std::to_string(n));
  }
  CsvWriter d(cols);
  for (int i = 0; i < cells; ++i) {
    const double x = pr.grid.coordinate(0, i);
    std::vector<double> row{x};
    for (std::size_t n = 1; n <= found.size(); ++n) {
      row.push_back(found[n - 1].fields.P[i]);
      row.push_back(2.0 / L * std::pow(std::sin(n * pi * x / L), 2));
    }
    d.row(row);
  }
  c.report.checks.push_back(check_equal("modes_found", double(found.size()), double(modes)));
  for (std::size_t n = 1; n <= found.size(); ++n) {
    const double exact = std::pow(2.0 * pi * n / L, 2);
    const double rel = std::abs(found[n - 1].objective - exact) / exact;
    m.row({double(n), found[n - 1].objective, exact, rel, found[n - 1].converged ? 1.0 : 0.0, double(found[n - 1].iterations)});
    const std::string tag = "mode" + std::to_string(n);
    c.report.checks.push_back(check_equal(tag + ".converged", found[n - 1].converged ? 1.0 : 0.0, 1.0));
    c.report.checks.push_back(check_less(tag + ".fisher_rel_error", rel, 1e-2, "exact (2 pi n / L)^2"));
  }
  if (!found.empty()) {
    double dev = 0.0;
    for (int i = 0; i < cells; ++i)
      dev = std::max(dev, std::abs(found[0].fields.P[i] - 2.0 / L * std::pow(std::sin(pi * pr.grid.coordinate(0, i) / L), 2)));
    c.report.checks.push_back(check_less("mode1.density_max_rel_error", dev / (2.0 / L), 2e-2));
    c.out.field("ground_density.bin", found[0].fields.P, {{"name", "P"}, {"mode", 1}});
  }
  c.out.csv("modes.csv", m);
  c.out.csv("density.csv", d);
  c.report.summary = {{"modes", found.size()}};
}

// ----- functional equivalence ------------------------------------------------

/// Carries a configuration drawn on a natural-unit grid onto the unit system.
inline FieldConfiguration scale_configuration(const FieldConfiguration& cfg, const UnitScales& u) {
  if (u.natural) return cfg;
  const Grid& g0 = cfg.polar.front().grid();
  const Grid g(g0.dim(), {g0.extent(0) * u.length, g0.extent(1) * u.length, g0.extent(2) * u.length},
               {g0.cells(0), g0.cells(1), g0.cells(2)}, g0.periodic() ? Boundary::periodic : Boundary::dirichlet_zero);
  auto carry = [&](const ScalarField& f, double k) {
    ScalarField out(g);
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = k * f[i];
    return out;
  };
  auto carry3 = [&](const VectorField3& f, double k) {
    VectorField3 out(g);
    for (int a = 0; a < 3; ++a)
      for (std::size_t i = 0; i < f.size(); ++i) out.components[a][i] = k * f.components[a][i];
    return out;
  };
  const double density = std::pow(u.length, -g0.dim());
  const double potential = u.energy() / u.charge, vector_potential = u.action / (u.charge * u.length);
  FieldConfiguration out;
  out.dt = cfg.dt * u.time();
  for (const auto& p : cfg.polar)
    out.polar.emplace_back(carry(p.P, density), carry(p.theta, 1.0), carry(p.S, u.action), carry(p.phi, 1.0));
  for (const auto& em : cfg.em) {
    EMConfiguration e(g);
    e.phi_pot = carry(em.phi_pot, potential);
    e.A = carry3(em.A, vector_potential);
    e.B = carry3(em.B, u.factor(Dimension::magnetic_field));
    e.E = carry3(em.E, u.factor(Dimension::electric_field));
    e.u = carry(em.u, u.energy());
    out.em.push_back(std::move(e));
  }
  return out;
}

inline void run_equivalence(Context& c) {
  const auto consts = species_constants(c.s);
  const int dim = static_cast<int>(c.s.integer("dim")), n = static_cast<int>(c.s.integer("cells"));
  const auto units = c.s.units();
  CsvWriter w({"field_set", "cells", "q_polar", "functional", "q_spinor", "rel", "spinor_rel", "spinor_abs"});
  if (c.s.text("mode") == "spectral") {
    double worst = 0.0, worst_spinor = 0.0;
    const int sets = static_cast<int>(c.s.integer("field_sets"));
    for (int k = 0; k < sets; ++k) {
      const Grid g = box_grid(dim, 2 * pi, n, Boundary::periodic);
      const auto cfg = scale_configuration(random_configuration(g, c.s.seed + k), units);
      EvalOptions o;
      o.mode = DerivativeMode::spectral;
      o.dt = cfg.dt;
      const auto r = equivalence_residual(cfg.polar, cfg.em, consts, o);
      worst = std::max(worst, r.rel);
      worst_spinor = std::max(worst_spinor, r.spinor_rel);
      w.row({double(k), double(n), r.q_polar, r.total, r.q_spinor, r.rel, r.spinor_rel, r.spinor_abs});
      c.progress("field set " + std::to_string(k + 1) + "/" + std::to_string(sets));
    }
    c.report.checks.push_back(check_less("spectral.max_rel_qpolar_vs_functional", worst, 1e-8));
    c.report.checks.push_back(check_less("spectral.max_rel_qspinor_vs_qpolar", worst_spinor, 1e-8));
  } else {
    std::vector<double> res;
    for (int m : {n, 2 * n, 4 * n}) {
      const Grid g = box_grid(dim, 2 * pi, m, Boundary::periodic);
      RandomConfigSpec spec;
      spec.snapshots = 1;
      spec.em_mode = DerivativeMode::central;
      const auto cfg = scale_configuration(random_configuration(g, c.s.seed, spec), units);
      EvalOptions o;
      o.dt = cfg.dt;
      const auto r = equivalence_residual(cfg.polar, cfg.em, consts, o);
      res.push_back(r.spinor_abs);
      w.row({0.0, double(m), r.q_polar, r.total, r.q_spinor, r.rel, r.spinor_rel, r.spinor_abs});
      c.progress("refinement " + std::to_string(m) + " cells");
    }
    c.report.checks.push_back(check_within("central.refinement_ratio_1", res[0] / res[1], 3.5, 4.5, "second order"));
    c.report.checks.push_back(check_within("central.refinement_ratio_2", res[1] / res[2], 3.5, 4.5, "second order"));
  }
  c.out.csv("equivalence.csv", w);
  c.report.summary = {{"mode", c.s.text("mode")}, {"species", c.s.text("species")}};
}

// ----- Pauli evolution -------------------------------------------------------

inline void run_pauli_evolve(Context& c) {
  const auto& s = c.s;
  const int dim = static_cast<int>(s.integer("dim"));
  const Boundary bc = boundary_from_string(s.text("boundary"));
  const Grid g = box_grid(dim, s.number("length"), static_cast<int>(s.integer("cells")), bc);
  SolverConfig cfg;
  cfg.scheme = scheme_from_string(s.text("scheme"));
  cfg.dt = s.number("dt");
  cfg.consts = species_constants(s);
  cfg.neutral = s.text("species") == "neutral";
  cfg.mode = g.periodic() ? DerivativeMode::spectral : DerivativeMode::central;
  const Vec3 B = s.vec("B"), E = s.vec("E");
  cfg.em = EMConfiguration::uniform(g, B, E);
  const Vec3 centre = centre_of(g);
  const double omega = s.number("trap_frequency"), m = cfg.consts.m, q = cfg.consts.q;
  if (omega > 0.0)
    cfg.em.u = ScalarField::sample(g, [&](Vec3 x) {
      double r2 = 0.0;
      for (int a = 0; a < dim; ++a) r2 += (x[a] - centre[a]) * (x[a] - centre[a]);
      return 0.5 * m * omega * omega * r2;
    });
  if (!cfg.neutral && length(E) > 0.0)
    cfg.time_dependence = [E](double t, EMConfiguration& em) {
      for (int a = 0; a < 3; ++a) em.A.components[a].assign(em.A.components[a].size(), -E[a] * t);
    };
  const Vec3 x0 = s.has("x0") ? s.vec("x0") : centre;
  const Vec3 k0 = s.vec("k0");
  const double th = s.number("spin_theta"), ph = s.number("spin_phi");
  PauliState st{gaussian_packet(g, x0, s.number("sigma"), k0, std::cos(th / 2), std::polar(std::sin(th / 2), ph)), 0.0};
  const int every = static_cast<int>(s.integer("record_every")), snap = static_cast<int>(s.integer("snapshot_every"));
  const long steps = step_count(s.number("duration"), cfg.dt);
  c.progress("evolving " + std::to_string(steps) + " steps");
  // without snapshots requested, keep only the initial and final states
  const auto tr = evolve(st, cfg, s.number("duration"), every, snap > 0 ? snap : static_cast<int>(std::max(1L, steps)));

  // oracles: spin precession in uniform B, Ehrenfest motion of the mean
  const double gamma_cl = classical_gamma(cfg.consts);
  const Vec3 m0{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
  const double qE = cfg.neutral ? 0.0 : q;
  auto mean_oracle = [&](int a, double t) {
    const double v0 = cfg.consts.hbar * k0[a] / m, f = qE * E[a] / m;
    if (omega > 0.0) {
      const double c0 = centre[a] + f / (omega * omega);
      return c0 + (x0[a] - c0) * std::cos(omega * t) + v0 / omega * std::sin(omega * t);
    }
    return x0[a] + v0 * t + 0.5 * f * t * t;
  };
  const Observables first = tr.records.front();
  CsvWriter w({"t", "norm", "x", "y", "z", "sx", "sy", "sz", "mass_up", "mass_down"});
  double drift = 0.0, spin_err = 0.0, mean_err = 0.0;
  for (const auto& r : tr.records) {
    w.row({r.t, r.norm, r.mean_position[0], r.mean_position[1], r.mean_position[2], r.spin[0], r.spin[1], r.spin[2],
           r.mass_up, r.mass_down});
    drift = std::max(drift, std::abs(r.norm - first.norm));
    const Vec3 mc = precessed(m0, B, gamma_cl, r.t);
    for (int a = 0; a < 3; ++a) spin_err = std::max(spin_err, std::abs(r.spin[a] - mc[a]));
    for (int a = 0; a < dim; ++a) mean_err = std::max(mean_err, std::abs(r.mean_position[a] - mean_oracle(a, r.t)));
  }
  c.out.csv("observables.csv", w);
  if (snap > 0) {
    CsvWriter d({"t", "cell", "x", "y", "z", "density_up", "density_down"});
    for (const auto& sn : tr.snapshots) {
      const auto o = observables(sn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.position(i);
        d.row({sn.t, double(i), x[0], x[1], x[2], o.density_up[i], o.density_down[i]});
      }
    }
    c.out.csv("densities.csv", d);
  }
  const PauliState& last = tr.snapshots.back();
  c.out.field("final_state.bin", last.phi, {{"name", "phi"}, {"t", last.t}});
  c.report.checks.push_back(check_less("norm_drift", drift, 1e-10));
  c.report.checks.push_back(check_less("spin_vs_torque_max_abs", spin_err, 1e-3, "gamma_cl = 2 a gamma / hbar"));
  c.report.checks.push_back(check_less("mean_position_max_error_over_sigma", mean_err / s.number("sigma"), 1e-3,
                                       "Ehrenfest oracle for uniform E and harmonic trap"));
  c.report.summary = {{"records", tr.records.size()}, {"gamma_cl", gamma_cl}};
}

inline void run_stern_gerlach(Context& c) {
  const auto& s = c.s;
  SternGerlachSetup sg;
  sg.grid = Grid::line(s.number("length"), static_cast<int>(s.integer("cells")), Boundary::periodic);
  sg.consts = PhysicalConstants::neutral(s.number("hbar"), s.number("mass"), s.number("mu"));
  sg.z0 = s.number("z0");
  sg.sigma = s.number("sigma");
  sg.b = s.number("b");
  sg.B0 = s.number("B0");
  sg.flight_time = s.number("flight_time");
  sg.dt = s.number("dt");
  sg.scheme = scheme_from_string(s.text("scheme"));
  sg.record_every = static_cast<int>(s.integer("record_every"));
  sg.up = s.number("up");
  sg.down = s.number("down");
  sg.edge_fraction = s.number("edge_fraction");
  sg.edge_tolerance = s.number("edge_tolerance");
  SternGerlachResult r;
  try {
    r = stern_gerlach(sg);
  } catch (const BoundaryError& e) {
    c.report.checks.push_back(check_failed("boundary.contained", e.what()));
    c.report.summary = {{"diagnostic", e.what()}};
    return;
  }
  c.report.checks.push_back(check_equal("boundary.contained", 1.0, 1.0));
  const double mu = sg.consts.spin_coupling();
  CsvWriter w({"t", "z_up", "z_down", "separation", "expected", "overlap"});
  double worst = 0.0;
  for (const auto& rec : r.records) {
    const double expected = mu * sg.b / sg.consts.m * rec.t * rec.t;
    w.row({rec.t, rec.z_up, rec.z_down, rec.separation, expected, rec.overlap});
    if (sg.b == 0.0)
      worst = std::max(worst, std::abs(rec.separation));
    else if (rec.t > 0.0)
      worst = std::max(worst, std::abs(rec.separation - expected) / std::abs(expected));
  }
  c.out.csv("separation.csv", w);
  const auto o = observables(r.final_state);
  CsvWriter d({"z", "density_up", "density_down"});
  for (int i = 0; i < sg.grid.cells(0); ++i) d.row({sg.grid.coordinate(0, i), o.density_up[i], o.density_down[i]});
  c.out.csv("final_density.csv", d);
  c.out.field("final_state.bin", r.final_state.phi, {{"name", "phi"}, {"t", r.final_state.t}});
  if (sg.b == 0.0)
    c.report.checks.push_back(check_equal("separation.max_abs_zero_gradient", worst, 0.0));
  else
    c.report.checks.push_back(check_less("separation.max_rel_error", worst, 1e-2, "expected mu b t^2 / m"));
  c.report.summary = {{"final_separation", r.records.back().separation}, {"records", r.records.size()}};
}

// ----- classical --------------------------------------------------------------

inline void run_moment(Context& c) {
  const auto& s = c.s;
  const Vec3 B = s.vec("B");
  const double gamma = s.has("gamma_cl") ? s.number("gamma_cl") : 2.0 * s.number("mu") / s.number("hbar");
  const double th = s.number("theta0"), ph = s.number("phi0"), T = s.number("duration"), dt = s.number("dt");
  const Vec3 m0{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
  const std::string form = s.text("form");
  const bool torque = form != "canonical", canon = form != "torque";
  std::optional<MomentTrajectory> tq;
  std::optional<CanonicalTrajectory> cn;
  if (torque) tq = torque_evolve(m0, constant_field(B), gamma, T, dt, s.text("method") == "rk4" ? TorqueMethod::rk4 : TorqueMethod::exact_rotation);
  if (canon) {
    try {
      cn = canonical_evolve(ph, std::cos(th), constant_field(B), gamma, T, dt);
    } catch (const PoleError& e) {
      c.report.checks.push_back(check_failed("canonical.away_from_poles", e.what()));
    }
  }
  std::vector<std::string> cols{"t"};
  if (tq) cols.insert(cols.end(), {"mx", "my", "mz"});
  if (cn) cols.insert(cols.end(), {"phi", "z", "h_moment"});
  if (tq && cn) cols.push_back("angle_torque_canonical");
  CsvWriter w(cols);
  const std::size_t n = tq ? tq->t.size() : (cn ? cn->t.size() : 0);
  const int every = static_cast<int>(s.integer("record_every"));
  double len = 0.0, err_t = 0.0, err_c = 0.0, h_drift = 0.0, angle = 0.0;
  const double H0 = cn ? moment_hamiltonian(cn->phi[0], cn->z[0], B, gamma) : 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = tq ? tq->t[k] : cn->t[k];
    const Vec3 exact = precessed(m0, B, gamma, t);
    std::vector<double> row{t};
    if (tq) {
      const Vec3& m = tq->m[k];
      row.insert(row.end(), {m[0], m[1], m[2]});
      len = std::max(len, std::abs(length(m) - 1.0));
      err_t = std::max(err_t, acceptance::angle_between(m, exact));
    }
    if (cn) {
      const double H = moment_hamiltonian(cn->phi[k], cn->z[k], B, gamma);
      row.insert(row.end(), {cn->phi[k], cn->z[k], H});
      h_drift = std::max(h_drift, std::abs(H - H0));
      err_c = std::max(err_c, acceptance::angle_between(moment_from_canonical(cn->phi[k], cn->z[k]), exact));
    }
    if (tq && cn) {
      const double a = acceptance::angle_between(tq->m[k], moment_from_canonical(cn->phi[k], cn->z[k]));
      row.push_back(a);
      angle = std::max(angle, a);
    }
    if (k % every == 0 || k + 1 == n) w.row(row);
  }
  c.out.csv("moment.csv", w);
  if (tq) {
    c.report.checks.push_back(check_less("torque.unit_length_drift", len, 1e-9));
    c.report.checks.push_back(check_less("torque.max_angle_vs_closed_form", err_t, 1e-6));
  }
  if (cn) {
    c.report.checks.push_back(check_less("canonical.h_moment_rel_drift", H0 != 0.0 ? h_drift / std::abs(H0) : h_drift, 1e-8));
    c.report.checks.push_back(check_less("canonical.max_angle_vs_closed_form", err_c, 1e-6));
  }
  if (tq && cn) c.report.checks.push_back(check_less("torque_vs_canonical.max_angle", angle, 1e-6));
  c.report.summary = {{"gamma_cl", gamma}, {"steps", n ? n - 1 : 0}};
}

inline void run_lorentz(Context& c) {
  const auto& s = c.s;
  const int dim = static_cast<int>(s.integer("dim"));
  const Grid g = box_grid(dim, s.number("length"), static_cast<int>(s.integer("cells")), boundary_from_string(s.text("boundary")));
  const Vec3 B = s.vec("B"), E = s.vec("E");
  const Vec3 centre = centre_of(g);
  auto em = EMConfiguration::uniform(g, B, E);
  em.phi_pot = ScalarField::sample(g, [&](Vec3 x) {
    double v = 0.0;
    for (int a = 0; a < dim; ++a) v -= E[a] * (x[a] - centre[a]);
    return v;
  });
  const double q = s.number("charge"), m = s.number("mass");
  const ParticleState init{s.has("x0") ? s.vec("x0") : centre, s.vec("v0")};
  ParticleTrajectory tr;
  try {
    tr = lorentz_evolve(init, em, q, m, s.number("duration"), s.number("dt"));
  } catch (const OutOfGridError& e) {
    c.report.checks.push_back(check_failed("trajectory.inside_grid", e.what()));
    c.report.summary = {{"diagnostic", e.what()}};
    return;
  }
  CsvWriter w({"t", "x", "y", "z", "vx", "vy", "vz", "energy"});
  const int every = static_cast<int>(s.integer("record_every"));
  const double E0 = tr.energy.front();
  const double ref = std::max(std::abs(E0), 0.5 * m * detail::dotv(init.v, init.v));
  double drift = 0.0;
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    const auto& st = tr.states[k];
    if (k % every == 0 || k + 1 == tr.t.size()) w.row({tr.t[k], st.x[0], st.x[1], st.x[2], st.v[0], st.v[1], st.v[2], tr.energy[k]});
    drift = std::max(drift, std::abs(tr.energy[k] - E0));
  }
  c.out.csv("trajectory.csv", w);
  c.report.checks.push_back(check_less("energy.rel_drift", ref > 0.0 ? drift / ref : drift, 1e-6));
  const double b2 = detail::dotv(B, B);
  if (length(E) == 0.0 && b2 > 0.0 && q != 0.0) {
    // gyration about the guiding centre x + m v x B / (q B^2)
    const Vec3 n = scale(B, 1.0 / std::sqrt(b2));
    auto perp = [&](const Vec3& v) { return add(v, n, -detail::dotv(v, n)); };
    const Vec3 v_perp = perp(init.v);
    const double r = m * length(v_perp) / (std::abs(q) * std::sqrt(b2));
    if (r > 0.0) {
      const Vec3 gc = add(init.x, cross(init.v, B), m / (q * b2));
      double worst = 0.0;
      for (const auto& st : tr.states) worst = std::max(worst, std::abs(length(perp(add(st.x, gc, -1.0))) - r) / r);
      c.report.checks.push_back(check_less("cyclotron.radius_max_rel_error", worst, 1e-3, "r = m v_perp / |q| B"));
    }
  }
  c.report.summary = {{"steps", tr.t.size() - 1}, {"initial_energy", E0}};
}

// ----- acceptance --------------------------------------------------------------

inline void run_verify_all(Context& c) {
  const auto level = c.s.flag("fast") ? AcceptanceLevel::fast : AcceptanceLevel::full;
  std::vector<int> ids;
  for (const auto& v : c.s.parameters.at("criteria")) ids.push_back(v.get<int>());
  const auto results = run_acceptance(level, ids, [&](const CriterionResult& r) {
    c.progress("criterion " + std::to_string(r.id) + ": " + (r.pass() ? "PASS" : "FAIL"));
  });
  json crit = json::array();
  CsvWriter w({"criterion", "pass", "checks", "seconds"});
  for (const auto& r : results) {
    crit.push_back(r.to_json());
    w.row({double(r.id), r.pass() ? 1.0 : 0.0, double(r.checks.size()), r.seconds});
    for (auto chk : r.checks) {
      chk.name = "criterion" + std::to_string(r.id) + "." + chk.name;
      c.report.checks.push_back(chk);
    }
  }
  c.out.csv("criteria.csv", w);
  c.out.json_file("acceptance.json", {{"level", to_string(level)}, {"criteria", crit}});
  json pass = json::object();
  for (const auto& r : results) pass[std::to_string(r.id)] = r.pass();
  c.report.summary = {{"level", to_string(level)}, {"criteria", pass}};
}

inline void dispatch(Context& c) {
  switch (c.s.kind) {
    case ScenarioKind::sample: run_sample(c); break;
    case ScenarioKind::evidence: run_evidence(c); break;
    case ScenarioKind::fisher_discrete: run_fisher_discrete(c); break;
    case ScenarioKind::box_minimize: run_box_minimize(c); break;
    case ScenarioKind::equivalence: run_equivalence(c); break;
    case ScenarioKind::pauli_evolve: run_pauli_evolve(c); break;
    case ScenarioKind::stern_gerlach: run_stern_gerlach(c); break;
    case ScenarioKind::moment: run_moment(c); break;
    case ScenarioKind::lorentz: run_lorentz(c); break;
    case ScenarioKind::verify_all: run_verify_all(c); break;
  }
}

inline std::string random_tag() {
  std::random_device rd;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
  return buf;
}

inline bool is_run_directory(const fs::path& p) { return fs::is_directory(p) && fs::exists(p / "report.json"); }

}  // namespace run_detail

/// Runs a validated scenario. Output appears under output_dir only when the
/// run completes; a previous run directory there is replaced, anything else
/// is left alone and the run is refused.
inline RunReport run_scenario(const Scenario& s, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  const fs::path target = fs::absolute(s.output_dir).lexically_normal();
  const fs::path name = target.filename().empty() ? target.parent_path().filename() : target.filename();
  const fs::path dir = target.filename().empty() ? target.parent_path() : target;
  if (fs::exists(dir) && !run_detail::is_run_directory(dir))
    throw ScenarioError({"output_dir: " + dir.string() + " exists and is not a previous run directory"});
  const fs::path parent = dir.parent_path();
  fs::create_directories(parent);
  const fs::path staging = parent / ("." + name.string() + ".staging-" + run_detail::random_tag());
  fs::create_directory(staging);

  RunReport report;
  report.scenario = s;
  try {
    Stopwatch sw;
    run_detail::Stage stage(staging);
    run_detail::Context ctx{s, stage, report, opt};
    run_detail::dispatch(ctx);
    report.outputs = stage.manifest();
    report.wall_time_s = sw.seconds();
    write_json(staging / "report.json", report.to_json());
  } catch (const ScenarioError&) {
    fs::remove_all(staging);
    throw;
  } catch (const std::exception& e) {
    fs::remove_all(staging);
    throw ScenarioRuntimeError(to_string(s.kind) + ": " + e.what());
  }
  std::error_code ec;
  if (fs::exists(dir)) {
    const fs::path trash = parent / ("." + name.string() + ".old-" + run_detail::random_tag());
    fs::rename(dir, trash);
    fs::rename(staging, dir);
    fs::remove_all(trash, ec);
  } else {
    fs::rename(staging, dir);
  }
  report.directory = dir;
  return report;
}

}  // namespace plab
