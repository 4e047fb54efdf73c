#pragma once

// Scenario documents: one JSON file per run with a kind, a seed, an output
// directory and kind-specific parameters checked against a schema.

#include "pauli_lab/report.hpp"

#include <map>

namespace plab {

enum class ScenarioKind {
  sample,
  evidence,
  fisher_discrete,
  box_minimize,
  equivalence,
  pauli_evolve,
  stern_gerlach,
  moment,
  lorentz,
  verify_all
};

inline const std::vector<std::pair<ScenarioKind, std::string>>& scenario_kinds() {
  static const std::vector<std::pair<ScenarioKind, std::string>> k{
      {ScenarioKind::sample, "sample"},
      {ScenarioKind::evidence, "evidence"},
      {ScenarioKind::fisher_discrete, "fisher_discrete"},
      {ScenarioKind::box_minimize, "box_minimize"},
      {ScenarioKind::equivalence, "equivalence"},
      {ScenarioKind::pauli_evolve, "pauli_evolve"},
      {ScenarioKind::stern_gerlach, "stern_gerlach"},
      {ScenarioKind::moment, "moment"},
      {ScenarioKind::lorentz, "lorentz"},
      {ScenarioKind::verify_all, "verify_all"}};
  return k;
}

inline std::string to_string(ScenarioKind k) {
  for (const auto& [kind, name] : scenario_kinds())
    if (kind == k) return name;
  return "?";
}

inline std::optional<ScenarioKind> scenario_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : scenario_kinds())
    if (name == s) return kind;
  return std::nullopt;
}

inline std::string kind_list() {
  std::string s;
  for (const auto& [kind, name] : scenario_kinds()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

/// Structured configuration error listing every violation found.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> v) : std::runtime_error(join(v)), violations_(std::move(v)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid scenario:";
    for (const auto& x : v) s += "\n  - " + x;
    return s;
  }
  std::vector<std::string> violations_;
};

// ---------------------------------------------------------------------------
// Units. Defaults are stated in natural units (hbar = m = e = 1, unit length);
// under MKS they are converted with electron-scale reference units.

enum class Dimension {
  none,
  length,
  time,
  mass,
  action,
  charge,
  energy,
  magnetic_field,
  field_gradient,
  electric_field,
  moment,
  wavenumber,
  velocity,
  rate,
  rate_per_field
};

inline std::string to_string(Dimension d) {
  switch (d) {
    case Dimension::none: return "dimensionless";
    case Dimension::length: return "length [m]";
    case Dimension::time: return "time [s]";
    case Dimension::mass: return "mass [kg]";
    case Dimension::action: return "action [J s]";
    case Dimension::charge: return "charge [C]";
    case Dimension::energy: return "energy [J]";
    case Dimension::magnetic_field: return "magnetic field [T]";
    case Dimension::field_gradient: return "field gradient [T/m]";
    case Dimension::electric_field: return "electric field [V/m]";
    case Dimension::moment: return "magnetic moment [J/T]";
    case Dimension::wavenumber: return "wavenumber [1/m]";
    case Dimension::velocity: return "velocity [m/s]";
    case Dimension::rate: return "rate [1/s]";
    case Dimension::rate_per_field: return "rate per field [rad/(s T)]";
  }
  return "?";
}

struct UnitScales {
  bool natural = true;
  double length = 1.0, mass = 1.0, action = 1.0, charge = 1.0;

  static UnitScales natural_units() { return {}; }
  static UnitScales mks() {
    // 1 nm, electron mass, reduced Planck constant, elementary charge
    return {false, 1e-9, 9.1093837015e-31, 1.054571817e-34, 1.602176634e-19};
  }

  double time() const { return mass * length * length / action; }
  double energy() const { return action / time(); }
  double magnetic_field() const { return action / (charge * length * length); }

  double factor(Dimension d) const {
    switch (d) {
      case Dimension::none: return 1.0;
      case Dimension::length: return length;
      case Dimension::time: return time();
      case Dimension::mass: return mass;
      case Dimension::action: return action;
      case Dimension::charge: return charge;
      case Dimension::energy: return energy();
      case Dimension::magnetic_field: return magnetic_field();
      case Dimension::field_gradient: return magnetic_field() / length;
      case Dimension::electric_field: return energy() / (charge * length);
      case Dimension::moment: return energy() / magnetic_field();
      case Dimension::wavenumber: return 1.0 / length;
      case Dimension::velocity: return length / time();
      case Dimension::rate: return 1.0 / time();
      case Dimension::rate_per_field: return 1.0 / (time() * magnetic_field());
    }
    return 1.0;
  }

  json to_json() const {
    json j;
    j["system"] = natural ? "natural" : "MKS";
    j["length_unit_m"] = length;
    j["mass_unit_kg"] = mass;
    j["action_unit_Js"] = action;
    j["charge_unit_C"] = charge;
    j["time_unit_s"] = time();
    return j;
  }
};

// ---------------------------------------------------------------------------
// Parameter schema

enum class ParamType { number, integer, boolean, choice, vec3, int_list };

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::number;
  Dimension dim = Dimension::none;
  json default_value;  // natural units; null with optional = false means required
  std::string description;
  std::optional<double> min, max;
  bool exclusive_min = false;
  std::vector<std::string> choices;
  bool optional = false;  // may be absent; echoed as null
};

struct KindSchema {
  ScenarioKind kind;
  std::string description;
  std::vector<ParamSpec> params;
};

namespace schema_detail {

inline ParamSpec num(std::string n, Dimension d, json def, std::string desc, std::optional<double> min = std::nullopt,
                     bool exclusive = false, std::optional<double> max = std::nullopt) {
  ParamSpec p;
  p.name = std::move(n);
  p.type = ParamType::number;
  p.dim = d;
  p.default_value = std::move(def);
  p.description = std::move(desc);
  p.min = min;
  p.exclusive_min = exclusive;
  p.max = max;
  return p;
}
inline ParamSpec positive(std::string n, Dimension d, json def, std::string desc) {
  return num(std::move(n), d, std::move(def), std::move(desc), 0.0, true);
}
inline ParamSpec integer(std::string n, json def, std::string desc, double min, std::optional<double> max = std::nullopt) {
  ParamSpec p = num(std::move(n), Dimension::none, std::move(def), std::move(desc), min, false, max);
  p.type = ParamType::integer;
  return p;
}
inline ParamSpec boolean(std::string n, bool def, std::string desc) {
  ParamSpec p;
  p.name = std::move(n);
  p.type = ParamType::boolean;
  p.default_value = def;
  p.description = std::move(desc);
  return p;
}
inline ParamSpec choice(std::string n, std::vector<std::string> c, std::string def, std::string desc) {
  ParamSpec p;
  p.name = std::move(n);
  p.type = ParamType::choice;
  p.choices = std::move(c);
  p.default_value = std::move(def);
  p.description = std::move(desc);
  return p;
}
inline ParamSpec vec3(std::string n, Dimension d, json def, std::string desc, bool optional = false) {
  ParamSpec p;
  p.name = std::move(n);
  p.type = ParamType::vec3;
  p.dim = d;
  p.default_value = std::move(def);
  p.description = std::move(desc);
  p.optional = optional;
  return p;
}

inline std::vector<ParamSpec> species_constants(bool with_mu) {
  std::vector<ParamSpec> v{positive("hbar", Dimension::action, 1.0, "reduced Planck constant"),
                           positive("mass", Dimension::mass, 1.0, "particle mass"),
                           num("charge", Dimension::charge, -1.0, "particle charge (ignored for neutral species)")};
  if (with_mu) v.push_back(num("mu", Dimension::moment, 0.5, "magnetic moment coupling of a neutral species"));
  return v;
}

inline std::vector<ParamSpec> table_params(int cells, double length, double sigma) {
  return {integer("cells", cells, "lattice cells of the periodic detector line", 2),
          positive("length", Dimension::length, length, "lattice extent"),
          positive("sigma", Dimension::length, sigma, "width of the Gaussian detection profile"),
          num("plus_fraction", Dimension::none, 0.5, "share of events with color +1", 0.0, true, 1.0),
          integer("slices", 1, "number of time slices", 1),
          num("drift", Dimension::length, 0.0, "shift of the source position per slice")};
}

inline std::vector<KindSchema> build() {
  using D = Dimension;
  std::vector<KindSchema> s;
  {
    KindSchema k{ScenarioKind::sample, "Multinomial detection events drawn from a Gaussian i-prob table.", table_params(64, 64.0, 6.0)};
    k.params.push_back(integer("N", 1000, "events per slice", 0));
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::evidence, "Evidence of shifted vs unshifted tables with its Taylor decomposition.",
                 table_params(200, 200.0, 10.0)};
    k.params.push_back(num("N", D::none, 1e6, "events per slice", 0.0));
    k.params.push_back(positive("epsilon", D::length, 0.4, "largest shift of the unknown position"));
    k.params.push_back(integer("levels", 3, "number of shifts epsilon / 2^k", 1, 30));
    k.params.push_back(choice("counts", {"expected", "sampled"}, "expected", "counts N P or a seeded multinomial draw"));
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::fisher_discrete, "Discrete Fisher information of a Gaussian table against 1/sigma^2 per slice.",
                 table_params(200, 200.0, 10.0)};
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::box_minimize, "Particle-in-a-box Fisher minimum and excited family.", {}};
    k.params = {positive("length", D::length, 1.0, "box length"),
                integer("cells", 512, "grid nodes including both walls", 3),
                integer("modes", 1, "number of modes to find", 1, 8),
                integer("multistart", 8, "starts of the ground-state search", 1),
                positive("gradient_tolerance", D::none, 1e-6, "stationarity tolerance relative to the multiplier"),
                integer("max_iterations", 5000, "iteration cap per start", 1)};
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::equivalence, "Q_polar vs lambda I_F + Lambda vs Q_spinor on seeded random fields.", {}};
    k.params = {integer("dim", 3, "spatial dimension", 1, 3),
                integer("cells", 24, "cells per axis (periodic box of side 2 pi)", 4),
                integer("field_sets", 5, "number of seeded field sets (spectral) ", 1),
                choice("mode", {"spectral", "central"}, "spectral",
                       "spectral: residual per field set; central: three refinements of cells"),
                choice("species", {"charged", "neutral"}, "charged", "identification used for the constants")};
    for (auto& p : species_constants(true)) k.params.push_back(p);
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::pauli_evolve, "Time-dependent Pauli equation for a Gaussian packet in uniform fields.", {}};
    k.params = {integer("dim", 1, "spatial dimension", 1, 3),
                positive("length", D::length, 20.0, "domain side"),
                integer("cells", 256, "cells per axis", 4),
                choice("boundary", {"periodic", "dirichlet_zero"}, "periodic", "boundary condition"),
                choice("scheme", {"split_operator", "crank_nicolson"}, "split_operator", "propagator"),
                positive("dt", D::time, 0.005, "time step"),
                num("duration", D::time, 5.0, "total time (multiple of dt)", 0.0),
                integer("record_every", 10, "steps between observable records", 1),
                integer("snapshot_every", 0, "steps between density snapshots (0: none)", 0),
                choice("species", {"charged", "neutral"}, "charged", "charged couples through A; neutral through mu only"),
                vec3("B", D::magnetic_field, json::array({0.0, 0.0, 1.0}), "uniform magnetic field (spin coupling)"),
                vec3("E", D::electric_field, json::array({0.0, 0.0, 0.0}), "uniform electric field, gauge A = -E t"),
                num("trap_frequency", D::rate, 0.0, "harmonic trap u = m w^2 |x - c|^2 / 2 about the centre", 0.0),
                vec3("x0", D::length, nullptr, "packet centre (default: domain centre)", true),
                positive("sigma", D::length, 1.0, "packet width"),
                vec3("k0", D::wavenumber, json::array({0.0, 0.0, 0.0}), "mean wavenumber"),
                num("spin_theta", D::none, 0.0, "polar angle of the initial Bloch vector"),
                num("spin_phi", D::none, 0.0, "azimuth of the initial Bloch vector")};
    for (auto& p : species_constants(true)) k.params.push_back(p);
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::stern_gerlach, "Neutral spin-1/2 packet in B_z = B0 + b z; color separation vs mu b t^2 / m.", {}};
    k.params = {positive("length", D::length, 80.0, "periodic domain along z"),
                integer("cells", 2048, "grid cells", 8),
                num("z0", D::length, 40.0, "initial packet centre"),
                positive("sigma", D::length, 1.0, "packet width"),
                num("b", D::field_gradient, nullptr, "field gradient dB_z/dz"),
                num("B0", D::magnetic_field, 25.0, "uniform offset field"),
                positive("flight_time", D::time, 3.0, "evolution time (multiple of dt)"),
                positive("dt", D::time, 0.002, "time step"),
                choice("scheme", {"split_operator", "crank_nicolson"}, "split_operator", "propagator"),
                integer("record_every", 50, "steps between records", 1),
                num("up", D::none, 1.0, "relative amplitude of color +1"),
                num("down", D::none, 1.0, "relative amplitude of color -1"),
                num("edge_fraction", D::none, 0.05, "fraction of the domain at each edge watched for leakage", 0.0, true, 0.5),
                positive("edge_tolerance", D::none, 1e-8, "probability allowed in the edge bands")};
    k.params.push_back(positive("hbar", D::action, 1.0, "reduced Planck constant"));
    k.params.push_back(positive("mass", D::mass, 1.0, "particle mass"));
    k.params.push_back(num("mu", D::moment, 0.5, "magnetic moment coupling"));
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::moment, "Classical moment precession: torque form, canonical (phi, z) form or both.", {}};
    k.params = {choice("form", {"torque", "canonical", "both"}, "both", "integrators to run"),
                choice("method", {"rk4", "exact_rotation"}, "rk4", "torque integrator"),
                num("theta0", D::none, 1.0, "initial polar angle"),
                num("phi0", D::none, 0.0, "initial azimuth"),
                vec3("B", D::magnetic_field, json::array({0.3, 0.0, 1.0}), "static field"),
                num("gamma_cl", D::rate_per_field, nullptr, "precession rate per field (default 2 mu / hbar)"),
                positive("hbar", D::action, 1.0, "reduced Planck constant (for the default gamma_cl)"),
                num("mu", D::moment, 0.5, "moment coupling (for the default gamma_cl)"),
                num("duration", D::time, 20.0, "total time (multiple of dt)", 0.0),
                positive("dt", D::time, 0.002, "time step"),
                integer("record_every", 10, "steps between CSV rows", 1)};
    k.params[5].optional = true;
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::lorentz, "Charged particle in static fields sampled from a grid.", {}};
    k.params = {integer("dim", 2, "spatial dimension", 1, 3),
                positive("length", D::length, 20.0, "domain side"),
                integer("cells", 41, "nodes per axis", 2),
                choice("boundary", {"dirichlet_zero", "periodic"}, "dirichlet_zero", "boundary (periodic wraps positions)"),
                vec3("B", D::magnetic_field, json::array({0.0, 0.0, 1.0}), "uniform magnetic field"),
                vec3("E", D::electric_field, json::array({0.0, 0.0, 0.0}), "uniform electric field, phi_pot = -E . (x - c)"),
                vec3("x0", D::length, nullptr, "initial position (default: domain centre)", true),
                vec3("v0", D::velocity, json::array({1.0, 0.0, 0.0}), "initial velocity"),
                num("duration", D::time, 20.0 * pi, "total time (multiple of dt)", 0.0),
                positive("dt", D::time, pi / 1000.0, "time step"),
                integer("record_every", 10, "steps between CSV rows", 1)};
    k.params.push_back(positive("mass", D::mass, 1.0, "particle mass"));
    k.params.push_back(num("charge", D::charge, -1.0, "particle charge"));
    s.push_back(k);
  }
  {
    KindSchema k{ScenarioKind::verify_all, "Acceptance suite, criteria 1-9.", {}};
    ParamSpec ids;
    ids.name = "criteria";
    ids.type = ParamType::int_list;
    ids.default_value = json::array({1, 2, 3, 4, 5, 6, 7, 8, 9});
    ids.description = "criteria to run";
    ids.min = 1;
    ids.max = 9;
    k.params = {boolean("fast", false, "reduced resolution"), ids};
    s.push_back(k);
  }
  return s;
}

}  // namespace schema_detail

inline const std::vector<KindSchema>& all_schemas() {
  static const auto s = schema_detail::build();
  return s;
}

inline const KindSchema& schema_for(ScenarioKind k) {
  for (const auto& s : all_schemas())
    if (s.kind == k) return s;
  throw std::logic_error("no schema for kind");
}

inline std::string to_string(ParamType t) {
  switch (t) {
    case ParamType::number: return "number";
    case ParamType::integer: return "integer";
    case ParamType::boolean: return "boolean";
    case ParamType::choice: return "string";
    case ParamType::vec3: return "array of 3 numbers";
    case ParamType::int_list: return "array of integers";
  }
  return "?";
}

inline json scale_default(const ParamSpec& p, const UnitScales& u) {
  if (p.default_value.is_null()) return nullptr;
  const double f = u.factor(p.dim);
  if (p.type == ParamType::number) return p.default_value.get<double>() * f;
  if (p.type == ParamType::vec3) {
    json a = json::array();
    for (const auto& v : p.default_value) a.push_back(v.get<double>() * f);
    return a;
  }
  return p.default_value;
}

/// Printable parameter schema of a kind; defaults shown in both unit systems.
inline json schema_json(ScenarioKind k) {
  const auto& s = schema_for(k);
  json j;
  j["kind"] = to_string(k);
  j["description"] = s.description;
  j["document"] = {{"kind", "string (required)"},
                   {"seed", "integer >= 0 (default 1)"},
                   {"output_dir", "string (default \"output/<kind>\")"},
                   {"natural_units", "boolean (default false: MKS)"},
                   {"parameters", "object (below)"}};
  json ps = json::array();
  for (const auto& p : s.params) {
    json e;
    e["name"] = p.name;
    e["type"] = to_string(p.type);
    if (p.dim != Dimension::none) e["dimension"] = to_string(p.dim);
    const bool required = p.default_value.is_null() && !p.optional;
    e["required"] = required;
    if (!p.default_value.is_null()) {
      e["default_natural"] = p.default_value;
      e["default_mks"] = scale_default(p, UnitScales::mks());
    }
    if (p.min) e[p.exclusive_min ? "exclusive_minimum" : "minimum"] = *p.min;
    if (p.max) e["maximum"] = *p.max;
    if (!p.choices.empty()) e["choices"] = p.choices;
    e["description"] = p.description;
    ps.push_back(e);
  }
  j["parameters"] = ps;
  return j;
}

// ---------------------------------------------------------------------------
// Parsed scenarios

struct Scenario {
  ScenarioKind kind = ScenarioKind::verify_all;
  std::uint64_t seed = 1;
  std::string output_dir;
  bool natural_units = false;
  json parameters = json::object();  // effective values, every schema entry present

  UnitScales units() const { return natural_units ? UnitScales::natural_units() : UnitScales::mks(); }

  double number(const std::string& name) const { return parameters.at(name).get<double>(); }
  long long integer(const std::string& name) const { return parameters.at(name).get<long long>(); }
  bool flag(const std::string& name) const { return parameters.at(name).get<bool>(); }
  std::string text(const std::string& name) const { return parameters.at(name).get<std::string>(); }
  bool has(const std::string& name) const { return parameters.contains(name) && !parameters.at(name).is_null(); }
  Vec3 vec(const std::string& name) const {
    const auto& a = parameters.at(name);
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  }

  json to_json() const {
    json j;
    j["kind"] = to_string(kind);
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["natural_units"] = natural_units;
    j["parameters"] = parameters;
    return j;
  }
};

namespace schema_detail {

inline std::string describe(const json& v) {
  std::string s = v.dump();
  return s.size() > 40 ? s.substr(0, 37) + "..." : s;
}

inline void check_range(const ParamSpec& p, double v, const std::string& where, std::vector<std::string>& errs) {
  if (p.min) {
    const bool bad = p.exclusive_min ? !(v > *p.min) : !(v >= *p.min);
    if (bad)
      errs.push_back(where + ": must be " + (p.exclusive_min ? "> " : ">= ") + format_number(*p.min) + ", got " +
                     format_number(v));
  }
  if (p.max && !(v <= *p.max)) errs.push_back(where + ": must be <= " + format_number(*p.max) + ", got " + format_number(v));
}

inline bool is_integral(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  const double d = v.get<double>();
  return std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15;
}

inline json validate_value(const ParamSpec& p, const json& v, const std::string& where, std::vector<std::string>& errs) {
  switch (p.type) {
    case ParamType::number:
      if (!v.is_number()) {
        errs.push_back(where + ": expected a number, got " + describe(v));
        return nullptr;
      }
      check_range(p, v.get<double>(), where, errs);
      return v.get<double>();
    case ParamType::integer:
      if (!is_integral(v)) {
        errs.push_back(where + ": expected an integer, got " + describe(v));
        return nullptr;
      }
      check_range(p, v.get<double>(), where, errs);
      return static_cast<long long>(v.get<double>());
    case ParamType::boolean:
      if (!v.is_boolean()) {
        errs.push_back(where + ": expected true or false, got " + describe(v));
        return nullptr;
      }
      return v;
    case ParamType::choice: {
      if (!v.is_string() || std::find(p.choices.begin(), p.choices.end(), v.get<std::string>()) == p.choices.end()) {
        std::string all;
        for (const auto& c : p.choices) all += (all.empty() ? "" : ", ") + c;
        errs.push_back(where + ": expected one of {" + all + "}, got " + describe(v));
        return nullptr;
      }
      return v;
    }
    case ParamType::vec3: {
      if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); })) {
        errs.push_back(where + ": expected an array of 3 numbers, got " + describe(v));
        return nullptr;
      }
      json a = json::array();
      for (const auto& x : v) a.push_back(x.get<double>());
      return a;
    }
    case ParamType::int_list: {
      if (!v.is_array() || v.empty()) {
        errs.push_back(where + ": expected a non-empty array of integers, got " + describe(v));
        return nullptr;
      }
      json a = json::array();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string w = where + "[" + std::to_string(i) + "]";
        if (!is_integral(v[i])) {
          errs.push_back(w + ": expected an integer, got " + describe(v[i]));
          continue;
        }
        check_range(p, v[i].get<double>(), w, errs);
        a.push_back(static_cast<long long>(v[i].get<double>()));
      }
      return a;
    }
  }
  return nullptr;
}

// Constraints spanning several parameters.
inline void cross_checks(const Scenario& s, std::vector<std::string>& errs) {
  const auto& p = s.parameters;
  auto str = [&](const char* n) { return p.contains(n) && p[n].is_string() ? p[n].get<std::string>() : std::string(); };
  auto num = [&](const char* n) { return p.contains(n) && p[n].is_number() ? p[n].get<double>() : std::nan(""); };
  auto multiple = [&](const char* T, const char* dt) {
    const double t = num(T), h = num(dt);
    if (!(std::isfinite(t) && std::isfinite(h) && h > 0)) return;
    const double n = t / h;
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
      errs.push_back(std::string("parameters.") + T + ": must be a whole multiple of parameters." + dt);
  };
  if (str("species") == "charged" && num("charge") == 0.0)
    errs.push_back("parameters.charge: the charged species needs a nonzero charge");
  switch (s.kind) {
    case ScenarioKind::pauli_evolve:
      if (str("scheme") == "split_operator" && str("boundary") != "periodic")
        errs.push_back("parameters.scheme: split_operator needs boundary \"periodic\"");
      multiple("duration", "dt");
      break;
    case ScenarioKind::stern_gerlach:
      multiple("flight_time", "dt");
      if (num("up") == 0.0 || num("down") == 0.0)
        errs.push_back("parameters.up, parameters.down: both colors need a nonzero amplitude");
      break;
    case ScenarioKind::moment:
    case ScenarioKind::lorentz: multiple("duration", "dt"); break;
    case ScenarioKind::equivalence:
      if (str("mode") == "central" && p.contains("cells") && p["cells"].is_number() && p["cells"].get<double>() < 8)
        errs.push_back("parameters.cells: central refinement needs at least 8 cells");
      break;
    default: break;
  }
}

}  // namespace schema_detail

/// Validates a scenario document and fills defaults. Throws ScenarioError with
/// every violation found.
inline Scenario parse_scenario(const json& doc) {
  std::vector<std::string> errs;
  Scenario s;
  if (!doc.is_object()) throw ScenarioError({"<document>: expected a JSON object"});
  for (const auto& [key, _] : doc.items())
    if (key != "kind" && key != "seed" && key != "output_dir" && key != "natural_units" && key != "parameters")
      errs.push_back(key + ": unknown field");
  std::optional<ScenarioKind> kind;
  if (!doc.contains("kind")) {
    errs.push_back("kind: required field missing (one of " + kind_list() + ")");
  } else if (!doc["kind"].is_string()) {
    errs.push_back("kind: expected a string");
  } else if (!(kind = scenario_kind_from_string(doc["kind"].get<std::string>()))) {
    errs.push_back("kind: unknown kind \"" + doc["kind"].get<std::string>() + "\" (one of " + kind_list() + ")");
  }
  if (doc.contains("seed")) {
    const auto& v = doc["seed"];
    if (!schema_detail::is_integral(v) || v.get<double>() < 0)
      errs.push_back("seed: expected a nonnegative integer, got " + schema_detail::describe(v));
    else
      s.seed = v.is_number_unsigned() ? v.get<std::uint64_t>() : static_cast<std::uint64_t>(v.get<double>());
  }
  if (doc.contains("natural_units")) {
    if (!doc["natural_units"].is_boolean())
      errs.push_back("natural_units: expected true or false");
    else
      s.natural_units = doc["natural_units"].get<bool>();
  }
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty())
      errs.push_back("output_dir: expected a non-empty string");
    else
      s.output_dir = doc["output_dir"].get<std::string>();
  }
  json given = json::object();
  if (doc.contains("parameters")) {
    if (!doc["parameters"].is_object())
      errs.push_back("parameters: expected an object");
    else
      given = doc["parameters"];
  }
  if (kind) {
    s.kind = *kind;
    if (s.output_dir.empty()) s.output_dir = "output/" + to_string(s.kind);
    const auto& sc = schema_for(s.kind);
    const auto units = s.units();
    for (const auto& [key, _] : given.items()) {
      const bool known = std::any_of(sc.params.begin(), sc.params.end(), [&](const ParamSpec& p) { return p.name == key; });
      if (!known) errs.push_back("parameters." + key + ": unknown parameter for kind " + to_string(s.kind));
    }
    for (const auto& p : sc.params) {
      const std::string where = "parameters." + p.name;
      if (given.contains(p.name) && !given[p.name].is_null()) {
        s.parameters[p.name] = schema_detail::validate_value(p, given[p.name], where, errs);
      } else if (!p.default_value.is_null()) {
        s.parameters[p.name] = scale_default(p, units);
      } else if (p.optional) {
        s.parameters[p.name] = nullptr;
      } else {
        errs.push_back(where + ": required parameter missing (" + p.description + ")");
      }
    }
    if (errs.empty()) schema_detail::cross_checks(s, errs);
  }
  if (!errs.empty()) throw ScenarioError(errs);
  return s;
}

inline Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({std::string("<document>: malformed JSON: ") + e.what()});
  }
  return parse_scenario(doc);
}

}  // namespace plab
