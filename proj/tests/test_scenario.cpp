#include "pauli_lab/run.hpp"

#include <gtest/gtest.h>

using namespace plab;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("plab_scn_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<std::string> violations_of(const json& doc) {
  try {
    parse_scenario(doc);
  } catch (const ScenarioError& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& a, const std::string& b = "") {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) {
    return s.find(a) != std::string::npos && (b.empty() || s.find(b) != std::string::npos);
  });
}

Scenario natural(json doc, const fs::path& out) {
  doc["natural_units"] = true;
  doc["output_dir"] = out.string();
  return parse_scenario(doc);
}

const CheckRecord* find_check(const RunReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

void expect_all_pass(const RunReport& r) {
  EXPECT_FALSE(r.checks.empty());
  for (const auto& c : r.checks) EXPECT_TRUE(c.pass) << c.name << " = " << c.value << " vs " << c.tolerance_text() << " " << c.note;
}

}  // namespace

TEST(ScenarioParse, MinimalBoxDocumentGetsDefaults) {
  const auto s = parse_scenario(json::parse(R"({"kind": "box_minimize"})"));
  EXPECT_EQ(s.kind, ScenarioKind::box_minimize);
  EXPECT_EQ(s.seed, 1u);
  EXPECT_EQ(s.output_dir, "output/box_minimize");
  EXPECT_FALSE(s.natural_units);
  EXPECT_EQ(s.integer("cells"), 512);
  EXPECT_EQ(s.integer("modes"), 1);
  EXPECT_DOUBLE_EQ(s.number("length"), 1e-9);
  const auto n = parse_scenario(json::parse(R"({"kind": "box_minimize", "natural_units": true, "seed": 9})"));
  EXPECT_DOUBLE_EQ(n.number("length"), 1.0);
  EXPECT_EQ(n.seed, 9u);
}

TEST(ScenarioParse, UnknownKindIsNamed) {
  const auto v = violations_of(json::parse(R"({"kind": "foo"})"));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(mentions(v, "kind", "\"foo\""));
  EXPECT_TRUE(mentions(violations_of(json::parse("{}")), "kind", "required"));
}

TEST(ScenarioParse, SternGerlachNeedsGradient) {
  const auto v = violations_of(json::parse(R"({"kind": "stern_gerlach"})"));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(mentions(v, "parameters.b", "required"));
  EXPECT_NO_THROW(parse_scenario(json::parse(R"({"kind": "stern_gerlach", "parameters": {"b": 0}})")));
}

TEST(ScenarioParse, ListsEveryViolation) {
  const auto v = violations_of(json::parse(R"({
    "kind": "pauli_evolve", "colour": 1, "seed": -3,
    "parameters": {"cells": 1.5, "dim": 4, "scheme": "euler", "B": [1, 2], "spin": 0}})"));
  EXPECT_EQ(v.size(), 7u);
  EXPECT_TRUE(mentions(v, "colour", "unknown field"));
  EXPECT_TRUE(mentions(v, "seed"));
  EXPECT_TRUE(mentions(v, "parameters.cells", "integer"));
  EXPECT_TRUE(mentions(v, "parameters.dim", "<= 3"));
  EXPECT_TRUE(mentions(v, "parameters.scheme", "split_operator"));
  EXPECT_TRUE(mentions(v, "parameters.B", "3 numbers"));
  EXPECT_TRUE(mentions(v, "parameters.spin", "unknown parameter"));
}

TEST(ScenarioParse, CrossFieldConstraints) {
  EXPECT_TRUE(mentions(violations_of(json::parse(R"({"kind": "moment", "parameters": {"duration": 1.0, "dt": 0.3}})")),
                       "parameters.duration", "multiple"));
  EXPECT_TRUE(mentions(violations_of(json::parse(
                           R"({"kind": "pauli_evolve", "parameters": {"boundary": "dirichlet_zero"}})")),
                       "parameters.scheme", "periodic"));
  EXPECT_TRUE(mentions(violations_of(json::parse(R"({"kind": "equivalence", "parameters": {"charge": 0}})")),
                       "parameters.charge"));
  EXPECT_TRUE(violations_of(json::parse(R"({"kind": "equivalence", "parameters": {"charge": 0, "species": "neutral"}})"))
                  .empty());
  EXPECT_TRUE(mentions(violations_of(json::parse(R"({"kind": "stern_gerlach", "parameters": {"b": 1, "down": 0}})")),
                       "parameters.up, parameters.down"));
}

TEST(ScenarioParse, TypesAndMalformedText) {
  EXPECT_NO_THROW(parse_scenario(json::parse(R"({"kind": "sample", "parameters": {"cells": 64.0}})")));
  EXPECT_TRUE(mentions(violations_of(json::parse(R"({"kind": "sample", "parameters": {"cells": "64"}})")), "parameters.cells"));
  EXPECT_TRUE(mentions(violations_of(json::parse(R"({"kind": "sample", "parameters": {"plus_fraction": 1.5}})")),
                       "parameters.plus_fraction", "<= 1"));
  EXPECT_TRUE(mentions(violations_of(json::parse(R"({"kind": 3})")), "kind", "string"));
  EXPECT_TRUE(mentions(violations_of(json::parse("[1]")), "object"));
  EXPECT_THROW(parse_scenario(std::string("{\"kind\": ")), ScenarioError);
  const auto v = violations_of(json::parse(R"({"kind": "verify_all", "parameters": {"criteria": [1, 12, "x"]}})"));
  EXPECT_EQ(v.size(), 2u);
  EXPECT_TRUE(mentions(v, "parameters.criteria[1]"));
  EXPECT_TRUE(mentions(v, "parameters.criteria[2]"));
}

TEST(Units, MksScalesMatchReferenceConstants) {
  const auto u = UnitScales::mks();
  // CODATA 2018 Bohr magneton
  const double bohr_magneton = 9.2740100783e-24;
  EXPECT_NEAR(0.5 * u.factor(Dimension::moment) / bohr_magneton, 1.0, 1e-9);
  const double hbar = 1.054571817e-34, me = 9.1093837015e-31, e = 1.602176634e-19;
  EXPECT_NEAR(u.time() / (me * 1e-18 / hbar), 1.0, 1e-14);
  EXPECT_NEAR(u.factor(Dimension::rate_per_field) / (e / me), 1.0, 1e-14);
  EXPECT_NEAR(u.factor(Dimension::velocity) / (hbar / (me * 1e-9)), 1.0, 1e-14);
  // E field and B field units are consistent with E = v x B
  EXPECT_NEAR(u.factor(Dimension::electric_field) / (u.factor(Dimension::velocity) * u.factor(Dimension::magnetic_field)), 1.0,
              1e-14);
  for (const auto& [k, name] : scenario_kinds()) EXPECT_EQ(schema_json(k)["kind"], name);
  const auto sg = schema_json(ScenarioKind::stern_gerlach);
  bool b_required = false;
  for (const auto& p : sg["parameters"])
    if (p["name"] == "b") b_required = p["required"].get<bool>();
  EXPECT_TRUE(b_required);
}

TEST(ScenarioRun, SampleRunsAreByteIdentical) {
  TempDir dir;
  const json doc = json::parse(R"({"kind": "sample", "seed": 17, "parameters": {"N": 1000}})");
  auto s = natural(doc, dir / "a");
  const auto a = run_scenario(s);
  s.output_dir = (dir / "b").string();
  const auto b = run_scenario(s);
  expect_all_pass(a);
  ASSERT_EQ(a.outputs.size(), 2u);
  for (const auto& name : {"dataset.csv", "frequencies.csv"})
    EXPECT_EQ(read_text(dir / "a" / name), read_text(dir / "b" / name)) << name;
  for (std::size_t k = 0; k < a.outputs.size(); ++k) EXPECT_EQ(a.outputs[k].fnv1a64, b.outputs[k].fnv1a64);
  const auto d = read_dataset(dir / "a" / "dataset.csv");
  EXPECT_EQ(d.N, 1000);
  EXPECT_EQ(d.seed, 17u);
  const auto rep = json::parse(read_text(dir / "a" / "report.json"));
  EXPECT_EQ(rep["version"], artifact_version);
  EXPECT_EQ(rep["scenario"]["parameters"]["N"], 1000);
  EXPECT_EQ(rep["outputs"][0]["fnv1a64"], fnv1a64(read_text(dir / "a" / "dataset.csv")));
  s.seed = 18;
  s.output_dir = (dir / "c").string();
  run_scenario(s);
  EXPECT_NE(read_text(dir / "a" / "dataset.csv"), read_text(dir / "c" / "dataset.csv"));
}

TEST(ScenarioRun, OutputDirectoryIsReplacedOnlyWhenItHoldsARun) {
  TempDir dir;
  auto s = natural(json::parse(R"({"kind": "fisher_discrete"})"), dir / "out");
  run_scenario(s);
  write_text(dir / "out" / "stray.txt", "x");
  run_scenario(s);
  EXPECT_FALSE(fs::exists(dir / "out" / "stray.txt"));
  EXPECT_TRUE(fs::exists(dir / "out" / "fisher.csv"));
  fs::create_directories(dir / "mine");
  write_text(dir / "mine" / "notes.txt", "keep");
  s.output_dir = (dir / "mine").string();
  EXPECT_THROW(run_scenario(s), ScenarioError);
  EXPECT_EQ(read_text(dir / "mine" / "notes.txt"), "keep");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
  EXPECT_EQ(entries, 2u);  // no staging leftovers
}

TEST(ScenarioRun, RuntimeFailureLeavesNothing) {
  TempDir dir;
  // second slice sits between nodes with a vanishing width: no mass
  const auto s = natural(json::parse(R"({"kind": "sample", "parameters": {"sigma": 1e-200, "slices": 2, "drift": 0.5}})"),
                         dir / "out");
  EXPECT_THROW(run_scenario(s), ScenarioRuntimeError);
  EXPECT_FALSE(fs::exists(dir / "out"));
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(ScenarioRun, SternGerlachLeavingTheGridFailsWithDiagnostic) {
  TempDir dir;
  const auto s = natural(json::parse(R"({"kind": "stern_gerlach",
    "parameters": {"length": 20, "cells": 256, "z0": 10, "b": 10, "dt": 0.01, "record_every": 5}})"),
                         dir / "sg");
  const auto r = run_scenario(s);
  EXPECT_FALSE(r.pass());
  const auto* c = find_check(r, "boundary.contained");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->pass);
  EXPECT_NE(c->note.find("boundary"), std::string::npos);
  const auto rep = json::parse(read_text(dir / "sg" / "report.json"));
  EXPECT_FALSE(rep["pass"].get<bool>());
  EXPECT_EQ(rep["failures"], 1);
  EXPECT_TRUE(rep["summary"].contains("diagnostic"));
}

TEST(ScenarioRun, SternGerlachSeparatesAsExpected) {
  TempDir dir;
  const auto r = run_scenario(natural(json::parse(R"({"kind": "stern_gerlach",
    "parameters": {"b": 2, "cells": 1024, "dt": 0.004, "record_every": 25}})"), dir / "sg"));
  expect_all_pass(r);
  const auto t = parse_csv(read_text(dir / "sg" / "separation.csv"));
  const auto& last = t.rows.back();
  EXPECT_NEAR(last[0], 3.0, 1e-12);
  EXPECT_NEAR(last[3], 0.5 * 2.0 * 9.0, 0.05);
  const auto zero = run_scenario(natural(json::parse(R"({"kind": "stern_gerlach",
    "parameters": {"b": 0, "cells": 1024, "dt": 0.004}})"), dir / "sg0"));
  expect_all_pass(zero);
  EXPECT_NE(find_check(zero, "separation.max_abs_zero_gradient"), nullptr);
}

TEST(ScenarioRun, EvidenceAndFisherDefaultsPass) {
  TempDir dir;
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "evidence"})"), dir / "ev")));
  const auto t = parse_csv(read_text(dir / "ev" / "evidence.csv"));
  EXPECT_EQ(t.rows.size(), 3u);
  const auto sampled = run_scenario(natural(json::parse(R"({"kind": "evidence", "parameters": {"counts": "sampled"}})"), dir / "evs"));
  expect_all_pass(sampled);
  EXPECT_EQ(find_check(sampled, "taylor.first_order_over_N"), nullptr);
  EXPECT_TRUE(fs::exists(dir / "evs" / "dataset.csv"));
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "fisher_discrete", "parameters": {"slices": 3, "drift": 5}})"), dir / "fi")));
}

TEST(ScenarioRun, BoxMinimizeFindsTwoModes) {
  TempDir dir;
  const auto r = run_scenario(natural(json::parse(R"({"kind": "box_minimize", "parameters": {"cells": 128, "modes": 2}})"), dir / "box"));
  expect_all_pass(r);
  const auto m = parse_csv(read_text(dir / "box" / "modes.csv"));
  ASSERT_EQ(m.rows.size(), 2u);
  EXPECT_NEAR(m.rows[1][1] / std::pow(4 * pi, 2), 1.0, 1e-2);
  const auto P = read_scalar_field(dir / "box" / "ground_density.bin");
  EXPECT_EQ(P.grid.cells(0), 128);
}

TEST(ScenarioRun, EquivalenceHoldsInBothUnitSystems) {
  TempDir dir;
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "equivalence",
    "parameters": {"dim": 2, "cells": 24, "field_sets": 2}})"), dir / "nat")));
  auto doc = json::parse(R"({"kind": "equivalence", "parameters": {"dim": 2, "cells": 24, "field_sets": 2}})");
  doc["output_dir"] = (dir / "mks").string();
  expect_all_pass(run_scenario(parse_scenario(doc)));
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "equivalence",
    "parameters": {"dim": 2, "cells": 32, "mode": "central", "species": "neutral"}})"), dir / "cen")));
}

TEST(ScenarioRun, PauliEvolveMatchesOracles) {
  TempDir dir;
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "pauli_evolve",
    "parameters": {"cells": 128, "spin_theta": 1.2, "B": [0.3, 0.2, 1.0], "E": [0.4, 0, 0], "duration": 2}})"), dir / "e")));
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "pauli_evolve",
    "parameters": {"cells": 513, "boundary": "dirichlet_zero", "scheme": "crank_nicolson", "trap_frequency": 0.8,
                   "x0": [9, 0, 0], "species": "neutral", "spin_theta": 0.5, "duration": 2, "snapshot_every": 200}})"), dir / "t")));
  EXPECT_TRUE(fs::exists(dir / "t" / "densities.csv"));
  const auto f = read_spinor_field(dir / "t" / "final_state.bin");
  EXPECT_NEAR(norm(f), 1.0, 1e-10);
  auto doc = json::parse(R"({"kind": "pauli_evolve", "parameters": {"cells": 128, "spin_theta": 1.0, "duration": 0}})");
  doc["parameters"]["duration"] = 400 * UnitScales::mks().time() * 0.005;
  doc["output_dir"] = (dir / "mks").string();
  expect_all_pass(run_scenario(parse_scenario(doc)));
}

TEST(ScenarioRun, ClassicalKindsPass) {
  TempDir dir;
  for (const char* form : {"both", "torque", "canonical"}) {
    json doc = {{"kind", "moment"}, {"parameters", {{"form", form}}}};
    expect_all_pass(run_scenario(natural(doc, dir / form)));
  }
  json doc = {{"kind", "moment"}, {"output_dir", (dir / "mks").string()}};
  const auto mks = run_scenario(parse_scenario(doc));
  expect_all_pass(mks);
  EXPECT_NEAR(mks.summary["gamma_cl"].get<double>() / (1.602176634e-19 / 9.1093837015e-31), 1.0, 1e-12);
  const auto pole = run_scenario(natural(json::parse(R"({"kind": "moment", "parameters": {"theta0": 0, "form": "canonical"}})"),
                                         dir / "pole"));
  EXPECT_FALSE(pole.pass());
  expect_all_pass(run_scenario(natural(json::parse(R"({"kind": "lorentz"})"), dir / "lz")));
  const auto drift = run_scenario(natural(json::parse(R"({"kind": "lorentz",
    "parameters": {"E": [0, 0.2, 0], "duration": 6.283185307179586, "dt": 0.006283185307179586}})"), dir / "drift"));
  expect_all_pass(drift);
  const auto out = run_scenario(natural(json::parse(R"({"kind": "lorentz", "parameters": {"B": [0, 0, 0], "v0": [5, 0, 0]}})"),
                                        dir / "out"));
  EXPECT_FALSE(out.pass());
  EXPECT_NE(find_check(out, "trajectory.inside_grid"), nullptr);
}

TEST(ScenarioRun, VerifyAllSubset) {
  TempDir dir;
  const auto r = run_scenario(natural(json::parse(R"({"kind": "verify_all", "parameters": {"fast": true, "criteria": [3, 4]}})"),
                                      dir / "v"));
  expect_all_pass(r);
  const auto a = json::parse(read_text(dir / "v" / "acceptance.json"));
  EXPECT_EQ(a["criteria"].size(), 2u);
  EXPECT_EQ(a["level"], "fast");
  EXPECT_NE(find_check(r, "criterion4.discrete_rel_error"), nullptr);
}
