// Command-line front end: run scenario files, the acceptance suite, and print
// parameter schemas.
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 usage or configuration
// error, 3 runtime error.

#include "pauli_lab/run.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

using namespace plab;

enum Exit { ok = 0, check_failed = 1, usage = 2, runtime = 3 };

void print_report(const RunReport& r) {
  for (const auto& c : r.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << format_number(c.value) << " ("
              << to_string(c.comparison) << " " << c.tolerance_text() << ")";
    if (!c.note.empty()) std::cout << "  " << c.note;
    std::cout << "\n";
  }
  std::cout << (r.pass() ? "PASS" : "FAIL") << ": " << r.checks.size() - r.failures() << "/" << r.checks.size()
            << " checks, " << format_number(std::round(r.wall_time_s * 1000.0) / 1000.0) << " s, report "
            << (r.directory / "report.json").string() << "\n";
}

int execute(const json& doc, bool quiet) {
  try {
    const Scenario s = parse_scenario(doc);
    RunOptions opt;
    if (!quiet) opt.progress = [](const std::string& m) { std::cerr << "  " << m << std::endl; };
    const auto r = run_scenario(s, opt);
    print_report(r);
    return r.pass() ? ok : check_failed;
  } catch (const ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return runtime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for the inference route to the Pauli equation"};
  app.set_version_flag("--version", std::string("pauli_lab ") + artifact_version);
  app.require_subcommand(1);

  std::string scenario_path, output_dir, kind;
  std::uint64_t seed = 0;
  bool fast = false, quiet = false;
  std::vector<int> criteria;

  auto* run = app.add_subcommand("run", "Run a scenario file");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--output-dir", output_dir, "Override the scenario's output_dir");
  run->add_option("--seed", seed, "Override the scenario's seed");
  run->add_flag("--quiet,-q", quiet, "No progress on stderr");

  auto* verify = app.add_subcommand("verify-all", "Run the acceptance suite (criteria 1-9)");
  verify->add_flag("--fast", fast, "Reduced resolution, same tolerances");
  verify->add_option("--criteria", criteria, "Subset of criteria")->check(CLI::Range(1, 9))->delimiter(',');
  verify->add_option("--output-dir", output_dir, "Output directory (default output/verify_all)");
  verify->add_option("--seed", seed, "Recorded seed");
  verify->add_flag("--quiet,-q", quiet, "No progress on stderr");

  auto* schema = app.add_subcommand("schema", "Print the parameter schema of a scenario kind");
  schema->add_option("kind", kind, "Scenario kind (omit to list kinds)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  if (*schema) {
    if (kind.empty()) {
      for (const auto& [k, name] : scenario_kinds()) std::cout << name << "  " << schema_for(k).description << "\n";
      return ok;
    }
    const auto k = scenario_kind_from_string(kind);
    if (!k) {
      std::cerr << "unknown kind \"" << kind << "\" (one of " << kind_list() << ")\n";
      return usage;
    }
    std::cout << schema_json(*k).dump(2) << "\n";
    return ok;
  }

  json doc;
  if (*run) {
    try {
      doc = json::parse(read_text(scenario_path));
    } catch (const IoError& e) {
      std::cerr << e.what() << "\n";
      return usage;
    } catch (const json::parse_error& e) {
      std::cerr << "invalid scenario:\n  - <document>: malformed JSON: " << e.what() << "\n";
      return usage;
    }
    if (!doc.is_object()) {
      std::cerr << "invalid scenario:\n  - <document>: expected a JSON object\n";
      return usage;
    }
  } else {
    doc = {{"kind", "verify_all"}, {"parameters", {{"fast", fast}}}};
    if (!criteria.empty()) doc["parameters"]["criteria"] = criteria;
  }
  if (!output_dir.empty()) doc["output_dir"] = output_dir;
  if ((*run ? run : verify)->count("--seed") > 0) doc["seed"] = seed;
  return execute(doc, quiet);
}
