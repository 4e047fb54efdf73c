// Acceptance runner: one PASS/FAIL line per criterion, check details indented.
// Criteria 1-9 run in-process at full resolution; criterion 10 runs the CLI
// binary's `verify-all --fast` and inspects the report it writes.

#include "pauli_lab/acceptance.hpp"

#include <cstdlib>
#include <iostream>
#include <random>
#include <set>
#include <sys/wait.h>

#ifndef PLAB_CLI_PATH
#error "PLAB_CLI_PATH must name the pauli_lab executable"
#endif

using namespace plab;
namespace fs = std::filesystem;

namespace {

void print(int id, const std::string& title, const std::vector<CheckRecord>& checks, double seconds) {
  const bool ok = !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
  std::cout << "Criterion " << id << ": " << (ok ? "PASS" : "FAIL") << "  (" << title << ", "
            << format_number(std::round(seconds * 100.0) / 100.0) << " s)\n";
  for (const auto& c : checks) {
    std::cout << "    " << (c.pass ? "ok   " : "FAIL ") << c.name << " = " << format_number(c.value) << " ("
              << to_string(c.comparison) << " " << c.tolerance_text() << ")";
    if (!c.note.empty()) std::cout << "  " << c.note;
    std::cout << "\n";
  }
  std::cout.flush();
}

bool report_check_consistent(const json& c) {
  if (!c["value"].is_number()) return !c["pass"].get<bool>();
  const double v = c["value"].get<double>();
  const std::string op = c["comparison"];
  bool expect = false;
  if (op == "in") {
    expect = v >= c["tolerance"][0].get<double>() && v <= c["tolerance"][1].get<double>();
  } else {
    const double t = c["tolerance"].get<double>();
    expect = op == "<" ? v < t : op == "<=" ? v <= t : op == "==" ? v == t : v >= t;
  }
  return expect == c["pass"].get<bool>();
}

std::vector<CheckRecord> fast_cli_run(double& seconds) {
  std::vector<CheckRecord> out;
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("plab_accept_" + std::to_string(rd()));
  const fs::path report_dir = dir / "verify";
  fs::create_directories(dir);
  const std::string cmd = std::string("\"") + PLAB_CLI_PATH + "\" verify-all --fast --quiet --output-dir \"" +
                          report_dir.string() + "\" > \"" + (dir / "stdout.txt").string() + "\" 2>&1";
  Stopwatch sw;
  const int status = std::system(cmd.c_str());
  seconds = sw.seconds();
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  out.push_back(check_equal("cli.exit_status", code, 0.0));
  out.push_back(check_less("cli.wall_time_s", seconds, 300.0));
  try {
    const auto rep = json::parse(read_text(report_dir / "report.json"));
    out.push_back(check_equal("report.failures", rep.at("failures").get<double>(), 0.0));
    out.push_back(check_equal("report.level_fast", rep.at("summary").at("level") == "fast" ? 1.0 : 0.0, 1.0));
    std::set<std::string> names;
    bool consistent = true;
    for (const auto& c : rep.at("checks")) {
      names.insert(c.at("name").get<std::string>());
      consistent = consistent && report_check_consistent(c);
    }
    out.push_back(check_equal("report.check_names_unique", names.size() == rep.at("checks").size() ? 1.0 : 0.0, 1.0));
    out.push_back(check_equal("report.pass_flags_consistent", consistent ? 1.0 : 0.0, 1.0));
    int passed = 0;
    for (int id = 1; id <= 9; ++id) {
      const auto& crit = rep.at("summary").at("criteria");
      if (crit.contains(std::to_string(id)) && crit.at(std::to_string(id)).get<bool>()) ++passed;
    }
    out.push_back(check_equal("report.criteria_1_to_9_passing", passed, 9.0));
    const auto acc = json::parse(read_text(report_dir / "acceptance.json"));
    out.push_back(check_equal("acceptance_json.criteria", static_cast<double>(acc.at("criteria").size()), 9.0));
  } catch (const std::exception& e) {
    out.push_back(check_failed("report.readable", e.what()));
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return out;
}

}  // namespace

int main() {
  bool all = true;
  for (int id : all_criteria()) {
    const auto r = run_criterion(id, AcceptanceLevel::full);
    print(r.id, r.title, r.checks, r.seconds);
    all = all && r.pass();
  }
  double seconds = 0.0;
  const auto checks = fast_cli_run(seconds);
  print(10, "verify-all --fast through the CLI", checks, seconds);
  all = all && std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
  std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << "\n";
  return all ? 0 : 1;
}
