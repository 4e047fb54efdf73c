#pragma once

// Check records shared by scenario runs and the acceptance suite. A record's
// pass flag is always derived from its value and bounds.

#include "pauli_lab/io.hpp"

#include <chrono>

namespace plab {

inline constexpr const char* artifact_version = "0.1.0";

enum class Comparison { less, less_equal, within, equal, greater_equal };

inline std::string to_string(Comparison c) {
  switch (c) {
    case Comparison::less: return "<";
    case Comparison::less_equal: return "<=";
    case Comparison::within: return "in";
    case Comparison::equal: return "==";
    case Comparison::greater_equal: return ">=";
  }
  return "?";
}

struct CheckRecord {
  std::string name;
  double value = 0.0;
  Comparison comparison = Comparison::less;
  double lower = 0.0;  // used by within and greater_equal
  double upper = 0.0;  // used by less, less_equal, within, equal
  bool pass = false;
  std::string note;

  static bool evaluate(double v, Comparison c, double lo, double hi) {
    switch (c) {
      case Comparison::less: return v < hi;
      case Comparison::less_equal: return v <= hi;
      case Comparison::within: return v >= lo && v <= hi;
      case Comparison::equal: return v == hi;
      case Comparison::greater_equal: return v >= lo;
    }
    return false;
  }

  static CheckRecord make(std::string name, double v, Comparison c, double lo, double hi, std::string note = {}) {
    CheckRecord r{std::move(name), v, c, lo, hi, false, std::move(note)};
    r.pass = std::isfinite(v) && evaluate(v, c, lo, hi);
    return r;
  }

  bool consistent() const { return pass == (std::isfinite(value) && evaluate(value, comparison, lower, upper)); }

  std::string tolerance_text() const {
    switch (comparison) {
      case Comparison::within: return "[" + format_number(lower) + ", " + format_number(upper) + "]";
      case Comparison::greater_equal: return format_number(lower);
      default: return format_number(upper);
    }
  }

  json to_json() const {
    json j;
    j["name"] = name;
    j["value"] = std::isfinite(value) ? json(value) : json(format_number(value));
    j["comparison"] = to_string(comparison);
    if (comparison == Comparison::within) {
      j["tolerance"] = {lower, upper};
    } else {
      j["tolerance"] = comparison == Comparison::greater_equal ? lower : upper;
    }
    j["pass"] = pass;
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

inline CheckRecord check_less(std::string name, double v, double tol, std::string note = {}) {
  return CheckRecord::make(std::move(name), v, Comparison::less, 0.0, tol, std::move(note));
}
inline CheckRecord check_at_most(std::string name, double v, double tol, std::string note = {}) {
  return CheckRecord::make(std::move(name), v, Comparison::less_equal, 0.0, tol, std::move(note));
}
inline CheckRecord check_within(std::string name, double v, double lo, double hi, std::string note = {}) {
  return CheckRecord::make(std::move(name), v, Comparison::within, lo, hi, std::move(note));
}
inline CheckRecord check_equal(std::string name, double v, double expected, std::string note = {}) {
  return CheckRecord::make(std::move(name), v, Comparison::equal, 0.0, expected, std::move(note));
}
inline CheckRecord check_at_least(std::string name, double v, double tol, std::string note = {}) {
  return CheckRecord::make(std::move(name), v, Comparison::greater_equal, tol, 0.0, std::move(note));
}
/// A failed execution step; value NaN never passes.
inline CheckRecord check_failed(std::string name, std::string note) {
  return CheckRecord::make(std::move(name), std::numeric_limits<double>::quiet_NaN(), Comparison::equal, 0.0, 0.0,
                           std::move(note));
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace plab
