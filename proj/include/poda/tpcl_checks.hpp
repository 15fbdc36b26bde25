#pragma once

// Offline property suite for the contrastive kernel. Needs no backend.

#include <string>
#include <vector>

#include "poda/serialization.hpp"

namespace poda::tpcl {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0;  // measured worst case; 0 for pure pass/fail checks
  double tolerance = 0;
  std::string detail;
};

struct CheckReport {
  int seeds = 0;
  std::vector<CheckResult> results;

  bool all_passed() const;
};

// Relative error used by the finite-difference check:
// |a - f| / max(|a|, |f|, kFdFloor).
inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-6;
inline constexpr double kFdFloor = 1e-4;
double fd_relative_error(double analytic, double numeric) noexcept;

// Runs every property with `seeds` random items per randomized check.
CheckReport run_tpcl_checks(int seeds = 100);

Json to_json(const CheckReport& r);
std::string render_report(const CheckReport& r);

}  // namespace poda::tpcl
