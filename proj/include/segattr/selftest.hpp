#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace segattr {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Gradient checks against finite differences, RIA against fresh predicts,
/// fusion and metric identities, aggregation arithmetic. Small sizes, runs
/// in a few seconds.
std::vector<CheckResult> run_selftest();

/// Prints one "PASS"/"FAIL" line per check; returns true if all passed.
bool report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace segattr
