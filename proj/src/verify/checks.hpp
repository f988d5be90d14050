#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace crowdnav {

struct CheckResult {
  std::string name;
  bool pass = false;
  double worst = 0.0;      // worst observed error/figure for the check
  double tolerance = 0.0;  // what it was compared against
  std::string detail;      // sample sizes, sub-results
};

struct VerifyOptions {
  uint64_t seed = 2026;
  // Test hook: replaces the additive mask sentinel with a uselessly small
  // value so the mask-elimination check must fail. Proves the check can
  // actually detect a broken mask rather than passing vacuously.
  bool corrupt_mask_sentinel = false;
};

// Cross-checks the numeric core against independent oracles: raycasting vs
// millimetre stepping, two-agent avoidance separation, the reward table,
// advantage estimation vs brute force, autodiff vs finite differences, and
// the mask/permutation guarantees of the policy.
std::vector<CheckResult> run_verify_checks(const VerifyOptions& opt);

// One aligned line per check plus a summary; returns the process exit code
// (0 only if every check passed).
int print_verify_report(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace crowdnav
