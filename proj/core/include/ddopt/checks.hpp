#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddopt {

struct CheckReport {
  std::string suite;
  bool passed = false;
  std::string detail;  // worst-case figure, or the failing property + inputs
};

// Suites: sensitivity (analytic vs finite differences), projection (KKT,
// idempotence, nonexpansiveness), transport (1-d formula vs exact solver,
// metric axioms, plan feasibility), vk (tracking-bound recursion on a linear
// instance). `only` empty means all. `inject_fault` perturbs the named
// suite's computation so its failure reporting can be exercised.
std::vector<CheckReport> run_check_suites(const std::vector<std::string>& only,
                                          std::uint64_t seed,
                                          const std::string& inject_fault);

std::vector<std::string> check_suite_names();

}  // namespace ddopt
