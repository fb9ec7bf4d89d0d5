#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lerg {

// One property or convergence check with the deviation it measured.
struct OracleCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct OracleSuiteOptions {
  std::uint64_t seed = 1;
  std::size_t instances = 10;
  std::size_t convergence_seeds = 20;
  std::size_t small_samples = 250;
  std::size_t large_samples = 4000;
};

// Runs efficiency, consistency, cause identification and Monte Carlo
// convergence checks on built-in models.
std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& options = {});

}  // namespace lerg
