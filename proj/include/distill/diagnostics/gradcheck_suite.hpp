#pragma once

#include <string>
#include <vector>

namespace distill::diagnostics {

struct SuiteResult {
  std::string name;
  int seeds = 0;
  double max_error = 0.0;  // worst relative error over all seeds and leaves
  bool passed = false;
};

/// Finite-difference checks of every differentiable loss and of the full
/// temporal filter on small random instances (T <= 8, C <= 6, P <= 3).
std::vector<SuiteResult> run_gradcheck_suites(int seeds = 10, double tolerance = 1e-6);

}  // namespace distill::diagnostics
