#pragma once

// Limited-memory BFGS with backtracking (Armijo) line search.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace chaingraph::detail {

/// Returns f(x) and writes its gradient into grad (same size as x).
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct LbfgsOptions {
  std::size_t memory = 10;
  std::size_t max_iterations = 5000;
  double grad_tol = 1e-6;
  /// Step halvings allowed per line search before giving up.
  std::size_t max_halvings = 200;
};

struct LbfgsResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_inf = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Set when the line search exhausted its halvings.
  bool line_search_failed = false;
};

LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                           const LbfgsOptions& opts = {});

}  // namespace chaingraph::detail
