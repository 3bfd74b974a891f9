#pragma once

// Outcome-block enumeration shared by exact inference and the fitters.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "chaingraph/error.hpp"
#include "chaingraph/exact.hpp"
#include "chaingraph/model.hpp"

namespace chaingraph::detail {

inline void require_enumerable(std::size_t n, const InferenceOptions& opts) {
  if (n > opts.enumeration_limit || n > 62) {
    throw CapacityError("outcome block of " + std::to_string(n) +
                        " nodes exceeds the enumeration limit of " +
                        std::to_string(opts.enumeration_limit));
  }
}

/// Exact log-potential of the configuration encoded by mask under the
/// per-node field f and the model couplings.
inline double potential_of(const CompiledModel& cm, const std::vector<double>& f,
                           std::uint64_t mask) {
  double total = 0.0;
  for (std::size_t i = 0; i < cm.n; ++i) {
    total += ((mask >> i) & 1u) ? f[i] : -f[i];
  }
  for (std::size_t e = 0; e < cm.edges.size(); ++e) {
    const bool same = ((mask >> cm.edges[e].u) & 1u) == ((mask >> cm.edges[e].v) & 1u);
    total += same ? cm.k[e] : -cm.k[e];
  }
  return total;
}

/// Visits all 2^n configurations in Gray-code order, calling
/// visit(mask, log_potential).  Each step flips one spin and updates the
/// potential incrementally; the value is recomputed exactly every 256 steps
/// to bound rounding drift.
template <typename Visit>
void for_each_state(const CompiledModel& cm, const std::vector<double>& f,
                    Visit&& visit) {
  const std::uint64_t count = std::uint64_t{1} << cm.n;
  std::uint64_t mask = 0;
  double pot = potential_of(cm, f, mask);
  visit(mask, pot);
  for (std::uint64_t step = 1; step < count; ++step) {
    const auto i = static_cast<std::size_t>(std::countr_zero(step));
    const double s_old = ((mask >> i) & 1u) ? 1.0 : -1.0;
    const double delta = -2.0 * s_old * (f[i] + cm.local_coupling(i, mask));
    mask ^= std::uint64_t{1} << i;
    if ((step & 0xff) == 0) {
      pot = potential_of(cm, f, mask);
    } else {
      pot += delta;
    }
    visit(mask, pot);
  }
}

}  // namespace chaingraph::detail
