#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "chaingraph/exact.hpp"
#include "chaingraph/model.hpp"
#include "chaingraph/rng.hpp"

namespace chaingraph {

enum class ScanOrder { fixed, random_permutation_per_sweep };

std::string_view to_string(ScanOrder order);
ScanOrder scan_order_from_string(std::string_view text);

struct GibbsConfig {
  std::size_t sweeps = 11000;
  std::size_t burn_in = 1000;
  std::size_t thin = 10;
  std::uint64_t seed = 0;
  ScanOrder scan_order = ScanOrder::fixed;

  /// Throws ConfigError unless sweeps > burn_in and thin >= 1.
  void validate() const;
  /// floor((sweeps - burn_in) / thin)
  std::size_t kept_samples() const { return (sweeps - burn_in) / thin; }
};

/// P(Y_i = +1 | y_{-i}, a, c) = logistic(2 (h_i + sum_j k_ij y_j + gamma_i a_i
/// + kappa_i c_i)).  Entry i of y is ignored.
double node_conditional_prob(const ChainGraphModel& model, std::size_t i,
                             const OutcomeVector& y, const TreatmentVector& a,
                             const std::optional<CovariateVector>& c = std::nullopt);

/// Single-site Gibbs sampler over the outcome block for a fixed (a, c).
/// States are bit masks (bit i set iff y_i = +1).
class GibbsKernel {
 public:
  GibbsKernel(const ChainGraphModel& model, const TreatmentVector& a,
              const std::optional<CovariateVector>& c);
  GibbsKernel(CompiledModel model, std::vector<double> field);

  std::size_t size() const noexcept { return model_.n; }
  std::uint64_t random_state(Rng& rng) const;
  /// One pass over all nodes in the given order.
  std::uint64_t sweep(std::uint64_t state, Rng& rng, ScanOrder order);

 private:
  CompiledModel model_;
  std::vector<double> field_;
  std::vector<std::size_t> order_;
};

/// Runs one chain from a uniformly random start; keeps the state after every
/// thin-th sweep past burn_in.  Deterministic for a fixed seed and order.
std::vector<OutcomeVector> gibbs_chain(const ChainGraphModel& model,
                                       const TreatmentVector& a,
                                       const std::optional<CovariateVector>& c,
                                       const GibbsConfig& config);

/// P(A_i = 1 | C_i) = logistic(intercept + slope * C_i).
struct TreatmentLaw {
  double intercept = -0.5;
  double slope = 1.0;
};

/// Synthetic-data design: scaled main effects and couplings of a base model,
/// tied treatment/confounder effects, and the laws of (C, A).
struct SimulationScaling {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma_value = 0.5;
  double kappa_value = 0.3;
  TreatmentLaw treatment_law;
  /// Uniform coupling of the default Ising confounder law (zero fields).
  double confounder_coupling = 0.3;
  /// Overrides the default Ising law when set.
  std::optional<CovariateLaw> confounder_law;

  void validate() const;
};

/// Per-node model with h = alpha*h, k = beta*k, gamma_i = gamma_value and
/// kappa_i = kappa_value.
ChainGraphModel simulation_model(const ChainGraphModel& base,
                                 const SimulationScaling& scaling);

/// Ising law on the graph with zero fields and the given uniform coupling.
CovariateLaw ising_confounder_law(const NetworkGraph& graph, double coupling);

/// The confounder law a scaling uses for base's graph.
CovariateLaw confounder_law_for(const ChainGraphModel& base,
                                const SimulationScaling& scaling);

/// Draws C from the law (Ising laws by their own Gibbs chain of
/// chain.burn_in sweeps).
CovariateVector draw_covariates(const CovariateLaw& law, Rng& rng,
                                const GibbsConfig& chain);

/// n_obs i.i.d. observations of (Y, A, C).  Each observation draws C, then
/// A_i | C_i, then runs its own Gibbs chain for Y of chain.burn_in sweeps and
/// keeps the final state.  Observation o uses sub-seed derive_seed(seed, {o}),
/// so output is independent of `threads`.
CaseDataset generate_dataset(const ChainGraphModel& base,
                             const SimulationScaling& scaling, std::size_t n_obs,
                             std::uint64_t seed, const GibbsConfig& chain = {},
                             unsigned threads = 1);

}  // namespace chaingraph
