#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chaingraph/io.hpp"
#include "chaingraph/model.hpp"
#include "chaingraph/rng.hpp"

namespace chaingraph {

/// Erdos-Renyi graph on labels u1..un: each unordered pair (taken in
/// lexicographic order) is kept with probability p.
NetworkGraph random_network(std::size_t n, double p, std::uint64_t seed);

/// Transition law of the temporal contagion process.  At every step
/// P(Y_i^t = +1) = logistic(2 (intercept_i + treatment_effect a_i
///   + self_persistence y_i^{t-1} + sum_{j~i} influence_ij y_j^{t-1})).
struct TemporalParams {
  /// Per node; empty means all zero.
  std::vector<double> intercepts;
  double treatment_effect = 0.5;
  double self_persistence = 1.5;
  /// One value per network edge; keyed by unordered pair, hence symmetric.
  std::map<Edge, double> neighbor_influence;
  std::size_t horizon = 50;
  double treatment_prob = 0.5;

  /// Defaults with influence 0.3 on every edge of the network.
  static TemporalParams defaults(const NetworkGraph& network, double influence = 0.3);
  /// Throws ConfigError/ShapeError on a mismatch with the network.
  void validate(const NetworkGraph& network) const;
  double intercept(std::size_t i) const { return intercepts.empty() ? 0.0 : intercepts[i]; }
};

/// One synchronous update from explicit uniforms (one per node):
/// y_i^t = +1 iff uniforms[i] < P(Y_i^t = +1).  Only a_i enters node i's
/// update.
std::vector<int> temporal_step(const NetworkGraph& network, const TemporalParams& params,
                               std::span<const int> y_prev, std::span<const int> a,
                               std::span<const double> uniforms);

struct Trajectory {
  std::vector<int> a;
  /// horizon + 1 states, y[0] the initial one.
  std::vector<std::vector<int>> y;
};

/// Draws A_i ~ Bernoulli(treatment_prob), Y^0_i ~ Bernoulli(logistic(2
/// intercept_i)) as +/-1, then `horizon` transitions.
Trajectory simulate_trajectory(const NetworkGraph& network, const TemporalParams& params,
                               Rng& rng);

/// Final-time snapshots (Y^T, A) of n_reps independent trajectories;
/// replicate r uses derive_seed(seed, {r}).  Per-node treatment mode,
/// no confounders.
CaseDataset simulate_temporal(const NetworkGraph& network, const TemporalParams& params,
                              std::size_t n_reps, std::uint64_t seed, unsigned threads = 1);

/// (a) marginal; (b) given the neighbors of i; (c) given A_i and the
/// neighbors of i.
enum class Hypothesis { marginal = 0, neighbors = 1, neighbors_and_treatment = 2 };

char hypothesis_code(Hypothesis h);

struct BatteryTest {
  std::size_t i = 0;
  std::size_t m = 0;
  Hypothesis hypothesis = Hypothesis::marginal;
  double p_value = 1.0;
  bool reject = false;
  bool ridge_fallback = false;
};

struct BatteryReport {
  double alpha = 0.05;
  std::vector<std::string> labels;
  /// Ordered by (i, m, hypothesis).
  std::vector<BatteryTest> tests;
  std::size_t pair_count = 0;
  /// Rejection rate per hypothesis, indexed by the enum value.
  std::array<double, 3> rates{};

  double rate(Hypothesis h) const { return rates[static_cast<std::size_t>(h)]; }
};

/// Runs the three tests for every ordered pair (i, m), i != m, that is not
/// adjacent in the network.  Throws NoPairsError when there is none.
BatteryReport run_battery(const CaseDataset& data, const NetworkGraph& network,
                          double alpha = 0.05, unsigned threads = 1);

/// `pair_i,pair_m,hypothesis,p_value,reject` with node labels.
std::string battery_csv(const BatteryReport& report);
/// `i,m,hypothesis,p_value,reject_at_0.05` with node labels.
std::string ci_test_csv(const BatteryReport& report);
Json battery_summary_json(const BatteryReport& report);
Json temporal_params_json(const TemporalParams& params, const NetworkGraph& network);

/// Battery over several random networks: network k is
/// random_network(nodes, edge_prob, derive_seed(seed, {k, 0})) and its data
/// come from simulate_temporal with derive_seed(seed, {k, 1}).
struct ConjectureStudyConfig {
  std::size_t nodes = 9;
  double edge_prob = 0.3;
  std::size_t networks = 10;
  std::size_t replicates = 1000;
  double alpha = 0.05;
  double influence = 0.3;
  /// Template for every network; neighbor_influence is filled per network.
  TemporalParams params;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ConjectureNetwork {
  NetworkGraph network;
  TemporalParams params;
  std::uint64_t network_seed = 0;
  std::uint64_t data_seed = 0;
  BatteryReport report;
};

struct ConjectureStudy {
  std::vector<ConjectureNetwork> networks;
  /// Rejections over all tests of all networks, per hypothesis.
  std::array<double, 3> pooled_rates{};
  /// Networks whose (a) rate exceeds their (b) rate.
  std::size_t marginal_exceeds_neighbors = 0;
};

/// Throws NoPairsError when any network is complete.
ConjectureStudy run_conjecture_study(const ConjectureStudyConfig& config);
Json conjecture_summary_json(const ConjectureStudy& study, const ConjectureStudyConfig& config);

}  // namespace chaingraph
