#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chaingraph/estimation.hpp"
#include "chaingraph/io.hpp"
#include "chaingraph/reference.hpp"
#include "chaingraph/sampler.hpp"

namespace chaingraph {

enum class SeMethod { delta, bootstrap };

std::string_view to_string(SeMethod method);
SeMethod se_method_from_string(std::string_view text);

/// Repeated simulate-fit-estimate runs against a known generating model.
struct RecoveryConfig {
  ChainGraphModel base = court_reference_model();
  SimulationScaling scaling;
  std::size_t n_obs = 2000;
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  /// Only burn_in and scan_order matter for data generation.
  GibbsConfig chain;
  std::vector<NamedAssignment> assignments = reference_assignments();
  std::vector<EventPredicate> events = reference_events();
  SeMethod se_method = SeMethod::delta;
  std::size_t bootstrap_replicates = 100;
  FitOptions fit;
  unsigned threads = 1;
};

struct RecoveryCell {
  std::string assignment;
  std::string event;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double mean_abs_bias = 0.0;
  double mean_se = 0.0;
  /// Standard deviation of the estimates across replicates.
  double empirical_sd = 0.0;
};

struct RecoveryReplicate {
  std::size_t index = 0;
  bool ok = false;
  std::string failure;
  /// Assignment-major, one entry per (assignment, event).
  std::vector<double> estimates;
  std::vector<double> ses;
  std::size_t iterations = 0;
};

struct RecoveryReport {
  std::vector<RecoveryCell> cells;
  std::vector<RecoveryReplicate> replicates;
  std::size_t failed = 0;
  ChainGraphModel truth_model;
};

/// Replicate r simulates with derive_seed(seed, {r, 0}) and, for bootstrap
/// standard errors, resamples with derive_seed(seed, {r, 1, b}).  Fits use
/// the exact MLE on the known graph; counterfactuals marginalize the
/// confounders over each dataset's empirical law and are compared with the
/// generating model under its own confounder law.  on_dataset, when set,
/// receives every simulated dataset (possibly from worker threads).
RecoveryReport run_recovery_study(
    const RecoveryConfig& config,
    const std::function<void(std::size_t, const CaseDataset&)>& on_dataset = {});

/// `assignment,event,truth,mean_estimate,mean_abs_bias,mean_se,empirical_sd`
std::string recovery_cells_csv(const RecoveryReport& report);
/// `replicate,assignment,event,estimate,se`
std::string recovery_replicates_csv(const RecoveryReport& report, const RecoveryConfig& config);
Json recovery_summary_json(const RecoveryReport& report, const RecoveryConfig& config);

struct EdgeRecovery {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Compares edge sets over the same labels.  Empty-vs-empty counts as 1.
EdgeRecovery edge_recovery(const NetworkGraph& truth, const NetworkGraph& estimate);

/// Fixed-point text for report files.
std::string format_number(double value);

}  // namespace chaingraph
