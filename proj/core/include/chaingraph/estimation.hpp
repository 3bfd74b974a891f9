#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chaingraph/exact.hpp"
#include "chaingraph/model.hpp"

namespace chaingraph {

// ---------------------------------------------------------------------------
// Nodewise L1-penalized logistic regression

/// Coefficients of the conditional model of one node:
/// P(Y_i = +1 | rest) = logistic(2 * eta) with
/// eta = intercept + sum_j neighbors[j] y_j + treatment * a_i + covariate * c_i.
struct NodeCoefficients {
  double intercept = 0.0;
  /// Length n; the entry of the node itself is always zero.
  std::vector<double> neighbors;
  double treatment = 0.0;
  std::optional<double> covariate;
};

struct LassoOptions {
  /// Coefficients are confined to [-cap, cap]; hitting the bound flags a
  /// (quasi-)separated design.
  double max_abs_coefficient = 20.0;
  std::size_t max_iterations = 200000;
  double objective_tol = 1e-8;
  double step_tol = 1e-6;
};

struct NodewiseFit {
  std::size_t node = 0;
  double lambda = 0.0;
  NodeCoefficients coefficients;
  /// Mean log pseudo-likelihood minus lambda * sum_j |neighbors[j]|.
  double objective = 0.0;
  double mean_log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool capped = false;

  /// Indices j with a nonzero neighbor coefficient.
  std::vector<std::size_t> support() const;
};

/// Penalized objective (to be maximized) of node's regression at arbitrary
/// coefficients.  Only neighbor coefficients are penalized.
double nodewise_objective(const CaseDataset& data, std::size_t node, double lambda,
                          const NodeCoefficients& coefficients);

/// Proximal-gradient fit with backtracking line search, started from zero
/// (or from `start`).  Throws DegenerateNodeError when the node's outcome
/// never varies.
NodewiseFit node_logistic_fit(const CaseDataset& data, std::size_t node, double lambda,
                              const LassoOptions& opts = {},
                              const std::optional<NodeCoefficients>& start = std::nullopt);

/// Unpenalized fit restricted to the given neighbor set.
NodewiseFit node_logistic_refit(const CaseDataset& data, std::size_t node,
                                std::span<const std::size_t> neighbor_set,
                                const LassoOptions& opts = {});

// ---------------------------------------------------------------------------
// Structure learning

enum class SymmetrizationRule { and_rule, or_rule };

std::string_view to_string(SymmetrizationRule rule);
SymmetrizationRule symmetrization_rule_from_string(std::string_view text);

/// 25 log-spaced values from 1 down to 0.001.
std::vector<double> default_penalty_grid();

struct StructureOptions {
  std::vector<double> penalty_grid = default_penalty_grid();
  SymmetrizationRule rule = SymmetrizationRule::and_rule;
  double ebic_gamma = 0.5;
  LassoOptions lasso;
  unsigned threads = 1;
};

struct NodeSelection {
  std::size_t node = 0;
  bool degenerate = false;
  double lambda = 0.0;
  double ebic = 0.0;
  std::vector<std::size_t> neighbors;
};

struct StructureResult {
  NetworkGraph graph;
  std::vector<NodeSelection> nodes;
  std::vector<std::string> warnings;
};

/// Per node: fit the whole penalty path (warm-started, largest lambda first),
/// refit each distinct support without penalty and pick the lambda with the
/// smallest extended BIC; then symmetrize the neighborhoods.  Degenerate
/// nodes are excluded with a warning.
StructureResult learn_structure(const CaseDataset& data, const StructureOptions& opts = {});

// ---------------------------------------------------------------------------
// Full-model fitting

/// Flat parameter vector [h (n) | k (edges, graph order) | gamma (n) | kappa (n)].
class ParameterLayout {
 public:
  ParameterLayout(NetworkGraph graph, TreatmentMode mode, bool has_confounders);

  std::size_t size() const noexcept;
  std::size_t node_count() const noexcept { return graph_.size(); }
  std::size_t edge_count() const noexcept { return graph_.edge_count(); }
  std::size_t k_offset() const noexcept { return node_count(); }
  std::size_t gamma_offset() const noexcept { return node_count() + edge_count(); }
  std::size_t kappa_offset() const noexcept { return 2 * node_count() + edge_count(); }
  bool has_confounders() const noexcept { return has_confounders_; }
  const NetworkGraph& graph() const noexcept { return graph_; }

  std::vector<double> pack(const ChainGraphModel& model) const;
  ChainGraphModel unpack(std::span<const double> theta) const;

 private:
  NetworkGraph graph_;
  TreatmentMode mode_;
  bool has_confounders_;
};

/// Mean log-likelihood of the outcome block given (A, C), with its gradient,
/// computed by exact enumeration within each distinct (a, c) stratum.
class ExactLikelihood {
 public:
  ExactLikelihood(const CaseDataset& data, const NetworkGraph& graph,
                  const InferenceOptions& opts = {});
  ~ExactLikelihood();
  ExactLikelihood(ExactLikelihood&&) noexcept;
  ExactLikelihood& operator=(ExactLikelihood&&) noexcept;

  const ParameterLayout& layout() const;
  std::size_t stratum_count() const;
  /// Mean log-likelihood; gradient written to grad when it is non-empty.
  double evaluate(std::span<const double> theta, std::span<double> grad) const;
  double evaluate(std::span<const double> theta) const { return evaluate(theta, {}); }
  /// Same quantity by a per-stratum Gray-code pass (reference path).
  double evaluate_by_enumeration(std::span<const double> theta,
                                 std::span<double> grad) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Mean log pseudo-likelihood sum_i log P(y_i | y_-i, a, c) with gradient.
class PseudoLikelihood {
 public:
  PseudoLikelihood(const CaseDataset& data, const NetworkGraph& graph);
  ~PseudoLikelihood();
  PseudoLikelihood(PseudoLikelihood&&) noexcept;
  PseudoLikelihood& operator=(PseudoLikelihood&&) noexcept;

  const ParameterLayout& layout() const;
  double evaluate(std::span<const double> theta, std::span<double> grad) const;
  double evaluate(std::span<const double> theta) const { return evaluate(theta, {}); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct FitOptions {
  InferenceOptions inference;
  double grad_tol = 1e-6;
  std::size_t max_iterations = 5000;
  std::size_t max_halvings = 200;
  /// Starting point; must share the graph and the dataset's layout.
  std::optional<ChainGraphModel> warm_start;
};

struct FitReport {
  std::string method;
  std::size_t n_obs = 0;
  std::size_t iterations = 0;
  double grad_inf = 0.0;
  /// Mean (pseudo-)log-likelihood at the returned parameters.
  double mean_log_likelihood = 0.0;
  bool converged = false;
};

struct FittedModel {
  ChainGraphModel model;
  FitReport report;
};

/// Maximizes the exact likelihood by L-BFGS from zero.  The fitted model has
/// the dataset's treatment mode and carries kappa iff the dataset has
/// confounders.  Throws ConvergenceError when the line search fails.
FittedModel fit_exact_mle(const CaseDataset& data, const NetworkGraph& graph,
                          const FitOptions& opts = {});

/// Same optimizer on the pseudo-likelihood; needs no enumeration.
FittedModel fit_pseudolikelihood(const CaseDataset& data, const NetworkGraph& graph,
                                 const FitOptions& opts = {});

// ---------------------------------------------------------------------------
// Bootstrap

enum class FitMethod { mle, pseudo_likelihood };

std::string_view to_string(FitMethod method);
FitMethod fit_method_from_string(std::string_view text);

struct EffectQuery {
  TreatmentVector a1;
  TreatmentVector a0;
  EventPredicate event;
  EffectScale scale = EffectScale::risk_difference;
};

struct BootstrapSpec {
  std::size_t replicates = 500;
  std::uint64_t seed = 0;
  FitMethod method = FitMethod::mle;
  /// Re-learn the structure on every replicate instead of fixing the graph.
  bool refit_structure = false;
  StructureOptions structure;
  FitOptions fit;
  unsigned threads = 1;
  /// Share of failed replicates above which BootstrapFailure is thrown.
  double max_failure_share = 0.10;
};

struct BootstrapResult {
  /// Point from the full-data fit; se, ci_low and ci_high from replicates.
  EffectEstimate effect;
  double p1_se = 0.0;
  double p0_se = 0.0;
  std::size_t replicates = 0;
  std::size_t dropped = 0;
  /// Per replicate (dropped replicates are absent).
  std::vector<double> replicate_points;
  std::vector<double> replicate_p1;
  std::vector<double> replicate_p0;
  FittedModel full_fit;
};

/// Sample quantile by linear interpolation between order statistics
/// (type 7), q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Case-resampling bootstrap of a counterfactual contrast.  Replicate r draws
/// rows with derive_seed(seed, {r}) and refits warm-started from the full
/// fit; confounders are marginalized over each resample's empirical law.
/// The interval is the 2.5/97.5 percentile pair.
BootstrapResult bootstrap_effect(const CaseDataset& data, const NetworkGraph& graph,
                                 const EffectQuery& query, const BootstrapSpec& spec);

// ---------------------------------------------------------------------------
// Delta-method standard errors

/// Observed information of the mean log-likelihood at theta (negated
/// Hessian, by central differences of the analytic gradient), row-major.
std::vector<double> observed_information(const ExactLikelihood& likelihood,
                                         std::span<const double> theta, double step = 1e-4);

struct EventProbGradient {
  double prob = 0.0;
  /// d prob / d theta in ParameterLayout order.
  std::vector<double> gradient;
};

/// P(Y in event | a, c) and its gradient with respect to the packed
/// parameters of model, for several events from one enumeration pass.
std::vector<EventProbGradient> event_prob_gradients(const ChainGraphModel& model,
                                                    const TreatmentVector& a,
                                                    const std::optional<CovariateVector>& c,
                                                    const std::vector<EventPredicate>& events,
                                                    const InferenceOptions& opts = {});

struct DeltaEffect {
  EffectEstimate effect;
  double p1_se = 0.0;
  double p0_se = 0.0;
};

/// Large-sample standard errors for an exact-MLE fit: parameter uncertainty
/// through the inverse observed information plus, with confounders, the
/// sampling variance of the empirical confounder law.  Construction throws
/// ConvergenceError when the information is not positive definite.
class DeltaMethod {
 public:
  DeltaMethod(const FittedModel& fit, const CaseDataset& data, const InferenceOptions& opts = {});
  ~DeltaMethod();
  DeltaMethod(DeltaMethod&&) noexcept;
  DeltaMethod& operator=(DeltaMethod&&) noexcept;

  struct Probability {
    double prob = 0.0;
    double se = 0.0;
  };
  /// Counterfactual probabilities of several events under one treatment.
  std::vector<Probability> counterfactual(const TreatmentVector& a,
                                          const std::vector<EventPredicate>& events) const;
  /// Contrast with interval point +/- 1.96 se.
  DeltaEffect effect(const EffectQuery& query) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Conditional-independence testing

/// A regressor column of the case data.
struct Column {
  enum class Kind { outcome, treatment, covariate };
  Kind kind = Kind::outcome;
  std::size_t node = 0;
};

struct CiTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  /// Set when separation forced the small ridge fallback.
  bool ridge_fallback = false;
};

/// Likelihood-ratio test of Y_target independent of the probe column given
/// the conditioning columns, by nested logistic regressions (chi-square, 1 df).
CiTestResult likelihood_ratio_ci_test(const CaseDataset& data, std::size_t target,
                                      const Column& probe,
                                      std::span<const Column> conditioning);

}  // namespace chaingraph
