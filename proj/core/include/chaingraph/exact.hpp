#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chaingraph/model.hpp"

namespace chaingraph {

struct InferenceOptions {
  /// Largest outcome block that may be enumerated (2^n states).
  std::size_t enumeration_limit = 20;
};

/// Single-pass, max-shifted log-sum-exp accumulator.
class LogSumExp {
 public:
  void add(double x) noexcept {
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  /// -inf when nothing was added.
  double value() const noexcept {
    return sum_ == 0.0 ? -std::numeric_limits<double>::infinity()
                       : max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

/// Set of outcome configurations over which probabilities are aggregated:
/// either by number of +1 (liberal) entries or an explicit list.
class EventPredicate {
 public:
  static EventPredicate liberal_counts(std::set<std::size_t> counts);
  static EventPredicate explicit_set(const std::vector<OutcomeVector>& outcomes);
  /// Accepts "count=9", "count in {4,5}" and "y=(1,-1,...)".
  static EventPredicate parse(std::string_view text);

  bool is_count_event() const noexcept { return explicit_n_ == 0; }
  const std::set<std::size_t>& counts() const noexcept { return counts_; }

  bool contains(std::uint64_t mask, std::size_t n) const;
  bool contains(const OutcomeVector& y) const {
    return contains(y.mask(), y.size());
  }
  /// Complement within {-1,+1}^n.
  EventPredicate complement(std::size_t n) const;
  /// Throws ShapeError when the event does not conform to n nodes.
  void check(std::size_t n) const;
  std::string to_string() const;

  bool operator==(const EventPredicate&) const = default;

 private:
  std::set<std::size_t> counts_;
  std::set<std::uint64_t> masks_;
  std::size_t explicit_n_ = 0;
};

/// Law of the confounder vector C used to marginalize counterfactuals.
class CovariateLaw {
 public:
  enum class Kind { empirical, product_bernoulli, ising };

  struct Atom {
    CovariateVector c;
    double weight;
  };

  static CovariateLaw empirical(std::vector<Atom> atoms);
  /// Equal weight per row; duplicate vectors merged, atoms ordered by mask.
  static CovariateLaw empirical_from(const CaseDataset& data);
  static CovariateLaw product_bernoulli(std::vector<double> probabilities);
  /// p(c) proportional to exp(sum_i f_i s_i + sum_ij J_ij s_i s_j) on the
  /// spins s = 2c - 1.
  static CovariateLaw ising(NetworkGraph graph, std::vector<double> fields,
                            std::map<Edge, double> couplings);

  Kind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return n_; }
  const std::vector<double>& probabilities() const noexcept { return probs_; }
  /// The Ising law as an outcome-block model over spins (ising kind only).
  const ChainGraphModel& ising_model() const;

  /// Every c with positive mass and its probability.  Product and Ising laws
  /// enumerate all 2^n vectors.
  std::vector<Atom> support(const InferenceOptions& opts = {}) const;

 private:
  Kind kind_ = Kind::empirical;
  std::size_t n_ = 0;
  std::vector<Atom> atoms_;
  std::vector<double> probs_;
  std::optional<ChainGraphModel> ising_;
};

enum class EffectScale { risk_difference, risk_ratio, odds_ratio };

std::string_view to_string(EffectScale scale);
EffectScale effect_scale_from_string(std::string_view text);

struct EffectEstimate {
  EffectScale scale = EffectScale::risk_difference;
  double point = 0.0;
  std::optional<double> se;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  TreatmentVector a1;
  TreatmentVector a0;
  std::string event;
  /// Counterfactual event probabilities under a1 and a0.
  double p1 = 0.0;
  double p0 = 0.0;
  std::string model_fingerprint;
};

/// Contrast of two counterfactual probabilities on the requested scale.
/// Throws UndefinedScaleError when the ratio is not defined.
double effect_on_scale(double p1, double p0, EffectScale scale);

double log_partition(const ChainGraphModel& model, const TreatmentVector& a,
                     const std::optional<CovariateVector>& c = std::nullopt,
                     const InferenceOptions& opts = {});

double joint_prob(const ChainGraphModel& model, const OutcomeVector& y,
                  const TreatmentVector& a,
                  const std::optional<CovariateVector>& c = std::nullopt,
                  const InferenceOptions& opts = {});

double event_prob(const ChainGraphModel& model, const TreatmentVector& a,
                  const std::optional<CovariateVector>& c,
                  const EventPredicate& event, const InferenceOptions& opts = {});

/// Several events from one enumeration pass.
std::vector<double> event_probs(const ChainGraphModel& model,
                                const TreatmentVector& a,
                                const std::optional<CovariateVector>& c,
                                const std::vector<EventPredicate>& events,
                                const InferenceOptions& opts = {});

/// Full distribution over outcomes, indexed by OutcomeVector::mask().
std::vector<double> outcome_distribution(
    const ChainGraphModel& model, const TreatmentVector& a,
    const std::optional<CovariateVector>& c = std::nullopt,
    const InferenceOptions& opts = {});

/// P(Y_i = +1 | a, c) for every node.
std::vector<double> marginal_liberal_probs(
    const ChainGraphModel& model, const TreatmentVector& a,
    const std::optional<CovariateVector>& c = std::nullopt,
    const InferenceOptions& opts = {});

/// sum_c P(Y(a) in event | C = c) p(C = c); reduces to event_prob when the
/// model has no confounder effects, in which case law must be absent.
double counterfactual_event_prob(const ChainGraphModel& model,
                                 const TreatmentVector& a,
                                 const EventPredicate& event,
                                 const std::optional<CovariateLaw>& law,
                                 const InferenceOptions& opts = {});

std::vector<double> counterfactual_event_probs(
    const ChainGraphModel& model, const TreatmentVector& a,
    const std::vector<EventPredicate>& events,
    const std::optional<CovariateLaw>& law, const InferenceOptions& opts = {});

/// Point contrast between a1 and a0; se and interval are left unset.
EffectEstimate causal_effect(const ChainGraphModel& model,
                             const TreatmentVector& a1,
                             const TreatmentVector& a0,
                             const EventPredicate& event, EffectScale scale,
                             const std::optional<CovariateLaw>& law,
                             const InferenceOptions& opts = {});

}  // namespace chaingraph
