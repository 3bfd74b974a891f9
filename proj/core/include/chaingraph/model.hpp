#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chaingraph {

/// Unordered node pair, normalized so that u < v.  Using it as the key of the
/// coupling map makes k_ij == k_ji hold by construction.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;

  static Edge of(std::size_t i, std::size_t j) noexcept {
    return i < j ? Edge{i, j} : Edge{j, i};
  }
  auto operator<=>(const Edge&) const = default;
};

/// Labeled undirected graph over the units of the outcome block.
class NetworkGraph {
 public:
  NetworkGraph() = default;
  NetworkGraph(std::vector<std::string> labels,
               const std::vector<std::pair<std::string, std::string>>& edges);

  static NetworkGraph from_indices(std::vector<std::string> labels,
                                   const std::vector<Edge>& edges);
  static NetworkGraph empty(std::vector<std::string> labels) {
    return from_indices(std::move(labels), {});
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  /// Sorted lexicographically by (u, v).
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const {
    return adjacency_.at(i);
  }

  std::optional<std::size_t> find(std::string_view label) const;
  /// Throws ShapeError for unknown labels.
  std::size_t index_of(std::string_view label) const;
  std::optional<std::size_t> edge_id(std::size_t i, std::size_t j) const;
  bool adjacent(std::size_t i, std::size_t j) const {
    return edge_id(i, j).has_value();
  }

  /// Same labels, edge set replaced.
  NetworkGraph with_edges(const std::vector<Edge>& edges) const {
    return from_indices(labels_, edges);
  }

  bool operator==(const NetworkGraph& other) const {
    return labels_ == other.labels_ && edges_ == other.edges_;
  }

 private:
  void build_index();

  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<int> edge_lookup_;  // n*n, -1 when absent
};

enum class TreatmentMode { shared, per_node };

std::string_view to_string(TreatmentMode mode);
TreatmentMode treatment_mode_from_string(std::string_view text);

/// Outcome configuration with entries in {-1, +1}.  Bit i of mask() is set
/// iff entry i is +1.
class OutcomeVector {
 public:
  OutcomeVector() = default;
  explicit OutcomeVector(const std::vector<int>& values);

  static OutcomeVector from_mask(std::uint64_t mask, std::size_t n);
  static OutcomeVector constant(std::size_t n, int value);

  std::size_t size() const noexcept { return values_.size(); }
  int operator[](std::size_t i) const { return values_[i]; }
  void set(std::size_t i, int value);
  std::span<const std::int8_t> values() const noexcept { return values_; }

  std::uint64_t mask() const;
  /// Number of +1 entries.
  std::size_t liberal_count() const;
  OutcomeVector flipped() const;

  bool operator==(const OutcomeVector&) const = default;

 private:
  std::vector<std::int8_t> values_;
};

/// Binary treatment: one scalar in shared mode, one entry per node otherwise.
class TreatmentVector {
 public:
  TreatmentVector() = default;

  static TreatmentVector shared(int a);
  static TreatmentVector per_node(const std::vector<int>& values);
  static TreatmentVector none(TreatmentMode mode, std::size_t n);

  TreatmentMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return values_.size(); }
  /// Treatment applied to node i; shared mode broadcasts the scalar.
  int at(std::size_t i) const {
    return mode_ == TreatmentMode::shared ? values_[0] : values_[i];
  }
  std::span<const std::uint8_t> values() const noexcept { return values_; }
  std::size_t treated_count() const;

  bool operator==(const TreatmentVector&) const = default;

 private:
  TreatmentMode mode_ = TreatmentMode::shared;
  std::vector<std::uint8_t> values_{0};
};

/// Per-node binary confounder vector in {0, 1}.
class CovariateVector {
 public:
  CovariateVector() = default;
  explicit CovariateVector(const std::vector<int>& values);

  static CovariateVector from_mask(std::uint64_t mask, std::size_t n);

  std::size_t size() const noexcept { return values_.size(); }
  int operator[](std::size_t i) const { return values_[i]; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }
  std::uint64_t mask() const;

  bool operator==(const CovariateVector&) const = default;

 private:
  std::vector<std::uint8_t> values_;
};

/// Parameters (h, k, gamma, kappa) of the two-block chain graph model bound to
/// an outcome-block graph.
struct ChainGraphModel {
  NetworkGraph graph;
  TreatmentMode treatment_mode = TreatmentMode::shared;
  std::vector<double> h;
  std::map<Edge, double> k;
  std::vector<double> gamma;
  std::optional<std::vector<double>> kappa;

  /// All-zero parameters with one coupling per graph edge.
  static ChainGraphModel zeros(NetworkGraph graph, TreatmentMode mode,
                               bool with_confounders = false);

  std::size_t size() const noexcept { return graph.size(); }
  bool has_confounders() const noexcept { return kappa.has_value(); }
  double coupling(std::size_t i, std::size_t j) const;
  /// Couplings aligned with graph.edges().  Throws ShapeError when the model
  /// is not valid.
  std::vector<double> coupling_vector() const;
};

/// Lists every violated model invariant; empty iff the model is valid.
std::vector<std::string> validate_model(const ChainGraphModel& model);

/// Throws ShapeError when a does not conform to the model's treatment mode.
void check_treatment(const ChainGraphModel& model, const TreatmentVector& a);

/// Throws ShapeError/ConfigError when (y, a, c) do not conform to the model.
void check_context(const ChainGraphModel& model, const OutcomeVector* y,
                   const TreatmentVector& a,
                   const std::optional<CovariateVector>& c);

/// sum_i h_i y_i + sum_{edges} k_ij y_i y_j + sum_i gamma_i a_i y_i
///   + sum_i kappa_i c_i y_i
double log_potential(const ChainGraphModel& model, const OutcomeVector& y,
                     const TreatmentVector& a,
                     const std::optional<CovariateVector>& c = std::nullopt);

/// Dense view of a validated model used by the enumeration and sampling hot
/// loops.  Couplings are stored both per edge and as a CSR adjacency.
struct CompiledModel {
  std::size_t n = 0;
  TreatmentMode mode = TreatmentMode::shared;
  std::vector<double> h;
  std::vector<double> gamma;
  std::vector<double> kappa;  // empty when the model has no confounders
  std::vector<Edge> edges;
  std::vector<double> k;
  std::vector<std::size_t> adj_offsets;
  std::vector<std::size_t> adj_nodes;
  std::vector<double> adj_weights;

  static CompiledModel from(const ChainGraphModel& model);

  bool has_confounders() const noexcept { return !kappa.empty(); }
  /// Per-node linear field h_i + gamma_i a_i + kappa_i c_i.
  std::vector<double> effective_field(
      const TreatmentVector& a, const std::optional<CovariateVector>& c) const;
  /// sum_j k_ij y_j for the spin configuration encoded in mask.
  double local_coupling(std::size_t i, std::uint64_t mask) const;
};

/// Rows of (outcome, treatment, optional confounders), one per i.i.d. case.
class CaseDataset {
 public:
  struct Row {
    OutcomeVector y;
    TreatmentVector a;
    std::optional<CovariateVector> c;
  };

  CaseDataset(std::vector<std::string> labels, TreatmentMode mode,
              bool has_covariates, std::vector<Row> rows,
              std::vector<std::string> case_ids = {});

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t node_count() const noexcept { return labels_.size(); }
  TreatmentMode treatment_mode() const noexcept { return mode_; }
  bool has_covariates() const noexcept { return has_covariates_; }
  std::size_t size() const noexcept { return rows_.size(); }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  const Row& row(std::size_t i) const { return rows_.at(i); }
  const std::vector<std::string>& case_ids() const noexcept { return case_ids_; }

  /// Rows picked by index (with repetition), as used by the bootstrap.
  CaseDataset resample(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> labels_;
  TreatmentMode mode_;
  bool has_covariates_;
  std::vector<Row> rows_;
  std::vector<std::string> case_ids_;
};

}  // namespace chaingraph
