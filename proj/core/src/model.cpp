#include "chaingraph/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "chaingraph/error.hpp"

namespace chaingraph {

namespace {

std::string pair_name(const NetworkGraph& graph, const Edge& e) {
  auto name = [&](std::size_t i) {
    return i < graph.size() ? graph.label(i) : std::to_string(i);
  };
  return "(" + name(e.u) + "," + name(e.v) + ")";
}

void check_finite(const std::vector<double>& values, std::string_view block,
                  std::vector<std::string>& out) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      out.push_back("non-finite " + std::string(block) + "[" +
                    std::to_string(i) + "]");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// NetworkGraph

NetworkGraph::NetworkGraph(
    std::vector<std::string> labels,
    const std::vector<std::pair<std::string, std::string>>& edges) {
  NetworkGraph base = from_indices(std::move(labels), {});
  std::vector<Edge> indexed;
  indexed.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    if (a == b) throw ShapeError("self-loop on node " + a);
    indexed.push_back(Edge::of(base.index_of(a), base.index_of(b)));
  }
  *this = from_indices(std::move(base.labels_), indexed);
}

NetworkGraph NetworkGraph::from_indices(std::vector<std::string> labels,
                                        const std::vector<Edge>& edges) {
  if (labels.empty()) throw ShapeError("graph needs at least one node");
  std::set<std::string> unique(labels.begin(), labels.end());
  if (unique.size() != labels.size()) {
    throw ShapeError("node labels must be unique");
  }
  for (const auto& l : labels) {
    if (l.empty()) throw ShapeError("node labels must be non-empty");
  }
  NetworkGraph g;
  g.labels_ = std::move(labels);
  std::set<Edge> edge_set;
  for (const Edge& raw : edges) {
    Edge e = Edge::of(raw.u, raw.v);
    if (e.u == e.v) throw ShapeError("self-loop on node index " + std::to_string(e.u));
    if (e.v >= g.labels_.size()) {
      throw ShapeError("edge endpoint out of range: " + std::to_string(e.v));
    }
    edge_set.insert(e);
  }
  g.edges_.assign(edge_set.begin(), edge_set.end());
  g.build_index();
  return g;
}

void NetworkGraph::build_index() {
  const std::size_t n = labels_.size();
  adjacency_.assign(n, {});
  edge_lookup_.assign(n * n, -1);
  for (std::size_t id = 0; id < edges_.size(); ++id) {
    const Edge& e = edges_[id];
    adjacency_[e.u].push_back(e.v);
    adjacency_[e.v].push_back(e.u);
    edge_lookup_[e.u * n + e.v] = static_cast<int>(id);
    edge_lookup_[e.v * n + e.u] = static_cast<int>(id);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

std::optional<std::size_t> NetworkGraph::find(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t NetworkGraph::index_of(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw ShapeError("unknown node label: " + std::string(label));
}

std::optional<std::size_t> NetworkGraph::edge_id(std::size_t i,
                                                 std::size_t j) const {
  const std::size_t n = labels_.size();
  if (i >= n || j >= n) return std::nullopt;
  int id = edge_lookup_[i * n + j];
  if (id < 0) return std::nullopt;
  return static_cast<std::size_t>(id);
}

// ---------------------------------------------------------------------------
// Treatment mode

std::string_view to_string(TreatmentMode mode) {
  return mode == TreatmentMode::shared ? "shared" : "per_node";
}

TreatmentMode treatment_mode_from_string(std::string_view text) {
  if (text == "shared") return TreatmentMode::shared;
  if (text == "per_node") return TreatmentMode::per_node;
  throw SchemaError("treatment_mode must be \"shared\" or \"per_node\", got \"" +
                    std::string(text) + "\"");
}

// ---------------------------------------------------------------------------
// Vectors

OutcomeVector::OutcomeVector(const std::vector<int>& values) {
  values_.reserve(values.size());
  for (int v : values) {
    if (v != 1 && v != -1) {
      throw ShapeError("outcome entries must be -1 or +1, got " +
                       std::to_string(v));
    }
    values_.push_back(static_cast<std::int8_t>(v));
  }
}

OutcomeVector OutcomeVector::from_mask(std::uint64_t mask, std::size_t n) {
  OutcomeVector y;
  y.values_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y.values_[i] = ((mask >> i) & 1u) ? 1 : -1;
  }
  return y;
}

OutcomeVector OutcomeVector::constant(std::size_t n, int value) {
  return OutcomeVector(std::vector<int>(n, value));
}

void OutcomeVector::set(std::size_t i, int value) {
  if (value != 1 && value != -1) throw ShapeError("outcome entries must be -1 or +1");
  values_.at(i) = static_cast<std::int8_t>(value);
}

std::uint64_t OutcomeVector::mask() const {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] > 0) m |= std::uint64_t{1} << i;
  }
  return m;
}

std::size_t OutcomeVector::liberal_count() const {
  return static_cast<std::size_t>(
      std::count(values_.begin(), values_.end(), std::int8_t{1}));
}

OutcomeVector OutcomeVector::flipped() const {
  OutcomeVector y = *this;
  for (auto& v : y.values_) v = static_cast<std::int8_t>(-v);
  return y;
}

TreatmentVector TreatmentVector::shared(int a) {
  if (a != 0 && a != 1) throw ShapeError("treatment must be 0 or 1");
  TreatmentVector t;
  t.mode_ = TreatmentMode::shared;
  t.values_ = {static_cast<std::uint8_t>(a)};
  return t;
}

TreatmentVector TreatmentVector::per_node(const std::vector<int>& values) {
  TreatmentVector t;
  t.mode_ = TreatmentMode::per_node;
  t.values_.clear();
  for (int v : values) {
    if (v != 0 && v != 1) throw ShapeError("treatment entries must be 0 or 1");
    t.values_.push_back(static_cast<std::uint8_t>(v));
  }
  return t;
}

TreatmentVector TreatmentVector::none(TreatmentMode mode, std::size_t n) {
  return mode == TreatmentMode::shared ? shared(0)
                                       : per_node(std::vector<int>(n, 0));
}

std::size_t TreatmentVector::treated_count() const {
  return static_cast<std::size_t>(
      std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

CovariateVector::CovariateVector(const std::vector<int>& values) {
  for (int v : values) {
    if (v != 0 && v != 1) throw ShapeError("covariate entries must be 0 or 1");
    values_.push_back(static_cast<std::uint8_t>(v));
  }
}

CovariateVector CovariateVector::from_mask(std::uint64_t mask, std::size_t n) {
  CovariateVector c;
  c.values_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.values_[i] = static_cast<std::uint8_t>((mask >> i) & 1u);
  }
  return c;
}

std::uint64_t CovariateVector::mask() const {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i]) m |= std::uint64_t{1} << i;
  }
  return m;
}

// ---------------------------------------------------------------------------
// ChainGraphModel

ChainGraphModel ChainGraphModel::zeros(NetworkGraph graph, TreatmentMode mode,
                                       bool with_confounders) {
  ChainGraphModel m;
  const std::size_t n = graph.size();
  m.treatment_mode = mode;
  m.h.assign(n, 0.0);
  m.gamma.assign(n, 0.0);
  if (with_confounders) m.kappa = std::vector<double>(n, 0.0);
  for (const Edge& e : graph.edges()) m.k[e] = 0.0;
  m.graph = std::move(graph);
  return m;
}

double ChainGraphModel::coupling(std::size_t i, std::size_t j) const {
  auto it = k.find(Edge::of(i, j));
  return it == k.end() ? 0.0 : it->second;
}

std::vector<double> ChainGraphModel::coupling_vector() const {
  if (auto v = validate_model(*this); !v.empty()) {
    throw ShapeError("invalid model: " + v.front());
  }
  std::vector<double> out;
  out.reserve(graph.edge_count());
  for (const Edge& e : graph.edges()) out.push_back(k.at(e));
  return out;
}

std::vector<std::string> validate_model(const ChainGraphModel& model) {
  std::vector<std::string> out;
  const std::size_t n = model.graph.size();
  if (n == 0) out.emplace_back("graph has no nodes");
  if (model.h.size() != n) out.emplace_back("h length mismatch");
  if (model.gamma.size() != n) out.emplace_back("gamma length mismatch");
  if (model.kappa && model.kappa->size() != n) {
    out.emplace_back("kappa length mismatch");
  }
  for (const auto& [e, value] : model.k) {
    if (e.u == e.v) {
      out.push_back("k indexed by self-loop " + pair_name(model.graph, e));
    } else if (!model.graph.adjacent(e.u, e.v)) {
      out.push_back("k indexed by non-edge " + pair_name(model.graph, e));
    }
    if (!std::isfinite(value)) {
      out.push_back("non-finite k" + pair_name(model.graph, e));
    }
  }
  for (const Edge& e : model.graph.edges()) {
    if (!model.k.contains(e)) {
      out.push_back("k missing for edge " + pair_name(model.graph, e));
    }
  }
  check_finite(model.h, "h", out);
  check_finite(model.gamma, "gamma", out);
  if (model.kappa) check_finite(*model.kappa, "kappa", out);
  return out;
}

void check_treatment(const ChainGraphModel& model, const TreatmentVector& a) {
  const std::size_t n = model.size();
  if (a.mode() != model.treatment_mode) {
    throw ShapeError("treatment mode " + std::string(to_string(a.mode())) +
                     " does not match model mode " +
                     std::string(to_string(model.treatment_mode)));
  }
  if (a.mode() == TreatmentMode::per_node && a.size() != n) {
    throw ShapeError("treatment vector has length " + std::to_string(a.size()) +
                     ", model has " + std::to_string(n) + " nodes");
  }
}

void check_context(const ChainGraphModel& model, const OutcomeVector* y,
                   const TreatmentVector& a,
                   const std::optional<CovariateVector>& c) {
  const std::size_t n = model.size();
  if (y && y->size() != n) {
    throw ShapeError("outcome vector has length " + std::to_string(y->size()) +
                     ", model has " + std::to_string(n) + " nodes");
  }
  check_treatment(model, a);
  if (c.has_value() != model.has_confounders()) {
    throw ConfigError(model.has_confounders()
                          ? "model has confounder effects but no covariates given"
                          : "covariates given but model has no confounder effects");
  }
  if (c && c->size() != n) {
    throw ShapeError("covariate vector has length " + std::to_string(c->size()) +
                     ", model has " + std::to_string(n) + " nodes");
  }
}

double log_potential(const ChainGraphModel& model, const OutcomeVector& y,
                     const TreatmentVector& a,
                     const std::optional<CovariateVector>& c) {
  check_context(model, &y, a, c);
  if (auto v = validate_model(model); !v.empty()) {
    throw ShapeError("invalid model: " + v.front());
  }
  const std::size_t n = model.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double field = model.h[i] + model.gamma[i] * a.at(i);
    if (c) field += (*model.kappa)[i] * (*c)[i];
    total += field * y[i];
  }
  for (const auto& [e, value] : model.k) total += value * y[e.u] * y[e.v];
  return total;
}

// ---------------------------------------------------------------------------
// CompiledModel

CompiledModel CompiledModel::from(const ChainGraphModel& model) {
  CompiledModel cm;
  cm.k = model.coupling_vector();  // validates
  cm.n = model.size();
  cm.mode = model.treatment_mode;
  cm.h = model.h;
  cm.gamma = model.gamma;
  if (model.kappa) cm.kappa = *model.kappa;
  cm.edges = model.graph.edges();

  cm.adj_offsets.assign(cm.n + 1, 0);
  for (const Edge& e : cm.edges) {
    ++cm.adj_offsets[e.u + 1];
    ++cm.adj_offsets[e.v + 1];
  }
  for (std::size_t i = 0; i < cm.n; ++i) cm.adj_offsets[i + 1] += cm.adj_offsets[i];
  cm.adj_nodes.resize(cm.adj_offsets.back());
  cm.adj_weights.resize(cm.adj_offsets.back());
  std::vector<std::size_t> fill(cm.adj_offsets.begin(), cm.adj_offsets.end() - 1);
  for (std::size_t id = 0; id < cm.edges.size(); ++id) {
    const Edge& e = cm.edges[id];
    cm.adj_nodes[fill[e.u]] = e.v;
    cm.adj_weights[fill[e.u]++] = cm.k[id];
    cm.adj_nodes[fill[e.v]] = e.u;
    cm.adj_weights[fill[e.v]++] = cm.k[id];
  }
  return cm;
}

std::vector<double> CompiledModel::effective_field(
    const TreatmentVector& a, const std::optional<CovariateVector>& c) const {
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = h[i] + gamma[i] * a.at(i);
    if (c && !kappa.empty()) f[i] += kappa[i] * (*c)[i];
  }
  return f;
}

double CompiledModel::local_coupling(std::size_t i, std::uint64_t mask) const {
  double s = 0.0;
  for (std::size_t p = adj_offsets[i]; p < adj_offsets[i + 1]; ++p) {
    s += ((mask >> adj_nodes[p]) & 1u) ? adj_weights[p] : -adj_weights[p];
  }
  return s;
}

// ---------------------------------------------------------------------------
// CaseDataset

CaseDataset::CaseDataset(std::vector<std::string> labels, TreatmentMode mode,
                         bool has_covariates, std::vector<Row> rows,
                         std::vector<std::string> case_ids)
    : labels_(std::move(labels)),
      mode_(mode),
      has_covariates_(has_covariates),
      rows_(std::move(rows)),
      case_ids_(std::move(case_ids)) {
  if (labels_.empty()) throw ShapeError("dataset needs at least one node");
  if (rows_.empty()) throw EmptyDatasetError("dataset has no rows");
  const std::size_t n = labels_.size();
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const Row& row = rows_[r];
    const std::string where = " in row " + std::to_string(r);
    if (row.y.size() != n) throw ShapeError("outcome length mismatch" + where);
    if (row.a.mode() != mode_) throw ShapeError("treatment mode mismatch" + where);
    if (mode_ == TreatmentMode::per_node && row.a.size() != n) {
      throw ShapeError("treatment length mismatch" + where);
    }
    if (row.c.has_value() != has_covariates_) {
      throw ConfigError("covariate presence mismatch" + where);
    }
    if (row.c && row.c->size() != n) {
      throw ShapeError("covariate length mismatch" + where);
    }
  }
  if (case_ids_.empty()) {
    case_ids_.reserve(rows_.size());
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      case_ids_.push_back(std::to_string(r + 1));
    }
  } else if (case_ids_.size() != rows_.size()) {
    throw ShapeError("case id count does not match row count");
  }
}

CaseDataset CaseDataset::resample(std::span<const std::size_t> indices) const {
  std::vector<Row> rows;
  std::vector<std::string> ids;
  rows.reserve(indices.size());
  ids.reserve(indices.size());
  for (std::size_t idx : indices) {
    rows.push_back(rows_.at(idx));
    ids.push_back(case_ids_.at(idx));
  }
  return CaseDataset(labels_, mode_, has_covariates_, std::move(rows),
                     std::move(ids));
}

}  // namespace chaingraph
