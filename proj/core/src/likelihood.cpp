#include <algorithm>
#include <cmath>
#include <map>
#include <Eigen/Dense>

#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/rng.hpp"
#include "enumerate.hpp"
#include "lbfgs.hpp"

namespace chaingraph {

// ---------------------------------------------------------------------------
// ParameterLayout

ParameterLayout::ParameterLayout(NetworkGraph graph, TreatmentMode mode, bool has_confounders)
    : graph_(std::move(graph)), mode_(mode), has_confounders_(has_confounders) {}

std::size_t ParameterLayout::size() const noexcept {
  return (has_confounders_ ? 3 : 2) * node_count() + edge_count();
}

std::vector<double> ParameterLayout::pack(const ChainGraphModel& model) const {
  if (!(model.graph == graph_)) throw ShapeError("model graph does not match the parameter layout");
  if (model.has_confounders() != has_confounders_) {
    throw ShapeError("model confounder block does not match the parameter layout");
  }
  std::vector<double> theta(size(), 0.0);
  const std::vector<double> k = model.coupling_vector();
  std::copy(model.h.begin(), model.h.end(), theta.begin());
  std::copy(k.begin(), k.end(), theta.begin() + static_cast<std::ptrdiff_t>(k_offset()));
  std::copy(model.gamma.begin(), model.gamma.end(),
            theta.begin() + static_cast<std::ptrdiff_t>(gamma_offset()));
  if (has_confounders_) {
    std::copy(model.kappa->begin(), model.kappa->end(),
              theta.begin() + static_cast<std::ptrdiff_t>(kappa_offset()));
  }
  return theta;
}

ChainGraphModel ParameterLayout::unpack(std::span<const double> theta) const {
  if (theta.size() != size()) throw ShapeError("parameter vector has the wrong length");
  ChainGraphModel model = ChainGraphModel::zeros(graph_, mode_, has_confounders_);
  const std::size_t n = node_count();
  for (std::size_t i = 0; i < n; ++i) {
    model.h[i] = theta[i];
    model.gamma[i] = theta[gamma_offset() + i];
    if (has_confounders_) (*model.kappa)[i] = theta[kappa_offset() + i];
  }
  const auto& edges = graph_.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) model.k[edges[e]] = theta[k_offset() + e];
  return model;
}

namespace {

void check_graph(const CaseDataset& data, const NetworkGraph& graph) {
  if (graph.labels() != data.labels()) {
    throw ShapeError("graph labels do not match the dataset's node labels");
  }
}

// Largest block for which the dense (matrix) evaluation path is used.
constexpr std::size_t kDenseLimit = 14;
// Cap on stratum rows times states per dense chunk.
constexpr std::size_t kChunkCells = std::size_t{1} << 21;

}  // namespace

// ---------------------------------------------------------------------------
// ExactLikelihood

struct ExactLikelihood::Impl {
  ParameterLayout layout;
  InferenceOptions opts;
  std::size_t n = 0;
  std::size_t m = 0;
  Eigen::MatrixXd a;        // strata x n
  Eigen::MatrixXd c;        // strata x n (zeros without confounders)
  Eigen::VectorXd weight;   // strata, sums to 1
  Eigen::VectorXd stat_mean;  // empirical mean of the sufficient statistics
  Eigen::MatrixXd spins;    // 2^n x n, dense path only
  Eigen::MatrixXd pairs;    // 2^n x m, dense path only

  Impl(ParameterLayout l, InferenceOptions o) : layout(std::move(l)), opts(o) {}

  double dense(std::span<const double> theta, std::span<double> grad) const;
  double by_enumeration(std::span<const double> theta, std::span<double> grad) const;
};

ExactLikelihood::ExactLikelihood(const CaseDataset& data, const NetworkGraph& graph,
                                 const InferenceOptions& opts) {
  check_graph(data, graph);
  detail::require_enumerable(graph.size(), opts);
  impl_ = std::make_unique<Impl>(
      ParameterLayout(graph, data.treatment_mode(), data.has_covariates()), opts);
  Impl& d = *impl_;
  d.n = graph.size();
  d.m = graph.edge_count();
  const std::size_t n = d.n;
  const auto& edges = graph.edges();
  const ParameterLayout& layout = d.layout;

  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> strata;
  Eigen::VectorXd stats = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  for (const auto& row : data.rows()) {
    std::uint64_t amask = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (row.a.at(i)) amask |= std::uint64_t{1} << i;
    }
    const std::uint64_t cmask = row.c ? row.c->mask() : 0;
    ++strata[{amask, cmask}];
    for (std::size_t i = 0; i < n; ++i) {
      const double y = row.y[i];
      stats(static_cast<Eigen::Index>(i)) += y;
      stats(static_cast<Eigen::Index>(layout.gamma_offset() + i)) += row.a.at(i) * y;
      if (row.c) stats(static_cast<Eigen::Index>(layout.kappa_offset() + i)) += (*row.c)[i] * y;
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
      stats(static_cast<Eigen::Index>(layout.k_offset() + e)) +=
          row.y[edges[e].u] * row.y[edges[e].v];
    }
  }
  const double total = static_cast<double>(data.size());
  d.stat_mean = stats / total;

  const auto s = static_cast<Eigen::Index>(strata.size());
  d.a = Eigen::MatrixXd::Zero(s, static_cast<Eigen::Index>(n));
  d.c = Eigen::MatrixXd::Zero(s, static_cast<Eigen::Index>(n));
  d.weight.resize(s);
  Eigen::Index r = 0;
  for (const auto& [key, count] : strata) {
    for (std::size_t i = 0; i < n; ++i) {
      d.a(r, static_cast<Eigen::Index>(i)) = static_cast<double>((key.first >> i) & 1u);
      d.c(r, static_cast<Eigen::Index>(i)) = static_cast<double>((key.second >> i) & 1u);
    }
    d.weight(r) = static_cast<double>(count) / total;
    ++r;
  }

  if (n <= kDenseLimit) {
    const auto states = static_cast<Eigen::Index>(std::uint64_t{1} << n);
    d.spins.resize(states, static_cast<Eigen::Index>(n));
    d.pairs.resize(states, static_cast<Eigen::Index>(d.m));
    for (Eigen::Index st = 0; st < states; ++st) {
      for (std::size_t i = 0; i < n; ++i) {
        d.spins(st, static_cast<Eigen::Index>(i)) = ((st >> i) & 1) ? 1.0 : -1.0;
      }
      for (std::size_t e = 0; e < edges.size(); ++e) {
        d.pairs(st, static_cast<Eigen::Index>(e)) =
            d.spins(st, static_cast<Eigen::Index>(edges[e].u)) *
            d.spins(st, static_cast<Eigen::Index>(edges[e].v));
      }
    }
  }
}

ExactLikelihood::~ExactLikelihood() = default;
ExactLikelihood::ExactLikelihood(ExactLikelihood&&) noexcept = default;
ExactLikelihood& ExactLikelihood::operator=(ExactLikelihood&&) noexcept = default;

const ParameterLayout& ExactLikelihood::layout() const { return impl_->layout; }
std::size_t ExactLikelihood::stratum_count() const {
  return static_cast<std::size_t>(impl_->weight.size());
}

double ExactLikelihood::evaluate(std::span<const double> theta, std::span<double> grad) const {
  if (theta.size() != impl_->layout.size()) throw ShapeError("parameter vector has the wrong length");
  if (!grad.empty() && grad.size() != theta.size()) throw ShapeError("gradient buffer has the wrong length");
  return impl_->n <= kDenseLimit ? impl_->dense(theta, grad) : impl_->by_enumeration(theta, grad);
}

double ExactLikelihood::evaluate_by_enumeration(std::span<const double> theta,
                                                std::span<double> grad) const {
  if (theta.size() != impl_->layout.size()) throw ShapeError("parameter vector has the wrong length");
  if (!grad.empty() && grad.size() != theta.size()) throw ShapeError("gradient buffer has the wrong length");
  return impl_->by_enumeration(theta, grad);
}

double ExactLikelihood::Impl::dense(std::span<const double> theta, std::span<double> grad) const {
  using Eigen::Index;
  const Index nn = static_cast<Index>(n);
  const Index mm = static_cast<Index>(m);
  const Eigen::Map<const Eigen::VectorXd> th(theta.data(), static_cast<Index>(theta.size()));
  const Eigen::VectorXd h = th.segment(0, nn);
  const Eigen::VectorXd k = th.segment(static_cast<Index>(layout.k_offset()), mm);
  const Eigen::VectorXd gamma = th.segment(static_cast<Index>(layout.gamma_offset()), nn);
  const Eigen::VectorXd kappa = layout.has_confounders()
                                    ? Eigen::VectorXd(th.segment(static_cast<Index>(layout.kappa_offset()), nn))
                                    : Eigen::VectorXd::Zero(nn);
  const Eigen::RowVectorXd pair_term = (pairs * k).transpose();
  const Index states = spins.rows();
  const Index strata = weight.size();
  const Index chunk = std::max<Index>(1, static_cast<Index>(kChunkCells) / states);

  const bool want_grad = !grad.empty();
  double log_z_mean = 0.0;
  Eigen::VectorXd ey_h = Eigen::VectorXd::Zero(nn);
  Eigen::VectorXd ey_gamma = Eigen::VectorXd::Zero(nn);
  Eigen::VectorXd ey_kappa = Eigen::VectorXd::Zero(nn);
  Eigen::RowVectorXd state_weight = Eigen::RowVectorXd::Zero(states);

  for (Index s0 = 0; s0 < strata; s0 += chunk) {
    const Index rows = std::min(chunk, strata - s0);
    Eigen::MatrixXd field = a.middleRows(s0, rows) * gamma.asDiagonal();
    field += c.middleRows(s0, rows) * kappa.asDiagonal();
    field.rowwise() += h.transpose();
    Eigen::MatrixXd logits = field * spins.transpose();
    logits.rowwise() += pair_term;
    for (Index r = 0; r < rows; ++r) {
      auto row = logits.row(r);
      const double mx = row.maxCoeff();
      row = (row.array() - mx).exp();
      const double sum = row.sum();
      row /= sum;
      log_z_mean += weight(s0 + r) * (mx + std::log(sum));
    }
    if (!want_grad) continue;
    const Eigen::MatrixXd ey = logits * spins;  // rows x n
    const Eigen::VectorXd w = weight.segment(s0, rows);
    ey_h += ey.transpose() * w;
    ey_gamma += (ey.array() * a.middleRows(s0, rows).array()).matrix().transpose() * w;
    ey_kappa += (ey.array() * c.middleRows(s0, rows).array()).matrix().transpose() * w;
    state_weight += w.transpose() * logits;
  }

  const double value = stat_mean.dot(th) - log_z_mean;
  if (want_grad) {
    Eigen::Map<Eigen::VectorXd> g(grad.data(), static_cast<Index>(grad.size()));
    g = stat_mean;
    g.segment(0, nn) -= ey_h;
    g.segment(static_cast<Index>(layout.k_offset()), mm) -= (state_weight * pairs).transpose();
    g.segment(static_cast<Index>(layout.gamma_offset()), nn) -= ey_gamma;
    if (layout.has_confounders()) {
      g.segment(static_cast<Index>(layout.kappa_offset()), nn) -= ey_kappa;
    }
  }
  return value;
}

double ExactLikelihood::Impl::by_enumeration(std::span<const double> theta,
                                             std::span<double> grad) const {
  const ChainGraphModel model = layout.unpack(theta);
  const CompiledModel cm = CompiledModel::from(model);
  const std::size_t p = layout.size();
  std::vector<double> expect(p, 0.0);
  double log_z_mean = 0.0;
  std::vector<double> field(n);
  std::vector<double> local(p, 0.0);
  for (Eigen::Index s = 0; s < weight.size(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      field[i] = cm.h[i] + cm.gamma[i] * a(s, ii) + (cm.has_confounders() ? cm.kappa[i] * c(s, ii) : 0.0);
    }
    LogSumExp lse;
    detail::for_each_state(cm, field, [&](std::uint64_t, double pot) { lse.add(pot); });
    const double log_z = lse.value();
    log_z_mean += weight(s) * log_z;
    if (grad.empty()) continue;
    std::fill(local.begin(), local.end(), 0.0);
    detail::for_each_state(cm, field, [&](std::uint64_t mask, double pot) {
      const double prob = std::exp(pot - log_z);
      for (std::size_t i = 0; i < n; ++i) local[i] += ((mask >> i) & 1u) ? prob : -prob;
      for (std::size_t e = 0; e < cm.edges.size(); ++e) {
        const bool same = ((mask >> cm.edges[e].u) & 1u) == ((mask >> cm.edges[e].v) & 1u);
        local[layout.k_offset() + e] += same ? prob : -prob;
      }
    });
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      expect[i] += weight(s) * local[i];
      expect[layout.gamma_offset() + i] += weight(s) * a(s, ii) * local[i];
      if (layout.has_confounders()) expect[layout.kappa_offset() + i] += weight(s) * c(s, ii) * local[i];
    }
    for (std::size_t e = 0; e < m; ++e) {
      expect[layout.k_offset() + e] += weight(s) * local[layout.k_offset() + e];
    }
  }
  double dot = 0.0;
  for (std::size_t q = 0; q < p; ++q) dot += stat_mean(static_cast<Eigen::Index>(q)) * theta[q];
  if (!grad.empty()) {
    for (std::size_t q = 0; q < p; ++q) grad[q] = stat_mean(static_cast<Eigen::Index>(q)) - expect[q];
  }
  return dot - log_z_mean;
}

// ---------------------------------------------------------------------------
// PseudoLikelihood

struct PseudoLikelihood::Impl {
  ParameterLayout layout;
  std::size_t n = 0;
  std::size_t rows = 0;
  std::vector<double> y;  // rows x n, +/-1
  std::vector<double> a;  // rows x n
  std::vector<double> c;  // rows x n, empty without confounders
  // Incident edges of each node: (edge id, other endpoint).
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> incident;

  explicit Impl(ParameterLayout l) : layout(std::move(l)) {}
};

PseudoLikelihood::PseudoLikelihood(const CaseDataset& data, const NetworkGraph& graph) {
  check_graph(data, graph);
  impl_ = std::make_unique<Impl>(
      ParameterLayout(graph, data.treatment_mode(), data.has_covariates()));
  Impl& d = *impl_;
  d.n = graph.size();
  d.rows = data.size();
  d.y.resize(d.rows * d.n);
  d.a.resize(d.rows * d.n);
  if (data.has_covariates()) d.c.resize(d.rows * d.n);
  for (std::size_t r = 0; r < d.rows; ++r) {
    const auto& row = data.rows()[r];
    for (std::size_t i = 0; i < d.n; ++i) {
      d.y[r * d.n + i] = row.y[i];
      d.a[r * d.n + i] = row.a.at(i);
      if (row.c) d.c[r * d.n + i] = (*row.c)[i];
    }
  }
  d.incident.resize(d.n);
  const auto& edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    d.incident[edges[e].u].emplace_back(e, edges[e].v);
    d.incident[edges[e].v].emplace_back(e, edges[e].u);
  }
}

PseudoLikelihood::~PseudoLikelihood() = default;
PseudoLikelihood::PseudoLikelihood(PseudoLikelihood&&) noexcept = default;
PseudoLikelihood& PseudoLikelihood::operator=(PseudoLikelihood&&) noexcept = default;

const ParameterLayout& PseudoLikelihood::layout() const { return impl_->layout; }

double PseudoLikelihood::evaluate(std::span<const double> theta, std::span<double> grad) const {
  const Impl& d = *impl_;
  const ParameterLayout& L = d.layout;
  if (theta.size() != L.size()) throw ShapeError("parameter vector has the wrong length");
  if (!grad.empty() && grad.size() != theta.size()) throw ShapeError("gradient buffer has the wrong length");
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t n = d.n;
  double total = 0.0;
  for (std::size_t r = 0; r < d.rows; ++r) {
    const double* y = &d.y[r * n];
    const double* a = &d.a[r * n];
    const double* c = d.c.empty() ? nullptr : &d.c[r * n];
    for (std::size_t i = 0; i < n; ++i) {
      double eta = theta[i] + theta[L.gamma_offset() + i] * a[i];
      if (c) eta += theta[L.kappa_offset() + i] * c[i];
      for (const auto& [e, j] : d.incident[i]) eta += theta[L.k_offset() + e] * y[j];
      const double z = 2.0 * y[i] * eta;
      total -= log1p_exp(-z);
      if (grad.empty()) continue;
      const double deriv = 2.0 * y[i] * logistic(-z);
      grad[i] += deriv;
      grad[L.gamma_offset() + i] += deriv * a[i];
      if (c) grad[L.kappa_offset() + i] += deriv * c[i];
      for (const auto& [e, j] : d.incident[i]) grad[L.k_offset() + e] += deriv * y[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(d.rows);
  for (double& g : grad) g *= inv;
  return total * inv;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

template <typename Likelihood>
FittedModel maximize(const Likelihood& lik, std::size_t n_obs, const FitOptions& opts,
                     std::string method) {
  const ParameterLayout& layout = lik.layout();
  std::vector<double> x0(layout.size(), 0.0);
  if (opts.warm_start) {
    try {
      x0 = layout.pack(*opts.warm_start);
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("warm start does not fit: ") + e.what());
    }
  }
  detail::LbfgsOptions lo;
  lo.grad_tol = opts.grad_tol;
  lo.max_iterations = opts.max_iterations;
  lo.max_halvings = opts.max_halvings;
  const detail::LbfgsResult res = detail::lbfgs_minimize(
      [&](const std::vector<double>& x, std::vector<double>& g) {
        const double v = lik.evaluate(x, g);
        for (double& gi : g) gi = -gi;
        return -v;
      },
      std::move(x0), lo);
  if (!res.converged) {
    throw ConvergenceError(method + " fit did not converge after " +
                           std::to_string(res.iterations) + " iterations (gradient norm " +
                           std::to_string(res.grad_inf) +
                           (res.line_search_failed ? ", line search failed)" : ")"));
  }
  FittedModel out{layout.unpack(res.x), {}};
  out.report.method = std::move(method);
  out.report.n_obs = n_obs;
  out.report.iterations = res.iterations;
  out.report.grad_inf = res.grad_inf;
  out.report.mean_log_likelihood = -res.f;
  out.report.converged = true;
  return out;
}

}  // namespace

FittedModel fit_exact_mle(const CaseDataset& data, const NetworkGraph& graph,
                          const FitOptions& opts) {
  const ExactLikelihood lik(data, graph, opts.inference);
  return maximize(lik, data.size(), opts, "mle");
}

FittedModel fit_pseudolikelihood(const CaseDataset& data, const NetworkGraph& graph,
                                 const FitOptions& opts) {
  const PseudoLikelihood lik(data, graph);
  return maximize(lik, data.size(), opts, "pseudo_likelihood");
}

}  // namespace chaingraph
