#include <algorithm>
#include <cmath>
#include <Eigen/Dense>

#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/rng.hpp"

namespace chaingraph {

namespace {

// Design of one node's regression.  Columns: intercept, the other nodes'
// outcomes (in node order), the node's treatment, then its confounder.
struct NodeDesign {
  Eigen::MatrixXd x;
  Eigen::VectorXd t;  // +/-1 responses
  std::vector<std::size_t> other_nodes;
  bool has_covariate = false;

  std::size_t treatment_col() const { return 1 + other_nodes.size(); }
  std::size_t covariate_col() const { return 2 + other_nodes.size(); }
};

NodeDesign build_design(const CaseDataset& data, std::size_t node,
                        const std::vector<std::size_t>& others) {
  if (node >= data.node_count()) throw ShapeError("node index out of range");
  NodeDesign d;
  d.other_nodes = others;
  d.has_covariate = data.has_covariates();
  const auto rows = static_cast<Eigen::Index>(data.size());
  const auto cols = static_cast<Eigen::Index>(2 + others.size() + (d.has_covariate ? 1 : 0));
  d.x.resize(rows, cols);
  d.t.resize(rows);
  bool seen_plus = false;
  bool seen_minus = false;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data.rows()[static_cast<std::size_t>(r)];
    d.t(r) = row.y[node];
    (row.y[node] > 0 ? seen_plus : seen_minus) = true;
    d.x(r, 0) = 1.0;
    for (std::size_t j = 0; j < others.size(); ++j) {
      d.x(r, static_cast<Eigen::Index>(1 + j)) = row.y[others[j]];
    }
    d.x(r, static_cast<Eigen::Index>(d.treatment_col())) = row.a.at(node);
    if (d.has_covariate) {
      d.x(r, static_cast<Eigen::Index>(d.covariate_col())) = (*row.c)[node];
    }
  }
  if (!(seen_plus && seen_minus)) {
    throw DegenerateNodeError("outcome of node " + data.labels()[node] +
                              " is constant across all cases");
  }
  return d;
}

std::vector<std::size_t> all_others(std::size_t n, std::size_t node) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != node) out.push_back(j);
  }
  return out;
}

// Smooth part: mean log1p(exp(-2 t eta)), the negated mean log-likelihood.
double smooth_loss(const NodeDesign& d, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = d.x * beta;
  double total = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) total += log1p_exp(-2.0 * d.t(r) * eta(r));
  return total / static_cast<double>(eta.size());
}

double smooth_loss_grad(const NodeDesign& d, const Eigen::VectorXd& beta,
                        Eigen::VectorXd& grad) {
  const Eigen::VectorXd eta = d.x * beta;
  Eigen::VectorXd w(eta.size());
  double total = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double z = -2.0 * d.t(r) * eta(r);
    total += log1p_exp(z);
    w(r) = -2.0 * d.t(r) * logistic(z);
  }
  const double inv_n = 1.0 / static_cast<double>(eta.size());
  grad = d.x.transpose() * w * inv_n;
  return total * inv_n;
}

struct SolveResult {
  Eigen::VectorXd beta;
  std::size_t iterations = 0;
  bool capped = false;
};

// Accelerated proximal gradient (FISTA with function-value restart) on
// loss(beta) + lambda * sum_{penalized} |beta_j| over the box |beta_j| <= cap.
SolveResult solve_penalized(const NodeDesign& d, double lambda,
                            const std::vector<bool>& penalized, Eigen::VectorXd beta,
                            const LassoOptions& opts) {
  const Eigen::Index p = beta.size();
  const double cap = opts.max_abs_coefficient;
  auto penalty = [&](const Eigen::VectorXd& b) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (penalized[static_cast<std::size_t>(j)]) s += std::abs(b(j));
    }
    return lambda * s;
  };
  auto prox = [&](const Eigen::VectorXd& v, double step) {
    Eigen::VectorXd out(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      double x = v(j);
      if (penalized[static_cast<std::size_t>(j)]) {
        const double shrink = step * lambda;
        x = x > shrink ? x - shrink : (x < -shrink ? x + shrink : 0.0);
      }
      out(j) = std::clamp(x, -cap, cap);
    }
    return out;
  };

  for (Eigen::Index j = 0; j < p; ++j) beta(j) = std::clamp(beta(j), -cap, cap);
  double objective = smooth_loss(d, beta) + penalty(beta);
  Eigen::VectorXd previous = beta;
  double momentum = 1.0;
  double step = 1.0;
  Eigen::VectorXd grad;
  SolveResult out;

  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const Eigen::VectorXd y = beta + ((momentum - 1.0) / next_momentum) * (beta - previous);
    const double loss_y = smooth_loss_grad(d, y, grad);

    Eigen::VectorXd candidate;
    double loss_c = 0.0;
    for (int halving = 0; halving < 200; ++halving) {
      candidate = prox(y - step * grad, step);
      loss_c = smooth_loss(d, candidate);
      const Eigen::VectorXd diff = candidate - y;
      if (loss_c <= loss_y + grad.dot(diff) + diff.squaredNorm() / (2.0 * step) + 1e-15) break;
      step *= 0.5;
    }
    double candidate_objective = loss_c + penalty(candidate);
    out.iterations = it + 1;

    if (candidate_objective > objective) {
      // A plain step that fails to descend means we are at rounding level.
      if (momentum == 1.0) break;
      // Momentum overshot: restart from a plain proximal step at beta.
      momentum = 1.0;
      previous = beta;
      continue;
    }
    const double change = (candidate - beta).cwiseAbs().maxCoeff();
    const double decrease = objective - candidate_objective;
    previous = beta;
    beta = candidate;
    objective = candidate_objective;
    momentum = next_momentum;
    if (decrease < opts.objective_tol || change < opts.step_tol) break;
  }
  out.beta = beta;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::abs(beta(j)) >= cap) out.capped = true;
  }
  return out;
}

NodewiseFit finish_fit(const CaseDataset& data, const NodeDesign& d, std::size_t node,
                       double lambda, const SolveResult& solved) {
  NodewiseFit fit;
  fit.node = node;
  fit.lambda = lambda;
  fit.iterations = solved.iterations;
  fit.capped = solved.capped;
  NodeCoefficients& c = fit.coefficients;
  c.neighbors.assign(data.node_count(), 0.0);
  c.intercept = solved.beta(0);
  double l1 = 0.0;
  for (std::size_t j = 0; j < d.other_nodes.size(); ++j) {
    const double v = solved.beta(static_cast<Eigen::Index>(1 + j));
    c.neighbors[d.other_nodes[j]] = v;
    l1 += std::abs(v);
  }
  c.treatment = solved.beta(static_cast<Eigen::Index>(d.treatment_col()));
  if (d.has_covariate) c.covariate = solved.beta(static_cast<Eigen::Index>(d.covariate_col()));
  fit.mean_log_likelihood = -smooth_loss(d, solved.beta);
  fit.objective = fit.mean_log_likelihood - lambda * l1;
  return fit;
}

Eigen::VectorXd initial_beta(const NodeDesign& d, const std::optional<NodeCoefficients>& start) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.x.cols());
  if (!start) return beta;
  beta(0) = start->intercept;
  for (std::size_t j = 0; j < d.other_nodes.size(); ++j) {
    if (d.other_nodes[j] < start->neighbors.size()) {
      beta(static_cast<Eigen::Index>(1 + j)) = start->neighbors[d.other_nodes[j]];
    }
  }
  beta(static_cast<Eigen::Index>(d.treatment_col())) = start->treatment;
  if (d.has_covariate && start->covariate) {
    beta(static_cast<Eigen::Index>(d.covariate_col())) = *start->covariate;
  }
  return beta;
}

}  // namespace

std::vector<std::size_t> NodewiseFit::support() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < coefficients.neighbors.size(); ++j) {
    if (coefficients.neighbors[j] != 0.0) out.push_back(j);
  }
  return out;
}

double nodewise_objective(const CaseDataset& data, std::size_t node, double lambda,
                          const NodeCoefficients& coefficients) {
  if (coefficients.neighbors.size() != data.node_count()) {
    throw ShapeError("neighbor coefficient vector has the wrong length");
  }
  const NodeDesign d = build_design(data, node, all_others(data.node_count(), node));
  const Eigen::VectorXd beta = initial_beta(d, coefficients);
  double l1 = 0.0;
  for (std::size_t j : d.other_nodes) l1 += std::abs(coefficients.neighbors[j]);
  return -smooth_loss(d, beta) - lambda * l1;
}

NodewiseFit node_logistic_fit(const CaseDataset& data, std::size_t node, double lambda,
                              const LassoOptions& opts,
                              const std::optional<NodeCoefficients>& start) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("penalty must be a finite non-negative number");
  }
  const NodeDesign d = build_design(data, node, all_others(data.node_count(), node));
  std::vector<bool> penalized(static_cast<std::size_t>(d.x.cols()), false);
  for (std::size_t j = 0; j < d.other_nodes.size(); ++j) penalized[1 + j] = true;
  const SolveResult solved = solve_penalized(d, lambda, penalized, initial_beta(d, start), opts);
  return finish_fit(data, d, node, lambda, solved);
}

NodewiseFit node_logistic_refit(const CaseDataset& data, std::size_t node,
                                std::span<const std::size_t> neighbor_set,
                                const LassoOptions& opts) {
  std::vector<std::size_t> others(neighbor_set.begin(), neighbor_set.end());
  std::sort(others.begin(), others.end());
  others.erase(std::unique(others.begin(), others.end()), others.end());
  for (std::size_t j : others) {
    if (j == node || j >= data.node_count()) throw ShapeError("invalid neighbor index in refit");
  }
  const NodeDesign d = build_design(data, node, others);
  const std::vector<bool> penalized(static_cast<std::size_t>(d.x.cols()), false);
  const SolveResult solved =
      solve_penalized(d, 0.0, penalized, Eigen::VectorXd::Zero(d.x.cols()), opts);
  return finish_fit(data, d, node, 0.0, solved);
}

// ---------------------------------------------------------------------------
// Likelihood-ratio conditional-independence test

namespace {

double column_value(const CaseDataset::Row& row, const Column& col) {
  switch (col.kind) {
    case Column::Kind::outcome:
      return row.y[col.node];
    case Column::Kind::treatment:
      return row.a.at(col.node);
    case Column::Kind::covariate:
      return (*row.c)[col.node];
  }
  return 0.0;
}

struct LogitFit {
  double log_likelihood = 0.0;  // includes the ridge term when ridge > 0
  bool separated = false;
};

// Newton-Raphson for P(z = 1) = logistic(x beta) with optional ridge on the
// non-intercept coefficients.
LogitFit newton_logit(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, double ridge) {
  const Eigen::Index p = x.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = x * b;
    double ll = 0.0;
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      ll += z(r) * eta(r) - log1p_exp(eta(r));
    }
    return ll - 0.5 * ridge * b.tail(p - 1).squaredNorm();
  };
  double current = objective(beta);
  LogitFit fit;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      mu(r) = logistic(eta(r));
      w(r) = mu(r) * (1.0 - mu(r));
    }
    Eigen::VectorXd grad = x.transpose() * (z - mu);
    Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x;
    if (ridge > 0.0) {
      grad.tail(p - 1) -= ridge * beta.tail(p - 1);
      hess.diagonal().tail(p - 1).array() += ridge;
    }
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd delta = hess.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = beta + delta;
    double value = objective(next);
    for (int h = 0; h < 60 && !(value >= current - 1e-12); ++h) {
      scale *= 0.5;
      next = beta + scale * delta;
      value = objective(next);
    }
    const double change = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    const double gain = value - current;
    current = value;
    if (change < 1e-10 || std::abs(gain) < 1e-12) {
      converged = true;
      break;
    }
  }
  fit.log_likelihood = current;
  fit.separated = !converged || beta.cwiseAbs().maxCoeff() > 15.0;
  return fit;
}

}  // namespace

CiTestResult likelihood_ratio_ci_test(const CaseDataset& data, std::size_t target,
                                      const Column& probe,
                                      std::span<const Column> conditioning) {
  const std::size_t n = data.node_count();
  auto check = [&](const Column& col) {
    if (col.node >= n) throw ShapeError("regressor node index out of range");
    if (col.kind == Column::Kind::covariate && !data.has_covariates()) {
      throw ConfigError("covariate regressor requested but the data has no confounders");
    }
    if (col.kind == Column::Kind::outcome && col.node == target) {
      throw ConfigError("target outcome cannot be a regressor");
    }
  };
  if (target >= n) throw ShapeError("target node index out of range");
  check(probe);
  for (const Column& col : conditioning) check(col);

  const auto rows = static_cast<Eigen::Index>(data.size());
  const auto q = static_cast<Eigen::Index>(conditioning.size());
  Eigen::MatrixXd reduced(rows, q + 1);
  Eigen::MatrixXd full(rows, q + 2);
  Eigen::VectorXd z(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data.rows()[static_cast<std::size_t>(r)];
    z(r) = row.y[target] > 0 ? 1.0 : 0.0;
    reduced(r, 0) = 1.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      reduced(r, j + 1) = column_value(row, conditioning[static_cast<std::size_t>(j)]);
    }
  }
  full.leftCols(q + 1) = reduced;
  for (Eigen::Index r = 0; r < rows; ++r) {
    full(r, q + 1) = column_value(data.rows()[static_cast<std::size_t>(r)], probe);
  }

  CiTestResult result;
  LogitFit f1 = newton_logit(full, z, 0.0);
  LogitFit f0 = newton_logit(reduced, z, 0.0);
  if (f1.separated || f0.separated) {
    constexpr double kRidge = 1e-4;
    f1 = newton_logit(full, z, kRidge);
    f0 = newton_logit(reduced, z, kRidge);
    result.ridge_fallback = true;
  }
  result.statistic = std::max(0.0, 2.0 * (f1.log_likelihood - f0.log_likelihood));
  // Upper tail of chi-square with one degree of freedom.
  result.p_value = std::erfc(std::sqrt(result.statistic / 2.0));
  return result;
}

}  // namespace chaingraph
