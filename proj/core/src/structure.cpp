#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/parallel.hpp"

namespace chaingraph {

std::string_view to_string(SymmetrizationRule rule) {
  return rule == SymmetrizationRule::and_rule ? "AND" : "OR";
}

SymmetrizationRule symmetrization_rule_from_string(std::string_view text) {
  if (text == "AND" || text == "and") return SymmetrizationRule::and_rule;
  if (text == "OR" || text == "or") return SymmetrizationRule::or_rule;
  throw ConfigError("unknown symmetrization rule \"" + std::string(text) + "\"");
}

std::vector<double> default_penalty_grid() {
  std::vector<double> grid(25);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = std::pow(10.0, -3.0 * static_cast<double>(i) / 24.0);
  }
  return grid;
}

namespace {

NodeSelection select_neighborhood(const CaseDataset& data, std::size_t node,
                                  const std::vector<double>& grid,
                                  const StructureOptions& opts) {
  NodeSelection sel;
  sel.node = node;
  const double n_obs = static_cast<double>(data.size());
  const double candidates = static_cast<double>(data.node_count() - 1);
  std::map<std::vector<std::size_t>, double> refit_ll;
  std::optional<NodeCoefficients> start;
  bool first = true;
  for (double lambda : grid) {
    const NodewiseFit fit = node_logistic_fit(data, node, lambda, opts.lasso, start);
    start = fit.coefficients;
    std::vector<std::size_t> support = fit.support();
    auto it = refit_ll.find(support);
    if (it == refit_ll.end()) {
      const double ll = node_logistic_refit(data, node, support, opts.lasso).mean_log_likelihood;
      it = refit_ll.emplace(support, ll).first;
    }
    const double df = static_cast<double>(support.size());
    const double ebic = -2.0 * n_obs * it->second + df * std::log(n_obs) +
                        2.0 * opts.ebic_gamma * df * std::log(std::max(candidates, 1.0));
    if (first || ebic < sel.ebic) {
      sel.ebic = ebic;
      sel.lambda = lambda;
      sel.neighbors = std::move(support);
      first = false;
    }
  }
  return sel;
}

}  // namespace

StructureResult learn_structure(const CaseDataset& data, const StructureOptions& opts) {
  if (opts.penalty_grid.empty()) throw ConfigError("penalty grid is empty");
  for (double v : opts.penalty_grid) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("penalty grid values must be >= 0");
  }
  if (!(opts.ebic_gamma >= 0.0)) throw ConfigError("EBIC gamma must be non-negative");
  std::vector<double> grid = opts.penalty_grid;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const std::size_t n = data.node_count();
  StructureResult result;
  result.nodes.resize(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    try {
      result.nodes[i] = select_neighborhood(data, i, grid, opts);
    } catch (const DegenerateNodeError&) {
      result.nodes[i] = NodeSelection{i, true, 0.0, 0.0, {}};
    }
  });

  std::vector<std::vector<bool>> chosen(n, std::vector<bool>(n, false));
  for (const NodeSelection& sel : result.nodes) {
    if (sel.degenerate) {
      result.warnings.push_back("node " + data.labels()[sel.node] +
                                " has a constant outcome and was excluded");
      continue;
    }
    for (std::size_t j : sel.neighbors) chosen[sel.node][j] = true;
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (result.nodes[i].degenerate || result.nodes[j].degenerate) continue;
      const bool keep = opts.rule == SymmetrizationRule::and_rule
                            ? (chosen[i][j] && chosen[j][i])
                            : (chosen[i][j] || chosen[j][i]);
      if (keep) edges.push_back(Edge{i, j});
    }
  }
  result.graph = NetworkGraph::from_indices(data.labels(), edges);
  return result;
}

}  // namespace chaingraph
