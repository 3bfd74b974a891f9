#include "lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace chaingraph::detail {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct Pair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

// Two-loop recursion: returns -H * g.
std::vector<double> direction(const std::deque<Pair>& history,
                              const std::vector<double>& g) {
  std::vector<double> q = g;
  std::vector<double> alpha(history.size());
  for (std::size_t idx = history.size(); idx-- > 0;) {
    const Pair& p = history[idx];
    alpha[idx] = p.rho * dot(p.s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[idx] * p.y[i];
  }
  if (!history.empty()) {
    const Pair& last = history.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : q) v *= gamma;
  }
  for (std::size_t idx = 0; idx < history.size(); ++idx) {
    const Pair& p = history[idx];
    const double beta = p.rho * dot(p.y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += p.s[i] * (alpha[idx] - beta);
  }
  for (double& v : q) v = -v;
  return q;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                           const LbfgsOptions& opts) {
  const std::size_t dim = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  std::vector<double> grad(dim, 0.0);
  result.f = objective(result.x, grad);
  result.grad_inf = inf_norm(grad);
  std::deque<Pair> history;

  std::vector<double> x_new(dim), g_new(dim);
  while (result.grad_inf >= opts.grad_tol && result.iterations < opts.max_iterations) {
    std::vector<double> d = direction(history, grad);
    double slope = dot(d, grad);
    if (!(slope < 0.0)) {
      // Not a descent direction; restart from steepest descent.
      history.clear();
      d = grad;
      for (double& v : d) v = -v;
      slope = dot(d, grad);
    }
    double step = history.empty() ? std::min(1.0, 1.0 / std::sqrt(dot(grad, grad))) : 1.0;

    bool accepted = false;
    double f_new = 0.0;
    for (std::size_t halving = 0; halving <= opts.max_halvings; ++halving) {
      for (std::size_t i = 0; i < dim; ++i) x_new[i] = result.x[i] + step * d[i];
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= result.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      // Near the optimum rounding can hide an Armijo decrease; accept any
      // finite point that does not increase f and shrinks the gradient.
      if (std::isfinite(f_new) && f_new <= result.f && inf_norm(g_new) < result.grad_inf) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.line_search_failed = true;
      break;
    }

    Pair p{std::vector<double>(dim), std::vector<double>(dim), 0.0};
    for (std::size_t i = 0; i < dim; ++i) {
      p.s[i] = x_new[i] - result.x[i];
      p.y[i] = g_new[i] - grad[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-14 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (history.size() > opts.memory) history.pop_front();
    }
    result.x.swap(x_new);
    grad.swap(g_new);
    result.f = f_new;
    result.grad_inf = inf_norm(grad);
    ++result.iterations;
  }
  result.converged = result.grad_inf < opts.grad_tol;
  return result;
}

}  // namespace chaingraph::detail
