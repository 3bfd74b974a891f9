#include <doctest.h>

#include <cmath>

#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/sampler.hpp"
#include "support/oracle.hpp"

using namespace chaingraph;

namespace {

CaseDataset sample_data(const ChainGraphModel& truth, std::size_t n_obs, std::uint64_t seed,
                        double treat_p = 0.5, double cov_p = 0.5) {
  Rng rng(seed);
  const std::size_t n = truth.size();
  std::vector<CaseDataset::Row> rows;
  for (std::size_t o = 0; o < n_obs; ++o) {
    std::optional<CovariateVector> c;
    if (truth.has_confounders()) {
      std::vector<int> cv(n);
      for (auto& v : cv) v = rng.bernoulli(cov_p) ? 1 : 0;
      c = CovariateVector(cv);
    }
    TreatmentVector a;
    if (truth.treatment_mode == TreatmentMode::shared) {
      a = TreatmentVector::shared(rng.bernoulli(treat_p) ? 1 : 0);
    } else {
      std::vector<int> av(n);
      for (auto& v : av) v = rng.bernoulli(treat_p) ? 1 : 0;
      a = TreatmentVector::per_node(av);
    }
    const auto dist = outcome_distribution(truth, a, c);
    double u = rng.uniform(), acc = 0.0;
    std::uint64_t mask = 0;
    for (; mask + 1 < dist.size(); ++mask) {
      acc += dist[mask];
      if (u < acc) break;
    }
    rows.push_back({OutcomeVector::from_mask(mask, n), a, c});
  }
  return CaseDataset(truth.graph.labels(), truth.treatment_mode, truth.has_confounders(), rows);
}

double oracle_mean_loglik(const ChainGraphModel& m, const CaseDataset& data) {
  double total = 0.0;
  for (const auto& row : data.rows()) {
    std::vector<int> y(row.y.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = row.y[i];
    total += std::log(oracle::joint(m, y, row.a, row.c));
  }
  return total / static_cast<double>(data.size());
}

double oracle_mean_pseudo(const ChainGraphModel& m, const CaseDataset& data) {
  double total = 0.0;
  for (const auto& row : data.rows()) {
    std::vector<int> y(row.y.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = row.y[i];
    for (std::size_t i = 0; i < y.size(); ++i) {
      auto flip = y;
      flip[i] = -y[i];
      const double p = oracle::joint(m, y, row.a, row.c);
      const double q = oracle::joint(m, flip, row.a, row.c);
      total += std::log(p / (p + q));
    }
  }
  return total / static_cast<double>(data.size());
}

ChainGraphModel chain_model(std::size_t n, double k, TreatmentMode mode, bool conf) {
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) labels.push_back("v" + std::to_string(i));
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  ChainGraphModel m = ChainGraphModel::zeros(NetworkGraph::from_indices(labels, edges), mode, conf);
  for (auto& [e, v] : m.k) v = k;
  return m;
}

}  // namespace

TEST_CASE("parameter layout packs and unpacks") {
  std::mt19937_64 rng(1);
  const ChainGraphModel m = oracle::random_model(rng, 5, 1.0, TreatmentMode::per_node, true);
  const ParameterLayout layout(m.graph, m.treatment_mode, true);
  CHECK(layout.size() == 3 * 5 + m.graph.edge_count());
  const auto theta = layout.pack(m);
  CHECK(theta[layout.gamma_offset() + 2] == m.gamma[2]);
  const ChainGraphModel back = layout.unpack(theta);
  CHECK(back.h == m.h);
  CHECK(back.k == m.k);
  CHECK(back.gamma == m.gamma);
  CHECK(back.kappa == m.kappa);
}

TEST_CASE("exact likelihood value and gradient match brute force") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 8; ++rep) {
    const bool conf = rep % 2 == 0;
    const auto mode = rep % 4 < 2 ? TreatmentMode::per_node : TreatmentMode::shared;
    const ChainGraphModel truth = oracle::random_model(rng, 4, 1.0, mode, conf, 0.7);
    const CaseDataset data = sample_data(truth, 150, 100 + rep);
    const ExactLikelihood lik(data, truth.graph);
    const ChainGraphModel at = oracle::random_model(rng, 4, 1.0, mode, conf, 0.0);
    ChainGraphModel probe = truth;
    probe.h = at.h;
    probe.gamma = at.gamma;
    probe.kappa = at.kappa;
    const auto theta = lik.layout().pack(probe);
    std::vector<double> grad(theta.size()), grad_ref(theta.size());
    const double value = lik.evaluate(theta, grad);
    CHECK(value == doctest::Approx(oracle_mean_loglik(probe, data)).epsilon(1e-11));
    CHECK(lik.evaluate_by_enumeration(theta, grad_ref) == doctest::Approx(value).epsilon(1e-12));
    for (std::size_t j = 0; j < theta.size(); ++j) {
      auto hi = theta, lo = theta;
      hi[j] += 1e-6;
      lo[j] -= 1e-6;
      const double fd = (oracle_mean_loglik(lik.layout().unpack(hi), data) -
                         oracle_mean_loglik(lik.layout().unpack(lo), data)) / 2e-6;
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6));
      CHECK(grad_ref[j] == doctest::Approx(grad[j]).epsilon(1e-10));
    }
  }
}

TEST_CASE("pseudo-likelihood matches brute force") {
  std::mt19937_64 rng(6);
  const ChainGraphModel truth = oracle::random_model(rng, 4, 1.0, TreatmentMode::per_node, true, 0.7);
  const CaseDataset data = sample_data(truth, 100, 3);
  const PseudoLikelihood pl(data, truth.graph);
  const auto theta = pl.layout().pack(truth);
  std::vector<double> grad(theta.size());
  CHECK(pl.evaluate(theta, grad) == doctest::Approx(oracle_mean_pseudo(truth, data)).epsilon(1e-11));
  for (std::size_t j = 0; j < theta.size(); ++j) {
    auto hi = theta, lo = theta;
    hi[j] += 1e-6;
    lo[j] -= 1e-6;
    const double fd = (oracle_mean_pseudo(pl.layout().unpack(hi), data) -
                       oracle_mean_pseudo(pl.layout().unpack(lo), data)) / 2e-6;
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("exact MLE reaches a stationary point and recovers parameters") {
  ChainGraphModel truth = chain_model(4, 0.6, TreatmentMode::per_node, true);
  truth.h = {0.2, -0.3, 0.1, 0.0};
  truth.gamma = {0.5, 0.5, -0.4, 0.3};
  *truth.kappa = {0.3, -0.2, 0.2, 0.1};
  const CaseDataset data = sample_data(truth, 20000, 17);
  const FittedModel fit = fit_exact_mle(data, truth.graph);
  CHECK(fit.report.converged);
  CHECK(fit.report.grad_inf < 1e-6);
  CHECK(fit.model.has_confounders());
  const ExactLikelihood lik(data, truth.graph);
  CHECK(fit.report.mean_log_likelihood >= lik.evaluate(lik.layout().pack(truth)));
  const auto est = lik.layout().pack(fit.model);
  const auto want = lik.layout().pack(truth);
  for (std::size_t j = 0; j < est.size(); ++j) CHECK(std::abs(est[j] - want[j]) < 0.1);

  FitOptions warm;
  warm.warm_start = fit.model;
  const FittedModel again = fit_exact_mle(data, truth.graph, warm);
  CHECK(again.report.iterations <= 2);
  CHECK(again.report.mean_log_likelihood == doctest::Approx(fit.report.mean_log_likelihood).epsilon(1e-10));
}

TEST_CASE("relabeling nodes permutes the fitted parameters") {
  ChainGraphModel truth = chain_model(3, 0.5, TreatmentMode::per_node, false);
  truth.h = {0.3, -0.2, 0.1};
  truth.gamma = {0.4, 0.2, -0.3};
  const CaseDataset data = sample_data(truth, 3000, 8);
  const FittedModel fit = fit_exact_mle(data, truth.graph);

  const std::vector<std::size_t> perm{2, 0, 1};  // new position of old node i
  std::vector<std::string> labels(3);
  for (std::size_t i = 0; i < 3; ++i) labels[perm[i]] = data.labels()[i];
  std::vector<CaseDataset::Row> rows;
  for (const auto& row : data.rows()) {
    std::vector<int> y(3), a(3);
    for (std::size_t i = 0; i < 3; ++i) {
      y[perm[i]] = row.y[i];
      a[perm[i]] = row.a.at(i);
    }
    rows.push_back({OutcomeVector(y), TreatmentVector::per_node(a), std::nullopt});
  }
  const CaseDataset permuted(labels, TreatmentMode::per_node, false, rows);
  std::vector<std::pair<std::string, std::string>> edges;
  for (const Edge& e : truth.graph.edges()) edges.emplace_back(truth.graph.label(e.u), truth.graph.label(e.v));
  const FittedModel pfit = fit_exact_mle(permuted, NetworkGraph(labels, edges));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pfit.model.h[perm[i]] == doctest::Approx(fit.model.h[i]).epsilon(1e-5));
    CHECK(pfit.model.gamma[perm[i]] == doctest::Approx(fit.model.gamma[i]).epsilon(1e-5));
  }
  for (const Edge& e : truth.graph.edges()) {
    CHECK(pfit.model.coupling(perm[e.u], perm[e.v]) == doctest::Approx(fit.model.coupling(e.u, e.v)).epsilon(1e-5));
  }
}

TEST_CASE("pseudo-likelihood fit is close to the MLE on a well-specified model") {
  ChainGraphModel truth = chain_model(4, 0.5, TreatmentMode::shared, false);
  truth.gamma = {0.3, 0.3, 0.3, 0.3};
  const CaseDataset data = sample_data(truth, 5000, 21);
  const FittedModel mle = fit_exact_mle(data, truth.graph);
  const FittedModel pl = fit_pseudolikelihood(data, truth.graph);
  CHECK(pl.report.method != mle.report.method);
  for (const auto& [e, k] : mle.model.k) CHECK(std::abs(pl.model.k.at(e) - k) < 0.05);
}

TEST_CASE("warm start with the wrong shape is a configuration error") {
  const ChainGraphModel truth = chain_model(3, 0.5, TreatmentMode::shared, false);
  const CaseDataset data = sample_data(truth, 100, 2);
  FitOptions opts;
  opts.warm_start = chain_model(3, 0.5, TreatmentMode::shared, true);
  CHECK_THROWS_AS(fit_exact_mle(data, truth.graph, opts), ConfigError);
  opts.warm_start = chain_model(4, 0.5, TreatmentMode::shared, false);
  CHECK_THROWS_AS(fit_exact_mle(data, truth.graph, opts), ConfigError);
}

TEST_CASE("nodewise lasso satisfies its optimality conditions") {
  ChainGraphModel truth = chain_model(5, 0.5, TreatmentMode::per_node, true);
  truth.gamma = {0.4, 0.4, 0.4, 0.4, 0.4};
  const CaseDataset data = sample_data(truth, 1500, 4);
  LassoOptions tight;
  tight.objective_tol = 1e-13;
  tight.step_tol = 1e-10;
  for (double lambda : {0.2, 0.05, 0.01}) {
    const NodewiseFit fit = node_logistic_fit(data, 2, lambda, tight);
    CHECK(fit.objective == doctest::Approx(nodewise_objective(data, 2, lambda, fit.coefficients)).epsilon(1e-12));
    // Subgradient check by central differences of the smooth part.
    for (std::size_t j = 0; j < 5; ++j) {
      if (j == 2) continue;
      auto hi = fit.coefficients, lo = fit.coefficients;
      hi.neighbors[j] += 1e-6;
      lo.neighbors[j] -= 1e-6;
      const double g = (nodewise_objective(data, 2, 0.0, hi) - nodewise_objective(data, 2, 0.0, lo)) / 2e-6;
      const double b = fit.coefficients.neighbors[j];
      if (b == 0.0) {
        CHECK(std::abs(g) <= lambda + 1e-4);
      } else {
        CHECK(g == doctest::Approx(lambda * (b > 0 ? 1 : -1)).epsilon(1e-3));
      }
    }
    CHECK(fit.coefficients.neighbors[2] == 0.0);
  }
}

TEST_CASE("lasso support shrinks as the penalty grows") {
  ChainGraphModel truth = chain_model(6, 0.4, TreatmentMode::shared, false);
  const CaseDataset data = sample_data(truth, 800, 9);
  std::size_t previous = 0;
  for (double lambda : {1.0, 0.3, 0.1, 0.03, 0.01, 0.0}) {
    const auto s = node_logistic_fit(data, 3, lambda).support();
    CHECK(s.size() >= previous);
    previous = s.size();
  }
  CHECK(node_logistic_fit(data, 3, 1.0).support().empty());
}

TEST_CASE("refit with no neighbors matches the intercept-only maximum") {
  const ChainGraphModel truth = chain_model(3, 0.0, TreatmentMode::shared, false);
  const CaseDataset data = sample_data(truth, 400, 10, 0.0);
  double plus = 0.0;
  for (const auto& row : data.rows()) plus += row.y[1] > 0;
  const double p = plus / 400.0;
  const NodewiseFit fit = node_logistic_refit(data, 1, {});
  CHECK(fit.coefficients.intercept == doctest::Approx(0.5 * std::log(p / (1 - p))).epsilon(1e-4));
}

TEST_CASE("constant outcome is a degenerate node") {
  std::vector<CaseDataset::Row> rows;
  for (int r = 0; r < 20; ++r) {
    rows.push_back({OutcomeVector({1, r % 2 ? 1 : -1, r % 3 ? 1 : -1}), TreatmentVector::shared(r % 2), std::nullopt});
  }
  const CaseDataset data({"a", "b", "c"}, TreatmentMode::shared, false, rows);
  CHECK_THROWS_AS(node_logistic_fit(data, 0, 0.1), DegenerateNodeError);
  const StructureResult s = learn_structure(data);
  CHECK(s.nodes[0].degenerate);
  CHECK_FALSE(s.warnings.empty());
  CHECK(s.graph.neighbors(0).empty());
}

TEST_CASE("structure learning recovers a strong chain") {
  ChainGraphModel truth = chain_model(6, 0.8, TreatmentMode::per_node, false);
  truth.gamma = {0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  const CaseDataset data = sample_data(truth, 3000, 31);
  for (auto rule : {SymmetrizationRule::and_rule, SymmetrizationRule::or_rule}) {
    StructureOptions opts;
    opts.rule = rule;
    opts.threads = 3;
    const StructureResult s = learn_structure(data, opts);
    CHECK(s.graph == truth.graph);
  }
  CHECK(symmetrization_rule_from_string("OR") == SymmetrizationRule::or_rule);
  CHECK_THROWS_AS(symmetrization_rule_from_string("XOR"), ConfigError);
  const auto grid = default_penalty_grid();
  CHECK(grid.size() == 25);
  CHECK(grid.front() == doctest::Approx(1.0));
  CHECK(grid.back() == doctest::Approx(1e-3));
}

TEST_CASE("structure learning leaves independent nodes unconnected") {
  const ChainGraphModel truth = chain_model(5, 0.0, TreatmentMode::shared, false);
  const CaseDataset data = sample_data(truth, 2000, 32);
  CHECK(learn_structure(data).graph.edge_count() == 0);
}

TEST_CASE("likelihood-ratio test is calibrated under the null") {
  std::vector<double> p_values;
  const ChainGraphModel truth = chain_model(3, 0.7, TreatmentMode::per_node, false);
  for (std::uint64_t s = 0; s < 300; ++s) {
    const CaseDataset data = sample_data(truth, 200, 1000 + s);
    const Column cond{Column::Kind::outcome, 1};
    const auto r = likelihood_ratio_ci_test(data, 0, {Column::Kind::outcome, 2}, std::span(&cond, 1));
    p_values.push_back(r.p_value);
  }
  CHECK(oracle::ks_uniform_p_value(p_values) > 0.001);
}

TEST_CASE("likelihood-ratio test detects dependence") {
  ChainGraphModel truth = chain_model(3, 0.7, TreatmentMode::per_node, false);
  truth.gamma = {0.0, 0.0, 0.8};
  const CaseDataset data = sample_data(truth, 1000, 77);
  CHECK(likelihood_ratio_ci_test(data, 0, {Column::Kind::outcome, 2}, {}).p_value < 1e-6);
  CHECK(likelihood_ratio_ci_test(data, 2, {Column::Kind::treatment, 2}, {}).p_value < 1e-6);
}

TEST_CASE("separated designs fall back to the ridge fit") {
  std::vector<CaseDataset::Row> rows;
  for (int r = 0; r < 40; ++r) {
    const int v = r % 2 ? 1 : -1;
    rows.push_back({OutcomeVector({v, v, r % 3 ? 1 : -1}), TreatmentVector::shared(0), std::nullopt});
  }
  const CaseDataset data({"a", "b", "c"}, TreatmentMode::shared, false, rows);
  const auto r = likelihood_ratio_ci_test(data, 0, {Column::Kind::outcome, 1}, {});
  CHECK(r.ridge_fallback);
  CHECK(std::isfinite(r.statistic));
  CHECK(r.p_value < 1e-6);
}

TEST_CASE("event probability gradients match finite differences") {
  std::mt19937_64 rng(14);
  const ChainGraphModel m = oracle::random_model(rng, 4, 1.0, TreatmentMode::per_node, true, 0.7);
  const ParameterLayout layout(m.graph, m.treatment_mode, true);
  const auto a = TreatmentVector::per_node({1, 0, 0, 1});
  const CovariateVector c({0, 1, 1, 0});
  const std::vector<EventPredicate> events{EventPredicate::liberal_counts({4}),
                                           EventPredicate::liberal_counts({1, 2})};
  const auto got = event_prob_gradients(m, a, c, events);
  const auto theta = layout.pack(m);
  for (std::size_t e = 0; e < events.size(); ++e) {
    CHECK(got[e].prob == doctest::Approx(event_prob(m, a, c, events[e])).epsilon(1e-13));
    for (std::size_t j = 0; j < theta.size(); ++j) {
      auto hi = theta, lo = theta;
      hi[j] += 1e-6;
      lo[j] -= 1e-6;
      const double fd =
          (event_prob(layout.unpack(hi), a, c, events[e]) - event_prob(layout.unpack(lo), a, c, events[e])) / 2e-6;
      CHECK(got[e].gradient[j] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("observed information is symmetric positive definite at the MLE") {
  ChainGraphModel truth = chain_model(3, 0.5, TreatmentMode::per_node, true);
  truth.gamma = {0.4, 0.4, 0.4};
  const CaseDataset data = sample_data(truth, 2000, 12);
  const FittedModel fit = fit_exact_mle(data, truth.graph);
  const ExactLikelihood lik(data, truth.graph);
  const auto theta = lik.layout().pack(fit.model);
  const auto info = observed_information(lik, theta);
  const std::size_t p = theta.size();
  for (std::size_t i = 0; i < p; ++i) {
    CHECK(info[i * p + i] > 0.0);
    for (std::size_t j = 0; j < i; ++j) CHECK(info[i * p + j] == doctest::Approx(info[j * p + i]).epsilon(1e-5));
  }
}

TEST_CASE("delta-method and bootstrap standard errors agree") {
  ChainGraphModel truth = chain_model(3, 0.5, TreatmentMode::shared, false);
  truth.gamma = {0.5, 0.3, -0.2};
  const CaseDataset data = sample_data(truth, 1500, 13);
  const FittedModel fit = fit_exact_mle(data, truth.graph);
  const EffectQuery q{TreatmentVector::shared(1), TreatmentVector::shared(0), EventPredicate::liberal_counts({3}),
                      EffectScale::risk_difference};
  const DeltaEffect delta = DeltaMethod(fit, data).effect(q);
  BootstrapSpec spec;
  spec.replicates = 200;
  spec.seed = 4;
  spec.threads = 4;
  const BootstrapResult boot = bootstrap_effect(data, truth.graph, q, spec);
  CHECK(boot.effect.point == doctest::Approx(delta.effect.point).epsilon(1e-8));
  CHECK(*boot.effect.se == doctest::Approx(*delta.effect.se).epsilon(0.25));
  CHECK(*boot.effect.ci_low <= boot.effect.point);
  CHECK(*boot.effect.ci_high >= boot.effect.point);
  CHECK(*delta.effect.ci_high - *delta.effect.ci_low == doctest::Approx(2 * 1.96 * *delta.effect.se));
}

TEST_CASE("bootstrap output does not depend on the thread count") {
  ChainGraphModel truth = chain_model(3, 0.5, TreatmentMode::per_node, true);
  truth.gamma = {0.5, 0.3, -0.2};
  const CaseDataset data = sample_data(truth, 400, 14);
  const EffectQuery q{TreatmentVector::per_node({1, 1, 1}), TreatmentVector::per_node({0, 0, 0}),
                      EventPredicate::liberal_counts({0}), EffectScale::odds_ratio};
  BootstrapSpec spec;
  spec.replicates = 30;
  spec.seed = 9;
  spec.threads = 1;
  const BootstrapResult one = bootstrap_effect(data, truth.graph, q, spec);
  spec.threads = 8;
  const BootstrapResult many = bootstrap_effect(data, truth.graph, q, spec);
  CHECK(one.replicate_points == many.replicate_points);
  CHECK(*one.effect.se == *many.effect.se);
  CHECK(one.dropped == many.dropped);
}

TEST_CASE("fit method names") {
  CHECK(fit_method_from_string("pl") == FitMethod::pseudo_likelihood);
  CHECK(fit_method_from_string(to_string(FitMethod::mle)) == FitMethod::mle);
  CHECK_THROWS_AS(fit_method_from_string("em"), ConfigError);
}
