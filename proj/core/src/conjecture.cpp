#include "chaingraph/conjecture.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/parallel.hpp"

namespace chaingraph {

NetworkGraph random_network(std::size_t n, double p, std::uint64_t seed) {
  if (n == 0) throw ConfigError("network needs at least one node");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("edge probability must lie in [0, 1]");
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = "u" + std::to_string(i + 1);
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) edges.push_back(Edge{i, j});
    }
  }
  return NetworkGraph::from_indices(std::move(labels), edges);
}

TemporalParams TemporalParams::defaults(const NetworkGraph& network, double influence) {
  TemporalParams params;
  for (const Edge& e : network.edges()) params.neighbor_influence[e] = influence;
  return params;
}

void TemporalParams::validate(const NetworkGraph& network) const {
  if (horizon < 1) throw ConfigError("horizon T must be at least 1");
  if (!(treatment_prob > 0.0 && treatment_prob < 1.0)) {
    throw ConfigError("treatment_prob must lie strictly between 0 and 1");
  }
  if (!intercepts.empty() && intercepts.size() != network.size()) {
    throw ShapeError("intercepts length does not match the network");
  }
  for (double v : intercepts) {
    if (!std::isfinite(v)) throw ConfigError("intercepts must be finite");
  }
  if (!std::isfinite(treatment_effect) || !std::isfinite(self_persistence)) {
    throw ConfigError("temporal parameters must be finite");
  }
  for (const auto& [e, v] : neighbor_influence) {
    if (!network.adjacent(e.u, e.v)) throw ShapeError("neighbor influence given for a non-edge");
    if (!std::isfinite(v)) throw ConfigError("neighbor influence must be finite");
  }
  if (neighbor_influence.size() != network.edge_count()) {
    throw ShapeError("neighbor influence missing for some network edge");
  }
}

std::vector<int> temporal_step(const NetworkGraph& network, const TemporalParams& params,
                               std::span<const int> y_prev, std::span<const int> a,
                               std::span<const double> uniforms) {
  const std::size_t n = network.size();
  if (y_prev.size() != n || a.size() != n || uniforms.size() != n) {
    throw ShapeError("temporal step inputs must have one entry per node");
  }
  std::vector<int> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = params.intercept(i) + params.treatment_effect * a[i] +
                 params.self_persistence * y_prev[i];
    for (std::size_t j : network.neighbors(i)) {
      eta += params.neighbor_influence.at(Edge::of(i, j)) * y_prev[j];
    }
    next[i] = uniforms[i] < logistic(2.0 * eta) ? 1 : -1;
  }
  return next;
}

namespace {

Trajectory run_trajectory(const NetworkGraph& network, const TemporalParams& params, Rng& rng) {
  const std::size_t n = network.size();
  Trajectory t;
  t.a.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.a[i] = rng.bernoulli(params.treatment_prob) ? 1 : 0;
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.bernoulli(logistic(2.0 * params.intercept(i))) ? 1 : -1;
  }
  t.y.reserve(params.horizon + 1);
  t.y.push_back(y);
  std::vector<double> u(n);
  for (std::size_t step = 0; step < params.horizon; ++step) {
    for (double& v : u) v = rng.uniform();
    t.y.push_back(temporal_step(network, params, t.y.back(), t.a, u));
  }
  return t;
}

}  // namespace

Trajectory simulate_trajectory(const NetworkGraph& network, const TemporalParams& params,
                               Rng& rng) {
  params.validate(network);
  return run_trajectory(network, params, rng);
}

CaseDataset simulate_temporal(const NetworkGraph& network, const TemporalParams& params,
                              std::size_t n_reps, std::uint64_t seed, unsigned threads) {
  if (n_reps == 0) throw ConfigError("n_reps must be positive");
  params.validate(network);
  std::vector<CaseDataset::Row> rows(n_reps);
  parallel_for(n_reps, threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, {r}));
    const Trajectory t = run_trajectory(network, params, rng);
    rows[r] = CaseDataset::Row{OutcomeVector(t.y.back()), TreatmentVector::per_node(t.a),
                               std::nullopt};
  });
  return CaseDataset(network.labels(), TreatmentMode::per_node, false, std::move(rows));
}

char hypothesis_code(Hypothesis h) {
  return static_cast<char>('a' + static_cast<int>(h));
}

BatteryReport run_battery(const CaseDataset& data, const NetworkGraph& network, double alpha,
                          unsigned threads) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (network.labels() != data.labels()) {
    throw ShapeError("network labels do not match the dataset's node labels");
  }
  const std::size_t n = network.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < n; ++m) {
      if (i != m && !network.adjacent(i, m)) pairs.emplace_back(i, m);
    }
  }
  if (pairs.empty()) throw NoPairsError("network has no nonadjacent pair to test");

  BatteryReport report;
  report.alpha = alpha;
  report.labels = network.labels();
  report.pair_count = pairs.size();
  report.tests.resize(3 * pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t idx) {
    const auto [i, m] = pairs[idx];
    std::vector<Column> cond;
    for (std::size_t j : network.neighbors(i)) cond.push_back({Column::Kind::outcome, j});
    const Column probe{Column::Kind::outcome, m};
    for (int h = 0; h < 3; ++h) {
      std::vector<Column> columns;
      if (h >= 1) columns = cond;
      if (h == 2) columns.push_back({Column::Kind::treatment, i});
      const CiTestResult res = likelihood_ratio_ci_test(data, i, probe, columns);
      report.tests[3 * idx + static_cast<std::size_t>(h)] =
          BatteryTest{i, m, static_cast<Hypothesis>(h), res.p_value, res.p_value < alpha,
                      res.ridge_fallback};
    }
  });
  std::array<std::size_t, 3> rejected{};
  for (const BatteryTest& t : report.tests) {
    if (t.reject) ++rejected[static_cast<std::size_t>(t.hypothesis)];
  }
  for (std::size_t h = 0; h < 3; ++h) {
    report.rates[h] = static_cast<double>(rejected[h]) / static_cast<double>(pairs.size());
  }
  return report;
}

namespace {

std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", p);
  return buf;
}

}  // namespace

std::string battery_csv(const BatteryReport& report) {
  std::ostringstream out;
  out << "pair_i,pair_m,hypothesis,p_value,reject\n";
  for (const BatteryTest& t : report.tests) {
    out << csv_escape(report.labels[t.i]) << ',' << csv_escape(report.labels[t.m]) << ','
        << hypothesis_code(t.hypothesis) << ',' << format_p(t.p_value) << ','
        << (t.reject ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string ci_test_csv(const BatteryReport& report) {
  std::ostringstream out;
  out << "i,m,hypothesis,p_value,reject_at_0.05\n";
  for (const BatteryTest& t : report.tests) {
    out << csv_escape(report.labels[t.i]) << ',' << csv_escape(report.labels[t.m]) << ','
        << hypothesis_code(t.hypothesis) << ',' << format_p(t.p_value) << ','
        << (t.p_value < 0.05 ? 1 : 0) << '\n';
  }
  return out.str();
}

Json battery_summary_json(const BatteryReport& report) {
  Json doc;
  doc["alpha"] = report.alpha;
  doc["nonadjacent_ordered_pairs"] = report.pair_count;
  doc["tests"] = report.tests.size();
  Json rates = Json::object();
  for (int h = 0; h < 3; ++h) {
    rates[std::string(1, hypothesis_code(static_cast<Hypothesis>(h)))] = report.rates[static_cast<std::size_t>(h)];
  }
  doc["rejection_rates"] = rates;
  std::size_t fallbacks = 0;
  for (const BatteryTest& t : report.tests) fallbacks += t.ridge_fallback ? 1 : 0;
  doc["ridge_fallbacks"] = fallbacks;
  return doc;
}

Json temporal_params_json(const TemporalParams& params, const NetworkGraph& network) {
  Json doc;
  doc["nodes"] = network.labels();
  Json edges = Json::array();
  for (const Edge& e : network.edges()) edges.push_back({network.label(e.u), network.label(e.v)});
  doc["edges"] = edges;
  Json intercepts = Json::array();
  for (std::size_t i = 0; i < network.size(); ++i) intercepts.push_back(params.intercept(i));
  doc["intercepts"] = intercepts;
  doc["treatment_effect"] = params.treatment_effect;
  doc["self_persistence"] = params.self_persistence;
  Json influence = Json::object();
  for (const auto& [e, v] : params.neighbor_influence) {
    influence[network.label(e.u) + "|" + network.label(e.v)] = v;
  }
  doc["neighbor_influence"] = influence;
  doc["horizon"] = params.horizon;
  doc["treatment_prob"] = params.treatment_prob;
  return doc;
}

ConjectureStudy run_conjecture_study(const ConjectureStudyConfig& config) {
  if (config.networks == 0) throw ConfigError("at least one network is required");
  if (config.replicates == 0) throw ConfigError("replicates must be positive");
  ConjectureStudy study;
  std::array<std::size_t, 3> rejected{};
  std::size_t tests_per_hypothesis = 0;
  for (std::size_t k = 0; k < config.networks; ++k) {
    ConjectureNetwork net;
    net.network_seed = derive_seed(config.seed, {k, 0});
    net.data_seed = derive_seed(config.seed, {k, 1});
    net.network = random_network(config.nodes, config.edge_prob, net.network_seed);
    net.params = config.params;
    net.params.neighbor_influence = TemporalParams::defaults(net.network, config.influence).neighbor_influence;
    net.params.validate(net.network);
    const CaseDataset data =
        simulate_temporal(net.network, net.params, config.replicates, net.data_seed, config.threads);
    net.report = run_battery(data, net.network, config.alpha, config.threads);
    for (const BatteryTest& t : net.report.tests) {
      if (t.reject) ++rejected[static_cast<std::size_t>(t.hypothesis)];
    }
    tests_per_hypothesis += net.report.pair_count;
    if (net.report.rate(Hypothesis::marginal) > net.report.rate(Hypothesis::neighbors)) {
      ++study.marginal_exceeds_neighbors;
    }
    study.networks.push_back(std::move(net));
  }
  for (std::size_t h = 0; h < 3; ++h) {
    study.pooled_rates[h] = static_cast<double>(rejected[h]) / static_cast<double>(tests_per_hypothesis);
  }
  return study;
}

Json conjecture_summary_json(const ConjectureStudy& study, const ConjectureStudyConfig& config) {
  Json doc;
  doc["nodes"] = config.nodes;
  doc["edge_prob"] = config.edge_prob;
  doc["networks"] = config.networks;
  doc["replicates"] = config.replicates;
  doc["alpha"] = config.alpha;
  doc["seed"] = config.seed;
  Json pooled = Json::object();
  for (int h = 0; h < 3; ++h) {
    pooled[std::string(1, hypothesis_code(static_cast<Hypothesis>(h)))] =
        study.pooled_rates[static_cast<std::size_t>(h)];
  }
  doc["pooled_rejection_rates"] = pooled;
  doc["networks_marginal_exceeds_neighbors"] = study.marginal_exceeds_neighbors;
  Json nets = Json::array();
  for (std::size_t k = 0; k < study.networks.size(); ++k) {
    const ConjectureNetwork& net = study.networks[k];
    Json entry = battery_summary_json(net.report);
    entry["index"] = k + 1;
    entry["network_seed"] = net.network_seed;
    entry["data_seed"] = net.data_seed;
    entry["generator"] = temporal_params_json(net.params, net.network);
    nets.push_back(entry);
  }
  doc["per_network"] = nets;
  return doc;
}

}  // namespace chaingraph
