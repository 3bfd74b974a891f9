#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "chaingraph/conjecture.hpp"
#include "chaingraph/error.hpp"
#include "support/oracle.hpp"

using namespace chaingraph;

TEST_CASE("random network extremes and labels") {
  const NetworkGraph empty = random_network(6, 0.0, 1);
  CHECK(empty.edge_count() == 0);
  CHECK(empty.label(0) == "u1");
  CHECK(empty.label(5) == "u6");
  CHECK(random_network(6, 1.0, 1).edge_count() == 15);
  CHECK(random_network(8, 0.3, 42) == random_network(8, 0.3, 42));
  CHECK_THROWS(random_network(5, 1.5, 1));
}

TEST_CASE("random network edge density is p") {
  double edges = 0.0;
  const int graphs = 400;
  for (int s = 0; s < graphs; ++s) edges += static_cast<double>(random_network(10, 0.3, s).edge_count());
  const double rate = edges / (graphs * 45.0);
  CHECK(rate == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("temporal step follows the logistic transition") {
  const NetworkGraph g({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}});
  TemporalParams params = TemporalParams::defaults(g, 0.4);
  params.intercepts = {0.1, -0.2, 0.3};
  const std::vector<int> y_prev{1, -1, 1};
  const std::vector<int> a{1, 0, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    double eta = params.intercepts[i] + params.treatment_effect * a[i] + params.self_persistence * y_prev[i];
    for (std::size_t j : g.neighbors(i)) eta += 0.4 * y_prev[j];
    const double p = 1.0 / (1.0 + std::exp(-2.0 * eta));
    std::vector<double> below(3, 0.5), above(3, 0.5);
    below[i] = p - 1e-9;
    above[i] = p + 1e-9;
    CHECK(temporal_step(g, params, y_prev, a, below)[i] == 1);
    CHECK(temporal_step(g, params, y_prev, a, above)[i] == -1);
  }
}

TEST_CASE("a node's update ignores other nodes' treatments") {
  const NetworkGraph g = random_network(6, 0.5, 3);
  const TemporalParams params = TemporalParams::defaults(g);
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> y(6), a(6), b(6);
    std::vector<double> u(6);
    for (std::size_t i = 0; i < 6; ++i) {
      y[i] = rng.bernoulli(0.5) ? 1 : -1;
      a[i] = rng.bernoulli(0.5) ? 1 : 0;
      u[i] = rng.uniform();
    }
    const std::size_t keep = rep % 6;
    for (std::size_t i = 0; i < 6; ++i) b[i] = i == keep ? a[i] : 1 - a[i];
    CHECK(temporal_step(g, params, y, a, u)[keep] == temporal_step(g, params, y, b, u)[keep]);
  }
}

TEST_CASE("temporal parameters are validated against the network") {
  const NetworkGraph g({"a", "b", "c"}, {{"a", "b"}});
  TemporalParams params = TemporalParams::defaults(g);
  CHECK_NOTHROW(params.validate(g));
  params.neighbor_influence[Edge{1, 2}] = 0.2;
  CHECK_THROWS(params.validate(g));
  params = TemporalParams::defaults(g);
  params.treatment_prob = 1.5;
  CHECK_THROWS_AS(params.validate(g), ConfigError);
  params = TemporalParams::defaults(g);
  params.intercepts = {0.0};
  CHECK_THROWS(params.validate(g));
}

TEST_CASE("trajectories persist and snapshots are thread independent") {
  const NetworkGraph g = random_network(5, 0.4, 8);
  const TemporalParams params = TemporalParams::defaults(g);
  Rng rng(2);
  const Trajectory t = simulate_trajectory(g, params, rng);
  CHECK(t.y.size() == params.horizon + 1);
  CHECK(t.a.size() == 5);
  std::size_t same = 0, total = 0;
  for (std::size_t s = 1; s < t.y.size(); ++s) {
    for (std::size_t i = 0; i < 5; ++i) {
      same += t.y[s][i] == t.y[s - 1][i];
      ++total;
    }
  }
  CHECK(static_cast<double>(same) / static_cast<double>(total) > 0.8);

  const CaseDataset one = simulate_temporal(g, params, 300, 11, 1);
  const CaseDataset many = simulate_temporal(g, params, 300, 11, 8);
  CHECK(one.treatment_mode() == TreatmentMode::per_node);
  CHECK_FALSE(one.has_covariates());
  for (std::size_t r = 0; r < 300; ++r) {
    CHECK(one.row(r).y == many.row(r).y);
    CHECK(one.row(r).a == many.row(r).a);
  }
}

TEST_CASE("battery covers nonadjacent ordered pairs") {
  const NetworkGraph g({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}});
  const CaseDataset data = simulate_temporal(g, TemporalParams::defaults(g), 400, 5);
  const BatteryReport report = run_battery(data, g);
  // 12 ordered pairs minus 4 adjacent ones.
  CHECK(report.pair_count == 8);
  CHECK(report.tests.size() == 24);
  for (const BatteryTest& t : report.tests) {
    CHECK_FALSE(g.adjacent(t.i, t.m));
    CHECK(t.i != t.m);
    CHECK(t.reject == (t.p_value < report.alpha));
  }
  std::istringstream csv(battery_csv(report));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "pair_i,pair_m,hypothesis,p_value,reject");
  std::getline(csv, line);
  CHECK(line.rfind("a,c,a,", 0) == 0);
  std::istringstream ci(ci_test_csv(report));
  std::getline(ci, line);
  CHECK(line == "i,m,hypothesis,p_value,reject_at_0.05");
  CHECK(hypothesis_code(Hypothesis::neighbors_and_treatment) == 'c');
  const Json summary = battery_summary_json(report);
  CHECK(summary.at("rejection_rates").at("a") == doctest::Approx(report.rate(Hypothesis::marginal)));
}

TEST_CASE("complete network has nothing to test") {
  const NetworkGraph g = random_network(4, 1.0, 1);
  const CaseDataset data = simulate_temporal(g, TemporalParams::defaults(g), 50, 1);
  CHECK_THROWS_AS(run_battery(data, g), NoPairsError);
}

TEST_CASE("battery p-values are uniform when units never interact") {
  const NetworkGraph g = NetworkGraph::empty({"u1", "u2", "u3", "u4"});
  const TemporalParams params = TemporalParams::defaults(g);
  std::array<std::vector<double>, 3> p;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const CaseDataset data = simulate_temporal(g, params, 500, 100 + s, 4);
    // One test per hypothesis and dataset keeps the p-values independent.
    const BatteryReport report = run_battery(data, g);
    for (const BatteryTest& t : report.tests) {
      if (t.i == s % 4 && t.m == (s + 1) % 4) p[static_cast<std::size_t>(t.hypothesis)].push_back(t.p_value);
    }
  }
  for (const auto& values : p) {
    REQUIRE(values.size() == 40);
    CHECK(oracle::ks_uniform_p_value(values) > 0.001);
  }
}

TEST_CASE("two exchangeable units have exchangeable trajectories") {
  const NetworkGraph g({"a", "b"}, {{"a", "b"}});
  const TemporalParams params = TemporalParams::defaults(g, 0.4);
  const CaseDataset data = simulate_temporal(g, params, 20000, 21);
  // Joint frequencies of (y_a, a_a, y_b, a_b) and of the swapped tuple.
  std::map<std::array<int, 4>, double> freq;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& row = data.row(r);
    freq[{row.y[0], row.a.at(0), row.y[1], row.a.at(1)}] += 1.0;
  }
  const double n = static_cast<double>(data.size());
  for (const auto& [key, count] : freq) {
    const std::array<int, 4> swapped{key[2], key[3], key[0], key[1]};
    const double p = count / n;
    const double q = freq.count(swapped) ? freq.at(swapped) / n : 0.0;
    // Both are estimates of the same cell probability; allow five standard errors.
    const double se = std::sqrt(std::max(p, 1e-3) * 2.0 / n);
    CHECK(std::abs(p - q) < 5.0 * se);
  }
}

TEST_CASE("battery rejections under independence stay in the binomial band") {
  const NetworkGraph g = NetworkGraph::empty({"u1", "u2", "u3"});
  const TemporalParams params = TemporalParams::defaults(g);
  std::array<std::size_t, 3> rejections{};
  const std::size_t datasets = 300;
  for (std::uint64_t s = 0; s < datasets; ++s) {
    const BatteryReport report = run_battery(simulate_temporal(g, params, 300, 900 + s), g);
    // A single fixed pair per dataset keeps the trials independent.
    for (const BatteryTest& t : report.tests) {
      if (t.i == 0 && t.m == 1 && t.reject) ++rejections[static_cast<std::size_t>(t.hypothesis)];
    }
  }
  const auto [lo, hi] = oracle::binomial_band(datasets, 0.05, 0.99);
  for (std::size_t count : rejections) {
    CHECK(count >= lo);
    CHECK(count <= hi);
  }
}
