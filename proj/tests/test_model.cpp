#include <doctest.h>

#include <sstream>

#include "chaingraph/error.hpp"
#include "chaingraph/io.hpp"
#include "chaingraph/model.hpp"
#include "support/oracle.hpp"

using namespace chaingraph;

namespace {

NetworkGraph triangle_plus_one() {
  return NetworkGraph({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}, {"a", "c"}, {"c", "d"}});
}

}  // namespace

TEST_CASE("graph normalizes edges and answers adjacency") {
  const NetworkGraph g = triangle_plus_one();
  CHECK(g.size() == 4);
  CHECK(g.edge_count() == 4);
  CHECK(g.edges().front() == Edge{0, 1});
  CHECK(g.adjacent(2, 0));
  CHECK(g.adjacent(0, 2));
  CHECK_FALSE(g.adjacent(0, 3));
  CHECK(g.neighbors(2).size() == 3);
  CHECK(g.index_of("d") == 3);
  CHECK_THROWS_AS(g.index_of("zz"), ShapeError);
  CHECK_THROWS_AS(NetworkGraph({"a", "a"}, {}), ShapeError);
  CHECK_THROWS_AS(NetworkGraph({"a", "b"}, {{"a", "a"}}), ShapeError);
  CHECK_THROWS_AS(NetworkGraph({}, {}), ShapeError);
}

TEST_CASE("edge keys make couplings symmetric") {
  ChainGraphModel m = ChainGraphModel::zeros(triangle_plus_one(), TreatmentMode::shared);
  m.k[Edge::of(2, 0)] = 0.7;
  CHECK(m.coupling(0, 2) == 0.7);
  CHECK(m.coupling(2, 0) == 0.7);
  CHECK(m.coupling(0, 3) == 0.0);
}

TEST_CASE("validate_model reports every violation") {
  ChainGraphModel m = ChainGraphModel::zeros(triangle_plus_one(), TreatmentMode::shared);
  CHECK(validate_model(m).empty());
  m.h.pop_back();
  m.k[Edge{0, 3}] = 1.0;
  m.gamma[0] = std::nan("");
  const auto problems = validate_model(m);
  CHECK(problems.size() >= 3);
}

TEST_CASE("outcome and treatment vectors enforce their domains") {
  CHECK_THROWS_AS(OutcomeVector({1, 0}), ShapeError);
  CHECK_THROWS_AS(TreatmentVector::shared(2), ShapeError);
  CHECK_THROWS_AS(TreatmentVector::per_node({0, 3}), ShapeError);
  CHECK_THROWS_AS(CovariateVector({0, -1}), ShapeError);
  const OutcomeVector y({1, -1, 1});
  CHECK(y.mask() == 0b101);
  CHECK(y.liberal_count() == 2);
  CHECK(OutcomeVector::from_mask(0b101, 3) == y);
  CHECK(y.flipped().mask() == 0b010);
  CHECK(TreatmentVector::shared(1).at(7) == 1);
}

TEST_CASE("check_context rejects mismatched inputs") {
  const ChainGraphModel shared = ChainGraphModel::zeros(triangle_plus_one(), TreatmentMode::shared);
  const ChainGraphModel conf = ChainGraphModel::zeros(triangle_plus_one(), TreatmentMode::per_node, true);
  const OutcomeVector y3({1, 1, 1});
  CHECK_THROWS_AS(check_context(shared, &y3, TreatmentVector::shared(0), std::nullopt), ShapeError);
  CHECK_THROWS_AS(check_context(shared, nullptr, TreatmentVector::per_node({0, 0, 0, 0}), std::nullopt),
                  ShapeError);
  CHECK_THROWS_AS(check_context(conf, nullptr, TreatmentVector::per_node({0, 0, 0, 0}), std::nullopt),
                  ConfigError);
  CHECK_NOTHROW(check_context(conf, nullptr, TreatmentVector::per_node({0, 1, 0, 0}),
                              CovariateVector({1, 0, 0, 1})));
}

TEST_CASE("log_potential matches the oracle on random models") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const bool conf = rep % 2 == 0;
    const auto mode = rep % 3 == 0 ? TreatmentMode::shared : TreatmentMode::per_node;
    const ChainGraphModel m = oracle::random_model(rng, 5, 2.0, mode, conf);
    std::vector<int> yv(5), av(5), cv(5);
    for (int i = 0; i < 5; ++i) {
      yv[i] = (rng() & 1) ? 1 : -1;
      av[i] = static_cast<int>(rng() & 1);
      cv[i] = static_cast<int>(rng() & 1);
    }
    const TreatmentVector a =
        mode == TreatmentMode::shared ? TreatmentVector::shared(av[0]) : TreatmentVector::per_node(av);
    std::optional<CovariateVector> c;
    if (conf) c = CovariateVector(cv);
    const auto a_full = oracle::expand(a, 5);
    CHECK(log_potential(m, OutcomeVector(yv), a, c) ==
          doctest::Approx(oracle::potential(m, yv, a_full, conf ? &cv : nullptr)).epsilon(1e-12));
  }
}

TEST_CASE("dataset construction validates rows") {
  using Row = CaseDataset::Row;
  CHECK_THROWS_AS(CaseDataset({"a", "b"}, TreatmentMode::shared, false, {}), EmptyDatasetError);
  std::vector<Row> bad{{OutcomeVector({1}), TreatmentVector::shared(0), std::nullopt}};
  CHECK_THROWS_AS(CaseDataset({"a", "b"}, TreatmentMode::shared, false, bad), ShapeError);
  std::vector<Row> missing_c{{OutcomeVector({1, 1}), TreatmentVector::shared(0), std::nullopt}};
  CHECK_THROWS_AS(CaseDataset({"a", "b"}, TreatmentMode::shared, true, missing_c), ConfigError);
  std::vector<Row> ok{{OutcomeVector({1, -1}), TreatmentVector::shared(1), std::nullopt},
                      {OutcomeVector({-1, -1}), TreatmentVector::shared(0), std::nullopt}};
  const CaseDataset d({"a", "b"}, TreatmentMode::shared, false, ok);
  const std::vector<std::size_t> idx{1, 1, 0};
  const CaseDataset r = d.resample(idx);
  CHECK(r.size() == 3);
  CHECK(r.row(0).y == d.row(1).y);
  CHECK(r.row(2).a == d.row(0).a);
}

TEST_CASE("model JSON round trips and keeps the fingerprint") {
  std::mt19937_64 rng(3);
  for (bool conf : {false, true}) {
    const ChainGraphModel m = oracle::random_model(rng, 6, 1.5, TreatmentMode::per_node, conf);
    const Json doc = model_to_json(m);
    const ChainGraphModel back = model_from_json(Json::parse(dump_json(doc)));
    CHECK(back.graph == m.graph);
    CHECK(back.h == m.h);
    CHECK(back.k == m.k);
    CHECK(back.gamma == m.gamma);
    CHECK(back.kappa == m.kappa);
    CHECK(model_fingerprint(back) == model_fingerprint(m));
  }
}

TEST_CASE("model JSON schema errors are reported") {
  const ChainGraphModel m = ChainGraphModel::zeros(triangle_plus_one(), TreatmentMode::shared);
  Json doc = model_to_json(m);
  Json no_h = doc;
  no_h.erase("h");
  CHECK_THROWS_AS(model_from_json(no_h), SchemaError);
  Json non_edge = doc;
  non_edge["k"]["a|d"] = 0.5;
  CHECK_THROWS_AS(model_from_json(non_edge), SchemaError);
  CHECK(validate_model(model_from_json_unchecked(non_edge)).size() == 1);
  Json bad_mode = doc;
  bad_mode["treatment_mode"] = "both";
  CHECK_THROWS_AS(model_from_json(bad_mode), SchemaError);
}

TEST_CASE("fingerprint changes with any parameter") {
  ChainGraphModel m = ChainGraphModel::zeros(triangle_plus_one(), TreatmentMode::shared);
  const std::string before = model_fingerprint(m);
  CHECK(before.size() == 16);
  m.k[Edge{2, 3}] = 1e-9;
  CHECK(model_fingerprint(m) != before);
}

TEST_CASE("dataset CSV round trips with covariates and per-node treatment") {
  using Row = CaseDataset::Row;
  std::vector<Row> rows{
      {OutcomeVector({1, -1, 1}), TreatmentVector::per_node({1, 0, 0}), CovariateVector({0, 1, 1})},
      {OutcomeVector({-1, -1, 1}), TreatmentVector::per_node({0, 0, 1}), CovariateVector({1, 1, 0})}};
  const CaseDataset d({"x", "y,z", "w"}, TreatmentMode::per_node, true, rows, {"c1", "c\"2"});
  std::stringstream s;
  write_dataset_csv(d, s);
  const CaseDataset back = read_dataset_csv(s);
  CHECK(back.labels() == d.labels());
  CHECK(back.case_ids() == d.case_ids());
  REQUIRE(back.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(back.row(r).y == d.row(r).y);
    CHECK(back.row(r).a == d.row(r).a);
    CHECK(back.row(r).c == d.row(r).c);
  }
}

TEST_CASE("dataset CSV rejects malformed input") {
  std::stringstream no_y("case_id,a\n1,0\n");
  CHECK_THROWS_AS(read_dataset_csv(no_y), SchemaError);
  std::stringstream bad_value("case_id,y_a,a\n1,2,0\n");
  CHECK_THROWS_AS(read_dataset_csv(bad_value), SchemaError);
  std::stringstream ragged("case_id,y_a,a\n1,1\n");
  CHECK_THROWS_AS(read_dataset_csv(ragged), SchemaError);
}

TEST_CASE("CSV reader handles quoting and embedded newlines") {
  std::stringstream s("a,\"b,\"\"c\"\"\",\"d\ne\"\r\nx,y,z\n");
  CsvReader reader(s);
  std::vector<std::string> f;
  REQUIRE(reader.next(f));
  CHECK(f == std::vector<std::string>{"a", "b,\"c\"", "d\ne"});
  REQUIRE(reader.next(f));
  CHECK(f == std::vector<std::string>{"x", "y", "z"});
  CHECK_FALSE(reader.next(f));
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
}

TEST_CASE("treatment descriptions round trip") {
  const std::vector<std::string> labels{"p", "q", "r"};
  const TreatmentVector a = TreatmentVector::per_node({1, 0, 1});
  CHECK(describe_treatment(a, labels) == "p,r");
  CHECK(parse_treatment("p,r", TreatmentMode::per_node, labels) == a);
  CHECK(parse_treatment("101", TreatmentMode::per_node, labels) == a);
  CHECK(parse_treatment("none", TreatmentMode::per_node, labels) ==
        TreatmentVector::per_node({0, 0, 0}));
  CHECK(parse_treatment("1", TreatmentMode::shared, labels) == TreatmentVector::shared(1));
  CHECK_THROWS_AS(parse_treatment("s", TreatmentMode::per_node, labels), ConfigError);
}

TEST_CASE("sha256 matches a known digest") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
