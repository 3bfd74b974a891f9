#include "chaingraph/reference.hpp"

#include <utility>

#include "chaingraph/error.hpp"
#include "chaingraph/scdb.hpp"

namespace chaingraph {

namespace {

struct WeightedTie {
  const char* a;
  const char* b;
  double strength;
};

constexpr WeightedTie kTies[] = {
    {"Rehnquist", "O'Connor", 1.2309}, {"Rehnquist", "Scalia", 0.6906},
    {"Rehnquist", "Kennedy", 1.0626},  {"Rehnquist", "Thomas", 0.7585},
    {"Stevens", "Souter", 0.6888},     {"Stevens", "Ginsburg", 0.7817},
    {"Stevens", "Breyer", 0.7099},     {"O'Connor", "Kennedy", 0.6298},
    {"O'Connor", "Souter", 0.6777},    {"O'Connor", "Breyer", 1.0187},
    {"Scalia", "Kennedy", 0.5025},     {"Scalia", "Thomas", 2.0161},
    {"Kennedy", "Souter", 0.5637},     {"Kennedy", "Thomas", 0.5575},
    {"Kennedy", "Ginsburg", 0.5045},   {"Souter", "Ginsburg", 1.2431},
    {"Souter", "Breyer", 0.6059},      {"Ginsburg", "Breyer", 1.0313},
};

// Ideology rank 1 (most conservative) .. 9 (most liberal), in panel order.
constexpr int kIdeology[] = {2, 9, 2, 4, 5, 8, 1, 7, 6};

// Signed issue response, in panel order.
constexpr double kResponse[] = {0.324, -2.221, 0.850, -1.223, 0.625, -0.264, 1.487, -1.144, 0.052};

}  // namespace

NetworkGraph court_reference_graph() {
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& t : kTies) edges.emplace_back(t.a, t.b);
  return NetworkGraph(CourtPanel::second_rehnquist().labels, edges);
}

ChainGraphModel court_reference_model() {
  ChainGraphModel m = ChainGraphModel::zeros(court_reference_graph(), TreatmentMode::shared);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.h[i] = 0.1 * (kIdeology[i] - 5);
    m.gamma[i] = 0.25 * kResponse[i];
  }
  for (const auto& t : kTies) {
    m.k[Edge::of(m.graph.index_of(t.a), m.graph.index_of(t.b))] = 0.3 * t.strength;
  }
  return m;
}

TreatmentVector NamedAssignment::vector_for(const NetworkGraph& graph) const {
  std::vector<int> a(graph.size(), 0);
  for (const auto& label : treated) a[graph.index_of(label)] = 1;
  return TreatmentVector::per_node(a);
}

std::vector<NamedAssignment> reference_assignments() {
  return {
      {"conservative_bloc", {"O'Connor", "Scalia", "Kennedy", "Thomas"}},
      {"liberal_bloc", {"Stevens", "Souter", "Ginsburg", "Breyer"}},
      {"Rehnquist", {"Rehnquist"}},
      {"Thomas", {"Thomas"}},
      {"Stevens", {"Stevens"}},
      {"Scalia", {"Scalia"}},
  };
}

std::vector<EventPredicate> reference_events() {
  return {EventPredicate::liberal_counts({9}), EventPredicate::liberal_counts({0}),
          EventPredicate::liberal_counts({5}), EventPredicate::liberal_counts({4})};
}

}  // namespace chaingraph
