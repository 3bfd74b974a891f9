#pragma once

#include <string>
#include <vector>

#include "chaingraph/exact.hpp"
#include "chaingraph/model.hpp"

namespace chaingraph {

/// Nine-justice graph with 18 edges used as the known structure of the
/// recovery and structure-learning studies.
NetworkGraph court_reference_graph();

/// Shared-treatment model on court_reference_graph() with main effects
/// ordered by ideology (negative = conservative leaning) and couplings
/// proportional to the strength of each voting bloc tie.  Synthetic values,
/// not fitted to any court data.
ChainGraphModel court_reference_model();

/// A treatment assignment that treats the listed nodes only.
struct NamedAssignment {
  std::string name;
  std::vector<std::string> treated;

  TreatmentVector vector_for(const NetworkGraph& graph) const;
};

/// Conservative bloc, liberal bloc, and four single justices.
std::vector<NamedAssignment> reference_assignments();

/// Unanimous liberal (count=9), unanimous conservative (count=0), and the
/// 5-4 splits either way (count=5, count=4).
std::vector<EventPredicate> reference_events();

}  // namespace chaingraph
