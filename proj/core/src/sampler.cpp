#include "chaingraph/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chaingraph/error.hpp"
#include "chaingraph/parallel.hpp"

namespace chaingraph {

std::string_view to_string(ScanOrder order) {
  return order == ScanOrder::fixed ? "fixed" : "random_permutation_per_sweep";
}

ScanOrder scan_order_from_string(std::string_view text) {
  if (text == "fixed") return ScanOrder::fixed;
  if (text == "random_permutation_per_sweep" || text == "random") {
    return ScanOrder::random_permutation_per_sweep;
  }
  throw ConfigError("unknown scan order \"" + std::string(text) + "\"");
}

void GibbsConfig::validate() const {
  if (thin < 1) throw ConfigError("Gibbs thin must be at least 1");
  if (sweeps <= burn_in) throw ConfigError("Gibbs sweeps must exceed burn_in");
}

double node_conditional_prob(const ChainGraphModel& model, std::size_t i,
                             const OutcomeVector& y, const TreatmentVector& a,
                             const std::optional<CovariateVector>& c) {
  check_context(model, &y, a, c);
  if (i >= model.size()) throw ShapeError("node index out of range");
  double eta = model.h[i] + model.gamma[i] * a.at(i);
  if (c) eta += (*model.kappa)[i] * (*c)[i];
  for (std::size_t j : model.graph.neighbors(i)) eta += model.coupling(i, j) * y[j];
  return logistic(2.0 * eta);
}

// ---------------------------------------------------------------------------
// GibbsKernel

GibbsKernel::GibbsKernel(const ChainGraphModel& model, const TreatmentVector& a,
                         const std::optional<CovariateVector>& c) {
  check_context(model, nullptr, a, c);
  if (model.size() > 64) throw CapacityError("Gibbs kernel supports at most 64 nodes");
  model_ = CompiledModel::from(model);
  field_ = model_.effective_field(a, c);
  order_.resize(model_.n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

GibbsKernel::GibbsKernel(CompiledModel model, std::vector<double> field)
    : model_(std::move(model)), field_(std::move(field)) {
  order_.resize(model_.n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::uint64_t GibbsKernel::random_state(Rng& rng) const {
  std::uint64_t state = 0;
  for (std::size_t i = 0; i < model_.n; ++i) {
    if (rng.bernoulli(0.5)) state |= std::uint64_t{1} << i;
  }
  return state;
}

std::uint64_t GibbsKernel::sweep(std::uint64_t state, Rng& rng, ScanOrder order) {
  if (order == ScanOrder::random_permutation_per_sweep) {
    // Fisher-Yates from the portable integer draw.
    for (std::size_t i = model_.n; i > 1; --i) {
      std::swap(order_[i - 1], order_[rng.below(i)]);
    }
  }
  for (std::size_t i : order_) {
    const double eta = field_[i] + model_.local_coupling(i, state);
    const std::uint64_t bit = std::uint64_t{1} << i;
    if (rng.uniform() < logistic(2.0 * eta)) {
      state |= bit;
    } else {
      state &= ~bit;
    }
  }
  return state;
}

std::vector<OutcomeVector> gibbs_chain(const ChainGraphModel& model,
                                       const TreatmentVector& a,
                                       const std::optional<CovariateVector>& c,
                                       const GibbsConfig& config) {
  config.validate();
  GibbsKernel kernel(model, a, c);
  Rng rng(config.seed);
  std::uint64_t state = kernel.random_state(rng);
  std::vector<OutcomeVector> samples;
  samples.reserve(config.kept_samples());
  for (std::size_t s = 0; s < config.sweeps; ++s) {
    state = kernel.sweep(state, rng, config.scan_order);
    if (s >= config.burn_in && (s - config.burn_in + 1) % config.thin == 0) {
      samples.push_back(OutcomeVector::from_mask(state, kernel.size()));
    }
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SimulationScaling::validate() const {
  for (double v : {alpha, beta, gamma_value, kappa_value, treatment_law.intercept,
                   treatment_law.slope, confounder_coupling}) {
    if (!std::isfinite(v)) throw ConfigError("simulation scaling values must be finite");
  }
  for (double eta : {treatment_law.intercept, treatment_law.intercept + treatment_law.slope}) {
    const double p = logistic(eta);
    if (!(p > 0.0 && p < 1.0)) {
      throw ConfigError("treatment law gives a probability of exactly 0 or 1");
    }
  }
}

ChainGraphModel simulation_model(const ChainGraphModel& base,
                                 const SimulationScaling& scaling) {
  if (auto v = validate_model(base); !v.empty()) throw ShapeError("invalid base model: " + v.front());
  ChainGraphModel m = ChainGraphModel::zeros(base.graph, TreatmentMode::per_node, true);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.h[i] = scaling.alpha * base.h[i];
    m.gamma[i] = scaling.gamma_value;
    (*m.kappa)[i] = scaling.kappa_value;
  }
  for (const auto& [e, value] : base.k) m.k[e] = scaling.beta * value;
  return m;
}

CovariateLaw ising_confounder_law(const NetworkGraph& graph, double coupling) {
  std::map<Edge, double> couplings;
  for (const Edge& e : graph.edges()) couplings[e] = coupling;
  return CovariateLaw::ising(graph, std::vector<double>(graph.size(), 0.0),
                             std::move(couplings));
}

CovariateLaw confounder_law_for(const ChainGraphModel& base,
                                const SimulationScaling& scaling) {
  if (scaling.confounder_law) {
    if (scaling.confounder_law->size() != base.size()) {
      throw ShapeError("confounder law dimension does not match base model");
    }
    return *scaling.confounder_law;
  }
  return ising_confounder_law(base.graph, scaling.confounder_coupling);
}

CovariateVector draw_covariates(const CovariateLaw& law, Rng& rng,
                                const GibbsConfig& chain) {
  const std::size_t n = law.size();
  switch (law.kind()) {
    case CovariateLaw::Kind::product_bernoulli: {
      std::vector<int> c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = rng.bernoulli(law.probabilities()[i]);
      return CovariateVector(c);
    }
    case CovariateLaw::Kind::empirical: {
      const auto atoms = law.support();
      double u = rng.uniform();
      for (const auto& atom : atoms) {
        if (u < atom.weight) return atom.c;
        u -= atom.weight;
      }
      return atoms.back().c;
    }
    case CovariateLaw::Kind::ising: {
      GibbsKernel kernel(law.ising_model(), TreatmentVector::shared(0), std::nullopt);
      std::uint64_t state = kernel.random_state(rng);
      const std::size_t sweeps = std::max<std::size_t>(chain.burn_in, 1);
      for (std::size_t s = 0; s < sweeps; ++s) state = kernel.sweep(state, rng, chain.scan_order);
      return CovariateVector::from_mask(state, n);
    }
  }
  throw ConfigError("unknown covariate law kind");
}

CaseDataset generate_dataset(const ChainGraphModel& base,
                             const SimulationScaling& scaling, std::size_t n_obs,
                             std::uint64_t seed, const GibbsConfig& chain,
                             unsigned threads) {
  if (n_obs == 0) throw ConfigError("n_obs must be positive");
  scaling.validate();
  const ChainGraphModel model = simulation_model(base, scaling);
  const CovariateLaw law = confounder_law_for(base, scaling);
  const CompiledModel compiled = CompiledModel::from(model);
  const std::size_t n = model.size();
  const std::size_t sweeps = std::max<std::size_t>(chain.burn_in, 1);

  std::vector<CaseDataset::Row> rows(n_obs);
  parallel_for(n_obs, threads, [&](std::size_t o) {
    Rng rng(derive_seed(seed, {o}));
    CovariateVector c = draw_covariates(law, rng, chain);
    std::vector<int> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.bernoulli(logistic(scaling.treatment_law.intercept +
                                    scaling.treatment_law.slope * c[i]));
    }
    TreatmentVector treatment = TreatmentVector::per_node(a);
    GibbsKernel kernel(compiled, compiled.effective_field(treatment, c));
    std::uint64_t state = kernel.random_state(rng);
    for (std::size_t s = 0; s < sweeps; ++s) state = kernel.sweep(state, rng, chain.scan_order);
    rows[o] = CaseDataset::Row{OutcomeVector::from_mask(state, n), std::move(treatment),
                               std::move(c)};
  });
  return CaseDataset(base.graph.labels(), TreatmentMode::per_node, true, std::move(rows));
}

}  // namespace chaingraph
