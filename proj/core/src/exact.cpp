#include "chaingraph/exact.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "chaingraph/error.hpp"
#include "enumerate.hpp"

namespace chaingraph {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

long parse_int(std::string_view s) {
  const std::string t = trim(s);
  long value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ShapeError("invalid integer in event: \"" + t + "\"");
  }
  return value;
}

std::vector<std::string> split_list(std::string_view body) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= body.size()) {
    const auto comma = body.find(',', start);
    const auto end = comma == std::string_view::npos ? body.size() : comma;
    std::string item = trim(body.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Membership table indexed by mask, or by popcount for count events.
struct EventTable {
  bool by_count = true;
  std::vector<char> member;

  EventTable(const EventPredicate& event, std::size_t n) {
    event.check(n);
    by_count = event.is_count_event();
    if (by_count) {
      member.assign(n + 1, 0);
      for (std::size_t c : event.counts()) member[c] = 1;
    } else {
      member.assign(std::size_t{1} << n, 0);
      for (std::uint64_t m = 0; m < member.size(); ++m) {
        member[m] = event.contains(m, n) ? 1 : 0;
      }
    }
  }

  bool operator()(std::uint64_t mask) const {
    return member[by_count ? static_cast<std::size_t>(std::popcount(mask))
                           : static_cast<std::size_t>(mask)] != 0;
  }
};

struct Prepared {
  CompiledModel cm;
  std::vector<double> field;
};

Prepared prepare(const ChainGraphModel& model, const TreatmentVector& a,
                 const std::optional<CovariateVector>& c,
                 const InferenceOptions& opts) {
  check_context(model, nullptr, a, c);
  detail::require_enumerable(model.size(), opts);
  Prepared p{CompiledModel::from(model), {}};
  p.field = p.cm.effective_field(a, c);
  return p;
}

void require_law_matches(const ChainGraphModel& model,
                         const std::optional<CovariateLaw>& law) {
  if (model.has_confounders() && !law) {
    throw ConfigError("model has confounder effects; a covariate law is required");
  }
  if (!model.has_confounders() && law) {
    throw ConfigError("model has no confounder effects; covariate law must be absent");
  }
  if (law && law->size() != model.size()) {
    throw ShapeError("covariate law dimension does not match model");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// EventPredicate

EventPredicate EventPredicate::liberal_counts(std::set<std::size_t> counts) {
  if (counts.empty()) throw ShapeError("event must contain at least one count");
  EventPredicate e;
  e.counts_ = std::move(counts);
  return e;
}

EventPredicate EventPredicate::explicit_set(
    const std::vector<OutcomeVector>& outcomes) {
  if (outcomes.empty()) throw ShapeError("event must contain at least one outcome");
  EventPredicate e;
  e.explicit_n_ = outcomes.front().size();
  for (const auto& y : outcomes) {
    if (y.size() != e.explicit_n_) throw ShapeError("event outcomes differ in length");
    e.masks_.insert(y.mask());
  }
  return e;
}

EventPredicate EventPredicate::parse(std::string_view text) {
  const std::string t = trim(text);
  auto fail = [&]() -> EventPredicate {
    throw ShapeError("cannot parse event \"" + t +
                     "\"; expected count=K, count in {K1,K2,...} or y=(...)");
  };
  if (t.rfind("count", 0) == 0) {
    std::string rest = trim(std::string_view(t).substr(5));
    std::set<std::size_t> counts;
    if (!rest.empty() && rest[0] == '=') {
      const long v = parse_int(std::string_view(rest).substr(1));
      if (v < 0) fail();
      counts.insert(static_cast<std::size_t>(v));
    } else if (rest.rfind("in", 0) == 0) {
      rest = trim(std::string_view(rest).substr(2));
      if (rest.size() < 2 || rest.front() != '{' || rest.back() != '}') fail();
      for (const auto& item :
           split_list(std::string_view(rest).substr(1, rest.size() - 2))) {
        const long v = parse_int(item);
        if (v < 0) fail();
        counts.insert(static_cast<std::size_t>(v));
      }
    } else {
      fail();
    }
    if (counts.empty()) fail();
    return liberal_counts(std::move(counts));
  }
  if (t.rfind("y", 0) == 0) {
    std::string rest = trim(std::string_view(t).substr(1));
    if (rest.empty() || rest[0] != '=') fail();
    rest = trim(std::string_view(rest).substr(1));
    if (rest.size() < 2 || rest.front() != '(' || rest.back() != ')') fail();
    std::vector<int> values;
    for (const auto& item :
         split_list(std::string_view(rest).substr(1, rest.size() - 2))) {
      values.push_back(static_cast<int>(parse_int(item[0] == '+' ? item.substr(1) : item)));
    }
    return explicit_set({OutcomeVector(values)});
  }
  return fail();
}

bool EventPredicate::contains(std::uint64_t mask, std::size_t n) const {
  if (is_count_event()) {
    return counts_.contains(static_cast<std::size_t>(std::popcount(mask)));
  }
  return n == explicit_n_ && masks_.contains(mask);
}

EventPredicate EventPredicate::complement(std::size_t n) const {
  check(n);
  EventPredicate e;
  if (is_count_event()) {
    for (std::size_t c = 0; c <= n; ++c) {
      if (!counts_.contains(c)) e.counts_.insert(c);
    }
    if (e.counts_.empty()) throw ShapeError("complement of the full event is empty");
    return e;
  }
  e.explicit_n_ = n;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
    if (!masks_.contains(m)) e.masks_.insert(m);
  }
  if (e.masks_.empty()) throw ShapeError("complement of the full event is empty");
  return e;
}

void EventPredicate::check(std::size_t n) const {
  if (is_count_event()) {
    if (counts_.empty()) throw ShapeError("empty event");
    if (*counts_.rbegin() > n) {
      throw ShapeError("event count " + std::to_string(*counts_.rbegin()) +
                       " exceeds number of nodes " + std::to_string(n));
    }
  } else if (explicit_n_ != n) {
    throw ShapeError("explicit event outcomes have length " +
                     std::to_string(explicit_n_) + ", expected " + std::to_string(n));
  }
}

std::string EventPredicate::to_string() const {
  std::ostringstream os;
  if (is_count_event()) {
    if (counts_.size() == 1) {
      os << "count=" << *counts_.begin();
    } else {
      os << "count in {";
      bool first = true;
      for (std::size_t c : counts_) {
        os << (first ? "" : ",") << c;
        first = false;
      }
      os << "}";
    }
    return os.str();
  }
  if (masks_.size() == 1) {
    const auto y = OutcomeVector::from_mask(*masks_.begin(), explicit_n_);
    os << "y=(";
    for (std::size_t i = 0; i < y.size(); ++i) os << (i ? "," : "") << y[i];
    os << ")";
    return os.str();
  }
  os << "explicit[" << masks_.size() << " outcomes of " << explicit_n_ << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// CovariateLaw

CovariateLaw CovariateLaw::empirical(std::vector<Atom> atoms) {
  if (atoms.empty()) throw ConfigError("empirical covariate law needs atoms");
  CovariateLaw law;
  law.kind_ = Kind::empirical;
  law.n_ = atoms.front().c.size();
  double total = 0.0;
  for (const auto& atom : atoms) {
    if (atom.c.size() != law.n_) throw ShapeError("covariate atoms differ in length");
    if (!(atom.weight >= 0.0)) throw ConfigError("covariate weights must be nonnegative");
    total += atom.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("covariate weights must sum to 1");
  }
  law.atoms_ = std::move(atoms);
  return law;
}

CovariateLaw CovariateLaw::empirical_from(const CaseDataset& data) {
  if (!data.has_covariates()) throw ConfigError("dataset has no covariates");
  std::map<std::uint64_t, std::size_t> counts;
  for (const auto& row : data.rows()) ++counts[row.c->mask()];
  std::vector<Atom> atoms;
  const double total = static_cast<double>(data.size());
  for (const auto& [mask, count] : counts) {
    atoms.push_back({CovariateVector::from_mask(mask, data.node_count()),
                     static_cast<double>(count) / total});
  }
  // Renormalize so the sum is 1 up to one rounding of the final division.
  const double s = std::accumulate(atoms.begin(), atoms.end(), 0.0,
                                   [](double acc, const Atom& a) { return acc + a.weight; });
  for (auto& a : atoms) a.weight /= s;
  return empirical(std::move(atoms));
}

CovariateLaw CovariateLaw::product_bernoulli(std::vector<double> probabilities) {
  if (probabilities.empty()) throw ConfigError("product law needs at least one node");
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("Bernoulli probabilities must lie in [0,1]");
  }
  CovariateLaw law;
  law.kind_ = Kind::product_bernoulli;
  law.n_ = probabilities.size();
  law.probs_ = std::move(probabilities);
  return law;
}

CovariateLaw CovariateLaw::ising(NetworkGraph graph, std::vector<double> fields,
                                 std::map<Edge, double> couplings) {
  ChainGraphModel m = ChainGraphModel::zeros(std::move(graph), TreatmentMode::shared);
  if (fields.size() != m.size()) throw ShapeError("Ising law field length mismatch");
  m.h = std::move(fields);
  m.k = std::move(couplings);
  if (auto v = validate_model(m); !v.empty()) {
    throw ConfigError("invalid Ising covariate law: " + v.front());
  }
  CovariateLaw law;
  law.kind_ = Kind::ising;
  law.n_ = m.size();
  law.ising_ = std::move(m);
  return law;
}

const ChainGraphModel& CovariateLaw::ising_model() const {
  if (!ising_) throw ConfigError("covariate law is not an Ising law");
  return *ising_;
}

std::vector<CovariateLaw::Atom> CovariateLaw::support(
    const InferenceOptions& opts) const {
  switch (kind_) {
    case Kind::empirical:
      return atoms_;
    case Kind::product_bernoulli: {
      detail::require_enumerable(n_, opts);
      std::vector<Atom> out;
      for (std::uint64_t m = 0; m < (std::uint64_t{1} << n_); ++m) {
        double w = 1.0;
        for (std::size_t i = 0; i < n_; ++i) {
          w *= ((m >> i) & 1u) ? probs_[i] : 1.0 - probs_[i];
        }
        if (w > 0.0) out.push_back({CovariateVector::from_mask(m, n_), w});
      }
      return out;
    }
    case Kind::ising: {
      const auto dist = outcome_distribution(*ising_, TreatmentVector::shared(0),
                                             std::nullopt, opts);
      std::vector<Atom> out;
      out.reserve(dist.size());
      for (std::uint64_t m = 0; m < dist.size(); ++m) {
        out.push_back({CovariateVector::from_mask(m, n_), dist[m]});
      }
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Effect scales

std::string_view to_string(EffectScale scale) {
  switch (scale) {
    case EffectScale::risk_difference: return "risk_difference";
    case EffectScale::risk_ratio: return "risk_ratio";
    case EffectScale::odds_ratio: return "odds_ratio";
  }
  return "risk_difference";
}

EffectScale effect_scale_from_string(std::string_view text) {
  if (text == "risk_difference" || text == "rd") return EffectScale::risk_difference;
  if (text == "risk_ratio" || text == "rr") return EffectScale::risk_ratio;
  if (text == "odds_ratio" || text == "or") return EffectScale::odds_ratio;
  throw ConfigError("unknown effect scale \"" + std::string(text) +
                    "\"; expected risk_difference, risk_ratio or odds_ratio");
}

double effect_on_scale(double p1, double p0, EffectScale scale) {
  switch (scale) {
    case EffectScale::risk_difference:
      return p1 - p0;
    case EffectScale::risk_ratio:
      if (!(p0 > 0.0) || !(p1 > 0.0)) {
        throw UndefinedScaleError("risk ratio undefined: p0 = " + std::to_string(p0) +
                                  ", p1 = " + std::to_string(p1));
      }
      return p1 / p0;
    case EffectScale::odds_ratio:
      if (!(p0 > 0.0) || !(p0 < 1.0) || !(p1 > 0.0) || !(p1 < 1.0)) {
        throw UndefinedScaleError("odds ratio undefined: p0 = " + std::to_string(p0) +
                                  ", p1 = " + std::to_string(p1));
      }
      return (p1 * (1.0 - p0)) / (p0 * (1.0 - p1));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Enumeration-based queries

double log_partition(const ChainGraphModel& model, const TreatmentVector& a,
                     const std::optional<CovariateVector>& c,
                     const InferenceOptions& opts) {
  const Prepared p = prepare(model, a, c, opts);
  LogSumExp lse;
  detail::for_each_state(p.cm, p.field, [&](std::uint64_t, double pot) { lse.add(pot); });
  return lse.value();
}

double joint_prob(const ChainGraphModel& model, const OutcomeVector& y,
                  const TreatmentVector& a, const std::optional<CovariateVector>& c,
                  const InferenceOptions& opts) {
  check_context(model, &y, a, c);
  const double log_z = log_partition(model, a, c, opts);
  return std::exp(log_potential(model, y, a, c) - log_z);
}

std::vector<double> event_probs(const ChainGraphModel& model,
                                const TreatmentVector& a,
                                const std::optional<CovariateVector>& c,
                                const std::vector<EventPredicate>& events,
                                const InferenceOptions& opts) {
  const Prepared p = prepare(model, a, c, opts);
  std::vector<EventTable> tables;
  tables.reserve(events.size());
  for (const auto& e : events) tables.emplace_back(e, model.size());
  LogSumExp total;
  std::vector<LogSumExp> inside(events.size());
  detail::for_each_state(p.cm, p.field, [&](std::uint64_t mask, double pot) {
    total.add(pot);
    for (std::size_t e = 0; e < tables.size(); ++e) {
      if (tables[e](mask)) inside[e].add(pot);
    }
  });
  const double log_z = total.value();
  std::vector<double> out(events.size());
  for (std::size_t e = 0; e < events.size(); ++e) {
    out[e] = std::exp(inside[e].value() - log_z);
  }
  return out;
}

double event_prob(const ChainGraphModel& model, const TreatmentVector& a,
                  const std::optional<CovariateVector>& c,
                  const EventPredicate& event, const InferenceOptions& opts) {
  return event_probs(model, a, c, {event}, opts).front();
}

std::vector<double> outcome_distribution(const ChainGraphModel& model,
                                         const TreatmentVector& a,
                                         const std::optional<CovariateVector>& c,
                                         const InferenceOptions& opts) {
  const Prepared p = prepare(model, a, c, opts);
  std::vector<double> logp(std::size_t{1} << model.size());
  LogSumExp lse;
  detail::for_each_state(p.cm, p.field, [&](std::uint64_t mask, double pot) {
    logp[mask] = pot;
    lse.add(pot);
  });
  const double log_z = lse.value();
  for (double& v : logp) v = std::exp(v - log_z);
  return logp;
}

std::vector<double> marginal_liberal_probs(const ChainGraphModel& model,
                                           const TreatmentVector& a,
                                           const std::optional<CovariateVector>& c,
                                           const InferenceOptions& opts) {
  const auto dist = outcome_distribution(model, a, c, opts);
  std::vector<double> out(model.size(), 0.0);
  for (std::uint64_t m = 0; m < dist.size(); ++m) {
    for (std::size_t i = 0; i < model.size(); ++i) {
      if ((m >> i) & 1u) out[i] += dist[m];
    }
  }
  return out;
}

std::vector<double> counterfactual_event_probs(
    const ChainGraphModel& model, const TreatmentVector& a,
    const std::vector<EventPredicate>& events,
    const std::optional<CovariateLaw>& law, const InferenceOptions& opts) {
  require_law_matches(model, law);
  if (!law) return event_probs(model, a, std::nullopt, events, opts);
  std::vector<double> out(events.size(), 0.0);
  for (const auto& atom : law->support(opts)) {
    if (atom.weight == 0.0) continue;
    const auto probs = event_probs(model, a, atom.c, events, opts);
    for (std::size_t e = 0; e < events.size(); ++e) out[e] += atom.weight * probs[e];
  }
  return out;
}

double counterfactual_event_prob(const ChainGraphModel& model,
                                 const TreatmentVector& a,
                                 const EventPredicate& event,
                                 const std::optional<CovariateLaw>& law,
                                 const InferenceOptions& opts) {
  return counterfactual_event_probs(model, a, {event}, law, opts).front();
}

EffectEstimate causal_effect(const ChainGraphModel& model, const TreatmentVector& a1,
                             const TreatmentVector& a0, const EventPredicate& event,
                             EffectScale scale, const std::optional<CovariateLaw>& law,
                             const InferenceOptions& opts) {
  check_treatment(model, a1);
  check_treatment(model, a0);
  EffectEstimate est;
  est.scale = scale;
  est.a1 = a1;
  est.a0 = a0;
  est.event = event.to_string();
  est.p1 = counterfactual_event_prob(model, a1, event, law, opts);
  est.p0 = counterfactual_event_prob(model, a0, event, law, opts);
  est.point = effect_on_scale(est.p1, est.p0, scale);
  return est;
}

}  // namespace chaingraph
