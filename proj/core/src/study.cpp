#include "chaingraph/study.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "chaingraph/error.hpp"
#include "chaingraph/parallel.hpp"

namespace chaingraph {

std::string_view to_string(SeMethod method) {
  return method == SeMethod::delta ? "delta" : "bootstrap";
}

SeMethod se_method_from_string(std::string_view text) {
  if (text == "delta") return SeMethod::delta;
  if (text == "bootstrap") return SeMethod::bootstrap;
  throw ConfigError("unknown standard-error method \"" + std::string(text) + "\"");
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

namespace {

std::vector<double> all_probs(const ChainGraphModel& model, const CaseDataset& data,
                              const std::vector<TreatmentVector>& assignments,
                              const std::vector<EventPredicate>& events,
                              const InferenceOptions& opts) {
  std::optional<CovariateLaw> law;
  if (model.has_confounders()) law = CovariateLaw::empirical_from(data);
  std::vector<double> out;
  for (const auto& a : assignments) {
    const auto p = counterfactual_event_probs(model, a, events, law, opts);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

RecoveryReplicate run_replicate(const RecoveryConfig& cfg, std::size_t r,
                                const std::vector<TreatmentVector>& assignments,
                                const std::function<void(std::size_t, const CaseDataset&)>& on_dataset) {
  RecoveryReplicate rep;
  rep.index = r;
  const CaseDataset data =
      generate_dataset(cfg.base, cfg.scaling, cfg.n_obs, derive_seed(cfg.seed, {r, 0}), cfg.chain, 1);
  if (on_dataset) on_dataset(r, data);
  try {
    const FittedModel fit = fit_exact_mle(data, cfg.base.graph, cfg.fit);
    rep.iterations = fit.report.iterations;
    if (cfg.se_method == SeMethod::delta) {
      const DeltaMethod delta(fit, data, cfg.fit.inference);
      for (const auto& a : assignments) {
        for (const auto& p : delta.counterfactual(a, cfg.events)) {
          rep.estimates.push_back(p.prob);
          rep.ses.push_back(p.se);
        }
      }
    } else {
      rep.estimates = all_probs(fit.model, data, assignments, cfg.events, cfg.fit.inference);
      std::vector<std::vector<double>> boot(rep.estimates.size());
      FitOptions warm = cfg.fit;
      warm.warm_start = fit.model;
      for (std::size_t b = 0; b < cfg.bootstrap_replicates; ++b) {
        Rng rng(derive_seed(cfg.seed, {r, 1, b}));
        std::vector<std::size_t> idx(data.size());
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(data.size()));
        const CaseDataset sample = data.resample(idx);
        try {
          const FittedModel bf = fit_exact_mle(sample, cfg.base.graph, warm);
          const auto probs = all_probs(bf.model, sample, assignments, cfg.events, cfg.fit.inference);
          for (std::size_t q = 0; q < probs.size(); ++q) boot[q].push_back(probs[q]);
        } catch (const ConvergenceError&) {
        }
      }
      for (const auto& values : boot) rep.ses.push_back(sd_of(values));
    }
    rep.ok = true;
  } catch (const ConvergenceError& e) {
    rep.failure = e.what();
  }
  return rep;
}

}  // namespace

RecoveryReport run_recovery_study(
    const RecoveryConfig& cfg,
    const std::function<void(std::size_t, const CaseDataset&)>& on_dataset) {
  if (cfg.replicates == 0) throw ConfigError("replicates must be positive");
  if (cfg.se_method == SeMethod::bootstrap && cfg.bootstrap_replicates < 2) {
    throw ConfigError("bootstrap standard errors need at least 2 resamples");
  }
  cfg.scaling.validate();
  RecoveryReport report;
  report.truth_model = simulation_model(cfg.base, cfg.scaling);
  const CovariateLaw law = confounder_law_for(cfg.base, cfg.scaling);
  std::vector<TreatmentVector> assignments;
  for (const auto& a : cfg.assignments) assignments.push_back(a.vector_for(cfg.base.graph));

  std::vector<double> truth;
  for (const auto& a : assignments) {
    const auto p = counterfactual_event_probs(report.truth_model, a, cfg.events, law, cfg.fit.inference);
    truth.insert(truth.end(), p.begin(), p.end());
  }

  report.replicates.resize(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    report.replicates[r] = run_replicate(cfg, r, assignments, on_dataset);
  });

  const std::size_t cells = truth.size();
  std::vector<std::vector<double>> est(cells), se(cells);
  for (const auto& rep : report.replicates) {
    if (!rep.ok) {
      ++report.failed;
      continue;
    }
    for (std::size_t q = 0; q < cells; ++q) {
      est[q].push_back(rep.estimates[q]);
      se[q].push_back(rep.ses[q]);
    }
  }
  for (std::size_t ai = 0; ai < cfg.assignments.size(); ++ai) {
    for (std::size_t ei = 0; ei < cfg.events.size(); ++ei) {
      const std::size_t q = ai * cfg.events.size() + ei;
      RecoveryCell cell;
      cell.assignment = cfg.assignments[ai].name;
      cell.event = cfg.events[ei].to_string();
      cell.truth = truth[q];
      cell.mean_estimate = mean_of(est[q]);
      std::vector<double> bias;
      for (double v : est[q]) bias.push_back(std::abs(v - truth[q]));
      cell.mean_abs_bias = mean_of(bias);
      cell.mean_se = mean_of(se[q]);
      cell.empirical_sd = sd_of(est[q]);
      report.cells.push_back(cell);
    }
  }
  return report;
}

std::string recovery_cells_csv(const RecoveryReport& report) {
  std::ostringstream out;
  out << "assignment,event,truth,mean_estimate,mean_abs_bias,mean_se,empirical_sd\n";
  for (const auto& c : report.cells) {
    out << csv_escape(c.assignment) << ',' << csv_escape(c.event) << ',' << format_number(c.truth)
        << ',' << format_number(c.mean_estimate) << ',' << format_number(c.mean_abs_bias) << ','
        << format_number(c.mean_se) << ',' << format_number(c.empirical_sd) << '\n';
  }
  return out.str();
}

std::string recovery_replicates_csv(const RecoveryReport& report, const RecoveryConfig& config) {
  std::ostringstream out;
  out << "replicate,assignment,event,estimate,se\n";
  for (const auto& rep : report.replicates) {
    if (!rep.ok) continue;
    for (std::size_t ai = 0; ai < config.assignments.size(); ++ai) {
      for (std::size_t ei = 0; ei < config.events.size(); ++ei) {
        const std::size_t q = ai * config.events.size() + ei;
        out << rep.index << ',' << csv_escape(config.assignments[ai].name) << ','
            << csv_escape(config.events[ei].to_string()) << ',' << format_number(rep.estimates[q])
            << ',' << format_number(rep.ses[q]) << '\n';
      }
    }
  }
  return out.str();
}

Json recovery_summary_json(const RecoveryReport& report, const RecoveryConfig& config) {
  Json doc;
  doc["replicates"] = config.replicates;
  doc["failed_replicates"] = report.failed;
  doc["n_obs"] = config.n_obs;
  doc["seed"] = config.seed;
  doc["se_method"] = to_string(config.se_method);
  if (config.se_method == SeMethod::bootstrap) doc["bootstrap_replicates"] = config.bootstrap_replicates;
  doc["scaling"] = {{"alpha", config.scaling.alpha},
                    {"beta", config.scaling.beta},
                    {"gamma", config.scaling.gamma_value},
                    {"kappa", config.scaling.kappa_value},
                    {"treatment_intercept", config.scaling.treatment_law.intercept},
                    {"treatment_slope", config.scaling.treatment_law.slope},
                    {"confounder_coupling", config.scaling.confounder_coupling}};
  doc["burn_in"] = config.chain.burn_in;
  double max_bias = 0.0, min_bias = 1.0, max_se = 0.0, min_se = 1.0;
  for (const auto& c : report.cells) {
    max_bias = std::max(max_bias, c.mean_abs_bias);
    min_bias = std::min(min_bias, c.mean_abs_bias);
    max_se = std::max(max_se, c.mean_se);
    min_se = std::min(min_se, c.mean_se);
  }
  if (!report.cells.empty()) {
    doc["mean_abs_bias_range"] = {min_bias, max_bias};
    doc["mean_se_range"] = {min_se, max_se};
  }
  Json cells = Json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"assignment", c.assignment},
                     {"event", c.event},
                     {"truth", c.truth},
                     {"mean_estimate", c.mean_estimate},
                     {"mean_abs_bias", c.mean_abs_bias},
                     {"mean_se", c.mean_se},
                     {"empirical_sd", c.empirical_sd}});
  }
  doc["cells"] = cells;
  return doc;
}

EdgeRecovery edge_recovery(const NetworkGraph& truth, const NetworkGraph& estimate) {
  if (truth.labels() != estimate.labels()) throw ShapeError("graphs have different labels");
  std::size_t hits = 0;
  for (const Edge& e : estimate.edges()) {
    if (truth.adjacent(e.u, e.v)) ++hits;
  }
  EdgeRecovery r;
  const double est = static_cast<double>(estimate.edge_count());
  const double tru = static_cast<double>(truth.edge_count());
  if (est == 0.0 && tru == 0.0) return {1.0, 1.0, 1.0};
  r.precision = est > 0 ? static_cast<double>(hits) / est : 0.0;
  r.recall = tru > 0 ? static_cast<double>(hits) / tru : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

}  // namespace chaingraph
