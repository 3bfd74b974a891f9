#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chaingraph/conjecture.hpp"
#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/exact.hpp"
#include "chaingraph/io.hpp"
#include "chaingraph/reference.hpp"
#include "chaingraph/sampler.hpp"
#include "chaingraph/scdb.hpp"
#include "chaingraph/study.hpp"

#ifndef CHAINGRAPH_VERSION
#define CHAINGRAPH_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace chaingraph;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_dir = ".";
  std::string format = "json";
};

/// Files read and written by one run, for the manifest.
class RunContext {
 public:
  explicit RunContext(const Globals& g) : globals(g) {}

  const Globals& globals;

  std::string read_input(const std::string& path) {
    std::string text = read_file(path);
    std::lock_guard lock(mutex_);
    inputs_[path] = sha256_hex(text);
    return text;
  }

  void write_output(const std::string& name, std::string_view contents) {
    const fs::path path = fs::path(globals.out_dir) / name;
    write_file(path, contents);
    std::lock_guard lock(mutex_);
    outputs_[name] = sha256_hex(contents);
  }

  bool json() const { return globals.format == "json"; }

  Json inputs_json() const {
    Json out = Json::array();
    for (const auto& [path, hash] : inputs_) out.push_back({{"path", path}, {"sha256", hash}});
    return out;
  }
  Json outputs_json() const {
    Json out = Json::array();
    for (const auto& [name, hash] : outputs_) out.push_back({{"file", name}, {"sha256", hash}});
    return out;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int exit_code_for(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ConvergenceError&) {
    return 3;
  } catch (const BootstrapFailure&) {
    return 3;
  } catch (const IoError&) {
    return 4;
  } catch (const Error&) {
    return 2;
  } catch (const std::bad_alloc&) {
    return 1;
  } catch (...) {
    return 1;
  }
}

std::string error_kind(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ShapeError&) {
    return "shape error";
  } catch (const ConfigError&) {
    return "config error";
  } catch (const CapacityError&) {
    return "capacity error";
  } catch (const SchemaError&) {
    return "schema error";
  } catch (const EmptyDatasetError&) {
    return "empty-dataset error";
  } catch (const DegenerateNodeError&) {
    return "degenerate-node error";
  } catch (const UndefinedScaleError&) {
    return "undefined-scale error";
  } catch (const NoPairsError&) {
    return "no-pairs error";
  } catch (const ConvergenceError&) {
    return "convergence error";
  } catch (const BootstrapFailure&) {
    return "bootstrap failure";
  } catch (const IoError&) {
    return "I/O error";
  } catch (...) {
    return "error";
  }
}

std::string error_message(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown failure";
  }
}

// ---------------------------------------------------------------------------
// Shared input handling

struct AnalysisData {
  CaseDataset data;
  std::optional<int> issue;
  std::size_t treated = 0;
};

bool is_court_cases_csv(const std::string& text) {
  std::string_view head(text);
  if (head.substr(0, 3) == "\xEF\xBB\xBF") head.remove_prefix(3);
  return head.substr(0, 24) == "case_id,term,issue_area,";
}

AnalysisData load_analysis_data(RunContext& ctx, const std::string& path, const std::string& issue) {
  const std::string text = ctx.read_input(path);
  std::istringstream in(text);
  if (is_court_cases_csv(text)) {
    if (issue.empty()) throw ConfigError("court cases input needs --issue to define the treatment");
    const CourtCases cases = read_court_cases_csv(in);
    const int code = issue_area_from_string(issue);
    BinarizedIssue b = binarize_issue(cases, code);
    if (b.warning) std::cerr << "warning: " << *b.warning << '\n';
    return {std::move(b.dataset), code, b.treated};
  }
  if (!issue.empty()) throw ConfigError("--issue applies only to court cases files from `ingest`");
  return {read_dataset_csv(in), std::nullopt, 0};
}

/// Edge list: one `label,label` pair per row; a first row naming unknown
/// labels is taken as a header.
NetworkGraph read_edge_list(RunContext& ctx, const std::string& path,
                            const std::vector<std::string>& labels) {
  const std::string text = ctx.read_input(path);
  std::istringstream in(text);
  CsvReader reader(in);
  std::vector<std::string> fields;
  std::vector<std::pair<std::string, std::string>> edges;
  const NetworkGraph nodes = NetworkGraph::empty(labels);
  bool first = true;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2) {
      throw SchemaError("edge list row near line " + std::to_string(reader.line()) +
                        " must have exactly two labels");
    }
    const bool known = nodes.find(fields[0]) && nodes.find(fields[1]);
    if (first && !known) {
      first = false;
      continue;
    }
    first = false;
    if (!known) {
      throw ConfigError("edge list names unknown node \"" +
                        (nodes.find(fields[0]) ? fields[1] : fields[0]) + "\"");
    }
    edges.emplace_back(fields[0], fields[1]);
  }
  return NetworkGraph(labels, edges);
}

ChainGraphModel load_model(RunContext& ctx, const std::string& path) {
  const std::string text = ctx.read_input(path);
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

std::string opt_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  std::string input;
  int first_term = TermRange{}.first;
  int last_term = TermRange{}.last;
  std::optional<std::size_t> expected_cases;
  std::string issue;
};

void run_ingest(RunContext& ctx, const IngestOptions& o) {
  const std::string text = ctx.read_input(o.input);
  std::istringstream in(text);
  const CourtCases cases =
      load_cases(in, CourtPanel::second_rehnquist(), TermRange{o.first_term, o.last_term});
  std::ostringstream csv;
  write_court_cases_csv(cases, csv);
  ctx.write_output("court_cases.csv", csv.str());

  const CourtSummary summary = summarize(cases);
  if (ctx.json()) {
    ctx.write_output("ingest_summary.json", dump_json(court_summary_json(summary, o.expected_cases)));
  } else {
    std::ostringstream out;
    out << "section,key,value\n";
    out << "total,cases," << summary.cases << '\n';
    out << "total,records_in_range," << summary.records_in_range << '\n';
    out << "total,excluded_cases," << summary.exclusions.size() << '\n';
    out << "total,conservative_decision_rate," << format_number(summary.conservative_decision_rate) << '\n';
    for (const auto& [code, count] : summary.issue_counts) {
      out << "issue_count," << csv_escape(code == 0 ? "missing" : std::string(issue_area_name(code))) << ','
          << count << '\n';
    }
    for (const auto& j : summary.justices) {
      out << "liberal_rate," << csv_escape(j.label) << ',' << format_number(j.liberal_rate) << '\n';
    }
    ctx.write_output("ingest_summary.csv", out.str());
  }
  if (!o.issue.empty()) {
    const BinarizedIssue b = binarize_issue(cases, issue_area_from_string(o.issue));
    if (b.warning) std::cerr << "warning: " << *b.warning << '\n';
    std::ostringstream d;
    write_dataset_csv(b.dataset, d);
    ctx.write_output("dataset.csv", d.str());
  }
  std::cout << "cases: " << summary.cases << " (excluded " << summary.exclusions.size() << ")\n";
  if (o.expected_cases && *o.expected_cases != summary.cases) {
    std::cerr << "warning: expected " << *o.expected_cases << " cases, found " << summary.cases << '\n';
  }
}

// ---------------------------------------------------------------------------
// fit

struct FitCliOptions {
  std::string data;
  std::string issue;
  std::string edges;
  std::string rule = "AND";
  double ebic_gamma = 0.5;
  std::vector<double> penalty_grid;
  std::string method = "mle";
  std::string out = "model.json";
};

void run_fit(RunContext& ctx, const FitCliOptions& o) {
  const AnalysisData in = load_analysis_data(ctx, o.data, o.issue);
  const FitMethod method = fit_method_from_string(o.method);
  NetworkGraph graph;
  std::optional<StructureResult> learned;
  StructureOptions so;
  so.rule = symmetrization_rule_from_string(o.rule);
  so.ebic_gamma = o.ebic_gamma;
  so.threads = ctx.globals.threads;
  if (!o.penalty_grid.empty()) so.penalty_grid = o.penalty_grid;
  if (!o.edges.empty()) {
    graph = read_edge_list(ctx, o.edges, in.data.labels());
  } else {
    learned = learn_structure(in.data, so);
    for (const auto& w : learned->warnings) std::cerr << "warning: " << w << '\n';
    graph = learned->graph;
  }
  const FittedModel fit =
      method == FitMethod::mle ? fit_exact_mle(in.data, graph) : fit_pseudolikelihood(in.data, graph);

  Json doc = model_to_json(fit.model);
  Json meta;
  meta["method"] = fit.report.method;
  meta["n_obs"] = fit.report.n_obs;
  meta["iterations"] = fit.report.iterations;
  meta["grad_inf"] = fit.report.grad_inf;
  meta["mean_log_likelihood"] = fit.report.mean_log_likelihood;
  meta["converged"] = fit.report.converged;
  if (in.issue) {
    meta["issue_area"] = std::string(issue_area_name(*in.issue));
    meta["treated_cases"] = in.treated;
  }
  Json structure;
  structure["source"] = learned ? "learned" : "edge_list";
  if (learned) {
    structure["rule"] = std::string(to_string(so.rule));
    structure["ebic_gamma"] = so.ebic_gamma;
    Json lambdas = Json::object();
    for (const auto& s : learned->nodes) {
      if (s.degenerate) {
        lambdas[graph.label(s.node)] = nullptr;
      } else {
        lambdas[graph.label(s.node)] = s.lambda;
      }
    }
    structure["selected_lambda"] = lambdas;
    structure["warnings"] = learned->warnings;
  }
  meta["structure"] = structure;
  doc["fit_meta"] = meta;
  ctx.write_output(o.out, dump_json(doc));

  if (learned) {
    if (ctx.json()) {
      Json s = Json::array();
      for (const auto& sel : learned->nodes) {
        Json nb = Json::array();
        for (std::size_t j : sel.neighbors) nb.push_back(graph.label(j));
        Json entry{{"node", graph.label(sel.node)}, {"degenerate", sel.degenerate}};
        if (!sel.degenerate) {
          entry["lambda"] = sel.lambda;
          entry["ebic"] = sel.ebic;
        }
        entry["neighbors"] = nb;
        s.push_back(entry);
      }
      ctx.write_output("structure.json", dump_json(Json{{"rule", std::string(to_string(so.rule))}, {"nodes", s}}));
    } else {
      std::ostringstream out;
      out << "u,v\n";
      for (const Edge& e : graph.edges()) {
        out << csv_escape(graph.label(e.u)) << ',' << csv_escape(graph.label(e.v)) << '\n';
      }
      ctx.write_output("structure.csv", out.str());
    }
  }
  std::cout << "fitted " << graph.size() << " nodes, " << graph.edge_count() << " edges ("
            << fit.report.method << ", " << fit.report.iterations << " iterations)\n";
}

// ---------------------------------------------------------------------------
// effect

struct EffectCliOptions {
  std::string model;
  std::string a1;
  std::string a0;
  std::string event;
  std::string scale = "rd";
  std::string data;
  std::string issue;
  std::string se;
  std::size_t replicates = 500;
  std::string method = "mle";
  bool refit_structure = false;
  std::vector<std::string> plot_events;
};

struct PlotRow {
  std::string event;
  std::string treatment;
  double estimate = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
};

void run_effect(RunContext& ctx, const EffectCliOptions& o) {
  const ChainGraphModel model = load_model(ctx, o.model);
  const auto& labels = model.graph.labels();
  std::optional<AnalysisData> in;
  if (!o.data.empty()) in = load_analysis_data(ctx, o.data, o.issue);
  if (in && in->data.labels() != labels) throw ShapeError("dataset labels do not match the model");
  const std::string se_method = o.se.empty() ? (in ? "bootstrap" : "none") : o.se;
  if (se_method != "none" && !in) throw ConfigError("--se " + se_method + " needs --data");

  EffectQuery query;
  query.a1 = parse_treatment(o.a1, model.treatment_mode, labels);
  query.a0 = parse_treatment(o.a0, model.treatment_mode, labels);
  query.event = EventPredicate::parse(o.event);
  query.scale = effect_scale_from_string(o.scale);
  query.event.check(model.size());

  std::optional<CovariateLaw> law;
  if (model.has_confounders()) {
    if (!in) throw ConfigError("model has confounder effects; --data is needed for their empirical law");
    law = CovariateLaw::empirical_from(in->data);
  }

  std::vector<EventPredicate> plot_events{query.event};
  for (const auto& e : o.plot_events) {
    EventPredicate p = EventPredicate::parse(e);
    p.check(model.size());
    if (!(p == query.event)) plot_events.push_back(p);
  }

  Json report;
  std::vector<PlotRow> plot;
  const std::string t1 = describe_treatment(query.a1, labels);
  const std::string t0 = describe_treatment(query.a0, labels);

  if (se_method == "none") {
    const EffectEstimate e = causal_effect(model, query.a1, query.a0, query.event, query.scale, law);
    report = effect_to_json(e, labels);
    for (const auto& ev : plot_events) {
      plot.push_back({ev.to_string(), t1, counterfactual_event_prob(model, query.a1, ev, law), {}, {}});
      plot.push_back({ev.to_string(), t0, counterfactual_event_prob(model, query.a0, ev, law), {}, {}});
    }
  } else if (se_method == "delta") {
    const DeltaMethod delta(FittedModel{model, {}}, in->data);
    const DeltaEffect d = delta.effect(query);
    report = effect_to_json(d.effect, labels);
    report["p1_se"] = d.p1_se;
    report["p0_se"] = d.p0_se;
    for (const auto& ev : plot_events) {
      for (const auto& [a, name] : {std::pair{query.a1, t1}, std::pair{query.a0, t0}}) {
        const auto p = delta.counterfactual(a, {ev}).front();
        plot.push_back({ev.to_string(), name, p.prob, p.prob - 1.96 * p.se, p.prob + 1.96 * p.se});
      }
    }
  } else if (se_method == "bootstrap") {
    BootstrapSpec spec;
    spec.replicates = o.replicates;
    spec.seed = ctx.globals.seed;
    spec.method = fit_method_from_string(o.method);
    spec.refit_structure = o.refit_structure;
    spec.threads = ctx.globals.threads;
    for (const auto& ev : plot_events) {
      EffectQuery q = query;
      q.event = ev;
      const BootstrapResult b = bootstrap_effect(in->data, model.graph, q, spec);
      if (ev == query.event) {
        report = effect_to_json(b.effect, labels);
        report["p1_se"] = b.p1_se;
        report["p0_se"] = b.p0_se;
        report["replicates"] = b.replicates;
        report["dropped_replicates"] = b.dropped;
        report["refit_method"] = std::string(to_string(spec.method));
      }
      plot.push_back({ev.to_string(), t1, b.effect.p1, percentile(b.replicate_p1, 0.025),
                      percentile(b.replicate_p1, 0.975)});
      plot.push_back({ev.to_string(), t0, b.effect.p0, percentile(b.replicate_p0, 0.025),
                      percentile(b.replicate_p0, 0.975)});
    }
  } else {
    throw ConfigError("unknown --se method \"" + se_method + "\"");
  }
  report["se_method"] = se_method;

  if (ctx.json()) {
    ctx.write_output("effect.json", dump_json(report));
  } else {
    std::ostringstream out;
    out << "scale,point,se,ci_low,ci_high,a1,a0,event,p1,p0,model_fingerprint\n";
    auto num = [&](const char* key) {
      return report.contains(key) ? format_number(report.at(key).get<double>()) : std::string();
    };
    out << report.at("scale").get<std::string>() << ',' << num("point") << ',' << num("se") << ','
        << num("ci_low") << ',' << num("ci_high") << ',' << csv_escape(report.at("a1").get<std::string>()) << ','
        << csv_escape(report.at("a0").get<std::string>()) << ',' << csv_escape(report.at("event").get<std::string>())
        << ',' << num("p1") << ',' << num("p0") << ',' << report.at("model_fingerprint").get<std::string>() << '\n';
    ctx.write_output("effect.csv", out.str());
  }
  std::ostringstream plot_csv;
  plot_csv << "event,treatment,estimate,ci_low,ci_high\n";
  for (const auto& r : plot) {
    plot_csv << csv_escape(r.event) << ',' << csv_escape(r.treatment) << ',' << format_number(r.estimate) << ','
             << opt_number(r.ci_low) << ',' << opt_number(r.ci_high) << '\n';
  }
  ctx.write_output("effect_plot.csv", plot_csv.str());
  std::cout << to_string(query.scale) << " = " << format_number(report.at("point").get<double>());
  if (report.contains("se")) std::cout << " (se " << format_number(report.at("se").get<double>()) << ")";
  std::cout << '\n';
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string model;
  SimulationScaling scaling;
  std::size_t n_obs = 2000;
  std::size_t replicates = 1;
  std::size_t burn_in = GibbsConfig{}.burn_in;
  std::string scan_order = "fixed";
  std::string se = "delta";
  std::size_t bootstrap_replicates = 100;
  std::vector<std::string> assignments;
  std::vector<std::string> events;
  bool write_datasets = false;
};

std::vector<NamedAssignment> parse_assignments(const std::vector<std::string>& specs,
                                               const NetworkGraph& graph) {
  std::vector<NamedAssignment> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("assignment \"" + s + "\" must look like name=label1,label2 (or name=none)");
    }
    NamedAssignment a{s.substr(0, eq), {}};
    const TreatmentVector v = parse_treatment(s.substr(eq + 1), TreatmentMode::per_node, graph.labels());
    for (std::size_t i = 0; i < graph.size(); ++i) {
      if (v.at(i)) a.treated.push_back(graph.label(i));
    }
    out.push_back(a);
  }
  return out;
}

void run_simulate(RunContext& ctx, const SimulateOptions& o) {
  RecoveryConfig cfg;
  if (!o.model.empty()) cfg.base = load_model(ctx, o.model);
  cfg.scaling = o.scaling;
  cfg.n_obs = o.n_obs;
  cfg.replicates = o.replicates;
  cfg.seed = ctx.globals.seed;
  cfg.chain.burn_in = o.burn_in;
  cfg.chain.sweeps = o.burn_in + 1;
  cfg.chain.scan_order = scan_order_from_string(o.scan_order);
  cfg.se_method = se_method_from_string(o.se);
  cfg.bootstrap_replicates = o.bootstrap_replicates;
  cfg.threads = ctx.globals.threads;
  const NetworkGraph& g = cfg.base.graph;
  if (!o.assignments.empty()) {
    cfg.assignments = parse_assignments(o.assignments, g);
  } else if (!(g.labels() == court_reference_graph().labels())) {
    cfg.assignments = {{"all_treated", g.labels()}, {"none_treated", {}}};
  }
  if (!o.events.empty()) {
    cfg.events.clear();
    for (const auto& e : o.events) cfg.events.push_back(EventPredicate::parse(e));
  } else if (g.size() != 9) {
    cfg.events = {EventPredicate::liberal_counts({g.size()}), EventPredicate::liberal_counts({0})};
  }
  for (const auto& e : cfg.events) e.check(g.size());
  cfg.scaling.validate();

  // Truth table of the generating model.
  const ChainGraphModel truth = simulation_model(cfg.base, cfg.scaling);
  const CovariateLaw law = confounder_law_for(cfg.base, cfg.scaling);
  std::ostringstream table;
  table << "assignment,event,probability\n";
  for (const auto& a : cfg.assignments) {
    const auto probs = counterfactual_event_probs(truth, a.vector_for(g), cfg.events, law);
    for (std::size_t e = 0; e < cfg.events.size(); ++e) {
      table << csv_escape(a.name) << ',' << csv_escape(cfg.events[e].to_string()) << ','
            << format_number(probs[e]) << '\n';
    }
  }
  ctx.write_output("counterfactual_truth.csv", table.str());
  ctx.write_output("generating_model.json", dump_json(model_to_json(truth)));

  if (o.replicates == 1) {
    const CaseDataset data = generate_dataset(cfg.base, cfg.scaling, cfg.n_obs,
                                              derive_seed(cfg.seed, {0, 0}), cfg.chain, cfg.threads);
    std::ostringstream d;
    write_dataset_csv(data, d);
    ctx.write_output("dataset.csv", d.str());
    std::cout << "wrote one dataset of " << data.size() << " observations\n";
    return;
  }

  std::function<void(std::size_t, const CaseDataset&)> on_dataset;
  if (o.write_datasets) {
    on_dataset = [&](std::size_t r, const CaseDataset& data) {
      std::ostringstream d;
      write_dataset_csv(data, d);
      char name[64];
      std::snprintf(name, sizeof name, "datasets/replicate_%05zu.csv", r + 1);
      ctx.write_output(name, d.str());
    };
  }
  const RecoveryReport report = run_recovery_study(cfg, on_dataset);
  ctx.write_output("recovery_replicates.csv", recovery_replicates_csv(report, cfg));
  if (ctx.json()) {
    ctx.write_output("recovery_summary.json", dump_json(recovery_summary_json(report, cfg)));
  } else {
    ctx.write_output("recovery_cells.csv", recovery_cells_csv(report));
  }
  double max_bias = 0.0, max_se = 0.0;
  for (const auto& c : report.cells) {
    max_bias = std::max(max_bias, c.mean_abs_bias);
    max_se = std::max(max_se, c.mean_se);
  }
  std::cout << o.replicates << " replicates (" << report.failed << " failed); largest mean |bias| "
            << format_number(max_bias) << ", largest mean se " << format_number(max_se) << '\n';
}

// ---------------------------------------------------------------------------
// gibbs

struct GibbsCliOptions {
  std::string model;
  std::string a;
  std::string c;
  GibbsConfig config;
  std::string scan_order = "fixed";
};

void run_gibbs(RunContext& ctx, const GibbsCliOptions& o) {
  const ChainGraphModel model = load_model(ctx, o.model);
  const auto& labels = model.graph.labels();
  const TreatmentVector a = parse_treatment(o.a, model.treatment_mode, labels);
  std::optional<CovariateVector> c;
  if (!o.c.empty()) {
    const TreatmentVector cv = parse_treatment(o.c, TreatmentMode::per_node, labels);
    c = CovariateVector(std::vector<int>(cv.values().begin(), cv.values().end()));
  }
  check_context(model, nullptr, a, c);
  GibbsConfig cfg = o.config;
  cfg.seed = ctx.globals.seed;
  cfg.scan_order = scan_order_from_string(o.scan_order);
  cfg.validate();
  const auto samples = gibbs_chain(model, a, c, cfg);

  std::ostringstream out;
  out << "sample";
  for (const auto& l : labels) out << ",y_" << csv_escape(l);
  out << '\n';
  std::map<std::uint64_t, std::size_t> counts;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    out << s + 1;
    for (std::size_t i = 0; i < samples[s].size(); ++i) out << ',' << samples[s][i];
    out << '\n';
    ++counts[samples[s].mask()];
  }
  ctx.write_output("samples.csv", out.str());

  const double kept = static_cast<double>(samples.size());
  std::optional<std::vector<double>> exact;
  if (model.size() <= InferenceOptions{}.enumeration_limit) exact = outcome_distribution(model, a, c);
  std::optional<double> tv;
  if (exact) {
    double sum = 0.0;
    for (std::uint64_t m = 0; m < exact->size(); ++m) {
      const auto it = counts.find(m);
      const double f = it == counts.end() ? 0.0 : static_cast<double>(it->second) / kept;
      sum += std::abs(f - (*exact)[m]);
    }
    tv = sum / 2.0;
  }
  if (ctx.json()) {
    Json doc;
    doc["kept_samples"] = samples.size();
    doc["sweeps"] = cfg.sweeps;
    doc["burn_in"] = cfg.burn_in;
    doc["thin"] = cfg.thin;
    doc["scan_order"] = std::string(to_string(cfg.scan_order));
    doc["seed"] = cfg.seed;
    if (tv) doc["total_variation_to_exact"] = *tv;
    Json marg = Json::object();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      double plus = 0.0;
      for (const auto& y : samples) plus += y[i] > 0 ? 1.0 : 0.0;
      marg[labels[i]] = plus / kept;
    }
    doc["liberal_rate"] = marg;
    ctx.write_output("gibbs_summary.json", dump_json(doc));
  } else {
    std::ostringstream s;
    s << "state_mask,empirical,exact\n";
    for (const auto& [m, n] : counts) {
      s << m << ',' << format_number(static_cast<double>(n) / kept) << ','
        << (exact ? format_number((*exact)[m]) : std::string()) << '\n';
    }
    ctx.write_output("gibbs_summary.csv", s.str());
  }
  std::cout << samples.size() << " samples kept";
  if (tv) std::cout << "; total variation to exact " << format_number(*tv);
  std::cout << '\n';
}

// ---------------------------------------------------------------------------
// conjecture and battery

void run_conjecture(RunContext& ctx, ConjectureStudyConfig cfg) {
  cfg.seed = ctx.globals.seed;
  cfg.threads = ctx.globals.threads;
  const ConjectureStudy study = run_conjecture_study(cfg);
  Json generators = Json::array();
  for (std::size_t k = 0; k < study.networks.size(); ++k) {
    const auto& net = study.networks[k];
    char name[64];
    std::snprintf(name, sizeof name, "battery_network_%02zu.csv", k + 1);
    ctx.write_output(name, battery_csv(net.report));
    generators.push_back({{"index", k + 1},
                          {"network_seed", net.network_seed},
                          {"data_seed", net.data_seed},
                          {"params", temporal_params_json(net.params, net.network)}});
  }
  ctx.write_output("generator_manifest.json",
                   dump_json(Json{{"master_seed", cfg.seed}, {"replicates", cfg.replicates}, {"networks", generators}}));
  if (ctx.json()) {
    ctx.write_output("conjecture_summary.json", dump_json(conjecture_summary_json(study, cfg)));
  } else {
    std::ostringstream s;
    s << "network,pairs,rate_a,rate_b,rate_c\n";
    for (std::size_t k = 0; k < study.networks.size(); ++k) {
      const auto& r = study.networks[k].report;
      s << k + 1 << ',' << r.pair_count << ',' << format_number(r.rates[0]) << ',' << format_number(r.rates[1])
        << ',' << format_number(r.rates[2]) << '\n';
    }
    s << "pooled,," << format_number(study.pooled_rates[0]) << ',' << format_number(study.pooled_rates[1]) << ','
      << format_number(study.pooled_rates[2]) << '\n';
    ctx.write_output("conjecture_summary.csv", s.str());
  }
  std::cout << "pooled rejection rates: (a) " << format_number(study.pooled_rates[0]) << ", (b) "
            << format_number(study.pooled_rates[1]) << ", (c) " << format_number(study.pooled_rates[2])
            << "; (a) > (b) on " << study.marginal_exceeds_neighbors << " of " << study.networks.size()
            << " networks\n";
}

struct BatteryCliOptions {
  std::string data;
  std::string edges;
  double alpha = 0.05;
};

void run_battery_cmd(RunContext& ctx, const BatteryCliOptions& o) {
  const AnalysisData in = load_analysis_data(ctx, o.data, "");
  const NetworkGraph network = read_edge_list(ctx, o.edges, in.data.labels());
  const BatteryReport report = run_battery(in.data, network, o.alpha, ctx.globals.threads);
  ctx.write_output("ci_tests.csv", ci_test_csv(report));
  if (ctx.json()) {
    ctx.write_output("battery_summary.json", dump_json(battery_summary_json(report)));
  } else {
    std::ostringstream s;
    s << "hypothesis,rejection_rate\n";
    for (int h = 0; h < 3; ++h) {
      s << hypothesis_code(static_cast<Hypothesis>(h)) << ',' << format_number(report.rates[h]) << '\n';
    }
    ctx.write_output("battery_summary.csv", s.str());
  }
  std::cout << report.pair_count << " nonadjacent ordered pairs tested\n";
}

// ---------------------------------------------------------------------------
// manifest

Json collect_flags(const CLI::App* app) {
  Json flags = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "version") continue;
    if (opt->get_expected_max() == 0) {
      flags[name] = opt->count() > 0;
      continue;
    }
    const auto& results = opt->results();
    if (!results.empty()) {
      if (opt->get_expected_max() > 1 || results.size() > 1) {
        flags[name] = results;
      } else {
        flags[name] = results.front();
      }
    } else if (!opt->get_default_str().empty()) {
      flags[name] = opt->get_default_str();
    } else {
      flags[name] = nullptr;
    }
  }
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain graph models of interacting units under treatment"};
  app.set_version_flag("--version", CHAINGRAPH_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on this)")
      ->capture_default_str()
      ->check(CLI::Range(1u, 1024u));
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and the run manifest")->capture_default_str();
  app.add_option("--format", g.format, "Report format")
      ->capture_default_str()
      ->check(CLI::IsMember({"json", "csv"}));

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Read a justice-centered vote export into case rows");
  c_ingest->add_option("--input,-i", ingest.input, "Vote export CSV")->required();
  c_ingest->add_option("--first-term", ingest.first_term, "First term included")->capture_default_str();
  c_ingest->add_option("--last-term", ingest.last_term, "Last term included")->capture_default_str();
  c_ingest->add_option("--expected-cases", ingest.expected_cases, "Case count to reconcile against");
  c_ingest->add_option("--issue", ingest.issue, "Also write a dataset treating this issue area");

  FitCliOptions fit;
  auto* c_fit = app.add_subcommand("fit", "Learn the graph and fit the model");
  c_fit->add_option("--data,-d", fit.data, "Dataset CSV or court cases CSV")->required();
  c_fit->add_option("--issue", fit.issue, "Issue area defining the treatment (court cases input)");
  c_fit->add_option("--edges", fit.edges, "Fixed edge list CSV; skips structure learning");
  c_fit->add_option("--rule", fit.rule, "Neighborhood symmetrization")
      ->capture_default_str()
      ->check(CLI::IsMember({"AND", "OR", "and", "or"}));
  c_fit->add_option("--ebic-gamma", fit.ebic_gamma, "Extended BIC gamma")->capture_default_str();
  c_fit->add_option("--penalty-grid", fit.penalty_grid, "Penalty values (default: 25 from 1 to 0.001)")
      ->delimiter(',');
  c_fit->add_option("--method", fit.method, "mle or pseudo")
      ->capture_default_str()
      ->check(CLI::IsMember({"mle", "pseudo", "pl", "pseudo_likelihood"}));
  c_fit->add_option("--out,-o", fit.out, "Model file name inside --out-dir")->capture_default_str();

  EffectCliOptions effect;
  auto* c_effect = app.add_subcommand("effect", "Counterfactual contrast between two treatments");
  c_effect->add_option("--model,-m", effect.model, "Model JSON")->required();
  c_effect->add_option("--a1", effect.a1, "Treatment: 0/1 (shared) or treated labels (per node)")->required();
  c_effect->add_option("--a0", effect.a0, "Reference treatment")->required();
  c_effect->add_option("--event,-e", effect.event, "Event, e.g. \"count=0\" or \"count in {4,5}\"")->required();
  c_effect->add_option("--scale", effect.scale, "rd, rr or or")->capture_default_str();
  c_effect->add_option("--data,-d", effect.data, "Data for standard errors and the confounder law");
  c_effect->add_option("--issue", effect.issue, "Issue area (court cases input)");
  c_effect->add_option("--se", effect.se, "none, delta or bootstrap (default: bootstrap with --data)")
      ->check(CLI::IsMember({"none", "delta", "bootstrap"}));
  c_effect->add_option("--replicates,-B", effect.replicates, "Bootstrap replicates")->capture_default_str();
  c_effect->add_option("--method", effect.method, "Refit method for bootstrap replicates")
      ->capture_default_str()
      ->check(CLI::IsMember({"mle", "pseudo", "pl", "pseudo_likelihood"}));
  c_effect->add_flag("--refit-structure", effect.refit_structure, "Re-learn the graph in every replicate");
  c_effect->add_option("--plot-event", effect.plot_events, "Extra event for effect_plot.csv (repeatable)");

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate data and, with replicates > 1, a recovery study");
  c_sim->add_option("--model,-m", sim.model, "Base model JSON (default: built-in nine-node reference)");
  c_sim->add_option("--alpha", sim.scaling.alpha, "Main-effect scale")->capture_default_str();
  c_sim->add_option("--beta", sim.scaling.beta, "Coupling scale")->capture_default_str();
  c_sim->add_option("--gamma-value", sim.scaling.gamma_value, "Treatment effect on every node")
      ->capture_default_str();
  c_sim->add_option("--kappa-value", sim.scaling.kappa_value, "Confounder effect on every node")
      ->capture_default_str();
  c_sim->add_option("--treatment-intercept", sim.scaling.treatment_law.intercept, "Treatment law intercept")
      ->capture_default_str();
  c_sim->add_option("--treatment-slope", sim.scaling.treatment_law.slope, "Treatment law slope on C")
      ->capture_default_str();
  c_sim->add_option("--confounder-coupling", sim.scaling.confounder_coupling, "Ising coupling of C")
      ->capture_default_str();
  c_sim->add_option("--n-obs,-n", sim.n_obs, "Observations per dataset")->capture_default_str();
  c_sim->add_option("--replicates,-r", sim.replicates, "Datasets")->capture_default_str();
  c_sim->add_option("--burn-in", sim.burn_in, "Gibbs sweeps per observation")->capture_default_str();
  c_sim->add_option("--scan-order", sim.scan_order, "fixed or random")->capture_default_str();
  c_sim->add_option("--se", sim.se, "delta or bootstrap")
      ->capture_default_str()
      ->check(CLI::IsMember({"delta", "bootstrap"}));
  c_sim->add_option("--bootstrap-replicates", sim.bootstrap_replicates, "Resamples per dataset")
      ->capture_default_str();
  c_sim->add_option("--assignment", sim.assignments, "name=label1,label2 (repeatable)");
  c_sim->add_option("--event,-e", sim.events, "Event (repeatable)");
  c_sim->add_flag("--write-datasets", sim.write_datasets, "Write every simulated dataset");

  GibbsCliOptions gibbs;
  auto* c_gibbs = app.add_subcommand("gibbs", "Run a Gibbs chain for one treatment");
  c_gibbs->add_option("--model,-m", gibbs.model, "Model JSON")->required();
  c_gibbs->add_option("--a", gibbs.a, "Treatment")->required();
  c_gibbs->add_option("--c", gibbs.c, "Confounders: treated-style label list or 0/1 string");
  c_gibbs->add_option("--sweeps", gibbs.config.sweeps, "Total sweeps")->capture_default_str();
  c_gibbs->add_option("--burn-in", gibbs.config.burn_in, "Discarded sweeps")->capture_default_str();
  c_gibbs->add_option("--thin", gibbs.config.thin, "Keep every thin-th sweep")->capture_default_str();
  c_gibbs->add_option("--scan-order", gibbs.scan_order, "fixed or random")->capture_default_str();

  ConjectureStudyConfig conj;
  auto* c_conj = app.add_subcommand("conjecture", "Temporal simulation plus the independence battery");
  c_conj->add_option("--nodes", conj.nodes, "Nodes per network")->capture_default_str();
  c_conj->add_option("--edge-prob,-p", conj.edge_prob, "Edge probability")->capture_default_str();
  c_conj->add_option("--networks", conj.networks, "Random networks")->capture_default_str();
  c_conj->add_option("--replicates,-r", conj.replicates, "Trajectories per network")->capture_default_str();
  c_conj->add_option("--alpha", conj.alpha, "Test level")->capture_default_str();
  c_conj->add_option("--horizon", conj.params.horizon, "Time steps")->capture_default_str();
  c_conj->add_option("--treatment-prob", conj.params.treatment_prob, "P(A_i = 1)")->capture_default_str();
  c_conj->add_option("--treatment-effect", conj.params.treatment_effect, "Effect of A_i")->capture_default_str();
  c_conj->add_option("--self-persistence", conj.params.self_persistence, "Weight of y_i at t-1")
      ->capture_default_str();
  c_conj->add_option("--influence", conj.influence, "Neighbor weight per edge")->capture_default_str();

  BatteryCliOptions battery;
  auto* c_battery = app.add_subcommand("battery", "Independence battery on a dataset and network");
  c_battery->add_option("--data,-d", battery.data, "Dataset CSV (per-node treatment)")->required();
  c_battery->add_option("--edges", battery.edges, "Network edge list CSV")->required();
  c_battery->add_option("--alpha", battery.alpha, "Test level")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Json manifest;
  manifest["subcommand"] = chosen->get_name();
  manifest["tool_version"] = CHAINGRAPH_VERSION;
  manifest["seed"] = g.seed;
  manifest["global_flags"] = collect_flags(&app);
  manifest["flags"] = collect_flags(chosen);
  manifest["started_at"] = utc_timestamp();

  RunContext ctx(g);
  int rc = 0;
  try {
    fs::create_directories(g.out_dir);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: I/O error: cannot create " << g.out_dir << ": " << e.what() << '\n';
    return 4;
  }
  try {
    const std::string name = chosen->get_name();
    if (name == "ingest") {
      run_ingest(ctx, ingest);
    } else if (name == "fit") {
      run_fit(ctx, fit);
    } else if (name == "effect") {
      run_effect(ctx, effect);
    } else if (name == "simulate") {
      run_simulate(ctx, sim);
    } else if (name == "gibbs") {
      run_gibbs(ctx, gibbs);
    } else if (name == "conjecture") {
      run_conjecture(ctx, conj);
    } else if (name == "battery") {
      run_battery_cmd(ctx, battery);
    }
  } catch (...) {
    const auto error = std::current_exception();
    rc = exit_code_for(error);
    std::cerr << "error: " << error_kind(error) << ": " << error_message(error) << '\n';
    manifest["error"] = {{"kind", error_kind(error)}, {"message", error_message(error)}};
  }
  manifest["inputs"] = ctx.inputs_json();
  manifest["outputs"] = ctx.outputs_json();
  manifest["exit_code"] = rc;
  manifest["finished_at"] = utc_timestamp();
  try {
    write_file(fs::path(g.out_dir) / "run_manifest.json", dump_json(manifest));
  } catch (const Error& e) {
    std::cerr << "error: I/O error: " << e.what() << '\n';
    if (rc == 0) rc = 4;
  }
  return rc;
}
