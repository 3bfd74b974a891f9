#include <cmath>
#include <Eigen/Dense>

#include "chaingraph/error.hpp"
#include "chaingraph/estimation.hpp"
#include "chaingraph/io.hpp"
#include "enumerate.hpp"

namespace chaingraph {

std::vector<double> observed_information(const ExactLikelihood& likelihood,
                                         std::span<const double> theta, double step) {
  const std::size_t p = likelihood.layout().size();
  if (theta.size() != p) throw ShapeError("parameter vector has the wrong length");
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  Eigen::MatrixXd hess(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> gp(p), gm(p);
  for (std::size_t j = 0; j < p; ++j) {
    x[j] = theta[j] + step;
    likelihood.evaluate(x, gp);
    x[j] = theta[j] - step;
    likelihood.evaluate(x, gm);
    x[j] = theta[j];
    for (std::size_t i = 0; i < p; ++i) {
      hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (gp[i] - gm[i]) / (2.0 * step);
    }
  }
  const Eigen::MatrixXd info = -0.5 * (hess + hess.transpose());
  std::vector<double> out(p * p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      out[i * p + j] = info(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

std::vector<EventProbGradient> event_prob_gradients(const ChainGraphModel& model,
                                                    const TreatmentVector& a,
                                                    const std::optional<CovariateVector>& c,
                                                    const std::vector<EventPredicate>& events,
                                                    const InferenceOptions& opts) {
  check_context(model, nullptr, a, c);
  for (const auto& ev : events) ev.check(model.size());
  detail::require_enumerable(model.size(), opts);
  const ParameterLayout layout(model.graph, model.treatment_mode, model.has_confounders());
  const CompiledModel cm = CompiledModel::from(model);
  const std::vector<double> field = cm.effective_field(a, c);
  const std::size_t n = cm.n;
  const std::size_t m = cm.edges.size();
  const std::size_t q = events.size();

  LogSumExp lse;
  detail::for_each_state(cm, field, [&](std::uint64_t, double pot) { lse.add(pot); });
  const double log_z = lse.value();

  // Moments of u = (y, pairs) overall and restricted to each event.
  std::vector<double> u(n + m);
  std::vector<double> mean_all(n + m, 0.0);
  std::vector<double> mean_event(q * (n + m), 0.0);
  std::vector<double> p_event(q, 0.0);
  detail::for_each_state(cm, field, [&](std::uint64_t mask, double pot) {
    const double prob = std::exp(pot - log_z);
    for (std::size_t i = 0; i < n; ++i) u[i] = ((mask >> i) & 1u) ? prob : -prob;
    for (std::size_t e = 0; e < m; ++e) {
      const bool same = ((mask >> cm.edges[e].u) & 1u) == ((mask >> cm.edges[e].v) & 1u);
      u[n + e] = same ? prob : -prob;
    }
    for (std::size_t j = 0; j < n + m; ++j) mean_all[j] += u[j];
    for (std::size_t k = 0; k < q; ++k) {
      if (!events[k].contains(mask, n)) continue;
      p_event[k] += prob;
      double* dst = &mean_event[k * (n + m)];
      for (std::size_t j = 0; j < n + m; ++j) dst[j] += u[j];
    }
  });

  std::vector<EventProbGradient> out(q);
  for (std::size_t k = 0; k < q; ++k) {
    const double* me = &mean_event[k * (n + m)];
    EventProbGradient& g = out[k];
    g.prob = p_event[k];
    g.gradient.assign(layout.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = me[i] - p_event[k] * mean_all[i];
      g.gradient[i] = d;
      g.gradient[layout.gamma_offset() + i] = a.at(i) * d;
      if (layout.has_confounders()) g.gradient[layout.kappa_offset() + i] = (*c)[i] * d;
    }
    for (std::size_t e = 0; e < m; ++e) {
      g.gradient[layout.k_offset() + e] = me[n + e] - p_event[k] * mean_all[n + e];
    }
  }
  return out;
}

struct DeltaMethod::Impl {
  ChainGraphModel model;
  InferenceOptions opts;
  double n_obs = 0.0;
  Eigen::Index p = 0;
  Eigen::LLT<Eigen::MatrixXd> llt;
  std::vector<std::optional<CovariateVector>> atoms;
  std::vector<double> weights;

  struct Collected {
    std::vector<double> prob;                // per event
    std::vector<Eigen::VectorXd> gradient;   // per event
    std::vector<std::vector<double>> per_atom;  // per event, per atom
  };

  Collected collect(const TreatmentVector& a, const std::vector<EventPredicate>& events) const {
    Collected out;
    const std::size_t q = events.size();
    out.prob.assign(q, 0.0);
    out.gradient.assign(q, Eigen::VectorXd::Zero(p));
    out.per_atom.assign(q, std::vector<double>(atoms.size()));
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const auto grads = event_prob_gradients(model, a, atoms[k], events, opts);
      for (std::size_t e = 0; e < q; ++e) {
        out.per_atom[e][k] = grads[e].prob;
        out.prob[e] += weights[k] * grads[e].prob;
        out.gradient[e] += weights[k] * Eigen::Map<const Eigen::VectorXd>(grads[e].gradient.data(), p);
      }
    }
    return out;
  }

  // Joint covariance of estimates with the given gradients and per-atom values.
  Eigen::MatrixXd covariance(const std::vector<Eigen::VectorXd>& grads,
                             const std::vector<const std::vector<double>*>& per_atom,
                             const std::vector<double>& means) const {
    const auto q = static_cast<Eigen::Index>(grads.size());
    Eigen::MatrixXd g(p, q);
    for (Eigen::Index j = 0; j < q; ++j) g.col(j) = grads[static_cast<std::size_t>(j)];
    Eigen::MatrixXd cov = g.transpose() * llt.solve(g) / n_obs;
    if (model.has_confounders()) {
      Eigen::VectorXd d(q);
      for (std::size_t k = 0; k < atoms.size(); ++k) {
        for (Eigen::Index j = 0; j < q; ++j) {
          d(j) = (*per_atom[static_cast<std::size_t>(j)])[k] - means[static_cast<std::size_t>(j)];
        }
        cov += weights[k] * d * d.transpose() / n_obs;
      }
    }
    return cov;
  }
};

DeltaMethod::DeltaMethod(const FittedModel& fit, const CaseDataset& data,
                         const InferenceOptions& opts)
    : impl_(std::make_unique<Impl>()) {
  Impl& d = *impl_;
  d.model = fit.model;
  d.opts = opts;
  d.n_obs = static_cast<double>(data.size());
  const ExactLikelihood lik(data, d.model.graph, opts);
  const std::vector<double> theta = lik.layout().pack(d.model);
  d.p = static_cast<Eigen::Index>(theta.size());
  const std::vector<double> info_flat = observed_information(lik, theta);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      info(info_flat.data(), d.p, d.p);
  d.llt.compute(info);
  if (d.llt.info() != Eigen::Success) {
    throw ConvergenceError("observed information is not positive definite at the fit");
  }
  if (d.model.has_confounders()) {
    for (const auto& atom : CovariateLaw::empirical_from(data).support(opts)) {
      d.atoms.emplace_back(atom.c);
      d.weights.push_back(atom.weight);
    }
  } else {
    d.atoms.emplace_back(std::nullopt);
    d.weights.push_back(1.0);
  }
}

DeltaMethod::~DeltaMethod() = default;
DeltaMethod::DeltaMethod(DeltaMethod&&) noexcept = default;
DeltaMethod& DeltaMethod::operator=(DeltaMethod&&) noexcept = default;

std::vector<DeltaMethod::Probability> DeltaMethod::counterfactual(
    const TreatmentVector& a, const std::vector<EventPredicate>& events) const {
  check_treatment(impl_->model, a);
  const Impl::Collected col = impl_->collect(a, events);
  std::vector<Probability> out(events.size());
  for (std::size_t e = 0; e < events.size(); ++e) {
    const Eigen::MatrixXd cov = impl_->covariance({col.gradient[e]}, {&col.per_atom[e]}, {col.prob[e]});
    out[e] = {col.prob[e], std::sqrt(std::max(0.0, cov(0, 0)))};
  }
  return out;
}

DeltaEffect DeltaMethod::effect(const EffectQuery& query) const {
  const ChainGraphModel& model = impl_->model;
  check_treatment(model, query.a1);
  check_treatment(model, query.a0);
  const std::vector<EventPredicate> events{query.event};
  const Impl::Collected c1 = impl_->collect(query.a1, events);
  const Impl::Collected c0 = impl_->collect(query.a0, events);
  const double p1 = c1.prob[0];
  const double p0 = c0.prob[0];
  const Eigen::MatrixXd cov = impl_->covariance({c1.gradient[0], c0.gradient[0]},
                                                {&c1.per_atom[0], &c0.per_atom[0]}, {p1, p0});

  DeltaEffect out;
  EffectEstimate& e = out.effect;
  e.scale = query.scale;
  e.a1 = query.a1;
  e.a0 = query.a0;
  e.event = query.event.to_string();
  e.p1 = p1;
  e.p0 = p0;
  e.point = effect_on_scale(p1, p0, query.scale);
  e.model_fingerprint = model_fingerprint(model);
  Eigen::Vector2d d;
  switch (query.scale) {
    case EffectScale::risk_difference:
      d = {1.0, -1.0};
      break;
    case EffectScale::risk_ratio:
      d = {1.0 / p0, -p1 / (p0 * p0)};
      break;
    case EffectScale::odds_ratio:
      d = {e.point / (p1 * (1.0 - p1)), -e.point / (p0 * (1.0 - p0))};
      break;
  }
  e.se = std::sqrt(std::max(0.0, d.dot(cov * d)));
  e.ci_low = e.point - 1.96 * *e.se;
  e.ci_high = e.point + 1.96 * *e.se;
  out.p1_se = std::sqrt(std::max(0.0, cov(0, 0)));
  out.p0_se = std::sqrt(std::max(0.0, cov(1, 1)));
  return out;
}

}  // namespace chaingraph
