#include "smart_rar/engine.hpp"

#include <algorithm>
#include <cmath>

#include "smart_rar/errors.hpp"
#include "smart_rar/propensity.hpp"

namespace smart_rar {

RandomizationPolicy RandomizationPolicy::sr() {
  RandomizationPolicy p;
  p.type = Type::sr;
  p.name = "SR";
  return p;
}

RandomizationPolicy RandomizationPolicy::upfront(EstimatorKind estimator, double damping) {
  RandomizationPolicy p;
  p.type = Type::upfront_ts;
  p.estimator = estimator;
  p.damping.c = damping;
  p.name = std::string(estimator_name(estimator)) + "(" + std::to_string(damping) + ")";
  return p;
}

RandomizationPolicy RandomizationPolicy::sequential(double damping, BeliefMode mode) {
  RandomizationPolicy p;
  p.type = Type::sequential_ts;
  p.damping.c = damping;
  p.belief_mode = mode;
  p.name = "TS(" + std::to_string(damping) + ")";
  return p;
}

RegimeWeekPropensities week_propensities(const PublishedWeek& pub, int reg_index, RandMode mode,
                                         const TrialDesign& design) {
  const EmbeddedRegime& reg = design.regimes.at(static_cast<size_t>(reg_index));
  RegimeWeekPropensities out;
  if (mode == RandMode::upfront) {
    const PropensityPair resp = upfront_propensities(reg_index, 1, pub.regime_probs, design);
    const PropensityPair nonresp = upfront_propensities(reg_index, 0, pub.regime_probs, design);
    out.pi1 = resp.pi1;
    out.pi2_1 = resp.pi2;
    out.pi2_0 = nonresp.pi2;
    return out;
  }
  int a1_pos = -1;
  for (size_t i = 0; i < design.stage1_options.size(); ++i)
    if (design.stage1_options[i] == reg.a1) a1_pos = static_cast<int>(i);
  out.pi1 = pub.stage1_probs[a1_pos];
  for (int resp : {0, 1}) {
    const auto it = pub.stage2_probs.find({reg.a1, resp});
    if (it == pub.stage2_probs.end())
      throw ProvenanceError("no published stage-2 vector for the regime's group");
    const int pos = design.feasible_index(reg.a1, resp, reg.a2_for(resp));
    const double v = (pos < 0) ? 0.0 : it->second[pos];
    if (resp == 1)
      out.pi2_1 = v;
    else
      out.pi2_0 = v;
  }
  return out;
}

const PublishedWeek& TrialRecord::published(int week) const {
  if (week < 1 || week > static_cast<int>(prob_history.size()))
    throw ProvenanceError("no published probabilities for week " + std::to_string(week));
  return prob_history[static_cast<size_t>(week - 1)];
}

bool burn_in_satisfied(const AccruedDataset& data, const TrialDesign& design) {
  const int threshold = design.burn_in.per_regime_completers;
  if (threshold <= 0) return true;
  std::vector<int> counts(static_cast<size_t>(design.n_regimes()), 0);
  for (const auto& rec : data.records) {
    if (rec.delta != 1) continue;
    for (int j = 0; j < design.n_regimes(); ++j) {
      if (consistency_indicators(rec, design.regimes[static_cast<size_t>(j)]).c)
        ++counts[static_cast<size_t>(j)];
    }
  }
  return *std::min_element(counts.begin(), counts.end()) >= threshold;
}

int trial_horizon(const ScenarioParams& scenario) {
  return scenario.enroll_window + scenario.stage_delay + scenario.followup + 1;
}

namespace {

PublishedWeek uniform_published(int week, RandMode mode, const TrialDesign& design) {
  PublishedWeek pub;
  pub.week = week;
  if (mode == RandMode::upfront) {
    pub.regime_probs =
        VectorXd::Constant(design.n_regimes(), 1.0 / design.n_regimes());
  } else {
    const int n1 = static_cast<int>(design.stage1_options.size());
    pub.stage1_probs = VectorXd::Constant(n1, 1.0 / n1);
    for (const auto& [key, feasible] : design.feasible_rule) {
      pub.stage2_probs[key] =
          VectorXd::Constant(static_cast<int>(feasible.size()), 1.0 / feasible.size());
    }
  }
  return pub;
}

VectorXd estimate_thetas(const AccruedDataset& data, const RandomizationPolicy& policy,
                         const TrialDesign& design, const LModelCache& lmodels,
                         const WeightState& wstate, std::vector<ValueEstimate>& estimates) {
  const int m = design.n_regimes();
  estimates.clear();
  estimates.reserve(static_cast<size_t>(m));
  const RandMode mode = policy.mode();
  for (int j = 0; j < m; ++j) {
    const VectorXd w = weights_for_dataset(data, j, policy.estimator, wstate, mode, design);
    switch (policy.estimator) {
      case EstimatorKind::ipw:
        estimates.push_back(ipw_value(data, j, nullptr, mode, design));
        break;
      case EstimatorKind::wipw:
        estimates.push_back(ipw_value(data, j, &w, mode, design));
        break;
      case EstimatorKind::aipw:
        estimates.push_back(aipw_value(data, j, lmodels, nullptr, mode, design));
        break;
      case EstimatorKind::waipw:
        estimates.push_back(aipw_value(data, j, lmodels, &w, mode, design));
        break;
      case EstimatorKind::iaipw:
        estimates.push_back(iaipw_value(data, j, lmodels, mode, design));
        break;
    }
  }
  VectorXd theta(m);
  for (int j = 0; j < m; ++j) theta[j] = estimates[static_cast<size_t>(j)].theta;
  return theta;
}

// Canonical zero history per stage-2 group; with the shipped additive
// Q-models the stage-2 option ranking does not involve covariates, so the
// group vector is what every member receives.
SubjectHistory canonical_history(int a1, int response) {
  SubjectHistory h;
  h.x1 = 0.0;
  h.a1 = a1;
  h.x21 = 0.0;
  h.response = response;
  return h;
}

void sequential_published(PublishedWeek& pub, const AccruedDataset& data,
                          const RandomizationPolicy& policy, const TrialDesign& design,
                          const LModelCache& /*lmodels*/, Rng& rng, int week) {
  const Q2FeatureMap map2 = Q2FeatureMap::from_design(design);
  const Q1SharedFeatureMap map1 = Q1SharedFeatureMap::from_design(design);
  const QFit fit = qlearning_fit(data, map2, map1, design);
  const Stage1RefitFn refit = [&map2, &map1, &design](const AccruedDataset& d,
                                                      const VectorXd& beta2) {
    return qlearning_stage1_refit(d, beta2, map2, map1, design);
  };
  Rng draw_rng = rng.derive(static_cast<std::uint64_t>(week));
  const BetaDraws draws = projection_beta_sampler(refit, data, fit, design.ts.beta_draw_sizes,
                                                  design.ts.n_value_draws, draw_rng);
  const double c = policy.damping.value(week);

  SubjectHistory h1;
  h1.x1 = 0.0;
  const VectorXd rho1 = sequential_beliefs_individual(h1, design.stage1_options, draws.stage1, 1,
                                                      map2, map1, design.direction);
  pub.stage1_probs = damp_clip_normalize(rho1, c, design.ts.clip_lo, design.ts.clip_hi);

  for (const auto& [key, feasible] : design.feasible_rule) {
    const VectorXd rho2 = sequential_beliefs_individual(
        canonical_history(key.first, key.second), feasible, draws.stage2, 2, map2, map1,
        design.direction);
    pub.stage2_probs[key] = damp_clip_normalize(rho2, c, design.ts.clip_lo, design.ts.clip_hi);
  }
  pub.beta2_hat = fit.beta2;
  pub.beta1_hat = fit.beta1;
}

// Stage-2 conditional assignment vector implied by an up-front regime
// vector, over the subject's feasible set.
VectorXd upfront_stage2_vector(const Eigen::VectorXd& r, int a1, int response,
                               const TrialDesign& design) {
  const auto& feasible = design.feasible_set(a1, response);
  VectorXd out = VectorXd::Zero(static_cast<int>(feasible.size()));
  double pi1 = 0.0;
  for (int j = 0; j < design.n_regimes(); ++j) {
    const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(j)];
    if (reg.a1 != a1) continue;
    pi1 += r[j];
    const int pos = design.feasible_index(a1, response, reg.a2_for(response));
    if (pos >= 0) out[pos] += r[j];
  }
  if (!(pi1 > 0.0)) throw PositivityError("stage-1 arm has zero published mass");
  return out / pi1;
}

void record_week_weight_info(TrialState& state, const AccruedDataset& data,
                             const PublishedWeek& pub, const RandomizationPolicy& policy,
                             const TrialDesign& design) {
  const RandMode mode = policy.mode();
  std::vector<WeekWeightInfo> infos(static_cast<size_t>(design.n_regimes()));
  try {
    for (int j = 0; j < design.n_regimes(); ++j) {
      const double pilot = ipw_value(data, j, nullptr, mode, design).theta;
      WeekWeightInfo info;
      info.moments = stratum_second_moments(data, j, pilot, mode, design);
      info.nus = nu_components(data, j, state.lmodels, pilot, mode, design);
      info.props = week_propensities(pub, j, mode, design);
      infos[static_cast<size_t>(j)] = info;
    }
  } catch (const Error&) {
    // Degenerate week: flag every regime so weights fall back to one.
    for (auto& info : infos) info.moments = StratumMoments{};
    ++state.fallback_count;
  }
  state.weight_state.weeks[pub.week] = std::move(infos);
}

void anchor_weight_state(TrialState& state, const AccruedDataset& data,
                         const RandomizationPolicy& policy, const TrialDesign& design) {
  const RandMode mode = policy.mode();
  const int m = design.n_regimes();
  WeightState& ws = state.weight_state;
  ws.t_star = state.t_star;
  ws.theta_tilde = VectorXd::Zero(m);
  ws.xi_burnin_wipw = VectorXd::Zero(m);
  ws.xi_burnin_waipw = VectorXd::Zero(m);
  const PublishedWeek uniform = uniform_published(data.week, mode, design);
  for (int j = 0; j < m; ++j) {
    const double pilot = ipw_value(data, j, nullptr, mode, design).theta;
    ws.theta_tilde[j] = pilot;
    const StratumMoments mom = stratum_second_moments(data, j, pilot, mode, design);
    const NuComponents nus = nu_components(data, j, state.lmodels, pilot, mode, design);
    const RegimeWeekPropensities props = week_propensities(uniform, j, mode, design);
    ws.xi_burnin_wipw[j] = xi_wipw(mom.mu0, mom.mu1, props.pi1, props.pi2_1, props.pi2_0);
    ws.xi_burnin_waipw[j] =
        xi_waipw(nus.nu, nus.nu1, nus.nu2_0, nus.nu2_1, props.pi1, props.pi2_0, props.pi2_1);
  }
  ws.anchored = true;
}

}  // namespace

void advance_week(TrialState& state, const ScenarioParams& scenario,
                  const RandomizationPolicy& policy, const TrialDesign& design) {
  const int t = state.week + 1;
  const RandMode mode = policy.mode();
  const AccruedDataset snap = accrued_at(state.subjects, t);

  // Outcome models are refit weekly as soon as they are estimable; the
  // cache key is the week whose assignments they inform.
  try {
    state.lmodels.insert(fit_l_models(snap, design));
  } catch (const Error&) {
    // Not estimable yet (or degenerate); earlier weeks resolve by backfill.
  }

  if (!state.burn_in_done && burn_in_satisfied(snap, design)) {
    state.burn_in_done = true;
    state.t_star = t - 1;
    anchor_weight_state(state, snap, policy, design);
  }

  // Publish this week's probabilities from the week-(t-1) snapshot.
  PublishedWeek pub;
  const bool refresh = ((t - 1) % design.timeline.update_period_weeks) == 0;
  const bool adaptive_now = policy.adaptive() && state.burn_in_done;
  if (!refresh && !state.history.empty()) {
    pub = state.history.back();
    pub.week = t;
    pub.theta_hat.resize(0);
    pub.beta2_hat.resize(0);
    pub.beta1_hat.resize(0);
  } else if (!adaptive_now) {
    pub = uniform_published(t, mode, design);
  } else if (policy.type == RandomizationPolicy::Type::upfront_ts) {
    try {
      std::vector<ValueEstimate> estimates;
      const VectorXd theta =
          estimate_thetas(snap, policy, design, state.lmodels, state.weight_state, estimates);
      ValueConfidence conf{theta, sandwich_cov(estimates, estimates.front().n_used)};
      Rng draw_rng = state.rng_draws.derive(static_cast<std::uint64_t>(t));
      const MatrixXd draws = draw_value_samples(conf, design.ts.n_value_draws, draw_rng);
      const VectorXd rho = beliefs_from_draws(draws, design.direction);
      pub.week = t;
      pub.regime_probs = damp_clip_normalize(rho, policy.damping.value(t), design.ts.clip_lo,
                                             design.ts.clip_hi);
      pub.theta_hat = theta;
    } catch (const Error&) {
      pub = state.history.back();
      pub.week = t;
      pub.theta_hat.resize(0);
      ++state.fallback_count;
    }
  } else {
    try {
      pub.week = t;
      sequential_published(pub, snap, policy, design, state.lmodels, state.rng_draws, t);
    } catch (const Error&) {
      pub = state.history.back();
      pub.week = t;
      pub.beta2_hat.resize(0);
      pub.beta1_hat.resize(0);
      ++state.fallback_count;
    }
  }
  state.history.push_back(pub);

  // Weight bookkeeping for subjects anchored this week.
  if (state.burn_in_done && t > state.t_star) {
    record_week_weight_info(state, snap, pub, policy, design);
  }

  // Fire outcome events due this week.
  for (auto& rec : state.subjects) {
    if (rec.outcome_week && *rec.outcome_week == t) {
      Rng stream = state.rng_covariates.derive(static_cast<std::uint64_t>(rec.id), 2);
      rec.y = outcome_mean(scenario, rec.x1, rec.a1, *rec.x21, *rec.a2) +
              scenario.eps2_sd * stream.normal();
      rec.delta = 1;
    }
  }

  // Stage-2 transitions due this week.
  for (auto& rec : state.subjects) {
    if (!rec.stage2_week || *rec.stage2_week != t || rec.kappa >= 2) continue;
    Rng stream = state.rng_covariates.derive(static_cast<std::uint64_t>(rec.id), 1);
    rec.x21 = stage2_mean(scenario, rec.x1, rec.a1) + scenario.eps1_sd * stream.normal();
    rec.response = response_of(scenario, rec.x1, *rec.x21);
    if (mode == RandMode::upfront) {
      const EmbeddedRegime& reg = design.regimes.at(static_cast<size_t>(*rec.assigned_regime));
      rec.a2 = reg.a2_for(*rec.response);
      rec.p2 = upfront_stage2_vector(rec.p1, rec.a1, *rec.response, design);
    } else {
      const auto it = pub.stage2_probs.find({rec.a1, *rec.response});
      if (it == pub.stage2_probs.end())
        throw ProvenanceError("no stage-2 vector published for the subject's group");
      const auto& feasible = design.feasible_set(rec.a1, *rec.response);
      Rng assign = state.rng_assignment.derive(static_cast<std::uint64_t>(rec.id), 2);
      rec.a2 = feasible[static_cast<size_t>(assign.categorical(it->second))];
      rec.p2 = it->second;
    }
    rec.kappa = 2;
    rec.outcome_week = t + scenario.followup;
  }

  // Enroll this week's cohort.
  if (t <= scenario.enroll_window) {
    for (int idx : state.cohorts[static_cast<size_t>(t)]) {
      SubjectRecord& rec = state.subjects[static_cast<size_t>(idx)];
      Rng assign = state.rng_assignment.derive(static_cast<std::uint64_t>(rec.id), 1);
      if (mode == RandMode::upfront) {
        const int j = assign.categorical(pub.regime_probs);
        rec.assigned_regime = j;
        rec.a1 = design.regimes[static_cast<size_t>(j)].a1;
        rec.p1 = pub.regime_probs;
      } else {
        const int pos = assign.categorical(pub.stage1_probs);
        rec.a1 = design.stage1_options[static_cast<size_t>(pos)];
        rec.p1 = pub.stage1_probs;
      }
      rec.gamma = 1;
      rec.tau = t;
      rec.stage2_week = t + scenario.stage_delay;
    }
  }

  state.week = t;
}

TrialRecord run_trial(const TrialDesign& design, const ScenarioParams& scenario,
                      const RandomizationPolicy& policy, const Rng& rng) {
  design.validate();
  scenario.validate();
  TrialState state;
  state.rng_covariates = phase_stream(rng, Phase::covariates);
  state.rng_assignment = phase_stream(rng, Phase::assignment);
  state.rng_draws = phase_stream(rng, Phase::draws);

  // Pre-assign enrollment weeks, then group into weekly cohorts.
  Rng enroll_rng = phase_stream(rng, Phase::enroll);
  std::vector<int> weeks = draw_enroll_weeks(scenario, enroll_rng);
  std::vector<int> order(weeks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&weeks](int a, int b) { return weeks[static_cast<size_t>(a)] < weeks[static_cast<size_t>(b)]; });

  state.subjects.resize(weeks.size());
  state.cohorts.assign(static_cast<size_t>(scenario.enroll_window) + 1, {});
  for (size_t pos = 0; pos < order.size(); ++pos) {
    const int id = static_cast<int>(pos);
    SubjectRecord& rec = state.subjects[pos];
    rec.id = id;
    rec.tau = weeks[static_cast<size_t>(order[pos])];  // snapshots exclude it until enrolled
    Rng stream = state.rng_covariates.derive(static_cast<std::uint64_t>(id), 0);
    rec.x1 = scenario.x1_mean + scenario.x1_sd * stream.normal();
    state.cohorts[static_cast<size_t>(rec.tau)].push_back(id);
  }

  const int horizon = trial_horizon(scenario);
  for (int t = 1; t < horizon; ++t) advance_week(state, scenario, policy, design);

  TrialRecord rec;
  rec.mode = policy.mode();
  rec.horizon = horizon;
  rec.final_data = accrued_at(state.subjects, horizon);
  rec.prob_history = std::move(state.history);
  rec.lmodels = std::move(state.lmodels);
  rec.weight_state = std::move(state.weight_state);
  rec.t_star = state.t_star;
  rec.burn_in_complete = state.burn_in_done;
  rec.fallback_count = state.fallback_count;

  const int n = rec.final_data.n_enrolled();
  if (rec.final_data.n_completers() != n)
    throw Error("trial ended with incomplete follow-up");
  double sum_y = 0.0;
  rec.frac_consistent = VectorXd::Zero(design.n_regimes());
  rec.frac_stage1 = VectorXd::Zero(static_cast<int>(design.stage1_options.size()));
  for (const auto& r : rec.final_data.records) {
    sum_y += *r.y;
    for (int j = 0; j < design.n_regimes(); ++j)
      if (consistency_indicators(r, design.regimes[static_cast<size_t>(j)]).c)
        rec.frac_consistent[j] += 1.0;
    for (size_t k = 0; k < design.stage1_options.size(); ++k)
      if (r.a1 == design.stage1_options[k]) rec.frac_stage1[static_cast<int>(k)] += 1.0;
  }
  rec.mean_y = sum_y / n;
  rec.frac_consistent /= n;
  rec.frac_stage1 /= n;
  return rec;
}

}  // namespace smart_rar
