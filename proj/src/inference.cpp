#include "smart_rar/inference.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "smart_rar/errors.hpp"
#include "smart_rar/normal.hpp"
#include "smart_rar/propensity.hpp"
#include "smart_rar/weights.hpp"

namespace smart_rar {

double standard_error(const ValueEstimate& est, int n) {
  if (est.derivative == 0.0) throw InferenceError("zero estimating-function derivative");
  if (n < 1) throw InferenceError("standard error needs n >= 1");
  return std::sqrt(est.second_moment) / (std::abs(est.derivative) * std::sqrt(n));
}

IntervalBounds interval_and_bounds(double theta_hat, double se, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InferenceError("level must lie in (0,1)");
  const double z_two = normal_quantile(0.5 + level / 2.0);
  const double z_one = normal_quantile(level);
  IntervalBounds out;
  out.ci_lo = theta_hat - z_two * se;
  out.ci_hi = theta_hat + z_two * se;
  out.lb = theta_hat - z_one * se;
  out.ub = theta_hat + z_one * se;
  return out;
}

int identify_optimal(const VectorXd& theta_hats, Direction direction) {
  if (theta_hats.size() == 0) throw InferenceError("empty value vector");
  if (!theta_hats.allFinite()) throw InferenceError("non-finite value estimates");
  int best = 0;
  for (int j = 1; j < theta_hats.size(); ++j) {
    const bool better = direction == Direction::maximize ? theta_hats[j] > theta_hats[best]
                                                         : theta_hats[j] < theta_hats[best];
    if (better) best = j;
  }
  return best;
}

double standardized_statistic(double theta_hat, double truth, const ValueEstimate& est, int n) {
  return (theta_hat - truth) / standard_error(est, n);
}

InferenceResult post_trial_inference(const TrialRecord& trial, const TrialDesign& design,
                                     const VectorXd& truth, double level) {
  InferenceResult out;
  out.estimators = {EstimatorKind::ipw, EstimatorKind::wipw, EstimatorKind::aipw,
                    EstimatorKind::waipw};
  const int ne = static_cast<int>(out.estimators.size());
  const int m = design.n_regimes();
  out.theta.resize(ne, m);
  out.se.resize(ne, m);
  out.ci_lo.resize(ne, m);
  out.ci_hi.resize(ne, m);
  out.lb.resize(ne, m);
  out.ub.resize(ne, m);
  out.z.resize(ne, m);
  out.identified_optimal.resize(static_cast<size_t>(ne));

  const AccruedDataset& data = trial.final_data;
  for (int e = 0; e < ne; ++e) {
    const EstimatorKind kind = out.estimators[static_cast<size_t>(e)];
    for (int j = 0; j < m; ++j) {
      const VectorXd w =
          weights_for_dataset(data, j, kind, trial.weight_state, trial.mode, design);
      ValueEstimate est;
      switch (kind) {
        case EstimatorKind::ipw:
          est = ipw_value(data, j, nullptr, trial.mode, design);
          break;
        case EstimatorKind::wipw:
          est = ipw_value(data, j, &w, trial.mode, design);
          break;
        case EstimatorKind::aipw:
          est = aipw_value(data, j, trial.lmodels, nullptr, trial.mode, design);
          break;
        case EstimatorKind::waipw:
          est = aipw_value(data, j, trial.lmodels, &w, trial.mode, design);
          break;
        case EstimatorKind::iaipw:
          est = iaipw_value(data, j, trial.lmodels, trial.mode, design);
          break;
      }
      const double se = standard_error(est, est.n_used);
      const IntervalBounds ib = interval_and_bounds(est.theta, se, level);
      out.theta(e, j) = est.theta;
      out.se(e, j) = se;
      out.ci_lo(e, j) = ib.ci_lo;
      out.ci_hi(e, j) = ib.ci_hi;
      out.lb(e, j) = ib.lb;
      out.ub(e, j) = ib.ub;
      out.z(e, j) = (est.theta - truth[j]) / se;
    }
    out.identified_optimal[static_cast<size_t>(e)] =
        identify_optimal(out.theta.row(e).transpose(), design.direction);
  }
  return out;
}

std::string inference_result_csv(const InferenceResult& result, const TrialDesign& design) {
  std::string out = "regime,estimator,theta_hat,se,ci_lo,ci_hi,lb,ub,z\n";
  char buf[256];
  for (size_t e = 0; e < result.estimators.size(); ++e) {
    for (int j = 0; j < design.n_regimes(); ++j) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    design.regimes[static_cast<size_t>(j)].label.c_str(),
                    estimator_name(result.estimators[e]), result.theta(static_cast<int>(e), j),
                    result.se(static_cast<int>(e), j), result.ci_lo(static_cast<int>(e), j),
                    result.ci_hi(static_cast<int>(e), j), result.lb(static_cast<int>(e), j),
                    result.ub(static_cast<int>(e), j), result.z(static_cast<int>(e), j));
      out += buf;
    }
  }
  return out;
}

namespace {

struct MomentAccumulator {
  double sum = 0.0, sum_sq = 0.0, sum_4 = 0.0;
  long n = 0;

  void add(double m) {
    sum += m;
    const double m2 = m * m;
    sum_sq += m2;
    sum_4 += m2 * m2;
    ++n;
  }
  MartingaleCell cell() const {
    MartingaleCell c;
    const double nn = static_cast<double>(n);
    c.mean = sum / nn;
    const double var_m = std::max(0.0, sum_sq / nn - c.mean * c.mean);
    c.mean_se = std::sqrt(var_m / nn);
    c.second_moment = sum_sq / nn;
    const double var_m2 = std::max(0.0, sum_4 / nn - c.second_moment * c.second_moment);
    c.second_moment_se = std::sqrt(var_m2 / nn);
    return c;
  }
};

double anchored_weight(const WeightState& ws, int anchor_week, int reg_index, EstimatorKind kind,
                       double pi1) {
  if (!ws.anchored || anchor_week <= ws.t_star) return 1.0;
  const auto it = ws.weeks.find(anchor_week);
  if (it == ws.weeks.end())
    throw ProvenanceError("no weight state for week " + std::to_string(anchor_week));
  const WeekWeightInfo& info = it->second.at(static_cast<size_t>(reg_index));
  if (info.moments.n_resp == 0 || info.moments.n_nonresp == 0) return 1.0;
  const double xi_star = (kind == EstimatorKind::wipw) ? ws.xi_burnin_wipw[reg_index]
                                                       : ws.xi_burnin_waipw[reg_index];
  const double xi_t =
      (kind == EstimatorKind::wipw)
          ? xi_wipw(info.moments.mu0, info.moments.mu1, pi1, info.props.pi2_1, info.props.pi2_0)
          : xi_waipw(info.nus.nu, info.nus.nu1, info.nus.nu2_0, info.nus.nu2_1, pi1,
                     info.props.pi2_0, info.props.pi2_1);
  return wipw_weight(xi_star, xi_t);
}

}  // namespace

MartingaleReport martingale_diagnostics(const TrialDesign& design, const ScenarioParams& scenario,
                                        const RandomizationPolicy& policy, int n_histories,
                                        int n_inner, const Rng& rng, long long oracle_n_mc,
                                        int threads) {
  if (n_histories < 1 || n_inner < 1) throw InferenceError("diagnostics need positive sizes");
  const Rng diag_rng = phase_stream(rng, Phase::diagnostics);
  const TrialRecord trial = run_trial(design, scenario, policy, rng.derive(101));
  const OracleResult oracle =
      oracle_true_values(scenario, design, oracle_n_mc, rng.derive(202), threads);
  const RandMode mode = policy.mode();
  const int m = design.n_regimes();

  MartingaleReport report;
  report.oracle_theta = oracle.theta;

  std::vector<int> weeks;
  for (int k = 0; k < n_histories; ++k) {
    const int w = 1 + static_cast<int>(std::llround(
                          static_cast<double>(k) * (scenario.enroll_window - 1) /
                          std::max(1, n_histories - 1)));
    if (weeks.empty() || weeks.back() != w) weeks.push_back(w);
  }

  for (const int t : weeks) {
    const PublishedWeek& pub1 = trial.published(t);
    const int stage2_week = t + scenario.stage_delay;
    const PublishedWeek& pub2 = trial.published(stage2_week);
    const int anchor = (mode == RandMode::sequential) ? stage2_week : t;
    const LModelSet& lm = trial.lmodels.empty() ? LModelSet::zeros(design)
                                                : trial.lmodels.for_week(anchor);

    MartingaleCheckpoint cp;
    cp.week = t;
    cp.ipw_form.resize(static_cast<size_t>(m));
    cp.aipw_form.resize(static_cast<size_t>(m));
    cp.weight_ipw.resize(static_cast<size_t>(m));
    cp.weight_aipw.resize(static_cast<size_t>(m));

    // Week-level propensities faced by a subject anchored here.
    std::vector<RegimeWeekPropensities> props(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) {
      RegimeWeekPropensities pr;
      if (mode == RandMode::upfront) {
        pr = week_propensities(pub1, j, mode, design);
      } else {
        pr = week_propensities(pub2, j, mode, design);
        int a1_pos = -1;
        for (size_t i = 0; i < design.stage1_options.size(); ++i)
          if (design.stage1_options[i] == design.regimes[static_cast<size_t>(j)].a1)
            a1_pos = static_cast<int>(i);
        pr.pi1 = pub1.stage1_probs[a1_pos];
      }
      props[static_cast<size_t>(j)] = pr;
      cp.weight_ipw[static_cast<size_t>(j)] =
          anchored_weight(trial.weight_state, anchor, j, EstimatorKind::wipw, pr.pi1);
      cp.weight_aipw[static_cast<size_t>(j)] =
          anchored_weight(trial.weight_state, anchor, j, EstimatorKind::waipw, pr.pi1);
    }

    std::vector<std::array<MomentAccumulator, 2>> acc_ipw(static_cast<size_t>(m));
    std::vector<std::array<MomentAccumulator, 2>> acc_aipw(static_cast<size_t>(m));

    Rng inner = diag_rng.derive(static_cast<std::uint64_t>(t));
    for (int it = 0; it < n_inner; ++it) {
      const double x1 = scenario.x1_mean + scenario.x1_sd * inner.normal();
      int a1, assigned_regime = -1;
      if (mode == RandMode::upfront) {
        assigned_regime = inner.categorical(pub1.regime_probs);
        a1 = design.regimes[static_cast<size_t>(assigned_regime)].a1;
      } else {
        a1 = design.stage1_options[static_cast<size_t>(inner.categorical(pub1.stage1_probs))];
      }
      const double x21 = stage2_mean(scenario, x1, a1) + scenario.eps1_sd * inner.normal();
      const int resp = response_of(scenario, x1, x21);
      int a2;
      if (mode == RandMode::upfront) {
        a2 = design.regimes[static_cast<size_t>(assigned_regime)].a2_for(resp);
      } else {
        const auto& feasible = design.feasible_set(a1, resp);
        const auto& p2 = pub2.stage2_probs.at({a1, resp});
        a2 = feasible[static_cast<size_t>(inner.categorical(p2))];
      }
      const double y = outcome_mean(scenario, x1, a1, x21, a2) + scenario.eps2_sd * inner.normal();

      for (int j = 0; j < m; ++j) {
        const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(j)];
        const int cbar1 = (a1 == reg.a1) ? 1 : 0;
        const int c = (cbar1 && a2 == reg.a2_for(resp)) ? 1 : 0;
        const RegimeWeekPropensities& pr = props[static_cast<size_t>(j)];
        const double pi2 = resp ? pr.pi2_1 : pr.pi2_0;
        const double theta = oracle.theta[j];

        const double m_ipw = c ? (y - theta) / (pr.pi1 * pi2) : 0.0;
        acc_ipw[static_cast<size_t>(j)][0].add(cp.weight_ipw[static_cast<size_t>(j)] * m_ipw);
        acc_ipw[static_cast<size_t>(j)][1].add(m_ipw);

        const double l1 = lm.l1(j, x1);
        const double l2 = cbar1 ? lm.l2(x1, reg.a1, x21, reg.a2_for(resp)) : 0.0;
        const double m_aipw =
            aipw_bracket_terms(cbar1, c, pr.pi1, pi2, y, l1, l2) - theta;
        acc_aipw[static_cast<size_t>(j)][0].add(cp.weight_aipw[static_cast<size_t>(j)] * m_aipw);
        acc_aipw[static_cast<size_t>(j)][1].add(m_aipw);
      }
    }

    for (int j = 0; j < m; ++j) {
      cp.ipw_form[static_cast<size_t>(j)] = {acc_ipw[static_cast<size_t>(j)][0].cell(),
                                             acc_ipw[static_cast<size_t>(j)][1].cell()};
      cp.aipw_form[static_cast<size_t>(j)] = {acc_aipw[static_cast<size_t>(j)][0].cell(),
                                              acc_aipw[static_cast<size_t>(j)][1].cell()};
    }
    report.checkpoints.push_back(std::move(cp));
  }
  return report;
}

}  // namespace smart_rar
