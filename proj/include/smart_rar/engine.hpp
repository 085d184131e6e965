#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "smart_rar/confidence.hpp"
#include "smart_rar/design.hpp"
#include "smart_rar/estimators.hpp"
#include "smart_rar/records.hpp"
#include "smart_rar/rng.hpp"
#include "smart_rar/scenario.hpp"
#include "smart_rar/weights.hpp"

namespace smart_rar {

struct RandomizationPolicy {
  enum class Type { sr, upfront_ts, sequential_ts };

  Type type = Type::sr;
  EstimatorKind estimator = EstimatorKind::waipw;  // up-front TS only
  DampingSchedule damping;
  BeliefMode belief_mode = BeliefMode::individual;  // sequential TS only
  std::string name = "SR";

  RandMode mode() const {
    return type == Type::sequential_ts ? RandMode::sequential : RandMode::upfront;
  }
  bool adaptive() const { return type != Type::sr; }

  static RandomizationPolicy sr();
  static RandomizationPolicy upfront(EstimatorKind estimator, double damping);
  static RandomizationPolicy sequential(double damping,
                                        BeliefMode mode = BeliefMode::individual);
};

/// Probability vectors published for one week, immutable once published.
struct PublishedWeek {
  int week = 0;
  VectorXd regime_probs;  // up-front randomization
  VectorXd stage1_probs;  // sequential randomization
  std::map<std::pair<int, int>, VectorXd> stage2_probs;  // (a1, response) -> feasible set
  // Estimates behind this week's update, kept for replay checks.
  VectorXd theta_hat;
  VectorXd beta2_hat;
  VectorXd beta1_hat;
};

/// Week-level propensities for one regime implied by the published vectors.
RegimeWeekPropensities week_propensities(const PublishedWeek& pub, int reg_index, RandMode mode,
                                         const TrialDesign& design);

struct TrialRecord {
  RandMode mode = RandMode::upfront;
  int horizon = 0;
  AccruedDataset final_data;
  std::vector<PublishedWeek> prob_history;  // index w-1 holds week w
  LModelCache lmodels;
  WeightState weight_state;
  int t_star = -1;
  bool burn_in_complete = false;
  int fallback_count = 0;

  double mean_y = 0.0;
  VectorXd frac_consistent;  // per regime, fraction of subjects with C^j = 1
  VectorXd frac_stage1;      // per stage-1 option

  const PublishedWeek& published(int week) const;
};

struct TrialState {
  int week = 0;  // last processed week
  std::vector<SubjectRecord> subjects;
  std::vector<std::vector<int>> cohorts;  // subject indices per enrollment week
  bool burn_in_done = false;
  int t_star = -1;
  LModelCache lmodels;
  WeightState weight_state;
  std::vector<PublishedWeek> history;
  int fallback_count = 0;
  Rng rng_covariates{0};
  Rng rng_assignment{0};
  Rng rng_draws{0};
};

/// True once every regime has at least the burn-in threshold of
/// completers whose realized path is consistent with it.
bool burn_in_satisfied(const AccruedDataset& data, const TrialDesign& design);

/// Process one week: publish probabilities from the previous week's
/// snapshot, then fire outcome events, stage-2 transitions and the week's
/// enrollment under those probabilities.  Estimator failures after
/// burn-in fall back to the previous week's probabilities.
void advance_week(TrialState& state, const ScenarioParams& scenario,
                  const RandomizationPolicy& policy, const TrialDesign& design);

/// Run a full trial; deterministic given (design, scenario, policy, rng).
TrialRecord run_trial(const TrialDesign& design, const ScenarioParams& scenario,
                      const RandomizationPolicy& policy, const Rng& rng);

int trial_horizon(const ScenarioParams& scenario);

}  // namespace smart_rar
