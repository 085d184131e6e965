#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "smart_rar/design.hpp"
#include "smart_rar/estimators.hpp"
#include "smart_rar/records.hpp"

namespace smart_rar {

/// Inverse-probability-weighted second moments of (Y - theta_tilde) by
/// response stratum, normalized by the completer count.
struct StratumMoments {
  double mu0 = 0.0;
  double mu1 = 0.0;
  int n_nonresp = 0;  // consistent completers per stratum
  int n_resp = 0;
};

StratumMoments stratum_second_moments(const AccruedDataset& data, int reg_index,
                                      double theta_tilde, RandMode mode,
                                      const TrialDesign& design);

/// Xi for the weighted IPW estimator: the stabilization target assembled
/// from stratum moments and the week's propensities.
double xi_wipw(double mu0, double mu1, double pi1, double pi2_resp, double pi2_nonresp);

/// W = sqrt(xi_burnin / xi_t), guarded: a degenerate xi_t yields 1.
double wipw_weight(double xi_burnin, double xi_t);

/// The four augmented-estimator variance components.
struct NuComponents {
  double nu = 0.0;     // (Y - theta_tilde)^2
  double nu1 = 0.0;    // (Y - L1)^2
  double nu2_0 = 0.0;  // I(R=0) (Y - L2)^2
  double nu2_1 = 0.0;  // I(R=1) (Y - L2)^2
};

/// Up-front mode evaluates the current week's fitted models on past
/// completers; sequential mode evaluates each completer's own
/// stage-2-week models and propensities.
NuComponents nu_components(const AccruedDataset& data, int reg_index, const LModelCache& lmodels,
                           double theta_tilde, RandMode mode, const TrialDesign& design);

double xi_waipw(double nu, double nu1, double nu2_0, double nu2_1, double pi1, double pi2_0,
                double pi2_1);

/// Week-level propensities for one regime, read off the published vectors.
struct RegimeWeekPropensities {
  double pi1 = 0.0;
  double pi2_0 = 0.0;
  double pi2_1 = 0.0;
};

/// Everything needed to form one regime's weight for subjects anchored in
/// one week: the moment estimates from that week's snapshot plus the
/// week's published propensities.
struct WeekWeightInfo {
  StratumMoments moments;
  NuComponents nus;
  RegimeWeekPropensities props;
};

/// Burn-in anchors plus the weekly moment/propensity archive.  Weights
/// returned for anchor weeks at or before t_star are exactly one.
struct WeightState {
  bool anchored = false;
  int t_star = -1;
  Eigen::VectorXd theta_tilde;     // pilot estimates at the anchor
  Eigen::VectorXd xi_burnin_wipw;  // per regime
  Eigen::VectorXd xi_burnin_waipw;
  std::map<int, std::vector<WeekWeightInfo>> weeks;  // week -> per-regime

  bool has_week(int week) const { return weeks.count(week) > 0; }
};

/// Per-subject weight vector aligned with data.records.  Up-front anchors
/// at the enrollment week; sequential at the stage-2 week, combining the
/// subject's own stage-1 propensity with that week's stage-2 propensities.
Eigen::VectorXd weights_for_dataset(const AccruedDataset& data, int reg_index,
                                    EstimatorKind kind, const WeightState& state, RandMode mode,
                                    const TrialDesign& design);

}  // namespace smart_rar
