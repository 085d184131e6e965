#pragma once

#include <array>
#include <vector>

#include "smart_rar/design.hpp"
#include "smart_rar/engine.hpp"
#include "smart_rar/estimators.hpp"
#include "smart_rar/scenario.hpp"

namespace smart_rar {

/// Plug-in standard error sigma_T / (|delta_T| sqrt(n)).
double standard_error(const ValueEstimate& est, int n);

struct IntervalBounds {
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double lb = 0.0;  // one-sided lower confidence bound
  double ub = 0.0;  // one-sided upper confidence bound
};

IntervalBounds interval_and_bounds(double theta_hat, double se, double level);

/// Arg-optimum of the estimated values; exact ties go to the lowest index.
int identify_optimal(const VectorXd& theta_hats, Direction direction);

double standardized_statistic(double theta_hat, double truth, const ValueEstimate& est, int n);

/// Post-trial estimates and limits for every reporting estimator, rows in
/// the order of `estimators`, columns by regime.
struct InferenceResult {
  std::vector<EstimatorKind> estimators;
  MatrixXd theta, se, ci_lo, ci_hi, lb, ub, z;
  std::vector<int> identified_optimal;  // per estimator
};

/// The four reporting estimators applied to a finished trial, with
/// confidence limits at `level` and z statistics against `truth`.
InferenceResult post_trial_inference(const TrialRecord& trial, const TrialDesign& design,
                                     const VectorXd& truth, double level = 0.95);

std::string inference_result_csv(const InferenceResult& result, const TrialDesign& design);

/// Conditional moments of one regime's estimating function at a frozen
/// history: a hypothetical subject anchored at the checkpoint week is
/// redrawn under the published probabilities and M is evaluated at the
/// oracle value, weighted and unweighted, for the IPW- and AIPW-form
/// estimating functions.
struct MartingaleCell {
  double mean = 0.0;
  double mean_se = 0.0;
  double second_moment = 0.0;
  double second_moment_se = 0.0;
};

struct MartingaleCheckpoint {
  int week = 0;
  // Indexed by regime: [regime][0]=weighted, [1]=unweighted.
  std::vector<std::array<MartingaleCell, 2>> ipw_form;
  std::vector<std::array<MartingaleCell, 2>> aipw_form;
  std::vector<double> weight_ipw;   // W applied per regime at this week
  std::vector<double> weight_aipw;
};

struct MartingaleReport {
  VectorXd oracle_theta;
  std::vector<MartingaleCheckpoint> checkpoints;
};

/// Runs one trial under the policy, freezes the data before each sampled
/// checkpoint week, and redraws that week's hypothetical subject n_inner
/// times under the published probabilities (for sequential policies the
/// realized later-stage vectors are frozen as well).
MartingaleReport martingale_diagnostics(const TrialDesign& design, const ScenarioParams& scenario,
                                        const RandomizationPolicy& policy, int n_histories,
                                        int n_inner, const Rng& rng,
                                        long long oracle_n_mc = 4000000, int threads = 1);

}  // namespace smart_rar
