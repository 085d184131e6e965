#pragma once

#include <functional>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "smart_rar/design.hpp"
#include "smart_rar/propensity.hpp"
#include "smart_rar/records.hpp"

namespace smart_rar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class EstimatorKind { ipw, wipw, aipw, waipw, iaipw };

const char* estimator_name(EstimatorKind k);

/// A regime-value estimate with the per-subject estimating-function
/// pieces needed for inference: contributions M_i at theta, the average
/// derivative of M in theta, and the average squared contribution.
struct ValueEstimate {
  double theta = 0.0;
  VectorXd contributions;  // aligned with the contributing index set
  double derivative = 0.0;
  double second_moment = 0.0;
  int n_used = 0;
};

/// Stage-2 outcome-model features: intercept, x1, stage-1 dummies, x21,
/// stage-2 dummies (first option of each list is the reference level).
struct Q2FeatureMap {
  std::vector<int> stage1_options;
  std::vector<int> stage2_options;

  static Q2FeatureMap from_design(const TrialDesign& d) {
    return {d.stage1_options, d.stage2_options};
  }
  int dim() const {
    return 2 + static_cast<int>(stage1_options.size()) - 1 + 1 +
           static_cast<int>(stage2_options.size()) - 1;
  }
  VectorXd eval(double x1, int a1, double x21, int a2) const;
};

/// Stage-1 features for the shared Q-learning model: intercept, x1,
/// stage-1 dummies (no interaction).
struct Q1SharedFeatureMap {
  std::vector<int> stage1_options;

  static Q1SharedFeatureMap from_design(const TrialDesign& d) { return {d.stage1_options}; }
  int dim() const { return 2 + static_cast<int>(stage1_options.size()) - 1; }
  VectorXd eval(double x1, int a1) const;
};

/// Outcome-regression set backing the augmented estimators: a shared
/// stage-2 fit plus one stage-1 fit per regime on that regime's
/// stage-1-consistent completers (features: intercept, x1).
struct LModelSet {
  int week = 0;  // fitting-week tag
  bool zero = false;
  Q2FeatureMap map2;
  VectorXd beta2;
  std::vector<Eigen::Vector2d> beta1;  // per regime

  double l1(int reg_index, double x1) const;
  double l2(double x1, int a1, double x21, int a2) const;

  static LModelSet zeros(const TrialDesign& design);
};

/// Week-indexed model archive.  A completer's augmentation terms use the
/// set fitted from data accrued before its assignment week; weeks before
/// the first estimable fit resolve to that first fit (the nonadaptive era
/// makes this statistically inert).
struct LModelCache {
  std::map<int, LModelSet> by_week;

  bool empty() const { return by_week.empty(); }
  int first_week() const;
  void insert(LModelSet set) { by_week[set.week] = std::move(set); }
  const LModelSet& for_week(int week) const;
};

/// Weighted IPW value of one regime over completers (Eq.-1-style ratio
/// form).  `weights` is aligned with data.records; null means all one,
/// which is the plain IPW estimator.
ValueEstimate ipw_value(const AccruedDataset& data, int reg_index, const VectorXd* weights,
                        RandMode mode, const TrialDesign& design);

LModelSet fit_l_models(const AccruedDataset& data, const TrialDesign& design);

/// Weighted AIPW value with the two-stage telescoping augmentation.
ValueEstimate aipw_value(const AccruedDataset& data, int reg_index, const LModelCache& lmodels,
                         const VectorXd* weights, RandMode mode, const TrialDesign& design);

/// The K=2 telescoping bracket of the augmented estimator:
/// c*y/(pi1*pi2) + (1 - cbar1/pi1)*l1 + (cbar1/pi1 - c/(pi1*pi2))*l2.
double aipw_bracket_terms(int cbar1, int c, double pi1, double pi2, double y, double l1,
                          double l2);

/// Interim AIPW over all enrolled subjects, exploiting partial
/// trajectories through the augmentation terms; weights fixed at one.
ValueEstimate iaipw_value(const AccruedDataset& data, int reg_index, const LModelCache& lmodels,
                          RandMode mode, const TrialDesign& design);

/// Backward OLS recursion for the shared Q-functions.
struct QFit {
  Q2FeatureMap map2;
  Q1SharedFeatureMap map1;
  VectorXd beta2;
  MatrixXd cov2;
  double sigma2_stage2 = 0.0;
  VectorXd beta1;
  MatrixXd cov1;
  double sigma2_stage1 = 0.0;
  int n_completers = 0;
};

QFit qlearning_fit(const AccruedDataset& data, const Q2FeatureMap& map2,
                   const Q1SharedFeatureMap& map1, const TrialDesign& design);

/// Stage-1 refit against pseudo outcomes built from a supplied stage-2
/// coefficient vector; the projection sampler's inner step.
struct Stage1Refit {
  VectorXd beta1;
  MatrixXd cov1;
};
Stage1Refit qlearning_stage1_refit(const AccruedDataset& data, const VectorXd& beta2,
                                   const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
                                   const TrialDesign& design);

}  // namespace smart_rar
