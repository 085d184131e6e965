#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "smart_rar/design.hpp"
#include "smart_rar/estimators.hpp"
#include "smart_rar/rng.hpp"

namespace smart_rar {

/// Estimated sampling distribution of the regime-value vector, with the
/// adaptive weights treated as fixed.
struct ValueConfidence {
  VectorXd mean;
  MatrixXd cov;
};

/// Stacked M-estimator covariance across regimes: diag(derivatives)^-1
/// times the uncentered contribution covariance times its transpose,
/// divided by the shared contribution count.
MatrixXd sandwich_cov(const std::vector<ValueEstimate>& estimates, int n);

/// B x m i.i.d. draws via a symmetric square root with eigenvalue repair.
MatrixXd draw_value_samples(const ValueConfidence& conf, int n_draws, Rng& rng);

/// Fraction of draw rows in which each column attains the row optimum;
/// ties go to the lowest index.
VectorXd beliefs_from_draws(const MatrixXd& draws, Direction direction);

/// Exponentiate by the damping constant, normalize, clip to [lo, hi] and
/// renormalize.  Renormalization can push entries back under lo; the
/// guaranteed floor is lo / (1 + m*hi).
VectorXd damp_clip_normalize(const VectorXd& rho, double c, double lo, double hi);

/// Coefficient draws per stage.  Stage-1 rows carry the index of the
/// outer stage-2 draw they were refit under.
struct BetaDraws {
  MatrixXd stage2;              // direct draws from the stage-2 confidence distribution
  MatrixXd stage1;              // b2*b1 nested draws
  std::vector<int> stage1_outer;
};

using Stage1RefitFn = std::function<Stage1Refit(const AccruedDataset&, const VectorXd&)>;

/// Nested projection sampler for K=2: draw stage-2 coefficients, rebuild
/// pseudo outcomes, refit stage 1, draw around each refit.
BetaDraws projection_beta_sampler(const Stage1RefitFn& refit, const AccruedDataset& data,
                                  const QFit& base, const std::vector<int>& sizes,
                                  int n_stage2_draws, Rng& rng);

/// Stage-k history of one subject; stage-2 fields present iff k = 2.
struct SubjectHistory {
  double x1 = 0.0;
  std::optional<int> a1;
  std::optional<double> x21;
  std::optional<int> response;
};

/// Per-option probability that the option optimizes the stage-k Q-model
/// at this history, across coefficient draws.
VectorXd sequential_beliefs_individual(const SubjectHistory& history,
                                       const std::vector<int>& feasible,
                                       const MatrixXd& draws, int stage,
                                       const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
                                       Direction direction);

/// Group-configuration beliefs: the configuration optimizing the average
/// Q across the group, marginalized to per-subject option probabilities.
/// Falls back to individual mode when the configuration space exceeds
/// 2^20.
std::vector<VectorXd> sequential_beliefs_configuration(
    const std::vector<SubjectHistory>& group, const std::vector<int>& feasible,
    const MatrixXd& draws, int stage, const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
    Direction direction);

}  // namespace smart_rar
