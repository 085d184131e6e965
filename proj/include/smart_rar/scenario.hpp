#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "smart_rar/design.hpp"
#include "smart_rar/rng.hpp"

namespace smart_rar {

using Eigen::VectorXd;

/// Generative world for the two-stage benchmark: staggered uniform
/// enrollment, a linear interim-score model, a threshold response rule
/// and a linear outcome model with stage-2 dummies.
struct ScenarioParams {
  int n_subjects = 1000;
  int enroll_window = 24;
  Eigen::Vector3d gamma1{0.0, 0.9, -1.5};
  Eigen::Matrix<double, 8, 1> gamma2{0.0, 0.3, -0.75, 0.6, -0.25, -0.75, -0.75, -0.85};
  double x1_mean = 5.0;
  double x1_sd = 1.0;
  double eps1_sd = 1.0;
  double eps2_sd = 1.0;
  double response_fraction = 0.7;  // responder iff x21 < response_fraction * x1
  int stage_delay = 6;
  int followup = 6;
  // Externally reported regime values for this benchmark, printed next to
  // the simulated oracle for comparison.  Not used as ground truth.
  VectorXd reference_values = (VectorXd(8) << -0.126, -0.374, -0.500, -0.251,
                               -2.408, -2.401, -2.494, -2.501).finished();

  void validate() const;
};

double stage2_mean(const ScenarioParams& p, double x1, int a1);
int response_of(const ScenarioParams& p, double x1, double x21);
double outcome_mean(const ScenarioParams& p, double x1, int a1, double x21, int a2);

/// Interim score and response status, one fresh stage-1 noise draw.
std::pair<double, int> gen_stage2(const ScenarioParams& p, double x1, int a1, Rng& rng);

/// Outcome with one fresh stage-2 noise draw.
double gen_outcome(const ScenarioParams& p, double x1, int a1, double x21, int a2, Rng& rng);

/// Pre-assign every subject an enrollment week, uniform over the window.
std::vector<int> draw_enroll_weeks(const ScenarioParams& p, Rng& rng);

/// Per-subject noise triple sufficient to evaluate any regime's potential
/// trajectory; the same triple evaluates all regimes, coupling contrasts.
struct PotentialDraw {
  double x1 = 0.0;
  double eps1 = 0.0;
  double eps2 = 0.0;
};

double potential_outcome(const ScenarioParams& p, const PotentialDraw& w,
                         const EmbeddedRegime& reg);

struct OracleResult {
  VectorXd theta;
  VectorXd mc_se;
  long long n_mc = 0;
};

/// Brute-force ground truth: coupled Monte Carlo average of each regime's
/// potential outcome.  Shards across threads with per-shard substreams and
/// compensated summation, so the result is independent of thread count.
OracleResult oracle_true_values(const ScenarioParams& p, const TrialDesign& design,
                                long long n_mc, const Rng& rng, int threads = 1);

}  // namespace smart_rar
