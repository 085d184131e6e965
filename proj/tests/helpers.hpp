#pragma once

#include <vector>

#include "smart_rar/design.hpp"
#include "smart_rar/records.hpp"
#include "smart_rar/rng.hpp"
#include "smart_rar/scenario.hpp"

namespace smart_rar::testing {

inline Eigen::VectorXd uniform_vec(int n) {
  return Eigen::VectorXd::Constant(n, 1.0 / n);
}

/// Completed up-front record with uniform regime probabilities.
inline SubjectRecord upfront_completer(int id, int a1, int response, int a2, double y,
                                       const TrialDesign& design, double x1 = 5.0,
                                       double x21 = 4.0, int tau = 1) {
  SubjectRecord rec;
  rec.id = id;
  rec.tau = tau;
  rec.kappa = 2;
  rec.gamma = 1;
  rec.delta = 1;
  rec.x1 = x1;
  rec.a1 = a1;
  rec.stage2_week = tau + 6;
  rec.x21 = x21;
  rec.response = response;
  rec.a2 = a2;
  rec.outcome_week = tau + 12;
  rec.y = y;
  rec.p1 = uniform_vec(design.n_regimes());
  const auto& feasible = design.feasible_set(a1, response);
  rec.p2 = uniform_vec(static_cast<int>(feasible.size()));
  return rec;
}

/// Random completed record under uniform up-front randomization.
inline SubjectRecord random_completer(int id, const TrialDesign& design,
                                      const ScenarioParams& params, Rng& rng, int tau = 1) {
  const int reg_index = rng.uniform_int(design.n_regimes());
  const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(reg_index)];
  const double x1 = params.x1_mean + params.x1_sd * rng.normal();
  const auto [x21, resp] = gen_stage2(params, x1, reg.a1, rng);
  const int a2 = reg.a2_for(resp);
  const double y = gen_outcome(params, x1, reg.a1, x21, a2, rng);
  SubjectRecord rec = upfront_completer(id, reg.a1, resp, a2, y, design, x1, x21, tau);
  rec.assigned_regime = reg_index;
  return rec;
}

inline AccruedDataset dataset_of(std::vector<SubjectRecord> records, int week = 20) {
  AccruedDataset data;
  data.week = week;
  data.records = std::move(records);
  return data;
}

/// A dataset of n random completers under uniform up-front randomization.
inline AccruedDataset random_dataset(int n, std::uint64_t seed, const TrialDesign& design,
                                     const ScenarioParams& params, int week = 20) {
  Rng rng(seed);
  std::vector<SubjectRecord> records;
  records.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) records.push_back(random_completer(i, design, params, rng));
  return dataset_of(std::move(records), week);
}

}  // namespace smart_rar::testing
