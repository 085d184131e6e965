#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smart_rar/design.hpp"

namespace smart_rar {

/// Up-front randomization assigns a whole regime at enrollment;
/// sequential randomization assigns one treatment per stage.
enum class RandMode { upfront, sequential };

/// One subject's longitudinal trajectory together with the randomization
/// probability vectors actually used at each assignment.  Stored
/// probabilities are the assignment-time published vectors, so estimator
/// denominators never have to be reconstructed from past snapshots.
struct SubjectRecord {
  int id = 0;
  int tau = 0;       // enrollment / stage-1 assignment week
  int kappa = 1;     // most recent stage reached
  int gamma = 1;     // enrolled flag
  int delta = 0;     // completed flag
  double x1 = 0.0;
  int a1 = 0;
  std::optional<int> stage2_week;
  std::optional<double> x21;
  std::optional<int> response;
  std::optional<int> a2;
  std::optional<int> outcome_week;  // week the outcome was recorded; not serialized
  std::optional<double> y;
  // Up-front: p1 spans the m regimes.  Sequential: p1 spans the stage-1
  // options and p2 the subject's ordered feasible set at stage 2.
  Eigen::VectorXd p1;
  Eigen::VectorXd p2;
  std::optional<int> assigned_regime;  // up-front only

  /// State of this record as known at the end of `week`.
  SubjectRecord frozen_at(int week) const;

  static std::string csv_header();
  std::string to_csv_row() const;
  static SubjectRecord from_csv_row(const std::string& line);
};

/// Snapshot of every enrolled subject frozen at the end of week-1; the
/// information set that drives the week's randomization update.
struct AccruedDataset {
  int week = 0;
  std::vector<SubjectRecord> records;

  int n_enrolled() const { return static_cast<int>(records.size()); }
  int n_completers() const;

  /// Rejects records violating the SubjectRecord invariants (probability
  /// vectors not summing to one, completion without outcome, ...).
  void validate() const;
};

/// Build the snapshot informing decisions at `decision_week`: subjects
/// enrolled by decision_week-1, each frozen at its decision_week-1 state.
AccruedDataset accrued_at(const std::vector<SubjectRecord>& all, int decision_week);

}  // namespace smart_rar
