#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "smart_rar/errors.hpp"

namespace smart_rar {

enum class Direction { maximize, minimize };

enum class BeliefMode { individual, configuration };

/// One embedded regime of a two-stage design: the stage-1 treatment and
/// the stage-2 treatment for each response status.
struct EmbeddedRegime {
  int a1 = 0;
  int a2_responder = 0;
  int a2_nonresponder = 0;
  std::string label;

  int a2_for(int response) const { return response ? a2_responder : a2_nonresponder; }
};

struct Timeline {
  int enroll_weeks = 24;
  int stage_delay_weeks = 6;
  int followup_weeks = 6;
  int update_period_weeks = 1;
};

struct BurnInRule {
  // Completers consistent with each regime before adaptation may start.
  int per_regime_completers = 25;
};

/// Damping exponent schedule c_t; constant is the only shipped shape.
struct DampingSchedule {
  double c = 1.0;
  double value(int /*week*/) const { return c; }
};

struct TsConfig {
  DampingSchedule damping;
  double clip_lo = 0.05;
  double clip_hi = 0.95;
  // Value-sample count for up-front TS; also the size of the directly
  // drawn stage-2 coefficient sample in sequential TS.
  int n_value_draws = 1000;
  // Nested projection sample sizes (b_1, ..., b_K).
  std::vector<int> beta_draw_sizes{32, 32};
  BeliefMode belief_mode = BeliefMode::individual;
};

/// Two-stage SMART design: treatment sets, response-dependent feasible
/// sets, embedded regimes, timing, burn-in rule and TS tuning.  The
/// stage count is carried generically but only K=2 designs are
/// implemented; validate() rejects anything else.
struct TrialDesign {
  int n_stages = 2;
  std::vector<int> stage1_options;
  std::vector<int> stage2_options;
  // (stage-1 treatment, response status) -> ordered feasible set.
  std::map<std::pair<int, int>, std::vector<int>> feasible_rule;
  std::vector<EmbeddedRegime> regimes;
  Timeline timeline;
  BurnInRule burn_in;
  TsConfig ts;
  Direction direction = Direction::minimize;

  int n_regimes() const { return static_cast<int>(regimes.size()); }

  const std::vector<int>& feasible_set(int a1, int response) const;

  /// Position of option a2 inside feasible_set(a1, response), -1 if absent.
  int feasible_index(int a1, int response, int a2) const;

  void validate() const;

  /// Built-in benchmark: two stage-1 options, five stage-2 options and
  /// eight embedded regimes with response-dependent feasible pairs.
  static TrialDesign benchmark_two_stage();
};

}  // namespace smart_rar
