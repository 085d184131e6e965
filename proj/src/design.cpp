#include "smart_rar/design.hpp"

#include <algorithm>
#include <set>

namespace smart_rar {

const std::vector<int>& TrialDesign::feasible_set(int a1, int response) const {
  const auto it = feasible_rule.find({a1, response});
  if (it == feasible_rule.end()) {
    throw Error("no feasible set for stage-1 treatment " + std::to_string(a1) +
                ", response " + std::to_string(response));
  }
  return it->second;
}

int TrialDesign::feasible_index(int a1, int response, int a2) const {
  const auto& set = feasible_set(a1, response);
  const auto it = std::find(set.begin(), set.end(), a2);
  return it == set.end() ? -1 : static_cast<int>(it - set.begin());
}

void TrialDesign::validate() const {
  if (n_stages != 2) throw Error("only two-stage designs are implemented");
  if (regimes.size() < 2) throw Error("design needs at least two embedded regimes");
  for (const auto& [key, set] : feasible_rule) {
    if (set.empty()) throw Error("empty feasible set");
    for (int a2 : set) {
      if (std::find(stage2_options.begin(), stage2_options.end(), a2) == stage2_options.end())
        throw Error("feasible set contains unknown stage-2 option");
    }
  }
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& reg : regimes) {
    if (std::find(stage1_options.begin(), stage1_options.end(), reg.a1) == stage1_options.end())
      throw Error("regime uses unknown stage-1 option");
    if (feasible_index(reg.a1, 1, reg.a2_responder) < 0)
      throw Error("regime '" + reg.label + "': responder arm outside feasible set");
    if (feasible_index(reg.a1, 0, reg.a2_nonresponder) < 0)
      throw Error("regime '" + reg.label + "': nonresponder arm outside feasible set");
    if (!seen.insert({reg.a1, reg.a2_responder, reg.a2_nonresponder}).second)
      throw Error("duplicate regime triple");
  }
  if (timeline.enroll_weeks < 1 || timeline.stage_delay_weeks < 1 ||
      timeline.followup_weeks < 1 || timeline.update_period_weeks < 1)
    throw Error("timeline fields must be >= 1");
  if (burn_in.per_regime_completers < 0) throw Error("burn-in threshold must be >= 0");
  if (!(ts.clip_lo > 0.0 && ts.clip_lo < ts.clip_hi && ts.clip_hi < 1.0))
    throw Error("clipping constants must satisfy 0 < lo < hi < 1");
  if (ts.n_value_draws < 1) throw Error("n_value_draws must be >= 1");
  for (int b : ts.beta_draw_sizes)
    if (b < 1) throw Error("beta draw sizes must be >= 1");
}

TrialDesign TrialDesign::benchmark_two_stage() {
  TrialDesign d;
  d.stage1_options = {0, 1};
  d.stage2_options = {0, 1, 2, 3, 4};
  d.feasible_rule[{0, 1}] = {0, 1};
  d.feasible_rule[{0, 0}] = {1, 2};
  d.feasible_rule[{1, 1}] = {3, 4};
  d.feasible_rule[{1, 0}] = {2, 4};
  d.regimes = {
      {0, 0, 1, "regime1"}, {0, 0, 2, "regime2"}, {0, 1, 2, "regime3"},
      {0, 1, 1, "regime4"}, {1, 3, 4, "regime5"}, {1, 3, 2, "regime6"},
      {1, 4, 2, "regime7"}, {1, 4, 4, "regime8"},
  };
  d.direction = Direction::minimize;
  d.validate();
  return d;
}

}  // namespace smart_rar
