#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "smart_rar/scenario.hpp"

using namespace smart_rar;
using namespace smart_rar::testing;

namespace {
const TrialDesign kDesign = TrialDesign::benchmark_two_stage();
}

TEST_CASE("enrollment weeks are marginally uniform and partition the cohort") {
  ScenarioParams p;
  p.n_subjects = 24000;
  Rng rng(11);
  const std::vector<int> weeks = draw_enroll_weeks(p, rng);
  CHECK(static_cast<int>(weeks.size()) == p.n_subjects);
  std::map<int, int> counts;
  for (int w : weeks) counts[w]++;
  CHECK(static_cast<int>(counts.size()) == 24);
  for (const auto& [w, n] : counts) {
    CHECK(w >= 1);
    CHECK(w <= 24);
    CHECK(std::abs(n - 1000.0) < 130.0);  // ~4 sigma for Binomial(24000, 1/24)
  }
}

TEST_CASE("window of one week enrolls everyone at week 1") {
  ScenarioParams p;
  p.n_subjects = 50;
  p.enroll_window = 1;
  Rng rng(12);
  for (int w : draw_enroll_weeks(p, rng)) CHECK(w == 1);
}

TEST_CASE("baseline score mean matches its target") {
  ScenarioParams p;
  Rng rng(13);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += p.x1_mean + p.x1_sd * rng.normal();
  CHECK(std::abs(sum / n - 5.0) < 0.02);
}

TEST_CASE("interim score and response at the noise-free values") {
  ScenarioParams p;
  CHECK(stage2_mean(p, 5.0, 1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(response_of(p, 5.0, 3.0) == 1);  // 3.0 < 3.5
  CHECK(stage2_mean(p, 5.0, 0) == doctest::Approx(4.5).epsilon(1e-12));
  CHECK(response_of(p, 5.0, 4.5) == 0);
}

TEST_CASE("noise-free limit makes the response deterministic") {
  ScenarioParams p;
  p.eps1_sd = 0.0;
  Rng rng(14);
  for (int i = 0; i < 20; ++i) {
    const auto [x21, resp] = gen_stage2(p, 5.0, 1, rng);
    CHECK(x21 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(resp == 1);
  }
}

TEST_CASE("outcome model evaluates the linear form") {
  ScenarioParams p;
  CHECK(outcome_mean(p, 5.0, 1, 3.0, 4) == doctest::Approx(1.70).epsilon(1e-12));
  // Option 0 is the reference level.
  CHECK(outcome_mean(p, 5.0, 0, 4.5, 0) ==
        doctest::Approx(0.3 * 5.0 + 0.6 * 4.5).epsilon(1e-12));
}

TEST_CASE("outcome noise is centered on the linear form") {
  ScenarioParams p;
  Rng rng(15);
  const double target = outcome_mean(p, 5.0, 1, 3.0, 4);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += gen_outcome(p, 5.0, 1, 3.0, 4, rng);
  CHECK(std::abs(sum / n - target) < 3.0 * p.eps2_sd / 1000.0);
}

TEST_CASE("trial outcomes recompose bit-exactly from stored pieces") {
  ScenarioParams p;
  Rng rng(16);
  for (int i = 0; i < 50; ++i) {
    const double x1 = p.x1_mean + p.x1_sd * rng.normal();
    Rng a = rng.derive(static_cast<std::uint64_t>(i));
    Rng b = a;
    const double y = gen_outcome(p, x1, 1, 3.2, 4, a);
    const double eps2 = b.normal();
    CHECK(y == outcome_mean(p, x1, 1, 3.2, 4) + p.eps2_sd * eps2);
  }
}

TEST_CASE("oracle couples regimes: identical triples get identical values") {
  ScenarioParams p;
  TrialDesign d = kDesign;
  // Duplicate regime 8 in place of regime 7's labels (distinct triple needed
  // for validate, so compare across two separate designs instead).
  Rng rng(17);
  const OracleResult base = oracle_true_values(p, d, 50000, rng);
  // A design listing the same triples in a different order gives permuted
  // values exactly.
  TrialDesign permuted = d;
  std::swap(permuted.regimes[0], permuted.regimes[5]);
  const OracleResult perm = oracle_true_values(p, permuted, 50000, rng);
  CHECK(perm.theta[0] == base.theta[5]);
  CHECK(perm.theta[5] == base.theta[0]);
}

TEST_CASE("oracle reduces to the noise-free outcome when all noise is off") {
  ScenarioParams p;
  p.x1_sd = 0.0;
  p.eps1_sd = 0.0;
  p.eps2_sd = 0.0;
  Rng rng(18);
  const OracleResult o = oracle_true_values(p, kDesign, 10000, rng);
  // x1 = 5 deterministic; regime 8: a1=1 -> x21=3, responder, a2=4.
  CHECK(o.theta[7] == doctest::Approx(1.70).epsilon(1e-12));
  CHECK(o.mc_se[7] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("oracle separates the stage-1 arms and ranks regime 8 best") {
  ScenarioParams p;
  Rng rng(19);
  const OracleResult o = oracle_true_values(p, kDesign, 400000, rng, 2);
  for (int j = 4; j < 8; ++j)
    for (int k = 0; k < 4; ++k) CHECK(o.theta[j] < o.theta[k] - 1.5);
  int best = 0;
  for (int j = 1; j < 8; ++j)
    if (o.theta[j] < o.theta[best]) best = j;
  CHECK(best == 7);
  // The one contrast pinned by the outcome-model coefficients alone.
  CHECK(o.theta[5] - o.theta[7] == doctest::Approx(0.100).epsilon(0.05));
}

TEST_CASE("oracle is invariant to thread count") {
  ScenarioParams p;
  Rng rng(20);
  const OracleResult a = oracle_true_values(p, kDesign, 200000, rng, 1);
  const OracleResult b = oracle_true_values(p, kDesign, 200000, rng, 2);
  for (int j = 0; j < 8; ++j) CHECK(a.theta[j] == b.theta[j]);
}
