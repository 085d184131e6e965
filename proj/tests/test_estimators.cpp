#include <doctest.h>

#include <cmath>
#include <functional>

#include <Eigen/QR>

#include "helpers.hpp"
#include "smart_rar/errors.hpp"
#include "smart_rar/estimators.hpp"
#include "smart_rar/scenario.hpp"

using namespace smart_rar;
using namespace smart_rar::testing;

namespace {

const TrialDesign kDesign = TrialDesign::benchmark_two_stage();

// ---------------------------------------------------------------------------
// Test-local direct-summation oracles.  These re-derive consistency and
// propensities from the stored vectors on their own, term by term.

struct BrutePieces {
  int cbar1 = 0, c = 0;
  double pi1 = 0.0, pi2 = 0.0;
};

BrutePieces brute_pieces(const SubjectRecord& rec, int reg_index, const TrialDesign& design) {
  const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(reg_index)];
  BrutePieces out;
  out.cbar1 = rec.a1 == reg.a1 ? 1 : 0;
  if (rec.kappa >= 2) {
    const int want = *rec.response ? reg.a2_responder : reg.a2_nonresponder;
    out.c = (out.cbar1 && *rec.a2 == want) ? 1 : 0;
    double joint = 0.0;
    for (int j = 0; j < design.n_regimes(); ++j) {
      const EmbeddedRegime& other = design.regimes[static_cast<size_t>(j)];
      if (other.a1 != reg.a1) continue;
      out.pi1 += rec.p1[j];
      const int choice = *rec.response ? other.a2_responder : other.a2_nonresponder;
      if (choice == want) joint += rec.p1[j];
    }
    out.pi2 = joint / out.pi1;
  } else {
    for (int j = 0; j < design.n_regimes(); ++j)
      if (design.regimes[static_cast<size_t>(j)].a1 == reg.a1) out.pi1 += rec.p1[j];
  }
  return out;
}

double brute_ipw(const AccruedDataset& data, int reg_index, const TrialDesign& design,
                 const std::function<double(int)>& weight) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < data.n_enrolled(); ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    if (rec.delta != 1) continue;
    const BrutePieces b = brute_pieces(rec, reg_index, design);
    if (!b.c) continue;
    const double inv = weight(i) / (b.pi1 * b.pi2);
    den += inv;
    num += inv * *rec.y;
  }
  return num / den;
}

using LFun1 = std::function<double(double)>;
using LFun2 = std::function<double(double, int, double, int)>;

double brute_aipw(const AccruedDataset& data, int reg_index, const TrialDesign& design,
                  const LFun1& l1, const LFun2& l2, const std::function<double(int)>& weight) {
  const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(reg_index)];
  double num = 0.0, den = 0.0;
  for (int i = 0; i < data.n_enrolled(); ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    if (rec.delta != 1) continue;
    const BrutePieces b = brute_pieces(rec, reg_index, design);
    double term = 0.0;
    if (b.c) term += *rec.y / (b.pi1 * b.pi2);
    term += (1.0 - b.cbar1 / b.pi1) * l1(rec.x1);
    if (b.cbar1) {
      const int action = *rec.response ? reg.a2_responder : reg.a2_nonresponder;
      const double lv = l2(rec.x1, rec.a1, *rec.x21, action);
      term += (b.cbar1 / b.pi1 - (b.c ? 1.0 / (b.pi1 * b.pi2) : 0.0)) * lv;
    }
    const double w = weight(i);
    num += w * term;
    den += w;
  }
  return num / den;
}

double brute_iaipw(const AccruedDataset& data, int reg_index, const TrialDesign& design,
                   const LFun1& l1, const LFun2& l2) {
  const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(reg_index)];
  const int n = data.n_enrolled();
  double nu_delta = 0.0, nu_2 = 0.0;
  for (const auto& rec : data.records) {
    nu_delta += rec.delta;
    nu_2 += rec.kappa >= 2 ? 1.0 : 0.0;
  }
  nu_delta /= n;
  nu_2 /= n;
  double sum = 0.0;
  for (const auto& rec : data.records) {
    const BrutePieces b = brute_pieces(rec, reg_index, design);
    const double s2 = (b.cbar1 && rec.kappa >= 2) ? b.cbar1 / (b.pi1 * nu_2) : 0.0;
    const double oc = (rec.delta == 1 && b.c) ? 1.0 / (b.pi1 * b.pi2 * nu_delta) : 0.0;
    double term = (1.0 - s2) * l1(rec.x1);
    if (rec.delta == 1 && b.c) term += oc * *rec.y;
    if (rec.kappa >= 2 && b.cbar1) {
      const int action = *rec.response ? reg.a2_responder : reg.a2_nonresponder;
      term += (s2 - oc) * l2(rec.x1, rec.a1, *rec.x21, action);
    }
    sum += term;
  }
  return sum / n;
}

// Hand L-model with fixed coefficients shared by library and oracle paths.
LModelSet hand_lmodels(const TrialDesign& design, int week = 1) {
  LModelSet set;
  set.week = week;
  set.map2 = Q2FeatureMap::from_design(design);
  set.beta2 = VectorXd::Zero(set.map2.dim());
  set.beta2 << 0.5, 0.25, -0.6, 0.45, -0.2, -0.7, -0.65, -0.8;
  set.beta1.clear();
  for (int j = 0; j < design.n_regimes(); ++j)
    set.beta1.push_back(Eigen::Vector2d(0.1 * j, 0.3 - 0.02 * j));
  return set;
}

LFun1 l1_of(const LModelSet& set, int reg_index) {
  return [&set, reg_index](double x1) {
    return set.beta1[static_cast<size_t>(reg_index)][0] +
           set.beta1[static_cast<size_t>(reg_index)][1] * x1;
  };
}

LFun2 l2_of(const LModelSet& set) {
  return [&set](double x1, int a1, double x21, int a2) {
    return set.map2.eval(x1, a1, x21, a2).dot(set.beta2);
  };
}

SubjectRecord stage1_only(int id, int a1, double x1, const TrialDesign& design, int tau = 1) {
  SubjectRecord rec;
  rec.id = id;
  rec.tau = tau;
  rec.kappa = 1;
  rec.gamma = 1;
  rec.x1 = x1;
  rec.a1 = a1;
  rec.p1 = uniform_vec(design.n_regimes());
  rec.stage2_week = tau + 6;
  return rec;
}

AccruedDataset mixed_dataset(int n_complete, int n_stage2, int n_stage1, std::uint64_t seed) {
  ScenarioParams params;
  Rng rng(seed);
  std::vector<SubjectRecord> records;
  int id = 0;
  for (int i = 0; i < n_complete; ++i)
    records.push_back(random_completer(id++, kDesign, params, rng));
  for (int i = 0; i < n_stage2; ++i) {
    SubjectRecord rec = random_completer(id++, kDesign, params, rng);
    rec.delta = 0;
    rec.y.reset();
    rec.outcome_week.reset();
    records.push_back(rec);
  }
  for (int i = 0; i < n_stage1; ++i) {
    const int a1 = rng.uniform_int(2);
    records.push_back(stage1_only(id++, a1, 5.0 + rng.normal(), kDesign));
  }
  return dataset_of(std::move(records));
}

}  // namespace

TEST_CASE("ipw with a single consistent completer returns its outcome") {
  AccruedDataset data = dataset_of({upfront_completer(0, 0, 1, 0, -1.25, kDesign)});
  const ValueEstimate est = ipw_value(data, 0, nullptr, RandMode::upfront, kDesign);
  CHECK(est.theta == doctest::Approx(-1.25).epsilon(1e-15));
  CHECK(est.n_used == 1);
}

TEST_CASE("ipw equals the direct-summation oracle") {
  AccruedDataset data = dataset_of({
      upfront_completer(0, 0, 1, 0, -0.1, kDesign, 5.2, 3.1),
      upfront_completer(1, 0, 0, 1, 0.4, kDesign, 4.7, 4.2),
      upfront_completer(2, 1, 1, 4, -2.3, kDesign, 5.9, 3.6),
      upfront_completer(3, 0, 1, 0, -0.9, kDesign, 5.0, 3.0),
  });
  for (int j = 0; j < kDesign.n_regimes(); ++j) {
    bool any = false;
    for (const auto& rec : data.records)
      if (brute_pieces(rec, j, kDesign).c) any = true;
    if (!any) continue;
    const ValueEstimate est = ipw_value(data, j, nullptr, RandMode::upfront, kDesign);
    const double ref = brute_ipw(data, j, kDesign, [](int) { return 1.0; });
    CHECK(std::abs(est.theta - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("ipw honors per-subject weights") {
  AccruedDataset data = random_dataset(40, 77, kDesign, ScenarioParams{});
  VectorXd w(40);
  Rng rng(3);
  for (int i = 0; i < 40; ++i) w[i] = 0.5 + rng.u01();
  const ValueEstimate est = ipw_value(data, 7, &w, RandMode::upfront, kDesign);
  const double ref = brute_ipw(data, 7, kDesign, [&w](int i) { return w[i]; });
  CHECK(std::abs(est.theta - ref) <= 1e-12 * std::abs(ref));
}

TEST_CASE("unit weights and no weights agree bit for bit") {
  AccruedDataset data = random_dataset(40, 78, kDesign, ScenarioParams{});
  const VectorXd ones = VectorXd::Ones(40);
  for (int j = 0; j < 8; ++j) {
    const ValueEstimate a = ipw_value(data, j, nullptr, RandMode::upfront, kDesign);
    const ValueEstimate b = ipw_value(data, j, &ones, RandMode::upfront, kDesign);
    CHECK(a.theta == b.theta);
    CHECK(a.derivative == b.derivative);
    CHECK(a.second_moment == b.second_moment);
  }
}

TEST_CASE("ipw with no consistent completer is an estimation error") {
  AccruedDataset data = dataset_of({upfront_completer(0, 0, 1, 0, -1.0, kDesign)});
  CHECK_THROWS_AS(ipw_value(data, 7, nullptr, RandMode::upfront, kDesign), EstimationError);
}

TEST_CASE("ipw under uniform randomization is unbiased for the oracle value") {
  ScenarioParams params;
  Rng rng(2025);
  const OracleResult oracle = oracle_true_values(params, kDesign, 400000, rng.derive(1), 2);
  const int reps = 300, n = 200;
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    AccruedDataset data =
        random_dataset(n, 9000 + static_cast<std::uint64_t>(r), kDesign, params);
    const double theta = ipw_value(data, 7, nullptr, RandMode::upfront, kDesign).theta;
    sum += theta;
    sq += theta * theta;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean - oracle.theta[7]) < 4.0 * se + 3.0 * oracle.mc_se[7]);
}

TEST_CASE("estimating equation is solved at the reported value") {
  AccruedDataset data = random_dataset(60, 123, kDesign, ScenarioParams{});
  const LModelSet lm = hand_lmodels(kDesign);
  LModelCache cache;
  cache.insert(lm);
  for (int j = 0; j < 8; j += 3) {
    const ValueEstimate a = ipw_value(data, j, nullptr, RandMode::upfront, kDesign);
    CHECK(std::abs(a.contributions.sum()) < 1e-8 * a.n_used);
    const ValueEstimate b = aipw_value(data, j, cache, nullptr, RandMode::upfront, kDesign);
    CHECK(std::abs(b.contributions.sum()) < 1e-8 * b.n_used);
    const ValueEstimate c = iaipw_value(data, j, cache, RandMode::upfront, kDesign);
    CHECK(std::abs(c.contributions.sum()) < 1e-8 * c.n_used);
  }
}

TEST_CASE("contribution derivative matches a finite difference in theta") {
  AccruedDataset data = random_dataset(50, 321, kDesign, ScenarioParams{});
  const ValueEstimate est = ipw_value(data, 7, nullptr, RandMode::upfront, kDesign);
  auto sum_m = [&](double theta) {
    double s = 0.0;
    for (const auto& rec : data.records) {
      if (rec.delta != 1) continue;
      const BrutePieces b = brute_pieces(rec, 7, kDesign);
      if (b.c) s += (*rec.y - theta) / (b.pi1 * b.pi2);
    }
    return s;
  };
  const double h = 1e-6;
  const double fd = (sum_m(est.theta + h) - sum_m(est.theta - h)) / (2.0 * h * est.n_used);
  CHECK(est.derivative == doctest::Approx(fd).epsilon(1e-6));
  CHECK(est.derivative < 0.0);
}

TEST_CASE("l-model fit recovers the generative coefficients without noise") {
  ScenarioParams params;
  params.eps2_sd = 0.0;
  AccruedDataset data = random_dataset(120, 55, kDesign, params);
  const LModelSet set = fit_l_models(data, kDesign);
  VectorXd expected(8);
  expected << 0.0, 0.3, -0.75, 0.6, -0.25, -0.75, -0.75, -0.85;
  CHECK((set.beta2 - expected).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("stage-1 pseudo outcomes use the regime's action, not the realized one") {
  ScenarioParams params;
  params.eps2_sd = 0.0;
  AccruedDataset data = random_dataset(150, 66, kDesign, params);
  const LModelSet set = fit_l_models(data, kDesign);
  // Regime 5 = (1, resp->3, nonresp->4): responders among a1=1 completers
  // are evaluated at option 3 even when their realized option was 4.
  std::vector<double> xs, vs;
  for (const auto& rec : data.records) {
    if (rec.a1 != 1) continue;
    const int action = *rec.response ? 3 : 4;
    xs.push_back(rec.x1);
    vs.push_back(set.map2.eval(rec.x1, rec.a1, *rec.x21, action).dot(set.beta2));
  }
  MatrixXd X(static_cast<int>(xs.size()), 2);
  VectorXd v(static_cast<int>(vs.size()));
  for (size_t i = 0; i < xs.size(); ++i) {
    X(static_cast<int>(i), 0) = 1.0;
    X(static_cast<int>(i), 1) = xs[i];
    v[static_cast<int>(i)] = vs[i];
  }
  const VectorXd ref = X.colPivHouseholderQr().solve(v);
  CHECK((set.beta1[4] - ref).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("aipw with zero augmentation and one completer is the scaled outcome") {
  AccruedDataset data = dataset_of({upfront_completer(0, 0, 1, 0, -1.0, kDesign)});
  LModelCache cache;
  cache.insert(LModelSet::zeros(kDesign));
  const ValueEstimate est = aipw_value(data, 0, cache, nullptr, RandMode::upfront, kDesign);
  CHECK(est.theta == doctest::Approx(-1.0 / 0.25).epsilon(1e-15));
}

TEST_CASE("aipw equals the direct-summation oracle with hand L-functions") {
  AccruedDataset data = random_dataset(30, 88, kDesign, ScenarioParams{});
  LModelSet lm = hand_lmodels(kDesign);
  LModelCache cache;
  cache.insert(lm);
  VectorXd w(30);
  Rng rng(4);
  for (int i = 0; i < 30; ++i) w[i] = 0.7 + rng.u01();
  for (int j : {0, 3, 5, 7}) {
    const ValueEstimate est = aipw_value(data, j, cache, &w, RandMode::upfront, kDesign);
    const double ref =
        brute_aipw(data, j, kDesign, l1_of(lm, j), l2_of(lm), [&w](int i) { return w[i]; });
    CHECK(std::abs(est.theta - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("aipw requires a model for each completer's week") {
  AccruedDataset data = random_dataset(10, 99, kDesign, ScenarioParams{});
  LModelCache empty;
  CHECK_THROWS_AS(aipw_value(data, 0, empty, nullptr, RandMode::upfront, kDesign),
                  ProvenanceError);
  // Models fitted only at a later week resolve by backfill.
  LModelSet lm = hand_lmodels(kDesign, /*week=*/30);
  LModelCache cache;
  cache.insert(lm);
  CHECK_NOTHROW(aipw_value(data, 0, cache, nullptr, RandMode::upfront, kDesign));
}

TEST_CASE("aipw is robust to a grossly wrong augmentation model") {
  ScenarioParams params;
  Rng rng(2026);
  const OracleResult oracle = oracle_true_values(params, kDesign, 400000, rng.derive(1), 2);
  LModelSet wrong = LModelSet::zeros(kDesign);
  wrong.zero = false;
  wrong.beta2[0] = 100.0;  // constant 100 everywhere
  for (auto& b : wrong.beta1) b = Eigen::Vector2d(100.0, 0.0);
  LModelCache cache;
  cache.insert(wrong);
  const int reps = 300, n = 200;
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    AccruedDataset data =
        random_dataset(n, 5000 + static_cast<std::uint64_t>(r), kDesign, params);
    const double theta = aipw_value(data, 7, cache, nullptr, RandMode::upfront, kDesign).theta;
    sum += theta;
    sq += theta * theta;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean - oracle.theta[7]) < 4.0 * se + 3.0 * oracle.mc_se[7]);
}

TEST_CASE("iaipw reduces exactly to count-normalized aipw when everyone completed") {
  AccruedDataset data = random_dataset(25, 111, kDesign, ScenarioParams{});
  LModelSet lm = hand_lmodels(kDesign);
  LModelCache cache;
  cache.insert(lm);
  for (int j : {1, 6, 7}) {
    const ValueEstimate interim = iaipw_value(data, j, cache, RandMode::upfront, kDesign);
    const ValueEstimate full = aipw_value(data, j, cache, nullptr, RandMode::upfront, kDesign);
    CHECK(interim.theta == full.theta);
  }
}

TEST_CASE("stage-1-only subjects contribute only through the augmentation") {
  const LModelSet lm = hand_lmodels(kDesign);
  LModelCache cache;
  cache.insert(lm);
  AccruedDataset data = dataset_of({
      upfront_completer(0, 0, 1, 0, -0.5, kDesign),
      stage1_only(1, 0, 4.8, kDesign),
  });
  const ValueEstimate est = iaipw_value(data, 0, cache, RandMode::upfront, kDesign);
  // By hand: n=2, nu_delta = nu_2 = 1/2.
  const double l1a = l1_of(lm, 0)(5.0), l2a = l2_of(lm)(5.0, 0, 4.0, 0);
  const double term0 =
      -0.5 / (0.25 * 0.5) + (1.0 - 4.0) * l1a + (4.0 - 1.0 / (0.25 * 0.5)) * l2a;
  const double term1 = l1_of(lm, 0)(4.8);  // only the L1 term survives
  CHECK(est.theta == doctest::Approx(0.5 * (term0 + term1)).epsilon(1e-14));
}

TEST_CASE("iaipw equals the direct-summation oracle on a mixed snapshot") {
  AccruedDataset data = mixed_dataset(12, 5, 3, 222);
  const LModelSet lm = hand_lmodels(kDesign);
  LModelCache cache;
  cache.insert(lm);
  for (int j : {0, 4, 7}) {
    const ValueEstimate est = iaipw_value(data, j, cache, RandMode::upfront, kDesign);
    const double ref = brute_iaipw(data, j, kDesign, l1_of(lm, j), l2_of(lm));
    CHECK(std::abs(est.theta - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("iaipw without completers is undefined") {
  AccruedDataset data = dataset_of({stage1_only(0, 0, 5.0, kDesign)});
  LModelCache cache;
  cache.insert(hand_lmodels(kDesign));
  CHECK_THROWS_AS(iaipw_value(data, 0, cache, RandMode::upfront, kDesign), EstimationError);
}

TEST_CASE("q-learning recovers the stage-2 truth and matches a QR oracle") {
  ScenarioParams params;
  AccruedDataset data = random_dataset(200, 333, kDesign, params);
  const Q2FeatureMap map2 = Q2FeatureMap::from_design(kDesign);
  const Q1SharedFeatureMap map1 = Q1SharedFeatureMap::from_design(kDesign);
  const QFit fit = qlearning_fit(data, map2, map1, kDesign);

  MatrixXd X(200, map2.dim());
  VectorXd y(200);
  for (int i = 0; i < 200; ++i) {
    const SubjectRecord& r = data.records[static_cast<size_t>(i)];
    X.row(i) = map2.eval(r.x1, r.a1, *r.x21, *r.a2).transpose();
    y[i] = *r.y;
  }
  const VectorXd ref = X.colPivHouseholderQr().solve(y);
  CHECK((fit.beta2 - ref).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK((fit.cov2 - fit.cov2.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);

  ScenarioParams clean = params;
  clean.eps2_sd = 0.0;
  AccruedDataset data2 = random_dataset(100, 444, kDesign, clean);
  const QFit fit2 = qlearning_fit(data2, map2, map1, kDesign);
  VectorXd expected(8);
  expected << 0.0, 0.3, -0.75, 0.6, -0.25, -0.75, -0.75, -0.85;
  CHECK((fit2.beta2 - expected).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(fit2.sigma2_stage2 < 1e-16);
}

TEST_CASE("stage-1 refit optimizes over the feasible set, ties giving the common value") {
  AccruedDataset data = random_dataset(80, 555, kDesign, ScenarioParams{});
  const Q2FeatureMap map2 = Q2FeatureMap::from_design(kDesign);
  const Q1SharedFeatureMap map1 = Q1SharedFeatureMap::from_design(kDesign);
  // Equal coefficients for options 3 and 4 force a tie in the (1, resp)
  // feasible set {3,4}; the pseudo outcome is the shared value.
  VectorXd beta2 = VectorXd::Zero(map2.dim());
  beta2 << 1.0, 0.2, -0.5, 0.4, -0.3, -0.6, -0.7, -0.7;
  const Stage1Refit refit = qlearning_stage1_refit(data, beta2, map2, map1, kDesign);

  int n = 0;
  for (const auto& rec : data.records)
    if (rec.delta == 1) ++n;
  MatrixXd X(n, map1.dim());
  VectorXd v(n);
  int i = 0;
  for (const auto& rec : data.records) {
    if (rec.delta != 1) continue;
    X.row(i) = map1.eval(rec.x1, rec.a1).transpose();
    const auto& feas = kDesign.feasible_set(rec.a1, *rec.response);
    double best = std::numeric_limits<double>::infinity();
    for (int a2 : feas)
      best = std::min(best, map2.eval(rec.x1, rec.a1, *rec.x21, a2).dot(beta2));
    v[i] = best;
    ++i;
  }
  const VectorXd ref = X.colPivHouseholderQr().solve(v);
  CHECK((refit.beta1 - ref).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("single-option stages carry the outcome back") {
  TrialDesign d;
  d.stage1_options = {0, 1};
  d.stage2_options = {0, 1};
  d.feasible_rule[{0, 0}] = {0};
  d.feasible_rule[{0, 1}] = {0};
  d.feasible_rule[{1, 0}] = {1};
  d.feasible_rule[{1, 1}] = {1};
  d.regimes = {{0, 0, 0, "a"}, {1, 1, 1, "b"}};
  d.validate();

  Rng rng(666);
  std::vector<SubjectRecord> records;
  for (int i = 0; i < 24; ++i) {
    const int a1 = i % 2;
    SubjectRecord rec;
    rec.id = i;
    rec.tau = 1;
    rec.kappa = 2;
    rec.delta = 1;
    rec.x1 = 5.0 + rng.normal();
    rec.a1 = a1;
    rec.stage2_week = 7;
    rec.x21 = 4.0 + rng.normal();
    rec.response = i % 3 == 0 ? 1 : 0;
    rec.a2 = a1;
    rec.outcome_week = 13;
    rec.y = 1.0 + 0.5 * rec.x1 - a1 + 0.1 * rng.normal();
    rec.p1 = uniform_vec(2);
    rec.p2 = Eigen::VectorXd::Ones(1);
    records.push_back(rec);
  }
  AccruedDataset data = dataset_of(std::move(records));
  const LModelSet set = fit_l_models(data, d);
  // Stage-1 models regress the raw outcome within each arm.
  for (int j = 0; j < 2; ++j) {
    std::vector<double> xs, ys;
    for (const auto& rec : data.records) {
      if (rec.a1 != d.regimes[static_cast<size_t>(j)].a1) continue;
      xs.push_back(rec.x1);
      ys.push_back(*rec.y);
    }
    MatrixXd X(static_cast<int>(xs.size()), 2);
    VectorXd yv(static_cast<int>(ys.size()));
    for (size_t i = 0; i < xs.size(); ++i) {
      X(static_cast<int>(i), 0) = 1.0;
      X(static_cast<int>(i), 1) = xs[i];
      yv[static_cast<int>(i)] = ys[i];
    }
    const VectorXd ref = X.colPivHouseholderQr().solve(yv);
    CHECK((set.beta1[static_cast<size_t>(j)] - ref).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}
