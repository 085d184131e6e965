#include "smart_rar/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "smart_rar/errors.hpp"

namespace smart_rar {

void ScenarioParams::validate() const {
  if (n_subjects < 1) throw Error("n_subjects must be >= 1");
  if (enroll_window < 1) throw Error("enroll_window must be >= 1");
  if (!(x1_sd >= 0 && eps1_sd >= 0 && eps2_sd >= 0)) throw Error("standard deviations must be >= 0");
  if (!(response_fraction > 0.0 && response_fraction < 1.0))
    throw Error("response_fraction must lie in (0,1)");
  if (stage_delay < 1 || followup < 1) throw Error("delays must be >= 1 week");
}

double stage2_mean(const ScenarioParams& p, double x1, int a1) {
  return p.gamma1[0] + p.gamma1[1] * x1 + p.gamma1[2] * a1;
}

int response_of(const ScenarioParams& p, double x1, double x21) {
  return x21 < p.response_fraction * x1 ? 1 : 0;
}

double outcome_mean(const ScenarioParams& p, double x1, int a1, double x21, int a2) {
  if (a2 < 0 || a2 > 4) throw Error("stage-2 option outside the benchmark outcome model");
  double v = p.gamma2[0] + p.gamma2[1] * x1 + p.gamma2[2] * a1 + p.gamma2[3] * x21;
  if (a2 >= 1) v += p.gamma2[3 + a2];  // option 0 is the reference level
  return v;
}

std::pair<double, int> gen_stage2(const ScenarioParams& p, double x1, int a1, Rng& rng) {
  const double x21 = stage2_mean(p, x1, a1) + p.eps1_sd * rng.normal();
  return {x21, response_of(p, x1, x21)};
}

double gen_outcome(const ScenarioParams& p, double x1, int a1, double x21, int a2, Rng& rng) {
  return outcome_mean(p, x1, a1, x21, a2) + p.eps2_sd * rng.normal();
}

std::vector<int> draw_enroll_weeks(const ScenarioParams& p, Rng& rng) {
  std::vector<int> weeks(p.n_subjects);
  for (int i = 0; i < p.n_subjects; ++i) weeks[i] = 1 + rng.uniform_int(p.enroll_window);
  return weeks;
}

double potential_outcome(const ScenarioParams& p, const PotentialDraw& w,
                         const EmbeddedRegime& reg) {
  const double x21 = stage2_mean(p, w.x1, reg.a1) + p.eps1_sd * w.eps1;
  const int resp = response_of(p, w.x1, x21);
  return outcome_mean(p, w.x1, reg.a1, x21, reg.a2_for(resp)) + p.eps2_sd * w.eps2;
}

namespace {

struct ShardSums {
  std::vector<double> sum, sum_c;    // Kahan accumulators per regime
  std::vector<double> sq, sq_c;
  explicit ShardSums(int m) : sum(m, 0.0), sum_c(m, 0.0), sq(m, 0.0), sq_c(m, 0.0) {}

  void add(int j, double v) {
    double t = v - sum_c[j];
    double s = sum[j] + t;
    sum_c[j] = (s - sum[j]) - t;
    sum[j] = s;
    const double v2 = v * v;
    t = v2 - sq_c[j];
    s = sq[j] + t;
    sq_c[j] = (s - sq[j]) - t;
    sq[j] = s;
  }
};

}  // namespace

OracleResult oracle_true_values(const ScenarioParams& p, const TrialDesign& design,
                                long long n_mc, const Rng& rng, int threads) {
  if (n_mc < 1) throw Error("oracle needs n_mc >= 1");
  const int m = design.n_regimes();
  constexpr long long kShard = 1 << 16;
  const long long n_shards = (n_mc + kShard - 1) / kShard;
  std::vector<ShardSums> shard_sums(static_cast<size_t>(n_shards), ShardSums(m));

  auto run_shard = [&](long long s) {
    Rng stream = rng.derive(static_cast<std::uint64_t>(Phase::oracle),
                            static_cast<std::uint64_t>(s));
    const long long lo = s * kShard;
    const long long hi = std::min(n_mc, lo + kShard);
    ShardSums& acc = shard_sums[static_cast<size_t>(s)];
    for (long long i = lo; i < hi; ++i) {
      PotentialDraw w;
      w.x1 = p.x1_mean + p.x1_sd * stream.normal();
      w.eps1 = stream.normal();
      w.eps2 = stream.normal();
      for (int j = 0; j < m; ++j) acc.add(j, potential_outcome(p, w, design.regimes[j]));
    }
  };

  const int n_threads = std::max(1, threads);
  if (n_threads == 1 || n_shards == 1) {
    for (long long s = 0; s < n_shards; ++s) run_shard(s);
  } else {
    std::vector<std::thread> pool;
    std::atomic<long long> next{0};
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (long long s = next.fetch_add(1); s < n_shards; s = next.fetch_add(1)) run_shard(s);
      });
    for (auto& th : pool) th.join();
  }

  OracleResult out;
  out.n_mc = n_mc;
  out.theta = VectorXd::Zero(m);
  out.mc_se = VectorXd::Zero(m);
  // Combine shards in index order for thread-count invariance.
  for (int j = 0; j < m; ++j) {
    double sum = 0.0, sq = 0.0;
    for (const auto& acc : shard_sums) {
      sum += acc.sum[j];
      sq += acc.sq[j];
    }
    const double n = static_cast<double>(n_mc);
    out.theta[j] = sum / n;
    const double var = std::max(0.0, sq / n - out.theta[j] * out.theta[j]);
    out.mc_se[j] = std::sqrt(var / n);
  }
  return out;
}

}  // namespace smart_rar
