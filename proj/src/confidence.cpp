#include "smart_rar/confidence.hpp"

#include <cmath>
#include <limits>

#include "smart_rar/errors.hpp"
#include "smart_rar/linalg.hpp"

namespace smart_rar {

MatrixXd sandwich_cov(const std::vector<ValueEstimate>& estimates, int n) {
  const int m = static_cast<int>(estimates.size());
  if (m == 0) throw InferenceError("sandwich needs at least one estimate");
  for (const auto& est : estimates) {
    if (est.n_used != n)
      throw InferenceError("estimates do not share a common contribution index set");
    if (est.derivative == 0.0) throw InferenceError("zero estimating-function derivative");
  }
  MatrixXd B = MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    for (int k = j; k < m; ++k) {
      const double v = estimates[static_cast<size_t>(j)].contributions.dot(
                           estimates[static_cast<size_t>(k)].contributions) /
                       n;
      B(j, k) = v;
      B(k, j) = v;
    }
  }
  MatrixXd cov(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k)
      cov(j, k) = B(j, k) / (estimates[static_cast<size_t>(j)].derivative *
                             estimates[static_cast<size_t>(k)].derivative * n);
  return cov;
}

MatrixXd draw_value_samples(const ValueConfidence& conf, int n_draws, Rng& rng) {
  if (n_draws < 1) throw InferenceError("need at least one draw");
  const MatrixXd A = psd_sqrt_floor(conf.cov);
  return mvn_sample(conf.mean, A, n_draws, rng);
}

VectorXd beliefs_from_draws(const MatrixXd& draws, Direction direction) {
  const int B = static_cast<int>(draws.rows());
  const int m = static_cast<int>(draws.cols());
  if (B < 1 || m < 1) throw InferenceError("empty draw matrix");
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(m);
  for (int b = 0; b < B; ++b) {
    int best = 0;
    for (int j = 1; j < m; ++j) {
      const bool better = direction == Direction::maximize ? draws(b, j) > draws(b, best)
                                                           : draws(b, j) < draws(b, best);
      if (better) best = j;
    }
    ++counts[best];
  }
  VectorXd rho(m);
  for (int j = 0; j < m; ++j) rho[j] = static_cast<double>(counts[j]) / B;
  return rho;
}

VectorXd damp_clip_normalize(const VectorXd& rho, double c, double lo, double hi) {
  const int m = static_cast<int>(rho.size());
  if (!(c >= 0.0 && c <= 1.0)) throw Error("damping constant outside [0,1]");
  if (!(lo > 0.0 && lo < hi && hi < 1.0)) throw Error("bad clipping constants");
  VectorXd r(m);
  double sum = 0.0;
  for (int j = 0; j < m; ++j) {
    if (rho[j] < 0.0) throw Error("negative belief");
    r[j] = (c == 0.0) ? 1.0 : std::pow(rho[j], c);  // 0^0 := 1
    sum += r[j];
  }
  if (!(sum > 0.0)) throw DegenerateBeliefError("all beliefs are zero");
  r /= sum;
  for (int j = 0; j < m; ++j) r[j] = std::min(std::max(r[j], lo), hi);
  r /= r.sum();
  return r;
}

BetaDraws projection_beta_sampler(const Stage1RefitFn& refit, const AccruedDataset& data,
                                  const QFit& base, const std::vector<int>& sizes,
                                  int n_stage2_draws, Rng& rng) {
  if (sizes.size() != 2) throw Error("projection sampler is specialized to two stages");
  const int b1 = sizes[0];
  const int b2 = sizes[1];
  if (b1 < 1 || b2 < 1 || n_stage2_draws < 1) throw Error("draw sizes must be >= 1");

  BetaDraws out;
  const MatrixXd A2 = psd_sqrt_floor(base.cov2);
  out.stage2 = mvn_sample(base.beta2, A2, n_stage2_draws, rng);

  const int p1 = static_cast<int>(base.beta1.size());
  out.stage1.resize(b2 * b1, p1);
  out.stage1_outer.resize(static_cast<size_t>(b2) * b1);
  const MatrixXd outer = mvn_sample(base.beta2, A2, b2, rng);
  for (int b = 0; b < b2; ++b) {
    const Stage1Refit refit_b = refit(data, outer.row(b).transpose());
    const MatrixXd A1 = psd_sqrt_floor(refit_b.cov1);
    const MatrixXd inner = mvn_sample(refit_b.beta1, A1, b1, rng);
    for (int i = 0; i < b1; ++i) {
      out.stage1.row(b * b1 + i) = inner.row(i);
      out.stage1_outer[static_cast<size_t>(b) * b1 + i] = b;
    }
  }
  return out;
}

namespace {

VectorXd option_features(const SubjectHistory& h, int option, int stage,
                         const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1) {
  if (stage == 1) return map1.eval(h.x1, option);
  if (!h.a1 || !h.x21) throw StagedDataError("stage-2 beliefs need a stage-2 history");
  return map2.eval(h.x1, *h.a1, *h.x21, option);
}

}  // namespace

VectorXd sequential_beliefs_individual(const SubjectHistory& history,
                                       const std::vector<int>& feasible,
                                       const MatrixXd& draws, int stage,
                                       const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
                                       Direction direction) {
  const int n_opt = static_cast<int>(feasible.size());
  if (n_opt == 0) throw Error("empty feasible set");
  VectorXd rho = VectorXd::Zero(n_opt);
  if (n_opt == 1) {
    rho[0] = 1.0;
    return rho;
  }
  MatrixXd feats(n_opt, draws.cols());
  for (int z = 0; z < n_opt; ++z)
    feats.row(z) = option_features(history, feasible[static_cast<size_t>(z)], stage, map2, map1)
                       .transpose();
  const MatrixXd scores = feats * draws.transpose();  // options x draws
  const int B = static_cast<int>(draws.rows());
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_opt);
  for (int b = 0; b < B; ++b) {
    int best = 0;
    for (int z = 1; z < n_opt; ++z) {
      const bool better = direction == Direction::maximize ? scores(z, b) > scores(best, b)
                                                           : scores(z, b) < scores(best, b);
      if (better) best = z;
    }
    ++counts[best];
  }
  for (int z = 0; z < n_opt; ++z) rho[z] = static_cast<double>(counts[z]) / B;
  return rho;
}

std::vector<VectorXd> sequential_beliefs_configuration(
    const std::vector<SubjectHistory>& group, const std::vector<int>& feasible,
    const MatrixXd& draws, int stage, const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
    Direction direction) {
  const int n_sub = static_cast<int>(group.size());
  const int n_opt = static_cast<int>(feasible.size());
  if (n_sub == 0) return {};
  const double bits = n_sub * std::log2(static_cast<double>(n_opt));
  if (bits > 20.0) {
    // Enumeration guard: fall back to individual beliefs.
    std::vector<VectorXd> out;
    out.reserve(static_cast<size_t>(n_sub));
    for (const auto& h : group)
      out.push_back(sequential_beliefs_individual(h, feasible, draws, stage, map2, map1,
                                                  direction));
    return out;
  }

  const int B = static_cast<int>(draws.rows());
  long long n_conf = 1;
  for (int v = 0; v < n_sub; ++v) n_conf *= n_opt;

  // Per-draw per-subject option scores.
  std::vector<MatrixXd> scores(static_cast<size_t>(n_sub));
  for (int v = 0; v < n_sub; ++v) {
    MatrixXd feats(n_opt, draws.cols());
    for (int z = 0; z < n_opt; ++z)
      feats.row(z) =
          option_features(group[static_cast<size_t>(v)], feasible[static_cast<size_t>(z)], stage,
                          map2, map1)
              .transpose();
    scores[static_cast<size_t>(v)] = feats * draws.transpose();
  }

  std::vector<long long> config_counts(static_cast<size_t>(n_conf), 0);
  std::vector<int> digits(static_cast<size_t>(n_sub));
  for (int b = 0; b < B; ++b) {
    long long best_conf = 0;
    double best_score = std::numeric_limits<double>::quiet_NaN();
    for (long long conf = 0; conf < n_conf; ++conf) {
      long long rem = conf;
      double total = 0.0;
      for (int v = 0; v < n_sub; ++v) {
        digits[static_cast<size_t>(v)] = static_cast<int>(rem % n_opt);
        rem /= n_opt;
        total += scores[static_cast<size_t>(v)](digits[static_cast<size_t>(v)], b);
      }
      const bool better = std::isnan(best_score) ||
                          (direction == Direction::maximize ? total > best_score
                                                            : total < best_score);
      if (better) {
        best_score = total;
        best_conf = conf;
      }
    }
    ++config_counts[static_cast<size_t>(best_conf)];
  }

  std::vector<VectorXd> out(static_cast<size_t>(n_sub), VectorXd::Zero(n_opt));
  for (long long conf = 0; conf < n_conf; ++conf) {
    if (!config_counts[static_cast<size_t>(conf)]) continue;
    const double p = static_cast<double>(config_counts[static_cast<size_t>(conf)]) / B;
    long long rem = conf;
    for (int v = 0; v < n_sub; ++v) {
      out[static_cast<size_t>(v)][static_cast<int>(rem % n_opt)] += p;
      rem /= n_opt;
    }
  }
  return out;
}

}  // namespace smart_rar
