#include "smart_rar/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smart_rar/errors.hpp"
#include "smart_rar/linalg.hpp"

namespace smart_rar {

const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ipw: return "IPW";
    case EstimatorKind::wipw: return "WIPW";
    case EstimatorKind::aipw: return "AIPW";
    case EstimatorKind::waipw: return "WAIPW";
    case EstimatorKind::iaipw: return "IAIPW";
  }
  return "?";
}

VectorXd Q2FeatureMap::eval(double x1, int a1, double x21, int a2) const {
  VectorXd f = VectorXd::Zero(dim());
  int k = 0;
  f[k++] = 1.0;
  f[k++] = x1;
  for (size_t i = 1; i < stage1_options.size(); ++i) f[k++] = (a1 == stage1_options[i]) ? 1.0 : 0.0;
  f[k++] = x21;
  for (size_t i = 1; i < stage2_options.size(); ++i) f[k++] = (a2 == stage2_options[i]) ? 1.0 : 0.0;
  return f;
}

VectorXd Q1SharedFeatureMap::eval(double x1, int a1) const {
  VectorXd f = VectorXd::Zero(dim());
  int k = 0;
  f[k++] = 1.0;
  f[k++] = x1;
  for (size_t i = 1; i < stage1_options.size(); ++i) f[k++] = (a1 == stage1_options[i]) ? 1.0 : 0.0;
  return f;
}

double LModelSet::l1(int reg_index, double x1) const {
  if (zero) return 0.0;
  const Eigen::Vector2d& b = beta1.at(static_cast<size_t>(reg_index));
  return b[0] + b[1] * x1;
}

double LModelSet::l2(double x1, int a1, double x21, int a2) const {
  if (zero) return 0.0;
  return map2.eval(x1, a1, x21, a2).dot(beta2);
}

LModelSet LModelSet::zeros(const TrialDesign& design) {
  LModelSet set;
  set.zero = true;
  set.map2 = Q2FeatureMap::from_design(design);
  set.beta2 = VectorXd::Zero(set.map2.dim());
  set.beta1.assign(static_cast<size_t>(design.n_regimes()), Eigen::Vector2d::Zero());
  return set;
}

int LModelCache::first_week() const {
  if (by_week.empty()) throw ProvenanceError("no outcome models have been fitted");
  return by_week.begin()->first;
}

const LModelSet& LModelCache::for_week(int week) const {
  if (by_week.empty()) throw ProvenanceError("no outcome models have been fitted");
  auto it = by_week.find(week);
  if (it != by_week.end()) return it->second;
  // Weeks before the first estimable fit fall back to that fit.
  if (week < by_week.begin()->first) return by_week.begin()->second;
  throw ProvenanceError("no outcome model for week " + std::to_string(week));
}

namespace {

double weight_of(const VectorXd* weights, int record_pos) {
  if (!weights) return 1.0;
  return (*weights)[record_pos];
}

const EmbeddedRegime& regime_of(const TrialDesign& design, int reg_index) {
  if (reg_index < 0 || reg_index >= design.n_regimes())
    throw Error("regime index out of range");
  return design.regimes[static_cast<size_t>(reg_index)];
}

}  // namespace

ValueEstimate ipw_value(const AccruedDataset& data, int reg_index, const VectorXd* weights,
                        RandMode mode, const TrialDesign& design) {
  data.validate();
  const EmbeddedRegime& reg = regime_of(design, reg_index);
  if (weights && weights->size() != data.n_enrolled())
    throw Error("weight vector is not aligned with the dataset");

  // First pass: the ratio estimator over consistent completers.
  double mass = 0.0, weighted_y = 0.0;
  for (int i = 0; i < data.n_enrolled(); ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    if (rec.delta != 1) continue;
    const ConsistencyPair cons = consistency_indicators(rec, reg);
    if (!cons.c) continue;
    const PropensityPair pi = subject_propensities(rec, reg, reg_index, mode, design);
    const double denom = pi.pi1 * pi.pi2;
    if (!(denom > 0.0))
      throw PositivityError("consistent completer with zero propensity, regime " + reg.label);
    const double w = weight_of(weights, i) / denom;
    mass += w;
    weighted_y += w * *rec.y;
  }
  if (!(mass > 0.0))
    throw EstimationError("no consistent completer for regime " + reg.label);

  ValueEstimate est;
  est.theta = weighted_y / mass;

  // Second pass: estimating-function pieces over all completers.
  std::vector<double> contrib;
  contrib.reserve(static_cast<size_t>(data.n_enrolled()));
  double deriv_sum = 0.0, sq_sum = 0.0;
  for (int i = 0; i < data.n_enrolled(); ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    if (rec.delta != 1) continue;
    double m = 0.0;
    const ConsistencyPair cons = consistency_indicators(rec, reg);
    if (cons.c) {
      const PropensityPair pi = subject_propensities(rec, reg, reg_index, mode, design);
      const double w = weight_of(weights, i) / (pi.pi1 * pi.pi2);
      m = w * (*rec.y - est.theta);
      deriv_sum -= w;
    }
    contrib.push_back(m);
    sq_sum += m * m;
  }
  est.n_used = static_cast<int>(contrib.size());
  est.contributions = Eigen::Map<VectorXd>(contrib.data(), est.n_used);
  est.derivative = deriv_sum / est.n_used;
  est.second_moment = sq_sum / est.n_used;
  return est;
}

LModelSet fit_l_models(const AccruedDataset& data, const TrialDesign& design) {
  data.validate();
  LModelSet set;
  set.week = data.week;
  set.map2 = Q2FeatureMap::from_design(design);

  std::vector<const SubjectRecord*> completers;
  for (const auto& rec : data.records)
    if (rec.delta == 1) completers.push_back(&rec);
  const int n = static_cast<int>(completers.size());
  const int p2 = set.map2.dim();
  if (n < p2) throw SingularFitError("too few completers for the stage-2 outcome model");

  MatrixXd X2(n, p2);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const SubjectRecord& r = *completers[static_cast<size_t>(i)];
    X2.row(i) = set.map2.eval(r.x1, r.a1, *r.x21, *r.a2).transpose();
    y[i] = *r.y;
  }
  set.beta2 = ols_fit(X2, y).beta;

  // Per-regime stage-1 fit: pseudo outcome is the fitted stage-2 value at
  // the regime's action for the subject's observed response, restricted to
  // completers whose stage-1 treatment matches the regime.
  set.beta1.resize(static_cast<size_t>(design.n_regimes()));
  for (int j = 0; j < design.n_regimes(); ++j) {
    const EmbeddedRegime& reg = design.regimes[static_cast<size_t>(j)];
    std::vector<double> xs, vs;
    for (const SubjectRecord* rp : completers) {
      const SubjectRecord& r = *rp;
      if (r.a1 != reg.a1) continue;
      double pseudo;
      const auto& feas = design.feasible_set(r.a1, *r.response);
      if (feas.size() == 1) {
        pseudo = *r.y;  // single continuation: carry the outcome back
      } else {
        pseudo = set.l2(r.x1, r.a1, *r.x21, reg.a2_for(*r.response));
      }
      xs.push_back(r.x1);
      vs.push_back(pseudo);
    }
    const int nj = static_cast<int>(xs.size());
    if (nj < 2)
      throw SingularFitError("too few stage-1-consistent completers for regime " + reg.label);
    MatrixXd X1(nj, 2);
    VectorXd v(nj);
    for (int i = 0; i < nj; ++i) {
      X1(i, 0) = 1.0;
      X1(i, 1) = xs[static_cast<size_t>(i)];
      v[i] = vs[static_cast<size_t>(i)];
    }
    set.beta1[static_cast<size_t>(j)] = ols_fit(X1, v).beta;
  }
  return set;
}

double aipw_bracket_terms(int cbar1, int c, double pi1, double pi2, double y, double l1,
                          double l2) {
  double bracket = l1;  // the k=1 term contributes (1 - cbar1/pi1) * l1
  if (cbar1) {
    if (!(pi1 > 0.0)) throw PositivityError("zero stage-1 propensity");
    bracket += (l2 - l1) / pi1;
    if (c) {
      if (!(pi2 > 0.0)) throw PositivityError("zero stage-2 propensity");
      bracket += (y - l2) / (pi1 * pi2);
    }
  }
  return bracket;
}

namespace {

double aipw_bracket(const SubjectRecord& rec, const EmbeddedRegime& reg, int reg_index,
                    const LModelSet& lm, RandMode mode, const TrialDesign& design) {
  const ConsistencyPair cons = consistency_indicators(rec, reg);
  const double l1 = lm.l1(reg_index, rec.x1);
  if (!cons.cbar1) return l1;
  const PropensityPair pi = subject_propensities(rec, reg, reg_index, mode, design);
  const double l2 = lm.l2(rec.x1, reg.a1, *rec.x21, reg.a2_for(*rec.response));
  return aipw_bracket_terms(cons.cbar1, cons.c, pi.pi1, pi.pi2, cons.c ? *rec.y : 0.0, l1, l2);
}

}  // namespace

ValueEstimate aipw_value(const AccruedDataset& data, int reg_index, const LModelCache& lmodels,
                         const VectorXd* weights, RandMode mode, const TrialDesign& design) {
  data.validate();
  const EmbeddedRegime& reg = regime_of(design, reg_index);
  if (weights && weights->size() != data.n_enrolled())
    throw Error("weight vector is not aligned with the dataset");

  std::vector<double> brackets, ws;
  for (int i = 0; i < data.n_enrolled(); ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    if (rec.delta != 1) continue;
    const int anchor = (mode == RandMode::sequential) ? *rec.stage2_week : rec.tau;
    const LModelSet& lm = lmodels.for_week(anchor);
    brackets.push_back(aipw_bracket(rec, reg, reg_index, lm, mode, design));
    ws.push_back(weight_of(weights, i));
  }
  const int n = static_cast<int>(brackets.size());
  if (n == 0) throw EstimationError("no completers for the augmented estimator");

  double w_mass = 0.0, num = 0.0;
  for (int i = 0; i < n; ++i) {
    w_mass += ws[static_cast<size_t>(i)];
    num += ws[static_cast<size_t>(i)] * brackets[static_cast<size_t>(i)];
  }
  if (!(w_mass > 0.0)) throw EstimationError("augmented estimator has zero weight mass");

  ValueEstimate est;
  est.theta = num / w_mass;
  est.n_used = n;
  est.contributions = VectorXd(n);
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double m = ws[static_cast<size_t>(i)] * (brackets[static_cast<size_t>(i)] - est.theta);
    est.contributions[i] = m;
    sq += m * m;
  }
  est.derivative = -w_mass / n;
  est.second_moment = sq / n;
  return est;
}

ValueEstimate iaipw_value(const AccruedDataset& data, int reg_index, const LModelCache& lmodels,
                          RandMode mode, const TrialDesign& design) {
  data.validate();
  const EmbeddedRegime& reg = regime_of(design, reg_index);
  const int n = data.n_enrolled();
  if (n == 0) throw EstimationError("interim estimator needs at least one enrolled subject");

  double nu_delta = 0.0, nu_stage2 = 0.0;
  for (const auto& rec : data.records) {
    nu_delta += rec.delta;
    nu_stage2 += (rec.kappa >= 2) ? 1.0 : 0.0;
  }
  nu_delta /= n;
  nu_stage2 /= n;
  if (!(nu_delta > 0.0)) throw EstimationError("interim estimator undefined without completers");

  VectorXd brackets(n);
  for (int i = 0; i < n; ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    const int anchor = (mode == RandMode::sequential && rec.stage2_week) ? *rec.stage2_week
                                                                         : rec.tau;
    const LModelSet& lm = lmodels.for_week(anchor);
    const double pi1 = subject_pi1(rec, reg, mode, design);
    if (!(pi1 > 0.0)) throw PositivityError("zero stage-1 propensity");
    const int cbar1 = (rec.a1 == reg.a1) ? 1 : 0;
    const double stage2_ratio =
        (cbar1 && rec.kappa >= 2) ? 1.0 / (pi1 * nu_stage2) : 0.0;

    double val = (1.0 - stage2_ratio) * lm.l1(reg_index, rec.x1);
    if (rec.kappa >= 2 && cbar1) {
      const ConsistencyPair cons = consistency_indicators(rec, reg);
      const double l2 = lm.l2(rec.x1, reg.a1, *rec.x21, reg.a2_for(*rec.response));
      double outcome_ratio = 0.0;
      if (rec.delta == 1 && cons.c) {
        const PropensityPair pi = subject_propensities(rec, reg, reg_index, mode, design);
        if (!(pi.pi2 > 0.0)) throw PositivityError("zero stage-2 propensity");
        outcome_ratio = 1.0 / (pi.pi1 * pi.pi2 * nu_delta);
        val += outcome_ratio * *rec.y;
      }
      val += (stage2_ratio - outcome_ratio) * l2;
    }
    brackets[i] = val;
  }

  ValueEstimate est;
  est.theta = brackets.mean();
  est.n_used = n;
  est.contributions = brackets.array() - est.theta;
  est.derivative = -1.0;
  est.second_moment = est.contributions.squaredNorm() / n;
  return est;
}

namespace {

double stage_optimum(const VectorXd& beta2, const Q2FeatureMap& map2, const SubjectRecord& r,
                     const std::vector<int>& feasible, Direction direction) {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (int a2 : feasible) {
    const double q = map2.eval(r.x1, r.a1, *r.x21, a2).dot(beta2);
    if (std::isnan(best) || (direction == Direction::maximize ? q > best : q < best)) best = q;
  }
  return best;
}

// Shared stage-1 design matrix and pseudo-outcome builder for the
// Q-learning recursion and the projection refits.
void stage1_regression(const AccruedDataset& data, const VectorXd& beta2,
                       const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
                       const TrialDesign& design, MatrixXd& X1, VectorXd& v) {
  std::vector<const SubjectRecord*> completers;
  for (const auto& rec : data.records)
    if (rec.delta == 1) completers.push_back(&rec);
  const int n = static_cast<int>(completers.size());
  X1.resize(n, map1.dim());
  v.resize(n);
  for (int i = 0; i < n; ++i) {
    const SubjectRecord& r = *completers[static_cast<size_t>(i)];
    X1.row(i) = map1.eval(r.x1, r.a1).transpose();
    const auto& feas = design.feasible_set(r.a1, *r.response);
    v[i] = (feas.size() == 1) ? *r.y : stage_optimum(beta2, map2, r, feas, design.direction);
  }
}

}  // namespace

QFit qlearning_fit(const AccruedDataset& data, const Q2FeatureMap& map2,
                   const Q1SharedFeatureMap& map1, const TrialDesign& design) {
  data.validate();
  QFit fit;
  fit.map2 = map2;
  fit.map1 = map1;

  std::vector<const SubjectRecord*> completers;
  for (const auto& rec : data.records)
    if (rec.delta == 1) completers.push_back(&rec);
  const int n = static_cast<int>(completers.size());
  fit.n_completers = n;
  if (n < map2.dim()) throw SingularFitError("too few completers for the stage-2 Q-model");

  MatrixXd X2(n, map2.dim());
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const SubjectRecord& r = *completers[static_cast<size_t>(i)];
    X2.row(i) = map2.eval(r.x1, r.a1, *r.x21, *r.a2).transpose();
    y[i] = *r.y;
  }
  const OlsFit f2 = ols_fit(X2, y);
  fit.beta2 = f2.beta;
  fit.sigma2_stage2 = f2.sigma2;
  fit.cov2 = f2.sigma2 * f2.xtx_inverse;

  MatrixXd X1;
  VectorXd v;
  stage1_regression(data, fit.beta2, map2, map1, design, X1, v);
  const OlsFit f1 = ols_fit(X1, v);
  fit.beta1 = f1.beta;
  fit.sigma2_stage1 = f1.sigma2;
  fit.cov1 = f1.sigma2 * f1.xtx_inverse;
  return fit;
}

Stage1Refit qlearning_stage1_refit(const AccruedDataset& data, const VectorXd& beta2,
                                   const Q2FeatureMap& map2, const Q1SharedFeatureMap& map1,
                                   const TrialDesign& design) {
  MatrixXd X1;
  VectorXd v;
  stage1_regression(data, beta2, map2, map1, design, X1, v);
  if (X1.rows() < map1.dim()) throw SingularFitError("too few completers for the stage-1 Q-model");
  const OlsFit f1 = ols_fit(X1, v);
  return {f1.beta, f1.sigma2 * f1.xtx_inverse};
}

}  // namespace smart_rar
