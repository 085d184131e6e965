#include "smart_rar/weights.hpp"

#include <cmath>

#include "smart_rar/errors.hpp"
#include "smart_rar/propensity.hpp"

namespace smart_rar {

namespace {
constexpr double kXiFloor = 1e-8;
}

StratumMoments stratum_second_moments(const AccruedDataset& data, int reg_index,
                                      double theta_tilde, RandMode mode,
                                      const TrialDesign& design) {
  const EmbeddedRegime& reg = design.regimes.at(static_cast<size_t>(reg_index));
  StratumMoments out;
  int n_completers = 0;
  for (const auto& rec : data.records) {
    if (rec.delta != 1) continue;
    ++n_completers;
    const ConsistencyPair cons = consistency_indicators(rec, reg);
    if (!cons.c) continue;
    const PropensityPair pi = subject_propensities(rec, reg, reg_index, mode, design);
    const double denom = pi.pi1 * pi.pi2;
    if (!(denom > 0.0)) throw PositivityError("consistent completer with zero propensity");
    const double dev = *rec.y - theta_tilde;
    const double term = dev * dev / denom;
    if (*rec.response == 1) {
      out.mu1 += term;
      ++out.n_resp;
    } else {
      out.mu0 += term;
      ++out.n_nonresp;
    }
  }
  if (n_completers == 0) throw EstimationError("stratum moments need at least one completer");
  out.mu0 /= n_completers;
  out.mu1 /= n_completers;
  return out;
}

double xi_wipw(double mu0, double mu1, double pi1, double pi2_resp, double pi2_nonresp) {
  if (!(pi1 > 0.0 && pi2_resp > 0.0 && pi2_nonresp > 0.0))
    throw PositivityError("xi needs strictly positive propensities");
  return mu1 / (pi2_resp * pi1) + mu0 / (pi2_nonresp * pi1);
}

double wipw_weight(double xi_burnin, double xi_t) {
  if (!(xi_burnin > 0.0)) throw Error("burn-in xi must be positive");
  if (!(xi_t > kXiFloor)) return 1.0;  // early-trial sparsity guard
  return std::sqrt(xi_burnin / xi_t);
}

NuComponents nu_components(const AccruedDataset& data, int reg_index, const LModelCache& lmodels,
                           double theta_tilde, RandMode mode, const TrialDesign& design) {
  const EmbeddedRegime& reg = design.regimes.at(static_cast<size_t>(reg_index));
  NuComponents out;
  int n_completers = 0;
  for (const auto& rec : data.records) {
    if (rec.delta != 1) continue;
    ++n_completers;
    const ConsistencyPair cons = consistency_indicators(rec, reg);
    if (!cons.c) continue;
    const PropensityPair pi = subject_propensities(rec, reg, reg_index, mode, design);
    const double denom = pi.pi1 * pi.pi2;
    if (!(denom > 0.0)) throw PositivityError("consistent completer with zero propensity");
    const LModelSet& lm = (mode == RandMode::sequential) ? lmodels.for_week(*rec.stage2_week)
                                                         : lmodels.for_week(data.week);
    const double l1 = lm.l1(reg_index, rec.x1);
    const double l2 = lm.l2(rec.x1, reg.a1, *rec.x21, reg.a2_for(*rec.response));
    const double dev_theta = *rec.y - theta_tilde;
    const double dev1 = *rec.y - l1;
    const double dev2 = *rec.y - l2;
    out.nu += dev_theta * dev_theta / denom;
    out.nu1 += dev1 * dev1 / denom;
    if (*rec.response == 1)
      out.nu2_1 += dev2 * dev2 / denom;
    else
      out.nu2_0 += dev2 * dev2 / denom;
  }
  if (n_completers == 0) throw EstimationError("nu components need at least one completer");
  out.nu /= n_completers;
  out.nu1 /= n_completers;
  out.nu2_0 /= n_completers;
  out.nu2_1 /= n_completers;
  return out;
}

double xi_waipw(double nu, double nu1, double nu2_0, double nu2_1, double pi1, double pi2_0,
                double pi2_1) {
  if (!(pi1 > 0.0 && pi2_0 > 0.0 && pi2_1 > 0.0))
    throw PositivityError("xi needs strictly positive propensities");
  return nu + nu1 * (1.0 - pi1) / pi1 + nu2_0 * (1.0 - pi2_0) / (pi2_0 * pi1) +
         nu2_1 * (1.0 - pi2_1) / (pi2_1 * pi1);
}

namespace {

double xi_for_subject(const WeekWeightInfo& info, EstimatorKind kind, double pi1) {
  if (kind == EstimatorKind::wipw)
    return xi_wipw(info.moments.mu0, info.moments.mu1, pi1, info.props.pi2_1, info.props.pi2_0);
  return xi_waipw(info.nus.nu, info.nus.nu1, info.nus.nu2_0, info.nus.nu2_1, pi1,
                  info.props.pi2_0, info.props.pi2_1);
}

}  // namespace

Eigen::VectorXd weights_for_dataset(const AccruedDataset& data, int reg_index,
                                    EstimatorKind kind, const WeightState& state, RandMode mode,
                                    const TrialDesign& design) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(data.n_enrolled());
  if (kind != EstimatorKind::wipw && kind != EstimatorKind::waipw) return w;
  if (!state.anchored) return w;

  const EmbeddedRegime& reg = design.regimes.at(static_cast<size_t>(reg_index));
  const double xi_star = (kind == EstimatorKind::wipw)
                             ? state.xi_burnin_wipw[reg_index]
                             : state.xi_burnin_waipw[reg_index];
  for (int i = 0; i < data.n_enrolled(); ++i) {
    const SubjectRecord& rec = data.records[static_cast<size_t>(i)];
    // Only completer contributions carry weights; others stay at one.
    if (rec.delta != 1) continue;
    const int anchor = (mode == RandMode::sequential) ? *rec.stage2_week : rec.tau;
    if (anchor <= state.t_star) continue;
    const auto it = state.weeks.find(anchor);
    if (it == state.weeks.end())
      throw ProvenanceError("no weight state recorded for week " + std::to_string(anchor));
    const WeekWeightInfo& info = it->second.at(static_cast<size_t>(reg_index));
    // Post-burn-in weeks with an empty response stratum fall back to 1.
    if (info.moments.n_resp == 0 || info.moments.n_nonresp == 0) continue;
    const double pi1 =
        (mode == RandMode::sequential) ? subject_pi1(rec, reg, mode, design) : info.props.pi1;
    if (!(pi1 > 0.0)) throw PositivityError("zero stage-1 propensity in weight assembly");
    w[i] = wipw_weight(xi_star, xi_for_subject(info, kind, pi1));
  }
  return w;
}

}  // namespace smart_rar
