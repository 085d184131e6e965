#include "smart_rar/propensity.hpp"

#include <string>

#include "smart_rar/errors.hpp"

namespace smart_rar {

ConsistencyPair consistency_indicators(const SubjectRecord& rec, const EmbeddedRegime& reg) {
  ConsistencyPair out;
  if (rec.gamma != 1) throw CorruptRecordError("consistency requested for non-enrolled subject");
  out.cbar1 = (rec.a1 == reg.a1) ? 1 : 0;
  if (!out.cbar1) return out;
  if (rec.kappa < 2) {
    if (rec.delta == 1)
      throw CorruptRecordError("subject " + std::to_string(rec.id) +
                               " completed without stage-2 data");
    return out;  // stage 2 not reached: c undefined, reported as 0
  }
  if (!rec.response || !rec.a2)
    throw CorruptRecordError("subject " + std::to_string(rec.id) + " missing stage-2 fields");
  out.c = (*rec.a2 == reg.a2_for(*rec.response)) ? 1 : 0;
  return out;
}

PropensityPair upfront_propensities(int reg_index, int response, const Eigen::VectorXd& r,
                                    const TrialDesign& design) {
  if (reg_index < 0 || reg_index >= design.n_regimes())
    throw Error("regime index out of range");
  if (r.size() != design.n_regimes())
    throw Error("regime probability vector has wrong length");
  const EmbeddedRegime& reg = design.regimes[reg_index];
  const int a2 = reg.a2_for(response);
  double pi1 = 0.0, joint = 0.0;
  for (int j = 0; j < design.n_regimes(); ++j) {
    const EmbeddedRegime& other = design.regimes[j];
    if (other.a1 != reg.a1) continue;
    pi1 += r[j];
    if (other.a2_for(response) == a2) joint += r[j];
  }
  if (!(pi1 > 0.0))
    throw PositivityError("stage-1 propensity is zero for regime " + reg.label);
  return {pi1, joint / pi1};
}

PropensityPair subject_propensities(const SubjectRecord& rec, const EmbeddedRegime& reg,
                                    int reg_index, RandMode mode, const TrialDesign& design) {
  if (rec.kappa < 2)
    throw StagedDataError("stage-2 propensity requested before stage 2 was reached");
  if (mode == RandMode::upfront) {
    return upfront_propensities(reg_index, *rec.response, rec.p1, design);
  }
  // Sequential: direct lookups in the stored assignment-time vectors.
  PropensityPair out;
  out.pi1 = subject_pi1(rec, reg, mode, design);
  const int choice = reg.a2_for(*rec.response);
  const int pos = design.feasible_index(rec.a1, *rec.response, choice);
  out.pi2 = (pos < 0) ? 0.0 : rec.p2[pos];
  return out;
}

double subject_pi1(const SubjectRecord& rec, const EmbeddedRegime& reg, RandMode mode,
                   const TrialDesign& design) {
  if (mode == RandMode::upfront) {
    double pi1 = 0.0;
    if (rec.p1.size() != design.n_regimes())
      throw CorruptRecordError("regime probability vector does not match the design");
    for (int j = 0; j < design.n_regimes(); ++j)
      if (design.regimes[j].a1 == reg.a1) pi1 += rec.p1[j];
    return pi1;
  }
  int a1_pos = -1;
  for (size_t i = 0; i < design.stage1_options.size(); ++i)
    if (design.stage1_options[i] == reg.a1) a1_pos = static_cast<int>(i);
  if (a1_pos < 0 || rec.p1.size() != static_cast<int>(design.stage1_options.size()))
    throw CorruptRecordError("stage-1 probability vector does not match the design");
  return rec.p1[a1_pos];
}

}  // namespace smart_rar
