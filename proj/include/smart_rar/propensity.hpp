#pragma once

#include "smart_rar/design.hpp"
#include "smart_rar/records.hpp"

namespace smart_rar {

struct ConsistencyPair {
  int cbar1 = 0;  // stage-1 agreement
  int c = 0;      // agreement through both stages
};

/// Indicators that the subject's realized path agrees with the regime at
/// stage 1, and through both stages.  A subject that never reached stage 2
/// gets c = 0; a completed record with missing stage-2 fields is corrupt.
ConsistencyPair consistency_indicators(const SubjectRecord& rec, const EmbeddedRegime& reg);

struct PropensityPair {
  double pi1 = 0.0;
  double pi2 = 0.0;
};

/// Propensities implied by an up-front regime randomization vector r:
/// pi1 sums r over regimes sharing the stage-1 arm, pi2 is the
/// conditional mass on regimes that also share the stage-2 choice for the
/// given response status.
PropensityPair upfront_propensities(int reg_index, int response, const Eigen::VectorXd& r,
                                    const TrialDesign& design);

/// Regime propensities for one subject from its stored assignment-time
/// probability vectors.  Sequential mode reads the stage-1 option vector
/// directly and the stage-2 vector published the week the subject reached
/// stage 2; an option outside the subject's feasible set has propensity 0.
PropensityPair subject_propensities(const SubjectRecord& rec, const EmbeddedRegime& reg,
                                    int reg_index, RandMode mode, const TrialDesign& design);

/// Stage-1 propensity alone; defined for subjects at any stage.
double subject_pi1(const SubjectRecord& rec, const EmbeddedRegime& reg, RandMode mode,
                   const TrialDesign& design);

}  // namespace smart_rar
