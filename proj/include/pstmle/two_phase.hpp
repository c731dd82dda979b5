#pragma once

#include "pstmle/tmle.hpp"

namespace pstmle {

// Arm-wise stabilization of the sampling weights: c(a) rescales pi so the
// effective weights delta/pi_bar average to exactly one within each arm.
struct StabilizedWeights {
  std::array<double, 2> c = {1.0, 1.0};  // by arm
  Eigen::VectorXd pi_bar;
  Eigen::VectorXd w_eff;  // delta / pi_bar
};

StabilizedWeights stabilize_weights(const Dataset& d);

// Inverse-probability-weighted TMLE for two-phase designs: nuisance fits,
// fluctuation, covariate marginal, and influence rows all carry the
// stabilized weights.  Reduces bit-for-bit to the single-phase TMLE under
// full sampling.
PsiEstimate ipw_tmle(const Dataset& d, const TargetSpec& spec, const EstimatorConfig& config);

// One-step estimator that projects the unmeasured pseudo-outcomes onto
// phase-one information (arm, covariates, outcome).  Not a plug-in: the
// estimate may leave [0,1], in which case it is flagged, never clipped.
PsiEstimate one_step_estimate(const Dataset& d, const TargetSpec& spec,
                              const EstimatorConfig& config);

// Replaces the known sampling probabilities by empirical measurement rates
// within (coarsening, arm, outcome) cells.  `coarsening` assigns each
// subject a discrete cell id.
Dataset with_estimated_pi(const Dataset& d, const std::vector<int>& coarsening);

}  // namespace pstmle
