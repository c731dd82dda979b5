#pragma once

#include "pstmle/nuisance.hpp"

namespace pstmle {

// Shared estimator configuration for the convenience entry points.
struct EstimatorConfig {
  std::vector<std::string> learners{"mean", "glm"};
  TreatmentMode treatment = TreatmentLogistic{};
  Truncation bounds;
  std::uint64_t fold_seed = 1;
};

// Single-phase TMLE for a discrete biomarker.  For each component k the
// intercept-only offset logistic fluctuation zeroes the weighted empirical
// score, and the plug-in averages the fluctuated regression over the
// empirical covariate distribution.  Influence rows and their covariance
// come along for Wald inference.
PsiEstimate tmle_estimate(const Dataset& d, const TargetSpec& spec, const NuisanceFit& fit);

// Convenience: fit nuisances (no folds) and run the TMLE.
PsiEstimate tmle_estimate(const Dataset& d, const TargetSpec& spec,
                          const EstimatorConfig& config);

// Cross-validated TMLE: fold-specific initial estimates, one pooled
// fluctuation per component, plug-in averaged over each subject's
// validation-fold fit with training-fold empirical covariate marginals.
PsiEstimate cv_tmle_estimate(const Dataset& d, const TargetSpec& spec, const FoldPlan& folds,
                             const EstimatorConfig& config);

// Internal engine shared by the TMLE variants; omega holds the effective
// observation weights (all ones in single-phase mode).
PsiEstimate targeted_plugin(const Dataset& d, const TargetSpec& spec, const NuisanceFit& fit,
                            const Eigen::VectorXd& omega, EstimatorMode mode);

// Delta-method contrast of the component vector.  Ratio contrasts flag an
// identifiability failure (no interval) when psi1 - psi3 <= 0, since that
// denominator identifies a probability.
ContrastReport contrast(const PsiEstimate& est, ContrastKind kind);

struct EifDiagnostics {
  double eif_mean_max_abs = 0.0;
  double min_eigenvalue_sigma = 0.0;
};

EifDiagnostics eif_diagnostics(const PsiEstimate& est);

// Plug-in estimate of the positive-part discrepancy between the untreated
// control crossover law and the treated biomarker law, summed over the
// biomarker support and averaged over covariates.  A positive value
// contradicts the crossover identification assumption.  Discrete mode only.
double estimate_psi4(const Dataset& d, const EstimatorConfig& config);
double estimate_psi4(const Dataset& d, const EstimatorConfig& config,
                     const Eigen::VectorXd& weights);

}  // namespace pstmle
