#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pstmle/kernels.hpp"

namespace pstmle {

// One subject's record.
//   w      baseline covariates
//   a      treatment arm
//   s      post-treatment biomarker, present when a=1 (and measured)
//   y      binary absorbent endpoint
//   s_c    post-crossover biomarker, present when a=0 and y=0 (and measured);
//          stored as 0 for untreated cases, absent for treated subjects
//   delta  phase-two measurement indicator (1 in single-phase designs)
//   pi     known sampling probability for delta
struct Observation {
  Eigen::VectorXd w;
  int a = 0;
  std::optional<double> s;
  int y = 0;
  std::optional<double> s_c;
  int delta = 1;
  double pi = 1.0;
};

enum class BiomarkerKind { discrete, continuous };

struct Dataset {
  std::vector<Observation> observations;
  int covariate_dim = 0;
  BiomarkerKind biomarker_kind = BiomarkerKind::discrete;

  int size() const { return static_cast<int>(observations.size()); }
  bool single_phase() const;

  // n x p covariate matrix view (copies).
  Eigen::MatrixXd covariate_matrix() const;
};

struct Violation {
  long row;  // -1 for dataset-level violations
  std::string message;
};

// Returns every invariant violation with its row index; empty means valid.
std::vector<Violation> validate_dataset(const Dataset& d);

enum class ContrastKind { log_relative_risk, vaccine_efficacy, risk_difference, raw_psi };

// The estimand: biomarker stratum of interest, requested contrast, and, in
// continuous mode, the smoothing kernel and bandwidth.
struct TargetSpec {
  double s1_star = 0.0;
  ContrastKind contrast = ContrastKind::log_relative_risk;
  std::optional<KernelSpec> kernel;
  std::optional<double> bandwidth;

  bool continuous() const { return kernel.has_value(); }
};

// Treatment arm whose subjects carry the k-th pseudo-outcome, k in {1,2,3}.
inline int arm_of(int k) { return k == 3 ? 0 : 1; }

// Pseudo-outcome f_k evaluated at one observation.  Discrete mode uses exact
// stratum indicators; continuous mode replaces them by kernel weights.
// Requesting a pseudo-outcome for an unmeasured subject (delta=0) throws.
double pseudo_outcome(const Observation& o, int k, const TargetSpec& spec);

enum class EstimatorMode { tmle, cv_tmle, ipw_tmle, one_step, continuous_cv_tmle };

std::string estimator_mode_name(EstimatorMode mode);

// Point estimate of the three stratum components together with per-subject
// influence rows, their covariance, and the fitted fluctuation coefficients.
// In two-phase mode the rows are stored already weighted by delta/pi_bar so
// that covariance estimation is uniform across modes.
struct PsiEstimate {
  Eigen::Vector3d psi = Eigen::Vector3d::Zero();
  Eigen::MatrixXd influence_rows;  // n x 3
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  Eigen::Vector3d epsilons = Eigen::Vector3d::Zero();
  EstimatorMode mode = EstimatorMode::tmle;
  std::optional<double> bandwidth_used;

  // Largest |weighted empirical score| over the three targeting steps;
  // NaN for the one-step estimator, which has no targeting step.
  double fluctuation_score_max_abs = 0.0;

  // Pointwise check that the fluctuated component-2 fit stays below the
  // component-1 fit (compatibility of the three fluctuated laws); reported,
  // never enforced.  Unset where it does not apply.
  std::optional<bool> compatible_p2_le_p1;

  std::vector<std::string> flags;
};

struct ContrastDiagnostics {
  double eif_mean_max_abs = 0.0;
  double min_eigenvalue_sigma = 0.0;
  double denominator = 0.0;  // psi1 - psi3
  std::optional<double> psi4_hat;
};

struct ContrastReport {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
  ContrastDiagnostics diagnostics;
  bool identifiability_failure = false;
};

}  // namespace pstmle
