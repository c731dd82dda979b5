#pragma once

#include <array>

#include "pstmle/continuous.hpp"

namespace pstmle {

// Gaussian-logistic trial generator.  Covariate and treated biomarker are
// bivariate normal; the potential outcomes follow a logistic model in
// (arm, covariate, biomarker, arm x biomarker); the crossover biomarker of
// untreated controls reproduces the treated biomarker exactly or with
// independent measurement noise on both readings.
struct SimConfig {
  int n = 5000;
  // Intercept, arm, covariate, biomarker, arm x biomarker.
  std::array<double, 5> betas = {-1.25, -0.6, -0.5, -0.1, -0.9};
  std::array<double, 2> mu = {0.41, 0.41};   // (covariate, biomarker)
  std::array<double, 2> sd = {0.55, 0.55};
  double correlation = 0.5;
  double arm_prob = 0.5;

  enum class Crossover { exact, noisy } crossover = Crossover::exact;
  double noise_sd = 0.0;

  enum class ArmAssignment { iid_bernoulli, fixed_margins } arm_assignment =
      ArmAssignment::iid_bernoulli;

  std::uint64_t seed = 1;
  int reps = 1000;

  double linear_predictor(int a, double w, double s) const {
    return betas[0] + betas[1] * a + betas[2] * w + betas[3] * s + betas[4] * a * s;
  }
};

// One simulated trial; `rep` selects an independent stream under the seed.
Dataset simulate_trial(const SimConfig& cfg, std::uint64_t rep = 0);

// Threshold the continuous biomarker into {0,1} at `threshold` (1 above).
Dataset discretize_biomarker(const Dataset& d, double threshold);

// Component curve s -> (Psi_1, Psi_2, Psi_3)(P; s) by Gauss-Hermite
// quadrature against the generator's closed-form conditional laws.
Eigen::Vector3d true_psi(const SimConfig& cfg, double s1_star);

// Kernel-smoothed version (outer quadrature of the curve).
Eigen::Vector3d true_psi_smoothed(const SimConfig& cfg, double s1_star,
                                  const KernelSpec& kernel, double h);

// Component truths for the thresholded generator at atom in {0,1}.
Eigen::Vector3d true_psi_discrete(const SimConfig& cfg, double threshold, int atom);

inline double log_relative_risk(const Eigen::Vector3d& psi) {
  return std::log(psi[1]) - std::log(psi[0] - psi[2]);
}

// Two-phase measurement designs.  Cases keep probability one where the
// design or the data structure demands it; untreated cases are always
// measured.
struct SubsampleDesign {
  enum class Kind { case_cohort, stratified } kind = Kind::case_cohort;
  double cohort_prob = 0.25;           // case-cohort: controls in both arms
  std::array<double, 4> prob_ay = {1.0, 1.0, 1.0, 1.0};  // stratified, by 2a+y

  static SubsampleDesign case_cohort(double p) {
    SubsampleDesign d;
    d.kind = Kind::case_cohort;
    d.cohort_prob = p;
    return d;
  }
  static SubsampleDesign stratified(const std::array<double, 4>& p) {
    SubsampleDesign d;
    d.kind = Kind::stratified;
    d.prob_ay = p;
    return d;
  }
};

Dataset two_phase_subsample(const Dataset& d, const SubsampleDesign& design,
                            std::uint64_t seed);

// Replicated coverage study of the smoothed log relative risk.
struct CoverageRow {
  double s1_star = 0.0;
  double h = 0.0;
  int n = 0;
  int reps = 0;
  double bias_truth = 0.0;
  double bias_smoothed = 0.0;
  double coverage_truth = 0.0;
  double coverage_smoothed = 0.0;
  double mean_se = 0.0;
  double sampling_sd = 0.0;
  int failures = 0;
};

struct CoverageOptions {
  EstimatorConfig estimator;
  KernelSpec kernel;
  int folds = 10;
  int workers = 1;
};

std::vector<CoverageRow> coverage_experiment(const SimConfig& cfg,
                                             const CoverageOptions& options,
                                             const std::vector<double>& s1_grid,
                                             const std::vector<double>& h_grid);

// Kolmogorov-Smirnov distance between the sample and the standard normal.
double ks_statistic_standard_normal(std::vector<double> values);

double standard_normal_cdf(double x);

}  // namespace pstmle
