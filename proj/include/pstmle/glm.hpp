#pragma once

#include <Eigen/Dense>
#include <optional>

namespace pstmle {

// Result of a weighted GLM fit.  Coefficients are on the linear-predictor
// scale; `separation` marks fits whose logits ran past +-30 and whose
// predictions should be treated as clipped.
struct GlmFit {
  Eigen::VectorXd coef;
  bool separation = false;
  int iterations = 0;
  double max_score = 0.0;  // weight-normalized score at the returned coef
};

// Maximizes sum_i w_i [y_i eta_i - log(1 + exp(eta_i))] with
// eta = X beta + offset via iteratively reweighted least squares.
// X must include any intercept column the caller wants.  Convergence is on
// the weight-normalized score (max component < 1e-10) within 100 iterations.
GlmFit fit_weighted_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& weights,
                             const std::optional<Eigen::VectorXd>& offset = std::nullopt);

// Weighted least squares, same design conventions.
GlmFit fit_weighted_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& weights);

// Intercept-only offset logistic regression: solves
//   sum_i w_i (y_i - expit(offset_i + eps)) = 0
// by Newton steps on the monotone score with a bisection fallback.
// `clipped` is set if the root ran past +-30.
struct FluctuationResult {
  double epsilon = 0.0;
  double score = 0.0;  // weight-normalized score at the solution
  bool clipped = false;
};

FluctuationResult solve_logistic_fluctuation(const Eigen::VectorXd& offset_logits,
                                             const Eigen::VectorXd& outcomes,
                                             const Eigen::VectorXd& weights);

// Design helpers: prepend an intercept column, optionally append pairwise
// interaction columns w_i * w_j (i < j).
Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& covariates, bool interactions);

}  // namespace pstmle
