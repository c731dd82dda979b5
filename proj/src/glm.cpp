#include "pstmle/glm.hpp"

#include <cmath>

#include "pstmle/common.hpp"

namespace pstmle {

namespace {
constexpr double kScoreTol = 1e-10;
constexpr double kLogitCap = 30.0;
constexpr int kMaxIter = 100;
}  // namespace

GlmFit fit_weighted_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& weights,
                             const std::optional<Eigen::VectorXd>& offset) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || weights.size() != n) {
    throw std::invalid_argument("fit_weighted_logistic: size mismatch");
  }
  const double wsum = weights.sum();
  if (!(wsum > 0.0) || weights.minCoeff() < 0.0) {
    throw DataError("fit_weighted_logistic: weights must be nonnegative with positive sum");
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    double mass = (X.col(j).cwiseAbs().array() * weights.array()).sum();
    if (mass == 0.0) {
      throw DataError("fit_weighted_logistic: column " + std::to_string(j) +
                      " is zero on all positively weighted rows");
    }
  }

  GlmFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta(n), mu(n), score(p);
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    eta = X * fit.coef;
    if (offset) {
      eta += *offset;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
    }
    score = X.transpose() * (weights.array() * (y - mu).array()).matrix() / wsum;
    fit.iterations = iter;
    fit.max_score = score.cwiseAbs().maxCoeff();
    if (fit.max_score < kScoreTol) {
      break;
    }
    Eigen::VectorXd irls_w = weights.array() * mu.array() * (1.0 - mu.array());
    // Small ridge keeps the step defined when curvature collapses under
    // separation; the separation flag below reports that case.
    Eigen::MatrixXd hessian =
        X.transpose() * irls_w.asDiagonal() * X / wsum +
        1e-12 * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd step = hessian.ldlt().solve(score);
    if (!step.allFinite()) {
      fit.separation = true;
      break;
    }
    // Dampen absurd steps; plain IRLS otherwise.
    double norm = step.cwiseAbs().maxCoeff();
    if (norm > 10.0) {
      step *= 10.0 / norm;
    }
    fit.coef += step;
    if (fit.coef.cwiseAbs().maxCoeff() > kLogitCap) {
      fit.separation = true;
      break;
    }
  }
  // Saturated fits can converge before the coefficients cross the cap;
  // fitted logits past the cap on weighted rows mark them as separated.
  eta = X * fit.coef;
  if (offset) {
    eta += *offset;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights[i] > 0.0 && std::abs(eta[i]) > kLogitCap) {
      fit.separation = true;
      break;
    }
  }
  return fit;
}

GlmFit fit_weighted_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& weights) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || weights.size() != n) {
    throw std::invalid_argument("fit_weighted_least_squares: size mismatch");
  }
  const double wsum = weights.sum();
  if (!(wsum > 0.0) || weights.minCoeff() < 0.0) {
    throw DataError("fit_weighted_least_squares: weights must be nonnegative with positive sum");
  }
  Eigen::MatrixXd gram = X.transpose() * weights.asDiagonal() * X / wsum +
                         1e-12 * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd rhs = X.transpose() * (weights.array() * y.array()).matrix() / wsum;
  GlmFit fit;
  fit.coef = gram.ldlt().solve(rhs);
  fit.iterations = 1;
  fit.max_score = (rhs - gram * fit.coef).cwiseAbs().maxCoeff();
  return fit;
}

FluctuationResult solve_logistic_fluctuation(const Eigen::VectorXd& offset_logits,
                                             const Eigen::VectorXd& outcomes,
                                             const Eigen::VectorXd& weights) {
  const Eigen::Index n = offset_logits.size();
  if (outcomes.size() != n || weights.size() != n) {
    throw std::invalid_argument("solve_logistic_fluctuation: size mismatch");
  }
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) {
    throw DataError("solve_logistic_fluctuation: no positive weights");
  }

  auto mean_score = [&](double eps) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights[i] != 0.0) {
        s += weights[i] * (outcomes[i] - expit(offset_logits[i] + eps));
      }
    }
    return s / wsum;
  };
  auto mean_info = [&](double eps) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights[i] != 0.0) {
        double m = expit(offset_logits[i] + eps);
        s += weights[i] * m * (1.0 - m);
      }
    }
    return s / wsum;
  };

  FluctuationResult result;
  // The score is continuous and strictly decreasing; bracket the root first.
  double lo = -kLogitCap, hi = kLogitCap;
  double score_lo = mean_score(lo);
  double score_hi = mean_score(hi);
  if (score_lo <= 0.0) {  // root below -cap (e.g. all outcomes zero)
    result.epsilon = lo;
    result.score = score_lo;
    result.clipped = true;
    return result;
  }
  if (score_hi >= 0.0) {
    result.epsilon = hi;
    result.score = score_hi;
    result.clipped = true;
    return result;
  }

  double eps = 0.0;
  double score = mean_score(eps);
  for (int iter = 0; iter < 100; ++iter) {
    if (std::abs(score) < 1e-14) {
      break;
    }
    double info = mean_info(eps);
    double next = eps + score / info;  // score' = -info
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      next = 0.5 * (lo + hi);  // bisection fallback
    }
    if (score > 0.0) {
      lo = std::max(lo, eps);
    } else {
      hi = std::min(hi, eps);
    }
    if (std::abs(next - eps) < 1e-12 && std::abs(score) < kScoreTol) {
      eps = next;
      score = mean_score(eps);
      break;
    }
    eps = next;
    score = mean_score(eps);
  }
  result.epsilon = eps;
  result.score = score;
  return result;
}

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& covariates, bool interactions) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index p = covariates.cols();
  Eigen::Index extra = interactions ? p * (p - 1) / 2 : 0;
  Eigen::MatrixXd X(n, 1 + p + extra);
  X.col(0).setOnes();
  X.middleCols(1, p) = covariates;
  if (interactions) {
    Eigen::Index c = 1 + p;
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = i + 1; j < p; ++j) {
        X.col(c++) = covariates.col(i).cwiseProduct(covariates.col(j));
      }
    }
  }
  return X;
}

}  // namespace pstmle
