#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pstmle/common.hpp"
#include "pstmle/glm.hpp"

using namespace pstmle;

TEST_CASE("intercept-only logistic recovers the logit of the mean") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(8, 1);
  Eigen::VectorXd y(8);
  y << 1, 0, 0, 0, 1, 0, 0, 0;  // mean 0.25
  Eigen::VectorXd w = Eigen::VectorXd::Ones(8);
  GlmFit fit = fit_weighted_logistic(X, y, w);
  CHECK(fit.coef[0] == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-9));
  CHECK(fit.max_score < 1e-10);
  CHECK_FALSE(fit.separation);
}

TEST_CASE("offset at the saturated fit leaves a zero intercept") {
  // Binary covariate with stratum means 0.25 and 0.6.
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(9, 1);
  Eigen::VectorXd y(9), offset(9);
  y << 1, 0, 0, 0, 1, 1, 1, 0, 0;
  for (int i = 0; i < 9; ++i) {
    offset[i] = i < 4 ? logit(0.25) : logit(0.6);
  }
  Eigen::VectorXd w = Eigen::VectorXd::Ones(9);
  GlmFit fit = fit_weighted_logistic(X, y, w, offset);
  CHECK(std::abs(fit.coef[0]) < 1e-9);
}

TEST_CASE("logistic agrees with a brute-force likelihood maximizer") {
  Rng rng(7);
  const int n = 50;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    X(i, 2) = rng.normal();
    double eta = 0.4 - 0.8 * X(i, 1) + 0.5 * X(i, 2);
    y[i] = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
    w[i] = 0.25 + rng.uniform();
  }
  GlmFit fit = fit_weighted_logistic(X, y, w);

  auto negloglik = [&](const Eigen::VectorXd& beta) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double eta = X.row(i).dot(beta);
      acc -= w[i] * (y[i] * eta - std::log1p(std::exp(eta)));
    }
    return acc;
  };
  Eigen::VectorXd brute = oracle::nelder_mead(negloglik, Eigen::VectorXd::Zero(3), 0.5);
  CHECK((fit.coef - brute).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("weight scaling leaves coefficients unchanged") {
  Rng rng(3);
  const int n = 120;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    y[i] = rng.bernoulli(expit(0.3 * X(i, 1))) ? 1.0 : 0.0;
    w[i] = 0.5 + rng.uniform();
  }
  GlmFit base = fit_weighted_logistic(X, y, w);
  GlmFit scaled = fit_weighted_logistic(X, y, 7.3 * w);
  CHECK((base.coef - scaled.coef).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("degenerate inputs are rejected") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(fit_weighted_logistic(X, y, Eigen::VectorXd::Zero(4)), DataError);

  Eigen::MatrixXd X2(4, 2);
  X2.col(0).setOnes();
  X2.col(1).setZero();
  CHECK_THROWS_AS(fit_weighted_logistic(X2, y, Eigen::VectorXd::Ones(4)), DataError);
}

TEST_CASE("complete separation is flagged") {
  const int n = 40;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n), w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i < n / 2 ? -1.0 - 0.05 * i : 1.0 + 0.05 * i;
    y[i] = X(i, 1) > 0 ? 1.0 : 0.0;
  }
  GlmFit fit = fit_weighted_logistic(X, y, w);
  CHECK(fit.separation);
}

TEST_CASE("weighted least squares matches an SVD solve") {
  Rng rng(11);
  const int n = 60;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    X(i, 2) = rng.uniform();
    y[i] = 2.0 + 0.5 * X(i, 1) - X(i, 2) + 0.1 * rng.normal();
    w[i] = 0.2 + rng.uniform();
  }
  GlmFit fit = fit_weighted_least_squares(X, y, w);
  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd Xs = sw.asDiagonal() * X;
  Eigen::VectorXd ys = sw.asDiagonal() * y;
  Eigen::VectorXd ref = Xs.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(ys);
  CHECK((fit.coef - ref).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fluctuation solver zeroes the monotone score") {
  Rng rng(5);
  const int n = 200;
  Eigen::VectorXd offsets(n), outcomes(n), weights(n);
  for (int i = 0; i < n; ++i) {
    offsets[i] = rng.normal();
    outcomes[i] = rng.bernoulli(expit(offsets[i] + 0.4)) ? 1.0 : 0.0;
    weights[i] = i % 3 == 0 ? 0.0 : 0.5 + rng.uniform();
  }
  FluctuationResult r = solve_logistic_fluctuation(offsets, outcomes, weights);
  CHECK_FALSE(r.clipped);
  CHECK(std::abs(r.score) < 1e-12);

  // Against an independent golden-section minimization of the squared score.
  auto squared_score = [&](double eps) {
    double s = 0.0, wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      s += weights[i] * (outcomes[i] - expit(offsets[i] + eps));
      wsum += weights[i];
    }
    s /= wsum;
    return s * s;
  };
  double ref = oracle::golden_section(squared_score, -5.0, 5.0);
  CHECK(r.epsilon == doctest::Approx(ref).epsilon(1e-7));
}

TEST_CASE("fluctuation with all-zero outcomes is clipped") {
  Eigen::VectorXd offsets = Eigen::VectorXd::Zero(10);
  Eigen::VectorXd outcomes = Eigen::VectorXd::Zero(10);
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(10);
  FluctuationResult r = solve_logistic_fluctuation(offsets, outcomes, weights);
  CHECK(r.clipped);
  CHECK(r.epsilon == doctest::Approx(-30.0));
}

TEST_CASE("design matrix adds intercept and pairwise interactions") {
  Eigen::MatrixXd W(2, 3);
  W << 1, 2, 3, 4, 5, 6;
  Eigen::MatrixXd X = design_matrix(W, true);
  CHECK(X.cols() == 1 + 3 + 3);
  CHECK(X(0, 0) == 1.0);
  CHECK(X(0, 4) == doctest::Approx(1.0 * 2.0));
  CHECK(X(1, 6) == doctest::Approx(5.0 * 6.0));
}
