#pragma once

#include <Eigen/Dense>
#include <functional>

namespace pstmle {

// Nodes and weights for expectations against a standard normal:
// E[g(Z)] ~= sum_i weights[i] * g(nodes[i]).  Weights sum to one.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  template <typename F>
  double expect(F&& g, double mu = 0.0, double sigma = 1.0) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nodes.size(); ++i) {
      acc += weights[i] * g(mu + sigma * nodes[i]);
    }
    return acc;
  }
};

// Golub-Welsch on the probabilists' Hermite recurrence.
GaussHermiteRule gauss_hermite(int n);

// Shared 64-node rule used for Gaussian-covariate expectations.
const GaussHermiteRule& gauss_hermite64();

// Recursive adaptive Simpson with absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-8, int max_depth = 30);

}  // namespace pstmle
