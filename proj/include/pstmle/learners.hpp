#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "pstmle/folds.hpp"

namespace pstmle {

enum class LossKind { weighted_bernoulli, weighted_squared_error };

// A fitted regression: batch prediction on raw covariate rows.
struct FittedLearner {
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> predict;
  bool flagged = false;
};

// A fitting recipe.  `fit` receives raw covariates (no intercept column),
// outcomes, and nonnegative observation weights.
struct Learner {
  std::string name;
  std::function<FittedLearner(const Eigen::MatrixXd&, const Eigen::VectorXd&,
                              const Eigen::VectorXd&)>
      fit;
};

// Built-in library.
Learner make_mean_learner();
Learner make_glm_learner(LossKind loss, bool interactions);
Learner make_nadaraya_watson_learner(double bandwidth_scale = 1.0);

// Resolve config names {mean, glm, glm_interactions, nadaraya_watson} for a
// target loss.  Throws ConfigError on unknown names.
std::vector<Learner> learner_library(const std::vector<std::string>& names, LossKind loss);

struct CvSelection {
  int index = 0;
  std::vector<double> losses;  // +inf for learners that failed
  std::vector<std::string> warnings;
};

// Discrete cross-validated selector: returns the learner minimizing the
// weighted cross-validated loss over the fold ids supplied for these rows.
// Ties break toward the earlier library entry.  Learners that fail on some
// fold are excluded with a warning; if all fail, throws.
CvSelection cv_select(const std::vector<Learner>& learners, LossKind loss,
                      const Eigen::MatrixXd& W, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& weights,
                      const std::vector<int>& fold_ids, int V);

double cv_loss_value(LossKind loss, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& pred, const Eigen::VectorXd& weights);

}  // namespace pstmle
