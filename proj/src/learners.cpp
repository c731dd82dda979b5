#include "pstmle/learners.hpp"

#include <cmath>
#include <limits>

#include "pstmle/common.hpp"
#include "pstmle/glm.hpp"

namespace pstmle {

Learner make_mean_learner() {
  Learner l;
  l.name = "mean";
  l.fit = [](const Eigen::MatrixXd&, const Eigen::VectorXd& y,
             const Eigen::VectorXd& w) {
    double wsum = w.sum();
    if (!(wsum > 0.0)) {
      throw DataError("mean learner: no positive weights");
    }
    double m = (w.array() * y.array()).sum() / wsum;
    FittedLearner f;
    f.predict = [m](const Eigen::MatrixXd& X) {
      return Eigen::VectorXd::Constant(X.rows(), m);
    };
    return f;
  };
  return l;
}

Learner make_glm_learner(LossKind loss, bool interactions) {
  Learner l;
  l.name = interactions ? "glm_interactions" : "glm";
  l.fit = [loss, interactions](const Eigen::MatrixXd& W, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w) {
    Eigen::MatrixXd X = design_matrix(W, interactions);
    GlmFit g = loss == LossKind::weighted_bernoulli
                   ? fit_weighted_logistic(X, y, w)
                   : fit_weighted_least_squares(X, y, w);
    bool logistic = loss == LossKind::weighted_bernoulli;
    Eigen::VectorXd coef = g.coef;
    FittedLearner f;
    f.flagged = g.separation;
    f.predict = [coef, interactions, logistic](const Eigen::MatrixXd& Xnew) {
      Eigen::VectorXd eta = design_matrix(Xnew, interactions) * coef;
      if (logistic) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
          eta[i] = expit(eta[i]);
        }
      }
      return eta;
    };
    return f;
  };
  return l;
}

Learner make_nadaraya_watson_learner(double bandwidth_scale) {
  Learner l;
  l.name = "nadaraya_watson";
  l.fit = [bandwidth_scale](const Eigen::MatrixXd& W, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w) {
    const Eigen::Index n = W.rows();
    const Eigen::Index p = W.cols();
    double wsum = w.sum();
    if (!(wsum > 0.0)) {
      throw DataError("nadaraya_watson: no positive weights");
    }
    // Per-dimension rule-of-thumb bandwidths.
    Eigen::VectorXd h(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      double mean = (w.array() * W.col(j).array()).sum() / wsum;
      double var = (w.array() * (W.col(j).array() - mean).square()).sum() / wsum;
      double sd = std::sqrt(std::max(var, 1e-12));
      h[j] = bandwidth_scale * sd *
             std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(p)));
    }
    double fallback = (w.array() * y.array()).sum() / wsum;
    Eigen::MatrixXd Wtrain = W;
    Eigen::VectorXd ytrain = y, wtrain = w;
    FittedLearner f;
    f.predict = [Wtrain, ytrain, wtrain, h, fallback](const Eigen::MatrixXd& X) {
      Eigen::VectorXd out(X.rows());
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index t = 0; t < Wtrain.rows(); ++t) {
          if (wtrain[t] == 0.0) continue;
          double d2 = 0.0;
          for (Eigen::Index j = 0; j < Wtrain.cols(); ++j) {
            double u = (X(i, j) - Wtrain(t, j)) / h[j];
            d2 += u * u;
          }
          double kv = wtrain[t] * std::exp(-0.5 * d2);
          num += kv * ytrain[t];
          den += kv;
        }
        out[i] = den > 1e-300 ? num / den : fallback;
      }
      return out;
    };
    return f;
  };
  return l;
}

std::vector<Learner> learner_library(const std::vector<std::string>& names, LossKind loss) {
  std::vector<Learner> out;
  for (const auto& name : names) {
    if (name == "mean") {
      out.push_back(make_mean_learner());
    } else if (name == "glm") {
      out.push_back(make_glm_learner(loss, false));
    } else if (name == "glm_interactions") {
      out.push_back(make_glm_learner(loss, true));
    } else if (name == "nadaraya_watson") {
      out.push_back(make_nadaraya_watson_learner());
    } else {
      throw ConfigError("unknown learner: " + name);
    }
  }
  if (out.empty()) {
    throw ConfigError("learner library is empty");
  }
  return out;
}

double cv_loss_value(LossKind loss, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& pred, const Eigen::VectorXd& weights) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (weights[i] == 0.0) continue;
    if (loss == LossKind::weighted_bernoulli) {
      double p = clamp(pred[i], 1e-10, 1.0 - 1e-10);
      acc -= weights[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
    } else {
      double r = y[i] - pred[i];
      acc += weights[i] * r * r;
    }
  }
  return acc;
}

CvSelection cv_select(const std::vector<Learner>& learners, LossKind loss,
                      const Eigen::MatrixXd& W, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& weights,
                      const std::vector<int>& fold_ids, int V) {
  if (learners.empty()) {
    throw std::invalid_argument("cv_select: no learners");
  }
  const Eigen::Index n = W.rows();
  if (static_cast<Eigen::Index>(fold_ids.size()) != n) {
    throw std::invalid_argument("cv_select: fold id size mismatch");
  }

  CvSelection sel;
  sel.losses.assign(learners.size(), 0.0);
  std::vector<bool> failed(learners.size(), false);

  for (int v = 0; v < V; ++v) {
    std::vector<int> train, valid;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (V == 1 || fold_ids[static_cast<std::size_t>(i)] != v) {
        train.push_back(static_cast<int>(i));
      }
      if (fold_ids[static_cast<std::size_t>(i)] == v) {
        valid.push_back(static_cast<int>(i));
      }
    }
    if (valid.empty()) continue;
    Eigen::MatrixXd Wt(train.size(), W.cols()), Wv(valid.size(), W.cols());
    Eigen::VectorXd yt(train.size()), wt(train.size()), yv(valid.size()), wv(valid.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
      Wt.row(static_cast<Eigen::Index>(r)) = W.row(train[r]);
      yt[static_cast<Eigen::Index>(r)] = y[train[r]];
      wt[static_cast<Eigen::Index>(r)] = weights[train[r]];
    }
    for (std::size_t r = 0; r < valid.size(); ++r) {
      Wv.row(static_cast<Eigen::Index>(r)) = W.row(valid[r]);
      yv[static_cast<Eigen::Index>(r)] = y[valid[r]];
      wv[static_cast<Eigen::Index>(r)] = weights[valid[r]];
    }
    for (std::size_t l = 0; l < learners.size(); ++l) {
      if (failed[l]) continue;
      try {
        FittedLearner f = learners[l].fit(Wt, yt, wt);
        sel.losses[l] += cv_loss_value(loss, yv, f.predict(Wv), wv);
      } catch (const std::exception& e) {
        failed[l] = true;
        sel.warnings.push_back("learner '" + learners[l].name + "' failed on fold " +
                               std::to_string(v) + ": " + e.what());
      }
    }
  }

  int best = -1;
  for (std::size_t l = 0; l < learners.size(); ++l) {
    if (failed[l]) {
      sel.losses[l] = std::numeric_limits<double>::infinity();
      continue;
    }
    if (best < 0 || sel.losses[l] < sel.losses[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(l);
    }
  }
  if (best < 0) {
    throw Error("cv_select: every learner failed");
  }
  sel.index = best;
  return sel;
}

}  // namespace pstmle
