#include "pstmle/nuisance.hpp"

#include <cmath>

namespace pstmle {

namespace {

Predictor truncated(FittedLearner fitted, double lo, double hi) {
  auto predict = fitted.predict;
  return Predictor([predict, lo, hi](const Eigen::MatrixXd& W) {
    Eigen::VectorXd p = predict(W);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p[i] = clamp(p[i], lo, hi);
    }
    return p;
  });
}

Predictor floored(FittedLearner fitted, double floor) {
  auto predict = fitted.predict;
  return Predictor([predict, floor](const Eigen::MatrixXd& W) {
    Eigen::VectorXd p = predict(W);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p[i] = p[i] < floor ? floor : p[i];
    }
    return p;
  });
}

struct StratumData {
  Eigen::MatrixXd W;
  Eigen::VectorXd y;
  Eigen::VectorXd wts;
  std::vector<int> fold_ids;
};

StratumData gather(const Dataset& d, const std::vector<int>& rows,
                   const std::function<double(const Observation&)>& outcome,
                   const Eigen::VectorXd& weights, const FoldPlan& folds) {
  StratumData s;
  s.W.resize(rows.size(), d.covariate_dim);
  s.y.resize(rows.size());
  s.wts.resize(rows.size());
  s.fold_ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Observation& o = d.observations[static_cast<std::size_t>(rows[r])];
    s.W.row(static_cast<Eigen::Index>(r)) = o.w.transpose();
    s.y[static_cast<Eigen::Index>(r)] = outcome(o);
    s.wts[static_cast<Eigen::Index>(r)] = weights[rows[r]];
    s.fold_ids.push_back(folds.fold_of(rows[r]));
  }
  return s;
}

// Fits one regression per training fold, with the learner chosen once by
// cross-validated loss over the stratum's rows.
std::vector<Predictor> fit_folded(const StratumData& s, const std::vector<Learner>& library,
                                  LossKind loss, const FoldPlan& folds,
                                  const std::function<Predictor(FittedLearner)>& wrap,
                                  std::vector<std::string>& flags,
                                  const std::string& role) {
  if (s.y.size() == 0 || !(s.wts.sum() > 0.0)) {
    throw StratumEmptyError("empty fitting stratum for " + role);
  }
  CvSelection sel{0, {}, {}};
  if (library.size() > 1) {
    sel = cv_select(library, loss, s.W, s.y, s.wts, s.fold_ids, folds.V);
  }
  for (const auto& w : sel.warnings) {
    flags.push_back(role + ": " + w);
  }
  const Learner& learner = library[static_cast<std::size_t>(sel.index)];

  std::vector<Predictor> fits;
  fits.reserve(static_cast<std::size_t>(folds.V));
  for (int v = 0; v < folds.V; ++v) {
    std::vector<int> keep;
    for (std::size_t r = 0; r < s.fold_ids.size(); ++r) {
      if (folds.V == 1 || s.fold_ids[r] != v) {
        keep.push_back(static_cast<int>(r));
      }
    }
    if (keep.empty() ) {
      throw StratumEmptyError("empty training stratum for " + role + " in fold " +
                              std::to_string(v));
    }
    Eigen::MatrixXd Wt(keep.size(), s.W.cols());
    Eigen::VectorXd yt(keep.size()), wt(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      Wt.row(static_cast<Eigen::Index>(r)) = s.W.row(keep[r]);
      yt[static_cast<Eigen::Index>(r)] = s.y[keep[r]];
      wt[static_cast<Eigen::Index>(r)] = s.wts[keep[r]];
    }
    if (!(wt.sum() > 0.0)) {
      throw StratumEmptyError("no weighted rows for " + role + " in fold " +
                              std::to_string(v));
    }
    FittedLearner fitted = learner.fit(Wt, yt, wt);
    if (fitted.flagged) {
      flags.push_back(role + ": flagged fit (fold " + std::to_string(v) + ")");
    }
    fits.push_back(wrap(std::move(fitted)));
  }
  return fits;
}

}  // namespace

Eigen::VectorXd NuisanceFit::pseudo_regression(int k, int fold, const Eigen::MatrixXd& W) const {
  Eigen::VectorXd values = q_for(k, fold)(W);
  if (layout == Layout::discrete_conditional && k == 2) {
    values = values.cwiseProduct(q_for(1, fold)(W));
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      values[i] = clamp(values[i], bounds.prob_lo, bounds.prob_hi);
    }
  }
  return values;
}

Predictor fit_treatment_mechanism(const Dataset& d, const TreatmentMode& mode,
                                  const Truncation& bounds) {
  if (std::holds_alternative<TreatmentKnown>(mode)) {
    double v = std::get<TreatmentKnown>(mode).value;
    if (!(v > 0.0 && v < 1.0)) {
      throw PositivityError("known treatment probability must lie in (0,1)");
    }
    double t = bounds.treatment(v);
    return Predictor([t](const Eigen::MatrixXd& W) {
      return Eigen::VectorXd::Constant(W.rows(), t);
    });
  }
  if (std::holds_alternative<TreatmentKnownFunction>(mode)) {
    auto fn = std::get<TreatmentKnownFunction>(mode).fn;
    double lo = bounds.treat_lo, hi = bounds.treat_hi;
    return Predictor([fn, lo, hi](const Eigen::MatrixXd& W) {
      Eigen::VectorXd p = fn(W);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        p[i] = clamp(p[i], lo, hi);
      }
      return p;
    });
  }

  int n1 = 0;
  for (const auto& o : d.observations) {
    n1 += o.a;
  }
  if (n1 == 0 || n1 == d.size()) {
    throw PositivityError("empirical arm probability is degenerate");
  }
  Eigen::MatrixXd W = d.covariate_matrix();
  Eigen::VectorXd arm(d.size()), ones = Eigen::VectorXd::Ones(d.size());
  for (int i = 0; i < d.size(); ++i) {
    arm[i] = d.observations[static_cast<std::size_t>(i)].a;
  }

  if (std::holds_alternative<TreatmentLogistic>(mode)) {
    Learner glm = make_glm_learner(LossKind::weighted_bernoulli, false);
    return truncated(glm.fit(W, arm, ones), bounds.treat_lo, bounds.treat_hi);
  }

  // Ensemble: cross-validated pick between intercept-only and main terms.
  std::vector<Learner> lib{make_mean_learner(),
                           make_glm_learner(LossKind::weighted_bernoulli, false)};
  FoldPlan folds = FoldPlan::stratified(d, std::min(10, d.size()), 1);
  CvSelection sel = cv_select(lib, LossKind::weighted_bernoulli, W, arm, ones,
                              folds.assignment, folds.V);
  return truncated(lib[static_cast<std::size_t>(sel.index)].fit(W, arm, ones),
                   bounds.treat_lo, bounds.treat_hi);
}

std::vector<Predictor> fit_treatment_mechanism_folds(const Dataset& d,
                                                     const TreatmentMode& mode,
                                                     const FoldPlan& folds,
                                                     const Truncation& bounds) {
  if (std::holds_alternative<TreatmentKnown>(mode) ||
      std::holds_alternative<TreatmentKnownFunction>(mode) || folds.V == 1) {
    return {fit_treatment_mechanism(d, mode, bounds)};
  }
  std::vector<Predictor> out;
  out.reserve(static_cast<std::size_t>(folds.V));
  for (int v = 0; v < folds.V; ++v) {
    Dataset train;
    train.covariate_dim = d.covariate_dim;
    train.biomarker_kind = d.biomarker_kind;
    for (int i : folds.training_indices(v)) {
      train.observations.push_back(d.observations[static_cast<std::size_t>(i)]);
    }
    out.push_back(fit_treatment_mechanism(train, mode, bounds));
  }
  return out;
}

NuisanceFit fit_outcome_regressions(const Dataset& d, const TargetSpec& spec,
                                    const Eigen::VectorXd& weights,
                                    const FoldPlan& folds,
                                    const std::vector<Learner>& library,
                                    const Truncation& bounds) {
  if (spec.continuous()) {
    throw std::invalid_argument("fit_outcome_regressions: discrete mode only");
  }
  if (weights.size() != d.size()) {
    throw std::invalid_argument("fit_outcome_regressions: weight size mismatch");
  }

  NuisanceFit fit;
  fit.folds = folds;
  fit.bounds = bounds;
  fit.layout = NuisanceFit::Layout::discrete_conditional;

  const double target = spec.s1_star;
  std::vector<int> rows_q1, rows_q2, rows_q3;
  for (int i = 0; i < d.size(); ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    if (o.delta != 1) continue;
    if (o.a == 1) {
      rows_q1.push_back(i);
      if (o.s && *o.s == target) {
        rows_q2.push_back(i);
      }
    } else {
      rows_q3.push_back(i);
    }
  }
  if (rows_q2.empty()) {
    throw StratumEmptyError(
        "no treated measured subject with biomarker at the target stratum (q2)");
  }

  auto wrap = [&bounds](FittedLearner f) {
    return truncated(std::move(f), bounds.prob_lo, bounds.prob_hi);
  };
  auto ind_s = [target](const Observation& o) {
    return (o.s && *o.s == target) ? 1.0 : 0.0;
  };
  auto outcome_y = [](const Observation& o) { return static_cast<double>(o.y); };
  auto ind_control_sc = [target](const Observation& o) {
    return (o.y == 0 && o.s_c && *o.s_c == target) ? 1.0 : 0.0;
  };

  fit.q[0] = fit_folded(gather(d, rows_q1, ind_s, weights, folds), library,
                        LossKind::weighted_bernoulli, folds, wrap, fit.flags, "q1");
  fit.q[1] = fit_folded(gather(d, rows_q2, outcome_y, weights, folds), library,
                        LossKind::weighted_bernoulli, folds, wrap, fit.flags, "q2");
  fit.q[2] = fit_folded(gather(d, rows_q3, ind_control_sc, weights, folds), library,
                        LossKind::weighted_bernoulli, folds, wrap, fit.flags, "q3");
  return fit;
}

void fit_kernel_regression_qkh(const Dataset& d, const TargetSpec& spec, int k,
                               const FoldPlan& folds,
                               const std::vector<Learner>& library,
                               const Truncation& bounds, NuisanceFit& out) {
  if (!spec.continuous() || !spec.bandwidth) {
    throw std::invalid_argument("fit_kernel_regression_qkh: continuous mode with a resolved bandwidth required");
  }
  const int arm = arm_of(k);
  std::vector<int> rows;
  for (int i = 0; i < d.size(); ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    if (o.delta == 1 && o.a == arm) {
      rows.push_back(i);
    }
  }
  if (rows.empty()) {
    throw StratumEmptyError("empty arm for kernel regression, component " +
                            std::to_string(k));
  }
  auto outcome = [&spec, k](const Observation& o) { return pseudo_outcome(o, k, spec); };
  auto wrap = [&bounds](FittedLearner f) {
    return floored(std::move(f), bounds.density_floor);
  };
  out.layout = NuisanceFit::Layout::continuous_direct;
  Eigen::VectorXd unit = Eigen::VectorXd::Ones(d.size());
  out.q[static_cast<std::size_t>(k - 1)] =
      fit_folded(gather(d, rows, outcome, unit, folds), library,
                 LossKind::weighted_squared_error, folds, wrap, out.flags,
                 "q" + std::to_string(k) + "h");
}

Eigen::VectorXd pseudo_outcome_vector(const Dataset& d, int k, const TargetSpec& spec) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(d.size());
  const int arm = arm_of(k);
  for (int i = 0; i < d.size(); ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    if (o.a == arm && o.delta == 1) {
      f[i] = pseudo_outcome(o, k, spec);
    }
  }
  return f;
}

}  // namespace pstmle
