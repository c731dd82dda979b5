#include "pstmle/tmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "pstmle/glm.hpp"

namespace pstmle {

namespace {

void require_valid(const Dataset& d) {
  auto violations = validate_dataset(d);
  if (!violations.empty()) {
    throw DataError("invalid dataset: row " + std::to_string(violations.front().row) +
                    ": " + violations.front().message + " (" +
                    std::to_string(violations.size()) + " violation(s))");
  }
}

}  // namespace

PsiEstimate targeted_plugin(const Dataset& d, const TargetSpec& spec, const NuisanceFit& fit,
                            const Eigen::VectorXd& omega, EstimatorMode mode) {
  const int n = d.size();
  const FoldPlan& folds = fit.folds;

  PsiEstimate est;
  est.mode = mode;
  est.influence_rows.resize(n, 3);
  est.flags = fit.flags;

  // Subject-level fluctuated fits for the compatibility report.
  Eigen::MatrixXd qstar_subject(n, 3);

  double score_max = 0.0;
  for (int k = 1; k <= 3; ++k) {
    const int arm = arm_of(k);
    Eigen::VectorXd f = pseudo_outcome_vector(d, k, spec);
    Eigen::VectorXd offset(n), wt(n);
    std::vector<double> trainmean(static_cast<std::size_t>(folds.V), 0.0);

    // Fold-specific evaluations: validation rows give subject-level values,
    // training rows give the fold's empirical covariate marginal.
    for (int v = 0; v < folds.V; ++v) {
      std::vector<int> valid =
          folds.V == 1 ? folds.training_indices(0) : folds.validation_indices(v);
      const Predictor& gv = fit.treatment_for(v);

      Eigen::MatrixXd Wv(valid.size(), d.covariate_dim);
      for (std::size_t r = 0; r < valid.size(); ++r) {
        Wv.row(static_cast<Eigen::Index>(r)) =
            d.observations[static_cast<std::size_t>(valid[r])].w.transpose();
      }
      Eigen::VectorXd qvals = fit.pseudo_regression(k, v, Wv);
      Eigen::VectorXd gvals = gv(Wv);
      for (std::size_t r = 0; r < valid.size(); ++r) {
        const int i = valid[r];
        const Observation& o = d.observations[static_cast<std::size_t>(i)];
        double garm = arm == 1 ? gvals[static_cast<Eigen::Index>(r)]
                               : 1.0 - gvals[static_cast<Eigen::Index>(r)];
        if (!(garm > 0.0 && garm < 1.0)) {
          throw PositivityError("treatment prediction outside (0,1)");
        }
        offset[i] = logit(qvals[static_cast<Eigen::Index>(r)]);
        wt[i] = o.a == arm ? 1.0 / garm : 0.0;
      }
    }

    Eigen::VectorXd fluct_weights = wt.cwiseProduct(omega);
    FluctuationResult fl = solve_logistic_fluctuation(offset, f, fluct_weights);
    if (fl.clipped) {
      throw FluctuationError("targeting step for component " + std::to_string(k) +
                             " did not converge; score " + std::to_string(fl.score));
    }
    est.epsilons[k - 1] = fl.epsilon;

    // Fluctuated subject-level fits and fold plug-ins.
    Eigen::VectorXd qstar(n);
    for (int i = 0; i < n; ++i) {
      qstar[i] = expit(offset[i] + fl.epsilon);
    }
    qstar_subject.col(k - 1) = qstar;

    for (int v = 0; v < folds.V; ++v) {
      std::vector<int> train = folds.training_indices(v);
      double num = 0.0, den = 0.0;
      if (folds.V == 1) {
        for (int i : train) {
          num += omega[i] * qstar[i];
          den += omega[i];
        }
      } else {
        Eigen::MatrixXd Wt(train.size(), d.covariate_dim);
        for (std::size_t r = 0; r < train.size(); ++r) {
          Wt.row(static_cast<Eigen::Index>(r)) =
              d.observations[static_cast<std::size_t>(train[r])].w.transpose();
        }
        Eigen::VectorXd qvals = fit.pseudo_regression(k, v, Wt);
        for (std::size_t r = 0; r < train.size(); ++r) {
          double qs = expit(logit(qvals[static_cast<Eigen::Index>(r)]) + fl.epsilon);
          num += omega[train[r]] * qs;
          den += omega[train[r]];
        }
      }
      if (!(den > 0.0)) {
        throw StratumEmptyError("training fold " + std::to_string(v) +
                                " carries no weight");
      }
      trainmean[static_cast<std::size_t>(v)] = num / den;
    }

    double psi_k = 0.0;
    for (int i = 0; i < n; ++i) {
      psi_k += trainmean[static_cast<std::size_t>(folds.V == 1 ? 0 : folds.fold_of(i))];
    }
    psi_k /= n;
    est.psi[k - 1] = psi_k;

    double score_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      double center = trainmean[static_cast<std::size_t>(folds.V == 1 ? 0 : folds.fold_of(i))];
      double resid = wt[i] * (f[i] - qstar[i]);
      score_sum += omega[i] * resid;
      est.influence_rows(i, k - 1) = omega[i] * (resid + qstar[i] - center);
    }
    score_max = std::max(score_max, std::abs(score_sum / n));
  }

  est.fluctuation_score_max_abs = score_max;

  bool compatible = true;
  for (int i = 0; i < n; ++i) {
    if (qstar_subject(i, 1) > qstar_subject(i, 0) + 1e-12) {
      compatible = false;
      break;
    }
  }
  est.compatible_p2_le_p1 = compatible;

  Eigen::RowVector3d mean = est.influence_rows.colwise().mean();
  Eigen::MatrixXd centered = est.influence_rows.rowwise() - mean;
  est.sigma = (centered.transpose() * centered) / n;
  return est;
}

PsiEstimate tmle_estimate(const Dataset& d, const TargetSpec& spec, const NuisanceFit& fit) {
  require_valid(d);
  if (spec.continuous()) {
    throw std::invalid_argument("tmle_estimate: discrete mode only");
  }
  if (!d.single_phase()) {
    throw DataError("tmle_estimate: single-phase data required (use the two-phase estimators)");
  }
  if (fit.folds.V != 1) {
    throw std::invalid_argument("tmle_estimate: fold-specific fits belong to cv_tmle_estimate");
  }
  return targeted_plugin(d, spec, fit, Eigen::VectorXd::Ones(d.size()), EstimatorMode::tmle);
}

PsiEstimate tmle_estimate(const Dataset& d, const TargetSpec& spec,
                          const EstimatorConfig& config) {
  FoldPlan folds = FoldPlan::degenerate(d.size());
  NuisanceFit fit = fit_outcome_regressions(
      d, spec, Eigen::VectorXd::Ones(d.size()), folds,
      learner_library(config.learners, LossKind::weighted_bernoulli), config.bounds);
  fit.treatment = {fit_treatment_mechanism(d, config.treatment, config.bounds)};
  return tmle_estimate(d, spec, fit);
}

PsiEstimate cv_tmle_estimate(const Dataset& d, const TargetSpec& spec, const FoldPlan& folds,
                             const EstimatorConfig& config) {
  require_valid(d);
  if (spec.continuous()) {
    throw std::invalid_argument("cv_tmle_estimate: discrete mode only");
  }
  if (!d.single_phase()) {
    throw DataError("cv_tmle_estimate: single-phase data required");
  }
  NuisanceFit fit = fit_outcome_regressions(
      d, spec, Eigen::VectorXd::Ones(d.size()), folds,
      learner_library(config.learners, LossKind::weighted_bernoulli), config.bounds);
  fit.treatment = fit_treatment_mechanism_folds(d, config.treatment, folds, config.bounds);
  return targeted_plugin(d, spec, fit, Eigen::VectorXd::Ones(d.size()),
                         EstimatorMode::cv_tmle);
}

namespace {

ContrastReport finish_report(const PsiEstimate& est, double value, Eigen::Vector3d gradient) {
  ContrastReport report;
  report.estimate = value;
  report.gradient = gradient;
  const double n = static_cast<double>(est.influence_rows.rows());
  double var = gradient.transpose() * est.sigma * gradient;
  report.std_error = std::sqrt(std::max(var, 0.0) / n);
  report.ci_lower = value - 1.96 * report.std_error;
  report.ci_upper = value + 1.96 * report.std_error;
  return report;
}

void fill_diagnostics(const PsiEstimate& est, ContrastReport& report) {
  EifDiagnostics diag = eif_diagnostics(est);
  report.diagnostics.eif_mean_max_abs = diag.eif_mean_max_abs;
  report.diagnostics.min_eigenvalue_sigma = diag.min_eigenvalue_sigma;
  report.diagnostics.denominator = est.psi[0] - est.psi[2];
}

}  // namespace

ContrastReport contrast(const PsiEstimate& est, ContrastKind kind) {
  if (kind == ContrastKind::raw_psi) {
    throw std::invalid_argument("contrast: raw_psi has no scalar contrast");
  }
  const double x1 = est.psi[0], x2 = est.psi[1], x3 = est.psi[2];
  const double denom = x1 - x3;

  ContrastReport report;
  fill_diagnostics(est, report);

  if (kind == ContrastKind::risk_difference) {
    if (!(x1 > 0.0)) {
      report.identifiability_failure = true;
      report.estimate = std::numeric_limits<double>::quiet_NaN();
      report.std_error = report.ci_lower = report.ci_upper = report.estimate;
      return report;
    }
    Eigen::Vector3d grad((x3 - x2) / (x1 * x1), 1.0 / x1, -1.0 / x1);
    ContrastReport r = finish_report(est, (x2 - x3) / x1, grad);
    r.diagnostics = report.diagnostics;
    return r;
  }

  // Ratio contrasts: a nonpositive denominator contradicts identifiability.
  if (!(denom > 0.0) || !(x2 > 0.0)) {
    report.identifiability_failure = true;
    report.estimate = std::numeric_limits<double>::quiet_NaN();
    report.std_error = report.ci_lower = report.ci_upper = report.estimate;
    return report;
  }

  const double log_rr = std::log(x2) - std::log(denom);
  Eigen::Vector3d grad(-1.0 / denom, 1.0 / x2, 1.0 / denom);
  ContrastReport r = finish_report(est, log_rr, grad);
  r.diagnostics = report.diagnostics;
  if (kind == ContrastKind::log_relative_risk) {
    return r;
  }

  // Vaccine efficacy: 1 - exp(log RR); interval transformed endpoint-wise.
  ContrastReport ve;
  ve.diagnostics = r.diagnostics;
  double rr = std::exp(log_rr);
  ve.estimate = 1.0 - rr;
  ve.std_error = rr * r.std_error;
  ve.ci_lower = 1.0 - std::exp(r.ci_upper);
  ve.ci_upper = 1.0 - std::exp(r.ci_lower);
  ve.gradient = -rr * grad;
  return ve;
}

EifDiagnostics eif_diagnostics(const PsiEstimate& est) {
  EifDiagnostics diag;
  if (est.influence_rows.rows() > 0) {
    diag.eif_mean_max_abs = est.influence_rows.colwise().mean().cwiseAbs().maxCoeff();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(est.sigma);
  diag.min_eigenvalue_sigma = solver.eigenvalues().minCoeff();
  return diag;
}

double estimate_psi4(const Dataset& d, const EstimatorConfig& config) {
  return estimate_psi4(d, config, Eigen::VectorXd::Ones(d.size()));
}

double estimate_psi4(const Dataset& d, const EstimatorConfig& config,
                     const Eigen::VectorXd& weights) {
  require_valid(d);
  if (d.biomarker_kind != BiomarkerKind::discrete) {
    throw Error("estimate_psi4: only supported for discrete biomarkers");
  }

  // Support: union of observed treated biomarker and control crossover atoms.
  std::set<double> atoms;
  std::vector<int> rows_treated, rows_control;
  for (int i = 0; i < d.size(); ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    if (o.delta != 1) continue;
    if (o.a == 1) {
      rows_treated.push_back(i);
      if (o.s) atoms.insert(*o.s);
    } else {
      rows_control.push_back(i);
      if (o.y == 0 && o.s_c) atoms.insert(*o.s_c);
    }
  }
  if (rows_treated.empty() || rows_control.empty()) {
    throw StratumEmptyError("estimate_psi4: an arm has no measured subjects");
  }

  // These fits feed a diagnostic plug-in rather than inverse weighting, so
  // they use an essentially untruncated range.
  Truncation diag_bounds = config.bounds;
  diag_bounds.prob_lo = 1e-6;
  diag_bounds.prob_hi = 1.0 - 1e-6;
  auto library = learner_library(config.learners, LossKind::weighted_bernoulli);
  FoldPlan folds = FoldPlan::degenerate(d.size());

  Eigen::MatrixXd W = d.covariate_matrix();
  Eigen::VectorXd psi4_terms = Eigen::VectorXd::Zero(d.size());

  auto fit_indicator = [&](const std::vector<int>& rows,
                           const std::function<double(const Observation&)>& outcome) {
    Eigen::MatrixXd Wr(rows.size(), d.covariate_dim);
    Eigen::VectorXd yr(rows.size()), wr(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Observation& o = d.observations[static_cast<std::size_t>(rows[r])];
      Wr.row(static_cast<Eigen::Index>(r)) = o.w.transpose();
      yr[static_cast<Eigen::Index>(r)] = outcome(o);
      wr[static_cast<Eigen::Index>(r)] = weights[rows[r]];
    }
    // Degenerate outcomes collapse to their (weighted) mean.
    double wsum = wr.sum();
    double m = (wr.array() * yr.array()).sum() / wsum;
    if (m == 0.0 || m == 1.0) {
      return Predictor([m](const Eigen::MatrixXd& X) {
        return Eigen::VectorXd::Constant(X.rows(), m);
      });
    }
    std::vector<int> fold_ids(rows.size(), 0);
    CvSelection sel{0, {}, {}};
    if (library.size() > 1) {
      sel = cv_select(library, LossKind::weighted_bernoulli, Wr, yr, wr, fold_ids, 1);
    }
    FittedLearner f = library[static_cast<std::size_t>(sel.index)].fit(Wr, yr, wr);
    auto predict = f.predict;
    double lo = diag_bounds.prob_lo, hi = diag_bounds.prob_hi;
    return Predictor([predict, lo, hi](const Eigen::MatrixXd& X) {
      Eigen::VectorXd p = predict(X);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        p[i] = clamp(p[i], lo, hi);
      }
      return p;
    });
  };

  for (double atom : atoms) {
    Predictor treated_law = fit_indicator(rows_treated, [atom](const Observation& o) {
      return (o.s && *o.s == atom) ? 1.0 : 0.0;
    });
    Predictor control_law = fit_indicator(rows_control, [atom](const Observation& o) {
      return (o.y == 0 && o.s_c && *o.s_c == atom) ? 1.0 : 0.0;
    });
    Eigen::VectorXd ps = treated_law(W);
    Eigen::VectorXd pc = control_law(W);
    for (int i = 0; i < d.size(); ++i) {
      double gap = pc[i] - ps[i];
      if (gap > 0.0) {
        psi4_terms[i] += gap * ps[i];
      }
    }
  }

  // Weighted empirical covariate marginal; plain empirical in single phase.
  double wsum = weights.sum();
  return (weights.array() * psi4_terms.array()).sum() / wsum;
}

}  // namespace pstmle
