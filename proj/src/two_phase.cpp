#include "pstmle/two_phase.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace pstmle {

StabilizedWeights stabilize_weights(const Dataset& d) {
  const int n = d.size();
  StabilizedWeights sw;
  sw.pi_bar.resize(n);
  sw.w_eff.resize(n);

  std::array<double, 2> sum = {0.0, 0.0};
  std::array<int, 2> count = {0, 0};
  for (const auto& o : d.observations) {
    if (!(o.pi > 0.0 && o.pi <= 1.0)) {
      throw DataError("stabilize_weights: sampling probability outside (0,1]");
    }
    sum[static_cast<std::size_t>(o.a)] += o.delta / o.pi;
    count[static_cast<std::size_t>(o.a)] += 1;
  }
  for (int a = 0; a < 2; ++a) {
    if (count[static_cast<std::size_t>(a)] == 0) {
      throw StratumEmptyError("stabilize_weights: arm " + std::to_string(a) + " is empty");
    }
    if (sum[static_cast<std::size_t>(a)] == 0.0) {
      throw StratumEmptyError("stabilize_weights: arm " + std::to_string(a) +
                              " has no measured subjects");
    }
    sw.c[static_cast<std::size_t>(a)] =
        sum[static_cast<std::size_t>(a)] / count[static_cast<std::size_t>(a)];
  }
  for (int i = 0; i < n; ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    sw.pi_bar[i] = sw.c[static_cast<std::size_t>(o.a)] * o.pi;
    sw.w_eff[i] = o.delta / sw.pi_bar[i];
  }
  return sw;
}

PsiEstimate ipw_tmle(const Dataset& d, const TargetSpec& spec, const EstimatorConfig& config) {
  if (spec.continuous()) {
    throw std::invalid_argument("ipw_tmle: discrete mode only");
  }
  StabilizedWeights sw = stabilize_weights(d);
  FoldPlan folds = FoldPlan::degenerate(d.size());
  NuisanceFit fit = fit_outcome_regressions(
      d, spec, sw.w_eff, folds,
      learner_library(config.learners, LossKind::weighted_bernoulli), config.bounds);
  fit.treatment = {fit_treatment_mechanism(d, config.treatment, config.bounds)};
  return targeted_plugin(d, spec, fit, sw.w_eff, EstimatorMode::ipw_tmle);
}

PsiEstimate one_step_estimate(const Dataset& d, const TargetSpec& spec,
                              const EstimatorConfig& config) {
  if (spec.continuous()) {
    throw std::invalid_argument("one_step_estimate: discrete mode only");
  }
  const int n = d.size();
  StabilizedWeights sw = stabilize_weights(d);
  FoldPlan folds = FoldPlan::degenerate(n);
  auto library = learner_library(config.learners, LossKind::weighted_bernoulli);
  NuisanceFit fit =
      fit_outcome_regressions(d, spec, sw.w_eff, folds, library, config.bounds);
  fit.treatment = {fit_treatment_mechanism(d, config.treatment, config.bounds)};

  Eigen::MatrixXd W = d.covariate_matrix();
  Eigen::VectorXd g1 = fit.treatment[0](W);

  PsiEstimate est;
  est.mode = EstimatorMode::one_step;
  est.influence_rows.resize(n, 3);
  est.flags = fit.flags;
  est.fluctuation_score_max_abs = std::numeric_limits<double>::quiet_NaN();

  for (int k = 1; k <= 3; ++k) {
    const int arm = arm_of(k);
    Eigen::VectorXd f = pseudo_outcome_vector(d, k, spec);
    Eigen::VectorXd q = fit.pseudo_regression(k, 0, W);

    // Projection of f_k onto phase-one information, fit per outcome cell
    // among measured arm-a_k subjects.  Structural-zero cells stay zero.
    std::array<Predictor, 2> proj;
    for (int ycell = 0; ycell < 2; ++ycell) {
      const bool structural_zero = (k == 2 && ycell == 0) || (k == 3 && ycell == 1);
      if (structural_zero) continue;
      std::vector<int> cell_rows, measured_rows;
      for (int i = 0; i < n; ++i) {
        const Observation& o = d.observations[static_cast<std::size_t>(i)];
        if (o.a == arm && o.y == ycell) {
          cell_rows.push_back(i);
          if (o.delta == 1) measured_rows.push_back(i);
        }
      }
      if (cell_rows.empty()) continue;  // predictor never evaluated
      if (measured_rows.empty()) {
        throw StratumEmptyError("one_step_estimate: no measured subjects in arm " +
                                std::to_string(arm) + ", outcome " + std::to_string(ycell) +
                                " cell for component " + std::to_string(k));
      }
      Eigen::MatrixXd Wc(measured_rows.size(), d.covariate_dim);
      Eigen::VectorXd yc(measured_rows.size()),
          ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(measured_rows.size()));
      for (std::size_t r = 0; r < measured_rows.size(); ++r) {
        const Observation& o = d.observations[static_cast<std::size_t>(measured_rows[r])];
        Wc.row(static_cast<Eigen::Index>(r)) = o.w.transpose();
        yc[static_cast<Eigen::Index>(r)] = pseudo_outcome(o, k, spec);
      }
      std::vector<int> fold_ids(measured_rows.size(), 0);
      CvSelection sel{0, {}, {}};
      if (library.size() > 1) {
        sel = cv_select(library, LossKind::weighted_bernoulli, Wc, yc, ones, fold_ids, 1);
      }
      FittedLearner fitted = library[static_cast<std::size_t>(sel.index)].fit(Wc, yc, ones);
      auto predict = fitted.predict;
      proj[static_cast<std::size_t>(ycell)] = Predictor([predict](const Eigen::MatrixXd& X) {
        Eigen::VectorXd p = predict(X);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          p[i] = clamp(p[i], 0.0, 1.0);
        }
        return p;
      });
    }

    const double plugin = q.mean();
    double mean_infl = 0.0;
    for (int i = 0; i < n; ++i) {
      const Observation& o = d.observations[static_cast<std::size_t>(i)];
      double row;
      if (o.a != arm) {
        row = q[i] - plugin;
      } else {
        double garm = arm == 1 ? g1[i] : 1.0 - g1[i];
        const bool structural_zero = (k == 2 && o.y == 0) || (k == 3 && o.y == 1);
        double m = 0.0;
        if (!structural_zero) {
          const Predictor& cell = proj[static_cast<std::size_t>(o.y)];
          m = cell.valid() ? cell.at(o.w) : 0.0;
        }
        double dpi = o.delta / o.pi;
        double completed = dpi * f[i] + (1.0 - dpi) * m;
        row = (completed - q[i]) / garm + q[i] - plugin;
      }
      est.influence_rows(i, k - 1) = row;
      mean_infl += row;
    }
    mean_infl /= n;
    est.psi[k - 1] = plugin + mean_infl;
    if (est.psi[k - 1] < 0.0 || est.psi[k - 1] > 1.0) {
      est.flags.push_back("component " + std::to_string(k) +
                          " estimate outside [0,1] (one-step is not a plug-in)");
    }
  }

  Eigen::RowVector3d mean = est.influence_rows.colwise().mean();
  Eigen::MatrixXd centered = est.influence_rows.rowwise() - mean;
  est.sigma = (centered.transpose() * centered) / n;
  return est;
}

Dataset with_estimated_pi(const Dataset& d, const std::vector<int>& coarsening) {
  if (coarsening.size() != static_cast<std::size_t>(d.size())) {
    throw std::invalid_argument("with_estimated_pi: coarsening size mismatch");
  }
  std::map<std::tuple<int, int, int>, std::pair<int, int>> cells;  // (V,a,y) -> (n, n_measured)
  for (int i = 0; i < d.size(); ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    auto& cell = cells[{coarsening[static_cast<std::size_t>(i)], o.a, o.y}];
    cell.first += 1;
    cell.second += o.delta;
  }
  Dataset out = d;
  for (int i = 0; i < d.size(); ++i) {
    Observation& o = out.observations[static_cast<std::size_t>(i)];
    const auto& cell = cells[{coarsening[static_cast<std::size_t>(i)], o.a, o.y}];
    if (cell.second == 0) {
      throw StratumEmptyError("with_estimated_pi: cell with no measured subjects");
    }
    o.pi = static_cast<double>(cell.second) / cell.first;
  }
  return out;
}

}  // namespace pstmle
