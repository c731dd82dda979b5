#include "pstmle/continuous.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pstmle/quadrature.hpp"

namespace pstmle {

PsiEstimate cv_tmle_continuous(const Dataset& d, const TargetSpec& spec, const FoldPlan& folds,
                               const EstimatorConfig& config) {
  if (!spec.continuous() || !spec.bandwidth) {
    throw std::invalid_argument(
        "cv_tmle_continuous: continuous mode with a resolved bandwidth required");
  }
  if (!d.single_phase()) {
    throw DataError("cv_tmle_continuous: single-phase data required");
  }
  {
    auto violations = validate_dataset(d);
    if (!violations.empty()) {
      throw DataError("invalid dataset: row " + std::to_string(violations.front().row) +
                      ": " + violations.front().message);
    }
  }

  const int n = d.size();
  auto library = learner_library(config.learners, LossKind::weighted_squared_error);

  NuisanceFit fit;
  fit.folds = folds;
  fit.bounds = config.bounds;
  for (int k = 1; k <= 3; ++k) {
    fit_kernel_regression_qkh(d, spec, k, folds, library, config.bounds, fit);
  }
  fit.treatment = fit_treatment_mechanism_folds(d, config.treatment, folds, config.bounds);

  PsiEstimate est;
  est.mode = EstimatorMode::continuous_cv_tmle;
  est.bandwidth_used = spec.bandwidth;
  est.influence_rows.resize(n, 3);
  est.flags = fit.flags;

  double score_max = 0.0;
  for (int k = 1; k <= 3; ++k) {
    const int arm = arm_of(k);
    Eigen::VectorXd f = pseudo_outcome_vector(d, k, spec);
    Eigen::VectorXd q_subject(n), wt(n);

    for (int v = 0; v < folds.V; ++v) {
      std::vector<int> valid =
          folds.V == 1 ? folds.training_indices(0) : folds.validation_indices(v);
      const Predictor& qv = fit.q_for(k, v);
      const Predictor& gv = fit.treatment_for(v);
      Eigen::MatrixXd Wv(valid.size(), d.covariate_dim);
      for (std::size_t r = 0; r < valid.size(); ++r) {
        Wv.row(static_cast<Eigen::Index>(r)) =
            d.observations[static_cast<std::size_t>(valid[r])].w.transpose();
      }
      Eigen::VectorXd qvals = qv(Wv);
      Eigen::VectorXd gvals = gv(Wv);
      for (std::size_t r = 0; r < valid.size(); ++r) {
        const int i = valid[r];
        const Observation& o = d.observations[static_cast<std::size_t>(i)];
        double garm = arm == 1 ? gvals[static_cast<Eigen::Index>(r)]
                               : 1.0 - gvals[static_cast<Eigen::Index>(r)];
        if (!(garm > 0.0 && garm < 1.0)) {
          throw PositivityError("treatment prediction outside (0,1)");
        }
        q_subject[i] = qvals[static_cast<Eigen::Index>(r)];
        wt[i] = o.a == arm ? 1.0 / garm : 0.0;
      }
    }

    // Closed-form fluctuation from the root of the monotone score.
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      num += wt[i] * f[i];
      den += wt[i] * q_subject[i];
    }
    if (!(den > 0.0)) {
      throw FluctuationError("component " + std::to_string(k) +
                             ": arm carries no weight in the fluctuation");
    }
    if (!(num > 0.0)) {
      throw FluctuationError("component " + std::to_string(k) +
                             ": nonpositive weighted pseudo-outcome total; the log-linear "
                             "fluctuation is undefined (signed kernel?)");
    }
    const double eps = std::log(num / den);
    est.epsilons[k - 1] = eps;
    const double mult = num / den;

    // The root minimizes the squared score criterion: the score is strictly
    // decreasing in epsilon, so check it changes sign across the root.
    {
      auto zscore = [&](double e) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
          s += wt[i] * (f[i] - std::exp(std::log(q_subject[i]) + e));
        }
        return s / n;
      };
      if (!(zscore(eps - 0.5) > 0.0 && zscore(eps + 0.5) < 0.0)) {
        throw FluctuationError("component " + std::to_string(k) +
                               ": closed-form fluctuation failed its bracketing check");
      }
    }

    // Fold plug-ins over training-fold empirical covariate marginals.
    std::vector<double> trainmean(static_cast<std::size_t>(folds.V), 0.0);
    for (int v = 0; v < folds.V; ++v) {
      std::vector<int> train = folds.training_indices(v);
      double acc = 0.0;
      if (folds.V == 1) {
        for (int i : train) {
          acc += mult * q_subject[i];
        }
      } else {
        const Predictor& qv = fit.q_for(k, v);
        Eigen::MatrixXd Wt(train.size(), d.covariate_dim);
        for (std::size_t r = 0; r < train.size(); ++r) {
          Wt.row(static_cast<Eigen::Index>(r)) =
              d.observations[static_cast<std::size_t>(train[r])].w.transpose();
        }
        Eigen::VectorXd qvals = qv(Wt);
        acc = mult * qvals.sum();
      }
      trainmean[static_cast<std::size_t>(v)] = acc / static_cast<double>(train.size());
    }

    double psi_k = 0.0;
    double score_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double center =
          trainmean[static_cast<std::size_t>(folds.V == 1 ? 0 : folds.fold_of(i))];
      const double qstar = mult * q_subject[i];
      psi_k += center;
      score_sum += wt[i] * (f[i] - qstar);
      est.influence_rows(i, k - 1) = wt[i] * (f[i] - qstar) + qstar - center;
    }
    est.psi[k - 1] = psi_k / n;
    score_max = std::max(score_max, std::abs(score_sum / n));
  }
  est.fluctuation_score_max_abs = score_max;

  Eigen::RowVector3d mean = est.influence_rows.colwise().mean();
  Eigen::MatrixXd centered = est.influence_rows.rowwise() - mean;
  est.sigma = (centered.transpose() * centered) / n;
  return est;
}

ContrastReport smoothed_contrast(const PsiEstimate& est, ContrastKind kind) {
  if (est.mode != EstimatorMode::continuous_cv_tmle) {
    throw std::invalid_argument("smoothed_contrast: continuous-mode estimate required");
  }
  ContrastReport report = contrast(est, kind);
  if (report.identifiability_failure) {
    return report;
  }

  // Same interval through the bandwidth-scaled convention; the scale factors
  // cancel and the two computations must agree.
  if (est.bandwidth_used) {
    const double n = static_cast<double>(est.influence_rows.rows());
    const double h = *est.bandwidth_used;
    Eigen::VectorXd proj = est.influence_rows * report.gradient;
    double m = proj.mean();
    double sd_scaled = std::sqrt((std::sqrt(h) * (proj.array() - m)).square().sum() / n);
    double se_scaled = sd_scaled / std::sqrt(n * h);
    if (std::abs(se_scaled - report.std_error) >
        1e-9 * std::max(1.0, std::abs(report.std_error))) {
      throw Error("smoothed_contrast: bandwidth-scaled standard error disagrees");
    }
  }
  return report;
}

double lscv_criterion(const std::vector<double>& values, const KernelSpec& kernel, double h) {
  const std::size_t n = values.size();
  if (n < 2 || !(h > 0.0)) {
    throw std::invalid_argument("lscv_criterion: need two values and h > 0");
  }
  std::vector<double> x = values;
  std::sort(x.begin(), x.end());

  // Pair scan bounded by the kernel tails (selfconv support is twice the
  // kernel's, 13 bandwidths covers the Gaussian families to below 1e-16).
  const double cutoff =
      kernel.family == KernelFamily::uniform ? 1.0 * h : 13.0 * h;

  double sum_conv = static_cast<double>(n) * kernel_selfconv(kernel.family, 0.0);
  double sum_kern = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double t = x[j] - x[i];
      if (t > cutoff) break;
      sum_conv += 2.0 * kernel_selfconv(kernel.family, t / h);
      sum_kern += 2.0 * kernel_value(kernel.family, t / h);
    }
  }
  const double nn = static_cast<double>(n);
  double roughness = sum_conv / (nn * nn * h);
  double cv_term = sum_kern / (nn * (nn - 1.0) * h);
  return roughness - 2.0 * cv_term;
}

double select_bandwidth(const Dataset& d, const BandwidthMethod& method,
                        const KernelSpec& kernel) {
  if (method.kind == BandwidthMethod::Kind::fixed) {
    if (!(method.value > 0.0)) {
      throw std::invalid_argument("select_bandwidth: fixed bandwidth must be positive");
    }
    return method.value;
  }

  std::vector<double> s;
  for (const auto& o : d.observations) {
    if (o.a == 1 && o.delta == 1 && o.s) {
      s.push_back(*o.s);
    }
  }
  if (s.size() < 20) {
    throw DataError("select_bandwidth: need at least 20 measured treated biomarkers");
  }
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= static_cast<double>(s.size() - 1);
  if (!(var > 0.0)) {
    throw DataError("select_bandwidth: degenerate biomarker (zero variance)");
  }
  const double scale = std::sqrt(var) * std::pow(static_cast<double>(s.size()), -0.2);

  const int grid_size = 30;
  double best_h = 0.0, best_value = std::numeric_limits<double>::infinity();
  const double lo = std::log(0.05 * scale), hi = std::log(5.0 * scale);
  for (int g = 0; g < grid_size; ++g) {
    double h = std::exp(lo + (hi - lo) * g / (grid_size - 1.0));
    double value = lscv_criterion(s, kernel, h);
    if (value < best_value) {
      best_value = value;
      best_h = h;
    }
  }
  return best_h;
}

Eigen::Vector3d smooth_psi_curve(const std::function<Eigen::Vector3d(double)>& psi_curve,
                                 const KernelSpec& kernel, double h, double s1_star) {
  const double half = kernel.support_halfwidth() * h;
  Eigen::Vector3d out;
  for (int k = 0; k < 3; ++k) {
    out[k] = adaptive_simpson(
        [&](double s) {
          return psi_curve(s)[k] * kernel_eval(kernel, h, s - s1_star);
        },
        s1_star - half, s1_star + half, 1e-8);
  }
  return out;
}

BiasProbe bias_decay_probe(const std::function<Eigen::Vector3d(double)>& psi_curve,
                           const Eigen::Vector3d& psi_unsmoothed, const KernelSpec& kernel,
                           double s1_star, const std::vector<double>& h_grid) {
  if (h_grid.empty()) {
    throw std::invalid_argument("bias_decay_probe: empty bandwidth grid");
  }
  BiasProbe probe;
  for (double h : h_grid) {
    if (!(h > 0.0)) {
      throw std::invalid_argument("bias_decay_probe: bandwidths must be positive");
    }
    Eigen::Vector3d smoothed = smooth_psi_curve(psi_curve, kernel, h, s1_star);
    probe.h.push_back(h);
    probe.bias_norm.push_back((smoothed - psi_unsmoothed).norm());
  }
  bool positive = std::all_of(probe.bias_norm.begin(), probe.bias_norm.end(),
                              [](double b) { return b > 1e-14; });
  if (positive && probe.h.size() >= 2) {
    // Least-squares slope of log bias against log h.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double m = static_cast<double>(probe.h.size());
    for (std::size_t i = 0; i < probe.h.size(); ++i) {
      double lx = std::log(probe.h[i]);
      double ly = std::log(probe.bias_norm[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    probe.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return probe;
}

}  // namespace pstmle
