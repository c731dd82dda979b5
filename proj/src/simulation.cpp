#include "pstmle/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "pstmle/quadrature.hpp"

namespace pstmle {

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace {

double normal_pdf(double x, double mu, double sigma) {
  double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

}  // namespace

Dataset simulate_trial(const SimConfig& cfg, std::uint64_t rep) {
  if (cfg.n < 1) {
    throw std::invalid_argument("simulate_trial: n must be positive");
  }
  if (cfg.crossover == SimConfig::Crossover::noisy && !(cfg.noise_sd > 0.0)) {
    throw std::invalid_argument("simulate_trial: noisy crossover needs a positive noise sd");
  }
  Rng rng = Rng::stream(cfg.seed, rep);

  std::vector<int> arms;
  if (cfg.arm_assignment == SimConfig::ArmAssignment::fixed_margins) {
    int n1 = static_cast<int>(std::lround(cfg.arm_prob * cfg.n));
    arms.assign(static_cast<std::size_t>(cfg.n), 0);
    std::fill(arms.begin(), arms.begin() + n1, 1);
    rng.shuffle(arms);
  }

  const double rho = cfg.correlation;
  const double cross = std::sqrt(1.0 - rho * rho);

  Dataset d;
  d.covariate_dim = 1;
  d.biomarker_kind = BiomarkerKind::continuous;
  d.observations.reserve(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    double z1 = rng.normal();
    double z2 = rng.normal();
    double w = cfg.mu[0] + cfg.sd[0] * z1;
    double s1 = cfg.mu[1] + cfg.sd[1] * (rho * z1 + cross * z2);

    Observation o;
    o.w = Eigen::VectorXd::Constant(1, w);
    o.a = arms.empty() ? (rng.bernoulli(cfg.arm_prob) ? 1 : 0)
                       : arms[static_cast<std::size_t>(i)];
    o.y = rng.bernoulli(expit(cfg.linear_predictor(o.a, w, s1))) ? 1 : 0;
    if (o.a == 1) {
      double s_obs = s1;
      if (cfg.crossover == SimConfig::Crossover::noisy) {
        s_obs += cfg.noise_sd * rng.normal();
      }
      o.s = s_obs;
    } else if (o.y == 0) {
      double sc_obs = s1;
      if (cfg.crossover == SimConfig::Crossover::noisy) {
        sc_obs += cfg.noise_sd * rng.normal();
      }
      o.s_c = sc_obs;
    } else {
      o.s_c = 0.0;  // sentinel for untreated cases
    }
    d.observations.push_back(std::move(o));
  }
  return d;
}

Dataset discretize_biomarker(const Dataset& d, double threshold) {
  Dataset out = d;
  out.biomarker_kind = BiomarkerKind::discrete;
  for (auto& o : out.observations) {
    if (o.s) {
      o.s = *o.s >= threshold ? 1.0 : 0.0;
    }
    if (o.s_c) {
      if (o.a == 0 && o.y == 1) {
        o.s_c = 0.0;  // sentinel stays inert
      } else {
        o.s_c = *o.s_c >= threshold ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

Eigen::Vector3d true_psi(const SimConfig& cfg, double s1_star) {
  const double mu_w = cfg.mu[0], mu_s = cfg.mu[1];
  const double sd_w = cfg.sd[0], sd_s = cfg.sd[1];
  const double rho = cfg.correlation;
  const auto& gh = gauss_hermite64();

  if (cfg.crossover == SimConfig::Crossover::exact || !(cfg.noise_sd > 0.0)) {
    // Covariate given biomarker.
    const double cond_mu = mu_w + rho * (sd_w / sd_s) * (s1_star - mu_s);
    const double cond_sd = sd_w * std::sqrt(1.0 - rho * rho);
    const double density = normal_pdf(s1_star, mu_s, sd_s);
    double risk1 = gh.expect(
        [&](double w) { return expit(cfg.linear_predictor(1, w, s1_star)); }, cond_mu,
        cond_sd);
    double surv0 = gh.expect(
        [&](double w) { return 1.0 - expit(cfg.linear_predictor(0, w, s1_star)); }, cond_mu,
        cond_sd);
    return {density, density * risk1, density * surv0};
  }

  // Noisy readings: both measured biomarkers are the latent one plus
  // independent noise, so the observed components integrate the outcome
  // model over (W, latent S) given the reading.  (W, S1, S1 + noise) is
  // jointly Gaussian; condition on the reading and take a tensor
  // Gauss-Hermite expectation over the remaining bivariate normal.
  const double var_obs = sd_s * sd_s + cfg.noise_sd * cfg.noise_sd;
  const double density = normal_pdf(s1_star, mu_s, std::sqrt(var_obs));
  const double cov_ws = rho * sd_w * sd_s;  // = Cov(W, reading) as well
  const double dev = s1_star - mu_s;

  Eigen::Vector2d cond_mu(mu_w + cov_ws / var_obs * dev,
                          mu_s + sd_s * sd_s / var_obs * dev);
  Eigen::Matrix2d cond_cov;
  cond_cov(0, 0) = sd_w * sd_w - cov_ws * cov_ws / var_obs;
  cond_cov(0, 1) = cond_cov(1, 0) = cov_ws - cov_ws * sd_s * sd_s / var_obs;
  cond_cov(1, 1) = sd_s * sd_s - std::pow(sd_s, 4) / var_obs;
  Eigen::LLT<Eigen::Matrix2d> chol(cond_cov);
  Eigen::Matrix2d root = chol.matrixL();

  auto expect2 = [&](const std::function<double(double, double)>& g) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
      for (Eigen::Index j = 0; j < gh.nodes.size(); ++j) {
        Eigen::Vector2d z(gh.nodes[i], gh.nodes[j]);
        Eigen::Vector2d x = cond_mu + root * z;
        acc += gh.weights[i] * gh.weights[j] * g(x[0], x[1]);
      }
    }
    return acc;
  };
  double risk1 =
      expect2([&](double w, double s1) { return expit(cfg.linear_predictor(1, w, s1)); });
  double surv0 = expect2(
      [&](double w, double s1) { return 1.0 - expit(cfg.linear_predictor(0, w, s1)); });
  return {density, density * risk1, density * surv0};
}

Eigen::Vector3d true_psi_smoothed(const SimConfig& cfg, double s1_star,
                                  const KernelSpec& kernel, double h) {
  return smooth_psi_curve([&](double s) { return true_psi(cfg, s); }, kernel, h, s1_star);
}

Eigen::Vector3d true_psi_discrete(const SimConfig& cfg, double threshold, int atom) {
  if (atom != 0 && atom != 1) {
    throw std::invalid_argument("true_psi_discrete: atom must be 0 or 1");
  }
  const double mu_w = cfg.mu[0], mu_s = cfg.mu[1];
  const double sd_w = cfg.sd[0], sd_s = cfg.sd[1];
  const double rho = cfg.correlation;
  const double cond_sd = sd_s * std::sqrt(1.0 - rho * rho);

  const auto& gh = gauss_hermite64();
  auto integrate_region = [&](double m, const std::function<double(double)>& g) {
    // Region of the standardized biomarker z = (s - m)/cond_sd.
    double z0 = (threshold - m) / cond_sd;
    double lo = atom == 1 ? z0 : std::min(z0, -12.0) - 1.0;
    double hi = atom == 1 ? std::max(z0, 12.0) + 1.0 : z0;
    if (!(lo < hi)) return 0.0;
    return adaptive_simpson(
        [&](double z) { return g(m + cond_sd * z) * normal_pdf(z, 0.0, 1.0); }, lo, hi,
        1e-9);
  };

  auto q1 = [&](double w) {
    double m = mu_s + rho * (sd_s / sd_w) * (w - mu_w);
    double z0 = (threshold - m) / cond_sd;
    return atom == 1 ? 1.0 - standard_normal_cdf(z0) : standard_normal_cdf(z0);
  };
  auto q2 = [&](double w) {
    double m = mu_s + rho * (sd_s / sd_w) * (w - mu_w);
    return integrate_region(m, [&](double s) { return expit(cfg.linear_predictor(1, w, s)); });
  };
  auto q3 = [&](double w) {
    double m = mu_s + rho * (sd_s / sd_w) * (w - mu_w);
    return integrate_region(
        m, [&](double s) { return 1.0 - expit(cfg.linear_predictor(0, w, s)); });
  };

  Eigen::Vector3d psi;
  psi[0] = gh.expect(q1, mu_w, sd_w);
  psi[1] = gh.expect(q2, mu_w, sd_w);
  psi[2] = gh.expect(q3, mu_w, sd_w);
  return psi;
}

Dataset two_phase_subsample(const Dataset& d, const SubsampleDesign& design,
                            std::uint64_t seed) {
  auto check = [](double p) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw std::invalid_argument("two_phase_subsample: probabilities must lie in (0,1]");
    }
  };
  if (design.kind == SubsampleDesign::Kind::case_cohort) {
    check(design.cohort_prob);
  } else {
    for (double p : design.prob_ay) check(p);
  }

  Rng rng = Rng::stream(seed, 0x2f);
  Dataset out = d;
  for (auto& o : out.observations) {
    double pi;
    if (design.kind == SubsampleDesign::Kind::case_cohort) {
      pi = o.y == 1 ? 1.0 : design.cohort_prob;
    } else {
      pi = design.prob_ay[static_cast<std::size_t>(2 * o.a + o.y)];
    }
    if (o.a == 0 && o.y == 1) {
      pi = 1.0;  // untreated cases are always measured
    }
    o.pi = pi;
    o.delta = pi >= 1.0 ? 1 : (rng.bernoulli(pi) ? 1 : 0);
    if (o.delta == 0) {
      o.s.reset();
      o.s_c.reset();
    }
  }
  return out;
}

std::vector<CoverageRow> coverage_experiment(const SimConfig& cfg,
                                             const CoverageOptions& options,
                                             const std::vector<double>& s1_grid,
                                             const std::vector<double>& h_grid) {
  if (cfg.reps < 1 || s1_grid.empty() || h_grid.empty()) {
    throw std::invalid_argument("coverage_experiment: empty grid or no replications");
  }

  struct Combo {
    double s1, h, truth, truth_smoothed;
  };
  std::vector<Combo> combos;
  for (double s1 : s1_grid) {
    Eigen::Vector3d psi = true_psi(cfg, s1);
    double truth = log_relative_risk(psi);
    for (double h : h_grid) {
      Eigen::Vector3d psi_h = true_psi_smoothed(cfg, s1, options.kernel, h);
      combos.push_back({s1, h, truth, log_relative_risk(psi_h)});
    }
  }

  struct RepResult {
    bool ok = false;
    double estimate = 0.0, se = 0.0, lo = 0.0, hi = 0.0;
  };
  std::vector<std::vector<RepResult>> results(
      static_cast<std::size_t>(cfg.reps),
      std::vector<RepResult>(combos.size()));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int rep = next.fetch_add(1);
      if (rep >= cfg.reps) break;
      Dataset data = simulate_trial(cfg, static_cast<std::uint64_t>(rep));
      FoldPlan folds = FoldPlan::stratified(
          data, options.folds, cfg.seed ^ (0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(rep)));
      for (std::size_t c = 0; c < combos.size(); ++c) {
        TargetSpec spec;
        spec.s1_star = combos[c].s1;
        spec.contrast = ContrastKind::log_relative_risk;
        spec.kernel = options.kernel;
        spec.bandwidth = combos[c].h;
        RepResult& r = results[static_cast<std::size_t>(rep)][c];
        try {
          PsiEstimate est = cv_tmle_continuous(data, spec, folds, options.estimator);
          ContrastReport report = smoothed_contrast(est, ContrastKind::log_relative_risk);
          if (report.identifiability_failure || !std::isfinite(report.estimate)) {
            continue;
          }
          r.ok = true;
          r.estimate = report.estimate;
          r.se = report.std_error;
          r.lo = report.ci_lower;
          r.hi = report.ci_upper;
        } catch (const Error&) {
          // recorded as a failed replication below
        }
      }
    }
  };

  int workers = std::max(1, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }

  std::vector<CoverageRow> rows;
  for (std::size_t c = 0; c < combos.size(); ++c) {
    CoverageRow row;
    row.s1_star = combos[c].s1;
    row.h = combos[c].h;
    row.n = cfg.n;
    row.reps = cfg.reps;
    double sum = 0.0, sum_se = 0.0;
    int ok = 0, cover_t = 0, cover_s = 0;
    std::vector<double> estimates;
    for (int rep = 0; rep < cfg.reps; ++rep) {
      const RepResult& r = results[static_cast<std::size_t>(rep)][c];
      if (!r.ok) continue;
      ++ok;
      sum += r.estimate;
      sum_se += r.se;
      estimates.push_back(r.estimate);
      if (r.lo <= combos[c].truth && combos[c].truth <= r.hi) ++cover_t;
      if (r.lo <= combos[c].truth_smoothed && combos[c].truth_smoothed <= r.hi) ++cover_s;
    }
    row.failures = cfg.reps - ok;
    if (ok > 0) {
      double mean = sum / ok;
      row.bias_truth = mean - combos[c].truth;
      row.bias_smoothed = mean - combos[c].truth_smoothed;
      row.coverage_truth = static_cast<double>(cover_t) / ok;
      row.coverage_smoothed = static_cast<double>(cover_s) / ok;
      row.mean_se = sum_se / ok;
      double ss = 0.0;
      for (double e : estimates) ss += (e - mean) * (e - mean);
      row.sampling_sd = ok > 1 ? std::sqrt(ss / (ok - 1)) : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

double ks_statistic_standard_normal(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("ks_statistic: empty sample");
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double stat = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double cdf = standard_normal_cdf(values[i]);
    double upper = (static_cast<double>(i) + 1.0) / n - cdf;
    double lower = cdf - static_cast<double>(i) / n;
    stat = std::max(stat, std::max(upper, lower));
  }
  return stat;
}

}  // namespace pstmle
