#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pstmle/simulation.hpp"
#include "pstmle/two_phase.hpp"

using namespace pstmle;

namespace {

Dataset discretized_trial(int n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  return discretize_biomarker(simulate_trial(cfg), cfg.mu[1]);
}

EstimatorConfig known_half() {
  EstimatorConfig config;
  config.learners = {"glm"};
  config.treatment = TreatmentKnown{0.5};
  return config;
}

}  // namespace

TEST_CASE("stabilization forces unit mean weights within arms") {
  SUBCASE("half sampling probabilities with full measurement") {
    Dataset d = discretized_trial(40, 1);
    for (auto& o : d.observations) {
      o.pi = o.a == 0 && o.y == 1 ? 1.0 : 0.5;
    }
    // delta stays 1 everywhere: the constants must absorb the distortion.
    StabilizedWeights sw = stabilize_weights(d);
    for (int i = 0; i < d.size(); ++i) {
      const auto& o = d.observations[static_cast<std::size_t>(i)];
      if (o.pi == 0.5) {
        CHECK(sw.pi_bar[i] == doctest::Approx(0.5 * sw.c[static_cast<std::size_t>(o.a)]));
      }
    }
    for (int a = 0; a < 2; ++a) {
      double acc = 0.0;
      int count = 0;
      for (int i = 0; i < d.size(); ++i) {
        if (d.observations[static_cast<std::size_t>(i)].a == a) {
          acc += sw.w_eff[i];
          ++count;
        }
      }
      CHECK(acc / count == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  SUBCASE("unit probabilities give unit weights") {
    Dataset d = discretized_trial(30, 2);
    StabilizedWeights sw = stabilize_weights(d);
    CHECK(sw.c[0] == doctest::Approx(1.0));
    CHECK(sw.c[1] == doctest::Approx(1.0));
    CHECK(sw.w_eff.minCoeff() == doctest::Approx(1.0));
    CHECK(sw.w_eff.maxCoeff() == doctest::Approx(1.0));
  }

  SUBCASE("hand-enumerated two-subject arm") {
    Dataset d;
    d.covariate_dim = 1;
    d.biomarker_kind = BiomarkerKind::discrete;
    auto add = [&](int a, double pi) {
      Observation o;
      o.w = Eigen::VectorXd::Zero(1);
      o.a = a;
      o.y = 0;
      if (a == 1) {
        o.s = 0.0;
      } else {
        o.s_c = 0.0;
      }
      o.pi = pi;
      d.observations.push_back(o);
    };
    add(1, 0.5);
    add(1, 1.0);
    add(0, 1.0);
    StabilizedWeights sw = stabilize_weights(d);
    CHECK(sw.c[1] == doctest::Approx(1.5));
    CHECK(sw.w_eff[0] == doctest::Approx(4.0 / 3.0));
    CHECK(sw.w_eff[1] == doctest::Approx(2.0 / 3.0));
    CHECK((sw.w_eff[0] + sw.w_eff[1]) / 2.0 == doctest::Approx(1.0));
  }

  SUBCASE("arm without measured subjects fails") {
    Dataset d = discretized_trial(30, 3);
    for (auto& o : d.observations) {
      if (o.a == 1) {
        o.delta = 0;
        o.pi = 0.5;
        o.s.reset();
      }
    }
    CHECK_THROWS_AS(stabilize_weights(d), StratumEmptyError);
  }
}

TEST_CASE("full sampling reduces the weighted tmle to the single-phase tmle") {
  Dataset d = discretized_trial(900, 5);
  TargetSpec spec;
  spec.s1_star = 1.0;
  EstimatorConfig config = known_half();
  PsiEstimate single = tmle_estimate(d, spec, config);
  PsiEstimate weighted = ipw_tmle(d, spec, config);
  CHECK((single.psi - weighted.psi).cwiseAbs().maxCoeff() == 0.0);
  CHECK((single.epsilons - weighted.epsilons).cwiseAbs().maxCoeff() == 0.0);
  CHECK((single.influence_rows - weighted.influence_rows).cwiseAbs().maxCoeff() == 0.0);
  CHECK((single.sigma - weighted.sigma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("case-cohort weighted tmle stays near the quadrature truth") {
  SimConfig cfg;
  cfg.n = 5000;
  cfg.seed = 61;
  Dataset full = discretize_biomarker(simulate_trial(cfg), cfg.mu[1]);
  Dataset d = two_phase_subsample(full, SubsampleDesign::case_cohort(0.25), 77);
  TargetSpec spec;
  spec.s1_star = 1.0;
  PsiEstimate est = ipw_tmle(d, spec, known_half());
  CHECK(est.fluctuation_score_max_abs < 1e-8);
  Eigen::Vector3d truth = true_psi_discrete(cfg, cfg.mu[1], 1);
  for (int k = 0; k < 3; ++k) {
    double se = std::sqrt(est.sigma(k, k) / d.size());
    CHECK(std::abs(est.psi[k] - truth[k]) < 3.0 * se);
  }
  EifDiagnostics diag = eif_diagnostics(est);
  CHECK(diag.eif_mean_max_abs < 1e-8);
}

TEST_CASE("one-step with full sampling is the plug-in plus mean influence") {
  Dataset d = discretized_trial(800, 9);
  TargetSpec spec;
  spec.s1_star = 1.0;
  EstimatorConfig config = known_half();
  PsiEstimate one = one_step_estimate(d, spec, config);

  // Rebuild the plug-in and raw influence mean from the same nuisances.
  StabilizedWeights sw = stabilize_weights(d);
  auto lib = learner_library(config.learners, LossKind::weighted_bernoulli);
  NuisanceFit fit = fit_outcome_regressions(d, spec, sw.w_eff,
                                            FoldPlan::degenerate(d.size()), lib, Truncation{});
  fit.treatment = {fit_treatment_mechanism(d, config.treatment, Truncation{})};
  Eigen::MatrixXd W = d.covariate_matrix();
  for (int k = 1; k <= 3; ++k) {
    Eigen::VectorXd q = fit.pseudo_regression(k, 0, W);
    Eigen::VectorXd f = pseudo_outcome_vector(d, k, spec);
    double plugin = q.mean();
    double mean_eif = 0.0;
    for (int i = 0; i < d.size(); ++i) {
      const auto& o = d.observations[static_cast<std::size_t>(i)];
      double ind = o.a == arm_of(k) ? 1.0 / 0.5 : 0.0;  // known g(a_k|w) = 0.5
      mean_eif += ind * (f[i] - q[i]) + q[i] - plugin;
    }
    mean_eif /= d.size();
    CHECK(one.psi[k - 1] == doctest::Approx(plugin + mean_eif).epsilon(1e-12));
  }
  CHECK(std::isnan(one.fluctuation_score_max_abs));
}

TEST_CASE("a perfect projection restores the complete-data pseudo-outcomes") {
  // The covariate determines the biomarker, so the phase-one regression
  // reproduces the missing pseudo-outcomes exactly.
  Rng rng(15);
  Dataset d;
  d.covariate_dim = 1;
  d.biomarker_kind = BiomarkerKind::discrete;
  for (int i = 0; i < 2000; ++i) {
    Observation o;
    double w = rng.bernoulli(0.5) ? 1.0 : 0.0;
    o.w = Eigen::VectorXd::Constant(1, w);
    o.a = rng.bernoulli(0.5) ? 1 : 0;
    double s1 = w;  // deterministic biomarker
    o.y = rng.bernoulli(expit(-1.2 + 0.5 * s1)) ? 1 : 0;
    if (o.a == 1) {
      o.s = s1;
    } else if (o.y == 0) {
      o.s_c = s1;
    } else {
      o.s_c = 0.0;
    }
    d.observations.push_back(std::move(o));
  }
  Dataset sub = two_phase_subsample(d, SubsampleDesign::case_cohort(0.25), 3);

  TargetSpec spec;
  spec.s1_star = 1.0;
  PsiEstimate full = one_step_estimate(d, spec, known_half());
  PsiEstimate projected = one_step_estimate(sub, spec, known_half());
  // With the projection exact, the completed pseudo-outcomes equal the true
  // ones and the one-step estimates agree up to the fit's refit noise.
  CHECK((full.psi - projected.psi).cwiseAbs().maxCoeff() < 5e-3);
}

TEST_CASE("missing measurement crashes neither estimator but errors without data") {
  Dataset d = discretized_trial(200, 21);
  Dataset sub = two_phase_subsample(d, SubsampleDesign::case_cohort(0.5), 5);
  TargetSpec spec;
  spec.s1_star = 1.0;
  PsiEstimate est = ipw_tmle(sub, spec, known_half());
  CHECK(est.psi.allFinite());

  // Remove every measured treated control: the projection cell is empty.
  Dataset broken = sub;
  for (auto& o : broken.observations) {
    if (o.a == 1 && o.y == 0) {
      o.delta = 0;
      o.pi = 0.5;
      o.s.reset();
    }
  }
  CHECK_THROWS_AS(one_step_estimate(broken, spec, known_half()), StratumEmptyError);
}

TEST_CASE("inverse-probability means are unbiased over designs") {
  SimConfig cfg;
  cfg.n = 2000;
  TargetSpec spec;
  spec.s1_star = 1.0;
  const int reps = 150;
  double acc = 0.0, acc2 = 0.0, full_mean = 0.0;
  for (int r = 0; r < reps; ++r) {
    cfg.seed = 300 + static_cast<std::uint64_t>(r);
    Dataset d = discretize_biomarker(simulate_trial(cfg), cfg.mu[1]);
    Dataset sub = two_phase_subsample(d, SubsampleDesign::case_cohort(0.3),
                                      9000 + static_cast<std::uint64_t>(r));
    double ht = 0.0, truth = 0.0;
    for (int i = 0; i < d.size(); ++i) {
      const auto& full_o = d.observations[static_cast<std::size_t>(i)];
      const auto& sub_o = sub.observations[static_cast<std::size_t>(i)];
      double f_full = full_o.a == 1 ? pseudo_outcome(full_o, 1, spec) : 0.0;
      truth += f_full;
      if (sub_o.delta == 1 && sub_o.a == 1) {
        ht += pseudo_outcome(sub_o, 1, spec) / sub_o.pi;
      }
    }
    acc += (ht - truth) / d.size();
    acc2 += (ht - truth) * (ht - truth) / (static_cast<double>(d.size()) * d.size());
    full_mean += truth / d.size();
  }
  double mean_gap = acc / reps;
  double mc_se = std::sqrt((acc2 / reps - mean_gap * mean_gap) / reps);
  CHECK(std::abs(mean_gap) < 3.0 * mc_se + 1e-6);
  CHECK(full_mean / reps > 0.2);  // sanity: the functional is not degenerate
}

TEST_CASE("estimated sampling rates come from measurement cells") {
  Dataset d = discretized_trial(4000, 33);
  Dataset sub = two_phase_subsample(d, SubsampleDesign::case_cohort(0.4), 11);
  std::vector<int> coarsening(static_cast<std::size_t>(sub.size()), 0);
  Dataset est = with_estimated_pi(sub, coarsening);
  // Within each (arm, outcome) cell the estimated rate is the empirical
  // measurement share.
  for (int a = 0; a < 2; ++a) {
    for (int y = 0; y < 2; ++y) {
      double measured = 0.0, total = 0.0, pi_val = -1.0;
      for (int i = 0; i < sub.size(); ++i) {
        const auto& o = sub.observations[static_cast<std::size_t>(i)];
        if (o.a == a && o.y == y) {
          total += 1.0;
          measured += o.delta;
          pi_val = est.observations[static_cast<std::size_t>(i)].pi;
        }
      }
      if (total > 0.0) {
        CHECK(pi_val == doctest::Approx(measured / total));
      }
    }
  }
}

TEST_CASE("one-step flags estimates that leave the unit interval") {
  // Tiny sample with extreme weights can push the one-step outside [0,1];
  // force it deterministically by rigging pi very small on a measured row.
  Dataset d = discretized_trial(60, 55);
  Dataset sub = d;
  for (auto& o : sub.observations) {
    if (o.a == 1 && o.y == 0) {
      o.pi = 0.05;
      break;
    }
  }
  TargetSpec spec;
  spec.s1_star = 1.0;
  PsiEstimate est = one_step_estimate(sub, spec, known_half());
  // The estimate may or may not exit [0,1] for this draw; the invariant is
  // that nothing is clipped: the stored value matches plug-in plus mean row.
  for (int k = 0; k < 3; ++k) {
    CHECK(std::isfinite(est.psi[k]));
  }
}
