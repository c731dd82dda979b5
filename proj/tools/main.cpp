#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>

#include "pstmle/io.hpp"
#include "pstmle/toy.hpp"

namespace {

using namespace pstmle;

struct CliOverrides {
  std::string config_path;
  std::string input;
  std::string output;
  std::string mode;
  std::string kernel;
  std::string bandwidth;
  double s1_star = std::numeric_limits<double>::quiet_NaN();
  long seed = -1;
  long workers = -1;
  long folds = -1;
  long reps = -1;
};

void add_common_flags(CLI::App* cmd, CliOverrides& ov) {
  cmd->add_option("--config", ov.config_path, "configuration file");
  cmd->add_option("--input", ov.input, "input CSV path");
  cmd->add_option("--output", ov.output, "primary output path");
  cmd->add_option("--seed", ov.seed, "random seed");
  cmd->add_option("--workers", ov.workers, "worker threads for replications");
  cmd->add_option("--mode", ov.mode, "estimator mode");
  cmd->add_option("--s1-star", ov.s1_star, "biomarker stratum of interest");
  cmd->add_option("--bandwidth", ov.bandwidth, "kernel bandwidth (number or 'lscv')");
  cmd->add_option("--kernel", ov.kernel, "kernel family");
  cmd->add_option("--folds", ov.folds, "cross-validation folds");
  cmd->add_option("--reps", ov.reps, "replications");
}

Config load_config(const CliOverrides& ov) {
  Config cfg = ov.config_path.empty() ? Config::parse_string("")
                                      : Config::parse_file(ov.config_path);
  if (!ov.input.empty()) cfg.override_value("data", "input", ov.input);
  if (ov.seed >= 0) cfg.override_value("run", "seed", std::to_string(ov.seed));
  if (ov.workers >= 0) cfg.override_value("run", "workers", std::to_string(ov.workers));
  if (!ov.mode.empty()) cfg.override_value("estimate", "mode", ov.mode);
  if (!std::isnan(ov.s1_star)) {
    cfg.override_value("estimate", "s1_star", format_double(ov.s1_star));
  }
  if (!ov.bandwidth.empty()) cfg.override_value("estimate", "bandwidth", ov.bandwidth);
  if (!ov.kernel.empty()) cfg.override_value("estimate", "kernel", ov.kernel);
  if (ov.folds >= 0) cfg.override_value("estimate", "folds", std::to_string(ov.folds));
  if (ov.reps >= 0) cfg.override_value("coverage", "reps", std::to_string(ov.reps));
  return cfg;
}

ColumnMap columns_from(const Config& cfg) {
  ColumnMap columns;
  columns.covariates = cfg.get_list("data", "covariates");
  if (columns.covariates.empty()) {
    columns.covariates = {"w"};
  }
  columns.arm = cfg.get("data", "arm_column", "a");
  columns.outcome = cfg.get("data", "outcome_column", "y");
  columns.biomarker = cfg.get("data", "biomarker_column", "s");
  columns.crossover = cfg.get("data", "crossover_column", "s_c");
  columns.delta = cfg.get("data", "delta_column", "delta");
  columns.pi = cfg.get("data", "pi_column", "pi");
  return columns;
}

BiomarkerKind biomarker_kind_from(const Config& cfg) {
  std::string kind = cfg.get("data", "biomarker", "discrete");
  if (kind == "discrete") return BiomarkerKind::discrete;
  if (kind == "continuous") return BiomarkerKind::continuous;
  throw ConfigError("data.biomarker must be 'discrete' or 'continuous'");
}

TreatmentMode treatment_from(const Config& cfg) {
  std::string t = cfg.get("estimate", "treatment", "logistic");
  if (t == "logistic") return TreatmentLogistic{};
  if (t == "ensemble") return TreatmentEnsemble{};
  if (t.rfind("known:", 0) == 0) {
    return TreatmentKnown{std::stod(t.substr(6))};
  }
  throw ConfigError("estimate.treatment must be logistic, ensemble, or known:<p>");
}

EstimatorConfig estimator_config_from(const Config& cfg, std::uint64_t seed) {
  EstimatorConfig ec;
  auto learners = cfg.get_list("estimate", "learners");
  if (!learners.empty()) ec.learners = learners;
  ec.treatment = treatment_from(cfg);
  ec.fold_seed = seed;
  return ec;
}

SimConfig sim_config_from(const Config& cfg, std::uint64_t seed) {
  SimConfig sim;
  sim.n = static_cast<int>(cfg.get_long("simulate", "n", sim.n));
  sim.arm_prob = cfg.get_double("simulate", "arm_prob", sim.arm_prob);
  sim.seed = seed;
  auto betas = cfg.get_double_list("simulate", "betas");
  if (!betas.empty()) {
    if (betas.size() != 5) throw ConfigError("simulate.betas needs 5 values");
    for (int i = 0; i < 5; ++i) sim.betas[static_cast<std::size_t>(i)] = betas[static_cast<std::size_t>(i)];
  }
  std::string crossover = cfg.get("simulate", "crossover", "exact");
  if (crossover == "exact") {
    sim.crossover = SimConfig::Crossover::exact;
  } else if (crossover.rfind("noisy:", 0) == 0) {
    sim.crossover = SimConfig::Crossover::noisy;
    sim.noise_sd = std::stod(crossover.substr(6));
  } else {
    throw ConfigError("simulate.crossover must be exact or noisy:<sd>");
  }
  std::string arms = cfg.get("simulate", "arm_assignment", "iid");
  if (arms == "iid") {
    sim.arm_assignment = SimConfig::ArmAssignment::iid_bernoulli;
  } else if (arms == "fixed_margins") {
    sim.arm_assignment = SimConfig::ArmAssignment::fixed_margins;
  } else {
    throw ConfigError("simulate.arm_assignment must be iid or fixed_margins");
  }
  return sim;
}

std::string sim_manifest(const SimConfig& sim, const std::string& design,
                         std::uint64_t seed) {
  JsonWriter w;
  w.begin_object();
  w.field("tool", std::string("pstmle"));
  w.field("version", std::string("0.1.0"));
  w.field("seed", static_cast<long>(seed));
  w.field("n", static_cast<long>(sim.n));
  w.begin_array("betas");
  for (double b : sim.betas) w.element(b);
  w.end_array();
  w.begin_array("mu");
  for (double m : sim.mu) w.element(m);
  w.end_array();
  w.begin_array("sd");
  for (double s : sim.sd) w.element(s);
  w.end_array();
  w.field("correlation", sim.correlation);
  w.field("arm_prob", sim.arm_prob);
  w.field("arm_assignment", std::string(sim.arm_assignment == SimConfig::ArmAssignment::iid_bernoulli
                                            ? "iid_bernoulli"
                                            : "fixed_margins"));
  w.field("crossover",
          sim.crossover == SimConfig::Crossover::exact
              ? std::string("exact")
              : "noisy:" + format_double(sim.noise_sd));
  w.field("design", design);
  w.end_object();
  return w.str();
}

int run_estimate(const Config& cfg) {
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_long("run", "seed", 1));
  ColumnMap columns = columns_from(cfg);
  BiomarkerKind kind = biomarker_kind_from(cfg);
  std::string input = cfg.get("data", "input", "");
  if (input.empty()) throw ConfigError("data.input is required");
  Dataset d = ingest_csv(input, columns, kind);

  TargetSpec spec;
  spec.s1_star = cfg.get_double("estimate", "s1_star", 0.0);
  ContrastKind kind_c = contrast_kind_from_name(
      cfg.get("estimate", "contrast", "log_relative_risk"));
  spec.contrast = kind_c;

  std::string mode = cfg.get("estimate", "mode",
                             kind == BiomarkerKind::continuous ? "continuous_cv_tmle" : "tmle");
  EstimatorConfig ec = estimator_config_from(cfg, seed);
  int folds = static_cast<int>(cfg.get_long("estimate", "folds", 10));

  // Optional replacement of the known sampling probabilities by empirical
  // measurement rates within discrete coarsening cells.
  std::string pi_setting = cfg.get("estimate", "pi", "known");
  if (pi_setting == "npmle_ay") {
    d = with_estimated_pi(d, std::vector<int>(static_cast<std::size_t>(d.size()), 0));
  } else if (pi_setting != "known") {
    throw ConfigError("estimate.pi must be known or npmle_ay");
  }

  PsiEstimate est;
  if (mode == "continuous_cv_tmle") {
    KernelSpec kernel;
    kernel.family = kernel_family_from_name(cfg.get("estimate", "kernel", "gaussian"));
    spec.kernel = kernel;
    std::string bw = cfg.get("estimate", "bandwidth", "lscv");
    BandwidthMethod method =
        bw == "lscv" ? BandwidthMethod::lscv() : BandwidthMethod::fixed(std::stod(bw));
    spec.bandwidth = select_bandwidth(d, method, kernel);
    FoldPlan plan = FoldPlan::stratified(d, folds, seed);
    est = cv_tmle_continuous(d, spec, plan, ec);
  } else if (mode == "tmle") {
    est = tmle_estimate(d, spec, ec);
  } else if (mode == "cv_tmle") {
    FoldPlan plan = FoldPlan::stratified(d, folds, seed);
    est = cv_tmle_estimate(d, spec, plan, ec);
  } else if (mode == "ipw_tmle") {
    est = ipw_tmle(d, spec, ec);
  } else if (mode == "one_step") {
    est = one_step_estimate(d, spec, ec);
  } else {
    throw ConfigError("unknown estimator mode: " + mode);
  }

  std::string report_path = cfg.get("output", "report", "report.json");
  std::string influence_path = cfg.get("output", "influence", "");
  cfg.ensure_consumed();

  std::string json;
  if (kind_c == ContrastKind::raw_psi) {
    json = report_json(est, nullptr, kind_c, seed);
  } else {
    ContrastReport report = est.mode == EstimatorMode::continuous_cv_tmle
                                ? smoothed_contrast(est, kind_c)
                                : contrast(est, kind_c);
    if (est.mode != EstimatorMode::continuous_cv_tmle) {
      try {
        report.diagnostics.psi4_hat =
            d.single_phase() ? estimate_psi4(d, ec)
                             : estimate_psi4(d, ec, stabilize_weights(d).w_eff);
      } catch (const Error&) {
        // continuous or degenerate data: no plug-in discrepancy estimate
      }
    }
    json = report_json(est, &report, kind_c, seed);
  }
  write_text_file(report_path, json);
  if (!influence_path.empty()) {
    write_influence_csv(influence_path, est);
  }
  std::cout << "wrote " << report_path << "\n";
  return 0;
}

int run_simulate(const Config& cfg) {
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_long("run", "seed", 1));
  SimConfig sim = sim_config_from(cfg, seed);
  std::string design_str = cfg.get("simulate", "design", "none");
  std::string output = cfg.get("simulate", "output", "trial.csv");
  std::string manifest = cfg.get("simulate", "manifest", "");
  std::string discretize = cfg.get("simulate", "discretize_at", "");
  cfg.ensure_consumed();

  Dataset d = simulate_trial(sim);
  if (!discretize.empty()) {
    d = discretize_biomarker(d, std::stod(discretize));
  }
  if (design_str != "none") {
    SubsampleDesign design;
    if (design_str.rfind("case_cohort:", 0) == 0) {
      design = SubsampleDesign::case_cohort(std::stod(design_str.substr(12)));
    } else if (design_str.rfind("stratified:", 0) == 0) {
      auto parts = cfg.get_double_list("simulate", "design_probs");
      if (parts.size() != 4) {
        throw ConfigError("stratified design needs simulate.design_probs = p00,p01,p10,p11");
      }
      design = SubsampleDesign::stratified({parts[0], parts[1], parts[2], parts[3]});
    } else {
      throw ConfigError("simulate.design must be none, case_cohort:<p>, or stratified:");
    }
    d = two_phase_subsample(d, design, seed + 1);
  }

  ColumnMap columns;
  columns.covariates = {"w"};
  write_dataset_csv(output, d, columns);
  if (!manifest.empty()) {
    write_text_file(manifest, sim_manifest(sim, design_str, seed));
  }
  std::cout << "wrote " << output << "\n";
  return 0;
}

int run_coverage(const Config& cfg) {
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_long("run", "seed", 1));
  int workers = static_cast<int>(cfg.get_long("run", "workers", 1));
  SimConfig sim = sim_config_from(cfg, seed);
  sim.n = static_cast<int>(cfg.get_long("coverage", "n", 5000));
  sim.reps = static_cast<int>(cfg.get_long("coverage", "reps", 300));

  CoverageOptions options;
  options.kernel.family =
      kernel_family_from_name(cfg.get("estimate", "kernel", "gaussian"));
  options.folds = static_cast<int>(cfg.get_long("estimate", "folds", 10));
  options.workers = workers;
  options.estimator = estimator_config_from(cfg, seed);
  if (cfg.get("estimate", "treatment", "") == "") {
    options.estimator.treatment = TreatmentKnown{sim.arm_prob};
  }
  if (cfg.get("estimate", "learners", "") == "") {
    options.estimator.learners = {"mean", "glm", "glm_interactions"};
  }

  std::vector<double> s1_grid = cfg.get_double_list("coverage", "s1_grid");
  if (s1_grid.empty()) s1_grid = {0.0, 0.3, 0.6};
  std::vector<double> h_grid = cfg.get_double_list("coverage", "h_grid");
  if (h_grid.empty()) h_grid = {0.2};

  std::string output = cfg.get("coverage", "output", "coverage.csv");
  std::string manifest = cfg.get("coverage", "manifest", "");
  cfg.ensure_consumed();

  std::vector<CoverageRow> rows = coverage_experiment(sim, options, s1_grid, h_grid);
  write_coverage_csv(output, rows);
  if (!manifest.empty()) {
    write_text_file(manifest, sim_manifest(sim, "none", seed));
  }
  std::cout << "wrote " << output << "\n";
  return 0;
}

int run_diagnose(const Config& cfg) {
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_long("run", "seed", 1));
  ColumnMap columns = columns_from(cfg);
  BiomarkerKind kind = biomarker_kind_from(cfg);
  std::string input = cfg.get("data", "input", "");
  if (input.empty()) throw ConfigError("data.input is required");
  std::string output = cfg.get("output", "report", "diagnostics.json");
  Dataset d = ingest_csv(input, columns, kind);

  TargetSpec spec;
  spec.s1_star = cfg.get_double("estimate", "s1_star", 0.0);
  EstimatorConfig ec = estimator_config_from(cfg, seed);
  cfg.ensure_consumed();

  if (kind != BiomarkerKind::discrete) {
    throw ConfigError("diagnose requires a discrete biomarker");
  }
  PsiEstimate est = d.single_phase() ? tmle_estimate(d, spec, ec) : ipw_tmle(d, spec, ec);
  EifDiagnostics diag = eif_diagnostics(est);
  double psi4 = d.single_phase() ? estimate_psi4(d, ec)
                                 : estimate_psi4(d, ec, stabilize_weights(d).w_eff);

  // Theory checks on the empirical law when the data are coarse enough to
  // enumerate, otherwise on a seeded synthetic law of the same shape.
  Rng rng(seed);
  std::optional<DiscreteToyDistribution> empirical = empirical_toy(d);
  bool used_empirical = empirical.has_value();
  DiscreteToyDistribution toy =
      used_empirical ? *empirical : DiscreteToyDistribution::random_compatible(rng, 3, 3);
  CounterfactualResult cf = construct_compatible_counterfactual(toy, 1e-9);
  std::vector<ToyCell> cells = enumerate_cells(toy);
  std::vector<double> direction(cells.size());
  double mean_h = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    direction[c] = rng.uniform() - 0.5;
    mean_h += cells[c].prob * direction[c];
  }
  for (auto& v : direction) v -= mean_h;
  double defect =
      pathwise_derivative_check(toy, direction, {1e-1, 1e-2, 1e-3}, 0);

  JsonWriter w;
  w.begin_object();
  w.field("psi4_hat", psi4);
  w.field("eif_mean_max_abs", diag.eif_mean_max_abs);
  w.field("min_eigenvalue_sigma", diag.min_eigenvalue_sigma);
  w.begin_array("sigma_eigenvalues");
  {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(est.sigma);
    for (int i = 0; i < 3; ++i) w.element(solver.eigenvalues()[i]);
  }
  w.end_array();
  w.field("fluctuation_score_max_abs", est.fluctuation_score_max_abs);
  w.raw_key("theory_checks");
  w.begin_object();
  w.field("law", std::string(used_empirical ? "empirical" : "synthetic"));
  w.field("psi4_enumerated", toy_psi4(toy));
  w.field("counterfactual_construction_feasible", cf.feasible);
  if (!cf.feasible) {
    w.field("witness_w", toy.w_support[static_cast<std::size_t>(cf.witness_w)]);
    w.field("witness_s", toy.s_support[static_cast<std::size_t>(cf.witness_s)]);
    w.field("witness_gap", cf.witness_gap);
  } else {
    w.field("counterfactual_max_check_error", cf.max_check_error());
  }
  w.field("pathwise_defect_over_eps2", defect);
  w.end_object();
  w.field("seed", static_cast<long>(seed));
  w.end_object();
  write_text_file(output, w.str());
  std::cout << "wrote " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Principally stratified effect estimation for crossover designs"};
  app.require_subcommand(1);

  CliOverrides ov;
  CLI::App* estimate = app.add_subcommand("estimate", "estimate a stratum contrast from a CSV");
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic trial CSV");
  CLI::App* coverage = app.add_subcommand("coverage", "replicated coverage experiment");
  CLI::App* diagnose = app.add_subcommand("diagnose", "identifiability and influence diagnostics");
  for (CLI::App* cmd : {estimate, simulate, coverage, diagnose}) {
    add_common_flags(cmd, ov);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = load_config(ov);
    if (!ov.output.empty()) {
      if (simulate->parsed()) {
        cfg.override_value("simulate", "output", ov.output);
      } else if (coverage->parsed()) {
        cfg.override_value("coverage", "output", ov.output);
      } else {
        cfg.override_value("output", "report", ov.output);
      }
    }
    if (estimate->parsed()) return run_estimate(cfg);
    if (simulate->parsed()) return run_simulate(cfg);
    if (coverage->parsed()) return run_coverage(cfg);
    if (diagnose->parsed()) return run_diagnose(cfg);
  } catch (const ConfigError& e) {
    std::cerr << error_json("config", e.what()) << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << error_json("data", e.what()) << "\n";
    return 3;
  } catch (const pstmle::Error& e) {
    std::cerr << error_json("estimation", e.what()) << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << error_json("internal", e.what()) << "\n";
    return 5;
  }
  return 1;
}
