#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pstmle/io.hpp"

using namespace pstmle;

namespace {

// Cheap well-formedness screen: balanced containers outside strings and no
// empty-value artifacts like ":," or ",]" anywhere.
void check_json_shape(const std::string& json) {
  long depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < json.size(); ++i) {
    char c = json[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == '{' || c == '[') ++depth;
    if (c == '}' || c == ']') --depth;
    REQUIRE(depth >= 0);
  }
  CHECK(depth == 0);
  CHECK_FALSE(in_string);
  for (const char* bad : {":,", ",,", "[,", "{,", ",]", ",}" }) {
    CHECK(json.find(bad) == std::string::npos);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("tmp_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(PSTMLE_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("datasets round-trip through csv exactly") {
  SimConfig cfg;
  cfg.n = 250;
  cfg.seed = 5;
  Dataset d = two_phase_subsample(simulate_trial(cfg), SubsampleDesign::case_cohort(0.5), 9);
  ColumnMap columns;
  columns.covariates = {"w"};
  TempFile file("roundtrip.csv");
  write_dataset_csv(file.path, d, columns);
  Dataset back = ingest_csv(file.path, columns, BiomarkerKind::continuous);
  REQUIRE(back.size() == d.size());
  for (int i = 0; i < d.size(); ++i) {
    const auto& a = d.observations[static_cast<std::size_t>(i)];
    const auto& b = back.observations[static_cast<std::size_t>(i)];
    CHECK(a.w[0] == b.w[0]);
    CHECK(a.a == b.a);
    CHECK(a.y == b.y);
    CHECK(a.s == b.s);
    CHECK(a.s_c == b.s_c);
    CHECK(a.delta == b.delta);
    CHECK(a.pi == b.pi);
  }
}

TEST_CASE("csv ingestion reports malformed cells by row and column") {
  TempFile file("bad.csv");
  {
    std::ofstream out(file.path);
    out << "w,a,s,y,s_c,delta,pi\n";
    out << "0.1,2,0.5,0,,1,1\n";  // arm out of range
  }
  ColumnMap columns;
  columns.covariates = {"w"};
  try {
    ingest_csv(file.path, columns, BiomarkerKind::continuous);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("'a'") != std::string::npos);
  }
}

TEST_CASE("missing optional columns default to single phase") {
  TempFile file("nophase.csv");
  {
    std::ofstream out(file.path);
    out << "w,a,s,y,s_c\n";
    out << "0.1,1,0.7,0,\n";
    out << "0.2,0,,0,0.4\n";
  }
  ColumnMap columns;
  columns.covariates = {"w"};
  Dataset d = ingest_csv(file.path, columns, BiomarkerKind::continuous);
  REQUIRE(d.size() == 2);
  CHECK(d.observations[0].delta == 1);
  CHECK(d.observations[0].pi == 1.0);
  CHECK_FALSE(d.observations[0].s_c.has_value());
  CHECK(d.observations[1].s_c == 0.4);
}

TEST_CASE("missing mandatory columns are named") {
  TempFile file("nocol.csv");
  {
    std::ofstream out(file.path);
    out << "w,a,y,s_c\n";
  }
  ColumnMap columns;
  columns.covariates = {"w"};
  try {
    ingest_csv(file.path, columns, BiomarkerKind::discrete);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("s") != std::string::npos);
  }
}

TEST_CASE("config parsing, overrides, and fail-closed keys") {
  Config cfg = Config::parse_string(
      "# comment\n"
      "[estimate]\n"
      "mode = tmle\n"
      "s1_star = 0.5\n"
      "folds = 10\n"
      "[data]\n"
      "covariates = w1, w2\n");
  CHECK(cfg.get("estimate", "mode", "x") == "tmle");
  CHECK(cfg.get_double("estimate", "s1_star", 0.0) == 0.5);
  CHECK(cfg.get_long("estimate", "folds", 0) == 10);
  auto cov = cfg.get_list("data", "covariates");
  REQUIRE(cov.size() == 2);
  CHECK(cov[1] == "w2");
  cfg.ensure_consumed();

  Config cfg2 = Config::parse_string("[estimate]\nmystery = 1\n");
  CHECK_THROWS_AS(cfg2.ensure_consumed(), ConfigError);

  Config cfg3 = Config::parse_string("[estimate]\nmode = tmle\n");
  cfg3.override_value("estimate", "mode", "cv_tmle");
  CHECK(cfg3.get("estimate", "mode", "") == "cv_tmle");

  CHECK_THROWS_AS(Config::parse_string("key_without_section = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("[s]\nnot a pair\n"), ConfigError);
}

TEST_CASE("report json carries the full estimate") {
  PsiEstimate est;
  est.psi = Eigen::Vector3d(0.7, 0.1, 0.4);
  est.sigma = Eigen::Matrix3d::Identity();
  est.influence_rows = Eigen::MatrixXd::Zero(4, 3);
  est.epsilons = Eigen::Vector3d(0.01, -0.02, 0.0);
  est.mode = EstimatorMode::tmle;
  ContrastReport report;
  report.estimate = -1.0986;
  report.std_error = 0.2;
  report.ci_lower = -1.49;
  report.ci_upper = -0.71;
  std::string json = report_json(est, &report, ContrastKind::log_relative_risk, 42);
  check_json_shape(json);
  CHECK(json.find("\"mode\":\"tmle\"") != std::string::npos);
  CHECK(json.find("\"estimate\":-1.0986") != std::string::npos);
  CHECK(json.find("\"psi\":[") != std::string::npos);
  CHECK(json.find("\"seed\":42") != std::string::npos);

  // Identical inputs give identical bytes.
  CHECK(json == report_json(est, &report, ContrastKind::log_relative_risk, 42));

  check_json_shape(report_json(est, nullptr, ContrastKind::raw_psi, 42));
  check_json_shape(error_json("data", "a \"quoted\" problem\nwith lines"));
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-17, 123456.789, -0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("cli simulate then estimate runs deterministically end to end") {
  TempFile data("cli_trial.csv");
  TempFile manifest("cli_manifest.json");
  TempFile report("cli_report.json");
  TempFile report2("cli_report2.json");
  TempFile config("cli_config.ini");
  {
    std::ofstream out(config.path);
    out << "[run]\nseed = 11\n";
    out << "[simulate]\nn = 800\noutput = " << data.path << "\nmanifest = " << manifest.path
        << "\ndiscretize_at = 0.41\n";
  }
  REQUIRE(run_cli("simulate --config " + config.path) == 0);
  std::string manifest_text = slurp(manifest.path);
  CHECK(manifest_text.find("\"seed\":11") != std::string::npos);

  TempFile econfig("cli_estimate.ini");
  {
    std::ofstream out(econfig.path);
    out << "[run]\nseed = 11\n";
    out << "[data]\ninput = " << data.path << "\ncovariates = w\nbiomarker = discrete\n";
    out << "[estimate]\nmode = tmle\ns1_star = 1\ntreatment = known:0.5\nlearners = glm\n";
    out << "[output]\nreport = " << report.path << "\n";
  }
  REQUIRE(run_cli("estimate --config " + econfig.path) == 0);
  std::string json = slurp(report.path);
  check_json_shape(json);
  CHECK(json.find("\"mode\":\"tmle\"") != std::string::npos);
  CHECK(json.find("psi4_hat") != std::string::npos);

  // The targeting step must have zeroed the weighted score.
  auto pos = json.find("\"fluctuation_score_max_abs\":");
  REQUIRE(pos != std::string::npos);
  double score = std::stod(json.substr(pos + 28));
  CHECK(score < 1e-8);

  REQUIRE(run_cli("estimate --config " + econfig.path + " --output " + report2.path) == 0);
  CHECK(json == slurp(report2.path));
}

TEST_CASE("cli diagnose reports discrepancy and theory checks") {
  TempFile data("cli_diag_trial.csv");
  TempFile config("cli_diag_sim.ini");
  TempFile dconfig("cli_diag.ini");
  TempFile out("cli_diag.json");
  {
    std::ofstream sim(config.path);
    sim << "[run]\nseed = 3\n[simulate]\nn = 2500\noutput = " << data.path
        << "\ndiscretize_at = 0.41\n";
  }
  REQUIRE(run_cli("simulate --config " + config.path) == 0);
  {
    std::ofstream cfg(dconfig.path);
    cfg << "[run]\nseed = 3\n";
    cfg << "[data]\ninput = " << data.path << "\ncovariates = w\nbiomarker = discrete\n";
    cfg << "[estimate]\ns1_star = 1\ntreatment = known:0.5\nlearners = glm\n";
    cfg << "[output]\nreport = " << out.path << "\n";
  }
  REQUIRE(run_cli("diagnose --config " + dconfig.path) == 0);
  std::string json = slurp(out.path);
  check_json_shape(json);
  CHECK(json.find("\"psi4_hat\":") != std::string::npos);
  CHECK(json.find("\"pathwise_defect_over_eps2\":") != std::string::npos);
  // The continuous covariate forces the synthetic fallback law.
  CHECK(json.find("\"law\":\"synthetic\"") != std::string::npos);
}

TEST_CASE("cli rejects unknown config keys with a nonzero exit") {
  TempFile config("cli_badkey.ini");
  {
    std::ofstream out(config.path);
    out << "[simulate]\nn = 10\nmystery_knob = 3\n";
  }
  CHECK(run_cli("simulate --config " + config.path) != 0);
}

TEST_CASE("cli coverage emits the experiment schema") {
  TempFile csv("cli_coverage.csv");
  TempFile config("cli_cov.ini");
  {
    std::ofstream out(config.path);
    out << "[run]\nseed = 5\nworkers = 2\n";
    out << "[coverage]\nn = 300\nreps = 8\ns1_grid = 0.6\nh_grid = 0.3\noutput = "
        << csv.path << "\n";
    out << "[estimate]\nfolds = 5\n";
  }
  REQUIRE(run_cli("coverage --config " + config.path) == 0);
  std::string text = slurp(csv.path);
  CHECK(text.find("s1_star,h,n,reps,bias_truth,bias_smoothed,coverage_truth,"
                  "coverage_smoothed,mean_se,sampling_sd,failures") != std::string::npos);
  // Header plus one row.
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}
