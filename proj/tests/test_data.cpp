#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pstmle/common.hpp"
#include "pstmle/data.hpp"

using namespace pstmle;

namespace {

Observation make_obs(double w, int a, std::optional<double> s, int y,
                     std::optional<double> s_c, int delta = 1, double pi = 1.0) {
  Observation o;
  o.w = Eigen::VectorXd::Constant(1, w);
  o.a = a;
  o.s = s;
  o.y = y;
  o.s_c = s_c;
  o.delta = delta;
  o.pi = pi;
  return o;
}

Dataset small_valid() {
  Dataset d;
  d.covariate_dim = 1;
  d.biomarker_kind = BiomarkerKind::discrete;
  d.observations = {
      make_obs(0.1, 1, 1.0, 1, std::nullopt),
      make_obs(-0.2, 1, 0.0, 0, std::nullopt),
      make_obs(0.3, 0, std::nullopt, 0, 1.0),
      make_obs(0.4, 0, std::nullopt, 1, 0.0),
  };
  return d;
}

}  // namespace

TEST_CASE("coherent dataset validates cleanly") {
  CHECK(validate_dataset(small_valid()).empty());
}

TEST_CASE("treated measured subject without biomarker is flagged") {
  Dataset d = small_valid();
  d.observations[0].s.reset();
  auto v = validate_dataset(d);
  REQUIRE(v.size() == 1);
  CHECK(v[0].row == 0);
}

TEST_CASE("zero sampling probability is flagged") {
  Dataset d = small_valid();
  d.observations[2].pi = 0.0;
  auto v = validate_dataset(d);
  REQUIRE(v.size() == 1);
  CHECK(v[0].row == 2);
}

TEST_CASE("untreated case must be measured with probability one") {
  Dataset d = small_valid();
  d.observations[3].pi = 0.5;
  CHECK(validate_dataset(d).size() == 1);
  d.observations[3].pi = 1.0;
  d.observations[3].delta = 0;
  CHECK(validate_dataset(d).size() == 1);
}

TEST_CASE("discrete mode rejects non-integer biomarker codes") {
  Dataset d = small_valid();
  d.observations[0].s = 0.5;
  CHECK(validate_dataset(d).size() == 1);
  d.biomarker_kind = BiomarkerKind::continuous;
  CHECK(validate_dataset(d).empty());
}

TEST_CASE("single-arm datasets are flagged") {
  Dataset d = small_valid();
  d.observations.erase(d.observations.begin() + 2, d.observations.end());
  auto v = validate_dataset(d);
  REQUIRE(v.size() == 1);
  CHECK(v[0].row == -1);
}

TEST_CASE("discrete pseudo-outcomes are stratum indicators") {
  TargetSpec spec;
  spec.s1_star = 1.0;
  Observation o = make_obs(0.0, 1, 1.0, 1, std::nullopt);
  CHECK(pseudo_outcome(o, 1, spec) == 1.0);
  CHECK(pseudo_outcome(o, 2, spec) == 1.0);
  Observation control = make_obs(0.0, 0, std::nullopt, 0, 0.0);
  CHECK(pseudo_outcome(control, 3, spec) == 0.0);  // s_c != s1*
  control.s_c = 1.0;
  CHECK(pseudo_outcome(control, 3, spec) == 1.0);

  // The case sentinel is never read.
  Observation untreated_case = make_obs(0.0, 0, std::nullopt, 1, 0.0);
  CHECK(pseudo_outcome(untreated_case, 3, spec) == 0.0);
}

TEST_CASE("component-two pseudo-outcome is dominated by component one") {
  TargetSpec spec;
  spec.s1_star = 2.0;
  for (double s : {1.0, 2.0}) {
    for (int y : {0, 1}) {
      Observation o = make_obs(0.0, 1, s, y, std::nullopt);
      CHECK(pseudo_outcome(o, 2, spec) <= pseudo_outcome(o, 1, spec));
    }
  }
}

TEST_CASE("continuous pseudo-outcome evaluates the scaled kernel") {
  TargetSpec spec;
  spec.s1_star = 0.6;
  spec.kernel = KernelSpec{KernelFamily::gaussian};
  spec.bandwidth = 0.2;
  Observation o = make_obs(0.0, 1, 0.6, 0, std::nullopt);
  CHECK(pseudo_outcome(o, 1, spec) ==
        doctest::Approx(1.0 / (0.2 * std::sqrt(2.0 * M_PI))).epsilon(1e-9));
  CHECK(pseudo_outcome(o, 2, spec) == 0.0);  // y = 0
}

TEST_CASE("pseudo-outcome for an unmeasured subject throws") {
  TargetSpec spec;
  spec.s1_star = 1.0;
  Observation o = make_obs(0.0, 1, std::nullopt, 0, std::nullopt, 0, 0.5);
  CHECK_THROWS_AS(pseudo_outcome(o, 1, spec), DataError);
  Observation missing = make_obs(0.0, 1, std::nullopt, 0, std::nullopt, 1, 1.0);
  CHECK_THROWS_AS(pseudo_outcome(missing, 1, spec), DataError);
}
