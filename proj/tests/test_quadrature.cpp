#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pstmle/common.hpp"
#include "pstmle/quadrature.hpp"

using namespace pstmle;

TEST_CASE("gauss-hermite integrates normal moments exactly") {
  const auto& gh = gauss_hermite64();
  CHECK(gh.nodes.size() == 64);
  CHECK(gh.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(gh.expect([](double z) { return z; }) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(gh.expect([](double z) { return z * z; }) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gh.expect([](double z) { return z * z * z * z; }) ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("gauss-hermite handles shifted scaled normals") {
  const auto& gh = gauss_hermite64();
  double m = gh.expect([](double x) { return x * x; }, 2.0, 3.0);
  CHECK(m == doctest::Approx(4.0 + 9.0).epsilon(1e-12));
}

TEST_CASE("gauss-hermite matches dense quadrature on a logistic expectation") {
  const auto& gh = gauss_hermite64();
  double got = gh.expect([](double z) { return expit(0.3 + 0.8 * z); }, 0.0, 1.0);
  double want = oracle::simpson_fixed(
      [](double z) {
        return expit(0.3 + 0.8 * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
      },
      -12.0, 12.0);
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("adaptive simpson on closed forms") {
  CHECK(adaptive_simpson([](double x) { return x * x; }, 0.0, 1.0) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, M_PI) ==
        doctest::Approx(2.0).epsilon(1e-9));
  double gauss = adaptive_simpson(
      [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }, -8.0, 8.0);
  CHECK(gauss == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(adaptive_simpson([](double) { return 1.0; }, 2.0, 2.0) == 0.0);
}
