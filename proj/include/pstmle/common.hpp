#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace pstmle {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
struct DataError : Error {
  using Error::Error;
};

// An arm or fitting stratum required by an estimator is empty.
struct StratumEmptyError : Error {
  using Error::Error;
};

// Treatment or sampling probabilities incompatible with strong positivity.
struct PositivityError : Error {
  using Error::Error;
};

// Targeting step failed to solve its score equation.
struct FluctuationError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Bounds applied to every emitted nuisance prediction. Probabilities are
// truncated into [prob_lo, prob_hi], treatment probabilities into the
// tighter [treat_lo, treat_hi], and density regressions are floored.
struct Truncation {
  double prob_lo = 0.005;
  double prob_hi = 0.995;
  double treat_lo = 0.01;
  double treat_hi = 0.99;
  double density_floor = 1e-4;

  double prob(double p) const { return clamp(p, prob_lo, prob_hi); }
  double treatment(double p) const { return clamp(p, treat_lo, treat_hi); }
  double density(double q) const { return q < density_floor ? density_floor : q; }
};

// Deterministic random source. Normal draws use Box-Muller so that the byte
// stream does not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for replication `index` of a seeded experiment.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index & 0xffffffffu),
                      static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 eng(seq);
    return Rng(eng);
  }

  double uniform() {
    // 53-bit mantissa uniform in (0,1).
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = uniform();
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 2.0 * M_PI * v;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw exact.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  explicit Rng(std::mt19937_64 eng) : engine_(eng) {}

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pstmle
