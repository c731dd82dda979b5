#include "pstmle/data.hpp"

#include <cmath>

#include "pstmle/common.hpp"

namespace pstmle {

bool Dataset::single_phase() const {
  for (const auto& o : observations) {
    if (o.delta != 1 || o.pi != 1.0) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd Dataset::covariate_matrix() const {
  Eigen::MatrixXd W(size(), covariate_dim);
  for (int i = 0; i < size(); ++i) {
    W.row(i) = observations[static_cast<std::size_t>(i)].w.transpose();
  }
  return W;
}

namespace {

bool is_integral_code(double x) {
  return std::isfinite(x) && x == std::nearbyint(x);
}

}  // namespace

std::vector<Violation> validate_dataset(const Dataset& d) {
  std::vector<Violation> out;
  int n_treated = 0, n_untreated = 0;
  for (long i = 0; i < d.size(); ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    if (o.w.size() != d.covariate_dim) {
      out.push_back({i, "covariate dimension mismatch"});
    } else if (!o.w.allFinite()) {
      out.push_back({i, "non-finite covariate"});
    }
    if (o.a != 0 && o.a != 1) {
      out.push_back({i, "arm must be 0 or 1"});
    }
    if (o.y != 0 && o.y != 1) {
      out.push_back({i, "outcome must be 0 or 1"});
    }
    if (o.delta != 0 && o.delta != 1) {
      out.push_back({i, "delta must be 0 or 1"});
    }
    if (!(o.pi > 0.0 && o.pi <= 1.0)) {
      out.push_back({i, "sampling probability must lie in (0,1]"});
    }
    (o.a == 1 ? n_treated : n_untreated) += 1;

    if (o.a == 1 && o.delta == 1 && !o.s.has_value()) {
      out.push_back({i, "treated measured subject lacks biomarker s"});
    }
    if (o.a == 0 && o.y == 0 && o.delta == 1 && !o.s_c.has_value()) {
      out.push_back({i, "untreated measured control lacks crossover biomarker s_c"});
    }
    if (o.a == 0 && o.y == 1) {
      // Untreated cases are structurally measured with probability one.
      if (o.delta != 1) {
        out.push_back({i, "untreated case must have delta=1"});
      }
      if (o.pi != 1.0) {
        out.push_back({i, "untreated case must have pi=1"});
      }
    }
    if (d.biomarker_kind == BiomarkerKind::discrete) {
      if (o.s && !is_integral_code(*o.s)) {
        out.push_back({i, "discrete mode requires integer-coded biomarker s"});
      }
      if (o.s_c && !is_integral_code(*o.s_c)) {
        out.push_back({i, "discrete mode requires integer-coded biomarker s_c"});
      }
    } else {
      if (o.s && !std::isfinite(*o.s)) {
        out.push_back({i, "non-finite biomarker s"});
      }
      if (o.s_c && !std::isfinite(*o.s_c)) {
        out.push_back({i, "non-finite biomarker s_c"});
      }
    }
  }
  if (n_treated == 0) {
    out.push_back({-1, "no treated subjects"});
  }
  if (n_untreated == 0) {
    out.push_back({-1, "no untreated subjects"});
  }
  return out;
}

double pseudo_outcome(const Observation& o, int k, const TargetSpec& spec) {
  if (k < 1 || k > 3) {
    throw std::invalid_argument("pseudo_outcome: k must be 1, 2, or 3");
  }
  if (o.delta == 0) {
    throw DataError("pseudo_outcome: undefined for unmeasured subject (delta=0)");
  }
  const bool continuous = spec.continuous();
  if (continuous && !spec.bandwidth) {
    throw std::invalid_argument("pseudo_outcome: continuous mode requires a bandwidth");
  }

  auto stratum_weight = [&](double value) {
    if (continuous) {
      return kernel_eval(*spec.kernel, *spec.bandwidth, value - spec.s1_star);
    }
    return value == spec.s1_star ? 1.0 : 0.0;
  };

  switch (k) {
    case 1:
      if (!o.s) throw DataError("pseudo_outcome: biomarker s missing");
      return stratum_weight(*o.s);
    case 2:
      if (o.y != 1) return 0.0;
      if (!o.s) throw DataError("pseudo_outcome: biomarker s missing");
      return stratum_weight(*o.s);
    default:  // k == 3; never reads s_c when y=1, so the case sentinel is inert
      if (o.y != 0) return 0.0;
      if (!o.s_c) throw DataError("pseudo_outcome: crossover biomarker s_c missing");
      return stratum_weight(*o.s_c);
  }
}

std::string estimator_mode_name(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::tmle:
      return "tmle";
    case EstimatorMode::cv_tmle:
      return "cv_tmle";
    case EstimatorMode::ipw_tmle:
      return "ipw_tmle";
    case EstimatorMode::one_step:
      return "one_step";
    case EstimatorMode::continuous_cv_tmle:
      return "continuous_cv_tmle";
  }
  return "?";
}

}  // namespace pstmle
