#pragma once

#include <array>
#include <memory>
#include <optional>
#include <variant>

#include "pstmle/common.hpp"
#include "pstmle/learners.hpp"

namespace pstmle {

// Immutable fitted predictor over raw covariate rows.
class Predictor {
 public:
  Predictor() = default;
  explicit Predictor(std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> fn)
      : fn_(std::move(fn)) {}

  Eigen::VectorXd operator()(const Eigen::MatrixXd& W) const { return fn_(W); }
  double at(const Eigen::VectorXd& w) const {
    Eigen::MatrixXd row = w.transpose();
    return fn_(row)[0];
  }
  bool valid() const { return static_cast<bool>(fn_); }

 private:
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> fn_;
};

// How the treatment mechanism P(A=1|W) is obtained.
struct TreatmentKnown {
  double value = 0.5;
};
struct TreatmentKnownFunction {
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> fn;
};
struct TreatmentLogistic {};
struct TreatmentEnsemble {};  // cross-validated pick among {mean, glm}
using TreatmentMode =
    std::variant<TreatmentKnown, TreatmentKnownFunction, TreatmentLogistic, TreatmentEnsemble>;

// Fitted nuisance components.  q[k-1][v] holds the fold-v regression
//   discrete mode:   q1 = P(S=s1*|A=1,w), q2 = P(Y=1|S=s1*,A=1,w),
//                    q3 = P(Y=0,S^c=s1*|A=0,w), truncated into (0,1)
//   continuous mode: w -> E[f_{k,h} | a_k, w], floored away from zero
// treatment[v] holds the fold-v treatment mechanism (size 1 when shared).
struct NuisanceFit {
  // Discrete fits store the conditional pieces; the component-2
  // pseudo-outcome regression is their product.  Continuous fits regress the
  // kernel pseudo-outcome directly.
  enum class Layout { discrete_conditional, continuous_direct };

  std::vector<Predictor> treatment;
  std::array<std::vector<Predictor>, 3> q;
  Layout layout = Layout::discrete_conditional;
  FoldPlan folds;
  Truncation bounds;
  std::vector<std::string> flags;

  const Predictor& treatment_for(int fold) const {
    return treatment[treatment.size() == 1 ? 0 : static_cast<std::size_t>(fold)];
  }
  const Predictor& q_for(int k, int fold) const {
    const auto& qs = q[static_cast<std::size_t>(k - 1)];
    return qs[qs.size() == 1 ? 0 : static_cast<std::size_t>(fold)];
  }

  // E[f_k(O) | a_k, w] for the fold's fit: the regression the targeting
  // step fluctuates.
  Eigen::VectorXd pseudo_regression(int k, int fold, const Eigen::MatrixXd& W) const;
};

// Fits P(A=1|W) on the full sample, truncated to the treatment bounds.
// Errors if an arm is empty or a known value violates positivity.
Predictor fit_treatment_mechanism(const Dataset& d, const TreatmentMode& mode,
                                  const Truncation& bounds);

// Fold-specific treatment fits (constant modes share one predictor).
std::vector<Predictor> fit_treatment_mechanism_folds(const Dataset& d,
                                                     const TreatmentMode& mode,
                                                     const FoldPlan& folds,
                                                     const Truncation& bounds);

// Discrete-mode outcome/biomarker regressions with observation weights.
//   q1 on treated measured subjects, outcome 1{s = s1*}
//   q2 on treated measured subjects with s = s1*, outcome y
//   q3 on untreated measured subjects, outcome 1{y=0, s_c = s1*}
// One fit per training fold when folds.V > 1.  Errors when a fitting
// stratum is empty, naming the stratum.
NuisanceFit fit_outcome_regressions(const Dataset& d, const TargetSpec& spec,
                                    const Eigen::VectorXd& weights,
                                    const FoldPlan& folds,
                                    const std::vector<Learner>& library,
                                    const Truncation& bounds);

// Continuous-mode kernel pseudo-outcome regression for component k, one fit
// per training fold, floored at the density floor.
void fit_kernel_regression_qkh(const Dataset& d, const TargetSpec& spec, int k,
                               const FoldPlan& folds,
                               const std::vector<Learner>& library,
                               const Truncation& bounds, NuisanceFit& out);

// Pseudo-outcome vector over the dataset: zero for subjects off arm a_k or
// unmeasured, so entries are exactly the values multiplied by the arm
// indicator inside the influence function.
Eigen::VectorXd pseudo_outcome_vector(const Dataset& d, int k, const TargetSpec& spec);

}  // namespace pstmle
