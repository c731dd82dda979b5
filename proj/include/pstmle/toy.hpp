#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "pstmle/common.hpp"
#include "pstmle/data.hpp"

namespace pstmle {

// A finite observed-data law over (W, A, S, Y, S^c) with the structural
// conventions of the crossover design: S lives on treated subjects, S^c on
// untreated controls, and untreated cases carry the inert sentinel.
// Stored by its components, which together determine the full joint table.
struct DiscreteToyDistribution {
  std::vector<double> w_support;
  std::vector<double> s_support;

  Eigen::MatrixXd joint_w_a;                // m x 2, p(w, a)
  std::vector<Eigen::MatrixXd> treated_sy;  // per w: J x 2, p(S=s_j, Y=y | A=1, w)
  std::vector<double> control_case_prob;    // per w: p(Y=1 | A=0, w)
  std::vector<Eigen::VectorXd> control_sc;  // per w: p(S^c=s_j | Y=0, A=0, w)

  int w_size() const { return static_cast<int>(w_support.size()); }
  int s_size() const { return static_cast<int>(s_support.size()); }

  double w_marginal(int wi) const { return joint_w_a.row(wi).sum(); }
  double treatment_prob(int wi) const { return joint_w_a(wi, 1) / w_marginal(wi); }
  // p(S = s_j | A=1, w).
  double treated_s(int wi, int sj) const { return treated_sy[static_cast<std::size_t>(wi)].row(sj).sum(); }
  // p(S^c = s_j, Y=0 | A=0, w).
  double control_sc_joint(int wi, int sj) const {
    return (1.0 - control_case_prob[static_cast<std::size_t>(wi)]) *
           control_sc[static_cast<std::size_t>(wi)][sj];
  }

  void validate(double tol = 1e-9) const;

  // Strictly positive observed law derived from a counterfactual in which
  // the crossover biomarker equals the treated biomarker exactly, so the
  // positive-part discrepancy is zero by construction.
  static DiscreteToyDistribution random_compatible(Rng& rng, int w_size, int s_size);
};

// Empirical observed law of a discrete dataset with a single discrete
// covariate (weighted by delta/pi_bar under two-phase sampling).  Returns
// nothing when a needed cell is empty or the covariate has too many levels.
std::optional<DiscreteToyDistribution> empirical_toy(const Dataset& d,
                                                     int max_w_levels = 12);

// One atom of the observed joint table.  sj / scj are -1 where the field is
// structurally absent (or the case sentinel).
struct ToyCell {
  int wi;
  int a;
  int sj;
  int y;
  int scj;
  double prob;
};

std::vector<ToyCell> enumerate_cells(const DiscreteToyDistribution& toy);

DiscreteToyDistribution toy_from_cells(const DiscreteToyDistribution& shape,
                                       const std::vector<ToyCell>& cells);

// Component vector at the stratum s_support[sj_star], by exact enumeration.
Eigen::Vector3d toy_psi(const DiscreteToyDistribution& toy, int sj_star);

// Positive-part discrepancy functional, by exact enumeration.
double toy_psi4(const DiscreteToyDistribution& toy);

// Raises one crossover cell above the treated biomarker law so the
// discrepancy is positive exactly at (wi, sj); returns the witness gap.
double make_incompatible_at(DiscreteToyDistribution& toy, int wi, int sj);

// Outcome of the compatible-counterfactual construction: either a
// counterfactual law passing every check (deviations reported), or an
// infeasibility certificate naming the witness cell.
struct CounterfactualResult {
  bool feasible = false;
  int witness_w = -1;
  int witness_s = -1;
  double witness_gap = 0.0;

  double max_negative_mass = 0.0;
  double normalization_error = 0.0;
  double margin_error = 0.0;       // induced observed law vs the input law
  double ignorability_error = 0.0;
  double crossover_error = 0.0;

  double max_check_error() const {
    return std::max({max_negative_mass, normalization_error, margin_error,
                     ignorability_error, crossover_error});
  }
};

CounterfactualResult construct_compatible_counterfactual(const DiscreteToyDistribution& toy,
                                                         double tol = 1e-12);

// Exact pathwise-derivative check along the bounded mean-zero score
// `direction` (one value per cell of enumerate_cells' order): compares the
// enumerated parameter change against the inner product with the influence
// function.  The profile holds max_k |defect_k| / eps^2 per grid point;
// the check returns its maximum.
std::vector<double> pathwise_defect_profile(const DiscreteToyDistribution& toy,
                                            const std::vector<double>& direction,
                                            const std::vector<double>& eps_grid, int sj_star);

double pathwise_derivative_check(const DiscreteToyDistribution& toy,
                                 const std::vector<double>& direction,
                                 const std::vector<double>& eps_grid, int sj_star);

}  // namespace pstmle
