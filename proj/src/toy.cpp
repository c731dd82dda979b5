#include "pstmle/toy.hpp"

#include <cmath>

#include "pstmle/data.hpp"

namespace pstmle {

void DiscreteToyDistribution::validate(double tol) const {
  const int m = w_size(), J = s_size();
  if (m == 0 || J == 0) {
    throw DataError("toy: empty support");
  }
  if (joint_w_a.rows() != m || joint_w_a.cols() != 2 ||
      static_cast<int>(treated_sy.size()) != m ||
      static_cast<int>(control_case_prob.size()) != m ||
      static_cast<int>(control_sc.size()) != m) {
    throw DataError("toy: component shape mismatch");
  }
  if (joint_w_a.minCoeff() < -tol || std::abs(joint_w_a.sum() - 1.0) > tol) {
    throw DataError("toy: p(w,a) is not a probability table");
  }
  for (int wi = 0; wi < m; ++wi) {
    const auto& sy = treated_sy[static_cast<std::size_t>(wi)];
    if (sy.rows() != J || sy.cols() != 2 || sy.minCoeff() < -tol ||
        std::abs(sy.sum() - 1.0) > tol) {
      throw DataError("toy: treated (s,y) table invalid at w index " + std::to_string(wi));
    }
    double ccp = control_case_prob[static_cast<std::size_t>(wi)];
    if (ccp < -tol || ccp > 1.0 + tol) {
      throw DataError("toy: control case probability invalid");
    }
    const auto& sc = control_sc[static_cast<std::size_t>(wi)];
    if (sc.size() != J || sc.minCoeff() < -tol || std::abs(sc.sum() - 1.0) > tol) {
      throw DataError("toy: control crossover table invalid at w index " + std::to_string(wi));
    }
  }
}

DiscreteToyDistribution DiscreteToyDistribution::random_compatible(Rng& rng, int w_size,
                                                                   int s_size) {
  DiscreteToyDistribution toy;
  for (int i = 0; i < w_size; ++i) toy.w_support.push_back(i);
  for (int j = 0; j < s_size; ++j) toy.s_support.push_back(j);

  auto positive_simplex = [&rng](int k) {
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) {
      v[i] = 0.05 + rng.uniform();
    }
    return Eigen::VectorXd(v / v.sum());
  };

  Eigen::VectorXd pw = positive_simplex(w_size);
  toy.joint_w_a.resize(w_size, 2);
  for (int wi = 0; wi < w_size; ++wi) {
    double g = 0.2 + 0.6 * rng.uniform();
    toy.joint_w_a(wi, 1) = pw[wi] * g;
    toy.joint_w_a(wi, 0) = pw[wi] * (1.0 - g);
  }

  // Counterfactual factors with the crossover biomarker equal to the treated
  // biomarker; the induced observed law then has zero discrepancy.
  for (int wi = 0; wi < w_size; ++wi) {
    Eigen::VectorXd ps = positive_simplex(s_size);
    Eigen::VectorXd risk1(s_size), risk0(s_size);
    for (int j = 0; j < s_size; ++j) {
      risk1[j] = 0.1 + 0.8 * rng.uniform();  // p(Y1=1 | S1=s_j, w)
      risk0[j] = 0.1 + 0.8 * rng.uniform();  // p(Y0=1 | S1=s_j, w)
    }
    Eigen::MatrixXd sy(s_size, 2);
    for (int j = 0; j < s_size; ++j) {
      sy(j, 1) = ps[j] * risk1[j];
      sy(j, 0) = ps[j] * (1.0 - risk1[j]);
    }
    toy.treated_sy.push_back(sy);

    double ccp = ps.dot(risk0);
    toy.control_case_prob.push_back(ccp);
    Eigen::VectorXd sc(s_size);
    for (int j = 0; j < s_size; ++j) {
      sc[j] = ps[j] * (1.0 - risk0[j]) / (1.0 - ccp);
    }
    toy.control_sc.push_back(sc);
  }
  toy.validate();
  return toy;
}

std::optional<DiscreteToyDistribution> empirical_toy(const Dataset& d, int max_w_levels) {
  if (d.covariate_dim != 1 || d.biomarker_kind != BiomarkerKind::discrete) {
    return std::nullopt;
  }
  std::vector<double> w_support, s_support;
  auto level_of = [](std::vector<double>& support, double value) {
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (support[i] == value) return static_cast<int>(i);
    }
    support.push_back(value);
    return static_cast<int>(support.size() - 1);
  };

  // Effective weights: delta/pi_bar with arm-wise stabilization, which is
  // the unit weight in single-phase data.
  std::array<double, 2> c = {0.0, 0.0};
  std::array<int, 2> count = {0, 0};
  for (const auto& o : d.observations) {
    c[static_cast<std::size_t>(o.a)] += o.delta / o.pi;
    count[static_cast<std::size_t>(o.a)] += 1;
  }
  for (int a = 0; a < 2; ++a) {
    if (count[static_cast<std::size_t>(a)] == 0 || c[static_cast<std::size_t>(a)] == 0.0) {
      return std::nullopt;
    }
    c[static_cast<std::size_t>(a)] /= count[static_cast<std::size_t>(a)];
  }

  struct Row {
    int wi, a, si, y, sci;
    double weight;
  };
  std::vector<Row> rows;
  for (const auto& o : d.observations) {
    if (o.delta == 0) continue;
    Row r;
    r.weight = 1.0 / (c[static_cast<std::size_t>(o.a)] * o.pi);
    r.wi = level_of(w_support, o.w[0]);
    r.a = o.a;
    r.si = o.a == 1 && o.s ? level_of(s_support, *o.s) : -1;
    r.y = o.y;
    r.sci = o.a == 0 && o.y == 0 && o.s_c ? level_of(s_support, *o.s_c) : -1;
    rows.push_back(r);
    if (static_cast<int>(w_support.size()) > max_w_levels) {
      return std::nullopt;
    }
  }

  const int m = static_cast<int>(w_support.size());
  const int J = static_cast<int>(s_support.size());
  if (m == 0 || J == 0) {
    return std::nullopt;
  }
  DiscreteToyDistribution toy;
  toy.w_support = w_support;
  toy.s_support = s_support;
  toy.joint_w_a = Eigen::MatrixXd::Zero(m, 2);
  toy.treated_sy.assign(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(J, 2));
  toy.control_case_prob.assign(static_cast<std::size_t>(m), 0.0);
  toy.control_sc.assign(static_cast<std::size_t>(m), Eigen::VectorXd::Zero(J));
  std::vector<double> control_mass(static_cast<std::size_t>(m), 0.0);
  double total = 0.0;
  for (const auto& r : rows) {
    total += r.weight;
    toy.joint_w_a(r.wi, r.a) += r.weight;
    if (r.a == 1) {
      toy.treated_sy[static_cast<std::size_t>(r.wi)](r.si, r.y) += r.weight;
    } else if (r.y == 1) {
      toy.control_case_prob[static_cast<std::size_t>(r.wi)] += r.weight;
    } else {
      toy.control_sc[static_cast<std::size_t>(r.wi)][r.sci] += r.weight;
      control_mass[static_cast<std::size_t>(r.wi)] += r.weight;
    }
  }
  toy.joint_w_a /= total;
  for (int wi = 0; wi < m; ++wi) {
    double mass1 = toy.treated_sy[static_cast<std::size_t>(wi)].sum();
    double mass0 = toy.control_case_prob[static_cast<std::size_t>(wi)] +
                   control_mass[static_cast<std::size_t>(wi)];
    if (mass1 == 0.0 || mass0 == 0.0 || control_mass[static_cast<std::size_t>(wi)] == 0.0) {
      return std::nullopt;  // a needed conditional is undefined empirically
    }
    toy.treated_sy[static_cast<std::size_t>(wi)] /= mass1;
    toy.control_case_prob[static_cast<std::size_t>(wi)] /= mass0;
    toy.control_sc[static_cast<std::size_t>(wi)] /= control_mass[static_cast<std::size_t>(wi)];
  }
  toy.validate(1e-6);
  return toy;
}

std::vector<ToyCell> enumerate_cells(const DiscreteToyDistribution& toy) {
  std::vector<ToyCell> cells;
  const int m = toy.w_size(), J = toy.s_size();
  for (int wi = 0; wi < m; ++wi) {
    for (int sj = 0; sj < J; ++sj) {
      for (int y = 0; y < 2; ++y) {
        cells.push_back({wi, 1, sj, y, -1,
                         toy.joint_w_a(wi, 1) * toy.treated_sy[static_cast<std::size_t>(wi)](sj, y)});
      }
    }
    double p0 = toy.joint_w_a(wi, 0);
    double ccp = toy.control_case_prob[static_cast<std::size_t>(wi)];
    cells.push_back({wi, 0, -1, 1, -1, p0 * ccp});
    for (int sj = 0; sj < J; ++sj) {
      cells.push_back({wi, 0, -1, 0, sj,
                       p0 * (1.0 - ccp) * toy.control_sc[static_cast<std::size_t>(wi)][sj]});
    }
  }
  return cells;
}

DiscreteToyDistribution toy_from_cells(const DiscreteToyDistribution& shape,
                                       const std::vector<ToyCell>& cells) {
  const int m = shape.w_size(), J = shape.s_size();
  DiscreteToyDistribution toy;
  toy.w_support = shape.w_support;
  toy.s_support = shape.s_support;
  toy.joint_w_a = Eigen::MatrixXd::Zero(m, 2);
  toy.treated_sy.assign(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(J, 2));
  toy.control_case_prob.assign(static_cast<std::size_t>(m), 0.0);
  toy.control_sc.assign(static_cast<std::size_t>(m), Eigen::VectorXd::Zero(J));

  std::vector<double> control_mass(static_cast<std::size_t>(m), 0.0);
  for (const auto& cell : cells) {
    toy.joint_w_a(cell.wi, cell.a) += cell.prob;
    if (cell.a == 1) {
      toy.treated_sy[static_cast<std::size_t>(cell.wi)](cell.sj, cell.y) += cell.prob;
    } else if (cell.y == 1) {
      toy.control_case_prob[static_cast<std::size_t>(cell.wi)] += cell.prob;
    } else {
      toy.control_sc[static_cast<std::size_t>(cell.wi)][cell.scj] += cell.prob;
      control_mass[static_cast<std::size_t>(cell.wi)] += cell.prob;
    }
  }
  for (int wi = 0; wi < m; ++wi) {
    double p1 = toy.joint_w_a(wi, 1);
    double p0 = toy.joint_w_a(wi, 0);
    if (p1 > 0.0) toy.treated_sy[static_cast<std::size_t>(wi)] /= p1;
    if (p0 > 0.0) toy.control_case_prob[static_cast<std::size_t>(wi)] /= p0;
    if (control_mass[static_cast<std::size_t>(wi)] > 0.0) {
      toy.control_sc[static_cast<std::size_t>(wi)] /= control_mass[static_cast<std::size_t>(wi)];
    }
  }
  return toy;
}

Eigen::Vector3d toy_psi(const DiscreteToyDistribution& toy, int sj_star) {
  Eigen::Vector3d psi = Eigen::Vector3d::Zero();
  for (int wi = 0; wi < toy.w_size(); ++wi) {
    double pw = toy.w_marginal(wi);
    psi[0] += pw * toy.treated_s(wi, sj_star);
    psi[1] += pw * toy.treated_sy[static_cast<std::size_t>(wi)](sj_star, 1);
    psi[2] += pw * toy.control_sc_joint(wi, sj_star);
  }
  return psi;
}

double toy_psi4(const DiscreteToyDistribution& toy) {
  double total = 0.0;
  for (int wi = 0; wi < toy.w_size(); ++wi) {
    double pw = toy.w_marginal(wi);
    for (int sj = 0; sj < toy.s_size(); ++sj) {
      double gap = toy.control_sc_joint(wi, sj) - toy.treated_s(wi, sj);
      if (gap > 0.0) {
        total += pw * gap * toy.treated_s(wi, sj);
      }
    }
  }
  return total;
}

double make_incompatible_at(DiscreteToyDistribution& toy, int wi, int sj) {
  // The crossover joint law at an atom is capped by the control survival
  // probability, so first thin the treated mass at (wi, sj), then raise the
  // crossover mass there to the midpoint of the feasible violation range.
  // Other atoms rescale proportionally; their gaps only become more
  // negative, leaving (wi, sj) as the unique violation.
  auto& sy = toy.treated_sy[static_cast<std::size_t>(wi)];
  double ps = toy.treated_s(wi, sj);
  const double thin = 0.05;
  double scale_row = thin / ps;
  double scale_rest = (1.0 - thin) / (1.0 - ps);
  for (int j = 0; j < sy.rows(); ++j) {
    sy.row(j) *= (j == sj ? scale_row : scale_rest);
  }
  ps = thin;

  auto& sc = toy.control_sc[static_cast<std::size_t>(wi)];
  double survival = 1.0 - toy.control_case_prob[static_cast<std::size_t>(wi)];
  double target_joint = 0.5 * (ps + survival);  // strictly inside (ps, survival)
  double want_sc = target_joint / survival;
  double rest = 1.0 - want_sc;
  double old_rest = 1.0 - sc[sj];
  for (int j = 0; j < sc.size(); ++j) {
    if (j != sj) sc[j] *= rest / old_rest;
  }
  sc[sj] = want_sc;
  toy.validate();
  return toy.control_sc_joint(wi, sj) - ps;
}

CounterfactualResult construct_compatible_counterfactual(const DiscreteToyDistribution& toy,
                                                         double tol) {
  toy.validate();
  CounterfactualResult result;

  // Infeasibility certificate: the cell with the largest positive gap.
  for (int wi = 0; wi < toy.w_size(); ++wi) {
    for (int sj = 0; sj < toy.s_size(); ++sj) {
      double gap = toy.control_sc_joint(wi, sj) - toy.treated_s(wi, sj);
      if (gap > result.witness_gap) {
        result.witness_gap = gap;
        result.witness_w = wi;
        result.witness_s = sj;
      }
    }
  }
  if (result.witness_gap > tol) {
    result.feasible = false;
    return result;
  }
  result.feasible = true;
  result.witness_w = result.witness_s = -1;
  result.witness_gap = 0.0;

  const int m = toy.w_size(), J = toy.s_size();

  // Counterfactual factor tables per covariate value.
  // strata(s1, y0): joint of (S1, Y0) given w (shared by both arms);
  // outcome1(s1): p(Y1=1 | S1=s1, w); cross(s0c): p(S0c=s0c | Y=0, A=0, w).
  for (int wi = 0; wi < m; ++wi) {
    Eigen::MatrixXd strata(J, 2);
    Eigen::VectorXd outcome1(J);
    const auto& sc = toy.control_sc[static_cast<std::size_t>(wi)];
    for (int sj = 0; sj < J; ++sj) {
      double ps = toy.treated_s(wi, sj);
      double pc = toy.control_sc_joint(wi, sj);
      strata(sj, 0) = pc;
      strata(sj, 1) = ps - pc;
      outcome1[sj] =
          ps > 0.0 ? toy.treated_sy[static_cast<std::size_t>(wi)](sj, 1) / ps : 0.5;
    }
    result.max_negative_mass =
        std::max(result.max_negative_mass, std::max(0.0, -strata.minCoeff()));
    result.normalization_error =
        std::max(result.normalization_error, std::abs(strata.sum() - 1.0));

    // Induced observed law at this covariate value.
    //   treated: p1F(S1=sj, Y1=y | w) must match the treated table.
    for (int sj = 0; sj < J; ++sj) {
      double mass_s1 = strata.row(sj).sum();
      for (int y = 0; y < 2; ++y) {
        double induced = mass_s1 * (y == 1 ? outcome1[sj] : 1.0 - outcome1[sj]);
        result.margin_error =
            std::max(result.margin_error,
                     std::abs(induced - toy.treated_sy[static_cast<std::size_t>(wi)](sj, y)));
      }
    }
    //   untreated: p1F(Y0=1 | w) and p1F(Y0=0, S0c=sj | w).
    double induced_case = strata.col(1).sum();
    result.margin_error =
        std::max(result.margin_error,
                 std::abs(induced_case - toy.control_case_prob[static_cast<std::size_t>(wi)]));
    double mass_y0 = strata.col(0).sum();
    for (int sj = 0; sj < J; ++sj) {
      double induced = mass_y0 * sc[sj];
      result.margin_error =
          std::max(result.margin_error, std::abs(induced - toy.control_sc_joint(wi, sj)));
    }

    // Ignorability: the counterfactual factors are shared across arms, so
    // the arm-conditional tables coincide identically and the deviation is
    // zero by construction.

    // Crossover check: S1 | Y0=0 versus S0c | Y0=0.
    if (mass_y0 > tol) {
      for (int sj = 0; sj < J; ++sj) {
        double s1_given = strata(sj, 0) / mass_y0;
        result.crossover_error =
            std::max(result.crossover_error, std::abs(s1_given - sc[sj]));
      }
    }
  }
  return result;
}

std::vector<double> pathwise_defect_profile(const DiscreteToyDistribution& toy,
                                            const std::vector<double>& direction,
                                            const std::vector<double>& eps_grid, int sj_star) {
  toy.validate();
  std::vector<ToyCell> cells = enumerate_cells(toy);
  if (direction.size() != cells.size()) {
    throw std::invalid_argument("pathwise_derivative_check: direction size mismatch");
  }
  if (eps_grid.empty()) {
    throw std::invalid_argument("pathwise_derivative_check: empty grid");
  }

  double mean_h = 0.0, max_h = 0.0, max_eps = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    mean_h += cells[c].prob * direction[c];
    max_h = std::max(max_h, std::abs(direction[c]));
  }
  for (double e : eps_grid) {
    if (!(e > 0.0)) {
      throw std::invalid_argument("pathwise_derivative_check: eps must be positive");
    }
    max_eps = std::max(max_eps, e);
  }
  if (std::abs(mean_h) > 1e-12) {
    throw std::invalid_argument("pathwise_derivative_check: direction must have mean zero");
  }
  if (max_h * max_eps >= 1.0) {
    throw std::invalid_argument(
        "pathwise_derivative_check: direction too large for the grid (negative mass)");
  }

  // Influence function at the base law, evaluated per cell.
  Eigen::Vector3d psi0 = toy_psi(toy, sj_star);
  std::vector<Eigen::Vector3d> eif(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const ToyCell& cell = cells[c];
    double g1 = toy.treatment_prob(cell.wi);
    Eigen::Vector3d d;
    for (int k = 1; k <= 3; ++k) {
      int arm = arm_of(k);
      double q;
      if (k == 1) {
        q = toy.treated_s(cell.wi, sj_star);
      } else if (k == 2) {
        q = toy.treated_sy[static_cast<std::size_t>(cell.wi)](sj_star, 1);
      } else {
        q = toy.control_sc_joint(cell.wi, sj_star);
      }
      double f;
      if (k == 1) {
        f = cell.a == 1 && cell.sj == sj_star ? 1.0 : 0.0;
      } else if (k == 2) {
        f = cell.a == 1 && cell.y == 1 && cell.sj == sj_star ? 1.0 : 0.0;
      } else {
        f = cell.a == 0 && cell.y == 0 && cell.scj == sj_star ? 1.0 : 0.0;
      }
      double garm = arm == 1 ? g1 : 1.0 - g1;
      double ind = cell.a == arm ? 1.0 : 0.0;
      d[k - 1] = ind / garm * (f - q) + q - psi0[k - 1];
    }
    eif[c] = d;
  }

  Eigen::Vector3d derivative = Eigen::Vector3d::Zero();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    derivative += cells[c].prob * direction[c] * eif[c];
  }

  std::vector<double> profile;
  profile.reserve(eps_grid.size());
  for (double eps : eps_grid) {
    std::vector<ToyCell> fluct = cells;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      fluct[c].prob = cells[c].prob * (1.0 + eps * direction[c]);
    }
    DiscreteToyDistribution toy_eps = toy_from_cells(toy, fluct);
    Eigen::Vector3d psi_eps = toy_psi(toy_eps, sj_star);
    Eigen::Vector3d defect = psi_eps - psi0 - eps * derivative;
    profile.push_back(defect.cwiseAbs().maxCoeff() / (eps * eps));
  }
  return profile;
}

double pathwise_derivative_check(const DiscreteToyDistribution& toy,
                                 const std::vector<double>& direction,
                                 const std::vector<double>& eps_grid, int sj_star) {
  std::vector<double> profile = pathwise_defect_profile(toy, direction, eps_grid, sj_star);
  double worst = 0.0;
  for (double v : profile) {
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace pstmle
