// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// Nelder-Mead minimizer; deliberately avoids gradients so it can serve as a
// brute-force reference for likelihood fits.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd start, double step = 0.5,
                                   int max_iter = 20000, double tol = 1e-13) {
  const int n = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> simplex;
  simplex.push_back(start);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v = start;
    v[i] += step;
    simplex.push_back(v);
  }
  std::vector<double> value;
  for (const auto& v : simplex) value.push_back(f(v));

  for (int iter = 0; iter < max_iter; ++iter) {
    // Order simplex.
    std::vector<int> order(simplex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return value[a] < value[b]; });
    std::vector<Eigen::VectorXd> s2;
    std::vector<double> v2;
    for (int idx : order) {
      s2.push_back(simplex[idx]);
      v2.push_back(value[idx]);
    }
    simplex = s2;
    value = v2;
    if (std::abs(value.back() - value.front()) < tol &&
        (simplex.back() - simplex.front()).cwiseAbs().maxCoeff() < tol) {
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += simplex[static_cast<std::size_t>(i)];
    centroid /= n;

    Eigen::VectorXd worst = simplex.back();
    Eigen::VectorXd reflect = centroid + (centroid - worst);
    double fr = f(reflect);
    if (fr < value.front()) {
      Eigen::VectorXd expand = centroid + 2.0 * (centroid - worst);
      double fe = f(expand);
      simplex.back() = fe < fr ? expand : reflect;
      value.back() = std::min(fe, fr);
    } else if (fr < value[value.size() - 2]) {
      simplex.back() = reflect;
      value.back() = fr;
    } else {
      Eigen::VectorXd contract = centroid + 0.5 * (worst - centroid);
      double fc = f(contract);
      if (fc < value.back()) {
        simplex.back() = contract;
        value.back() = fc;
      } else {
        for (std::size_t i = 1; i < simplex.size(); ++i) {
          simplex[i] = simplex.front() + 0.5 * (simplex[i] - simplex.front());
          value[i] = f(simplex[i]);
        }
      }
    }
  }
  return simplex.front();
}

// Central finite-difference gradient.
inline Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double step = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

// Golden-section minimizer on an interval.
inline double golden_section(const std::function<double(double)>& f, double a, double b,
                             double tol = 1e-12) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Simple dense Simpson rule with fixed panel count (reference integrator).
inline double simpson_fixed(const std::function<double(double)>& f, double a, double b,
                            int panels = 20000) {
  double h = (b - a) / (2 * panels);
  double acc = f(a) + f(b);
  for (int i = 1; i < 2 * panels; ++i) {
    acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

}  // namespace oracle
