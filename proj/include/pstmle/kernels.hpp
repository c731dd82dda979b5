#pragma once

#include <string>

namespace pstmle {

// Built-in smoothing kernels, normalized to unit integral.
//   uniform    1 on [-1/2, 1/2]                      (order 2)
//   gaussian   standard normal density               (order 2)
//   gaussian4  (3 - u^2) exp(-u^2/2) / (2 sqrt(2pi)) (order 4, takes negative values)
enum class KernelFamily { uniform, gaussian, gaussian4 };

struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;

  int order() const { return family == KernelFamily::gaussian4 ? 4 : 2; }

  // Half-width (in bandwidth units) beyond which the kernel is zero or
  // numerically negligible; used to bound quadrature and pair scans.
  double support_halfwidth() const {
    return family == KernelFamily::uniform ? 0.5 : 8.0;
  }
};

// K(u) for the unscaled kernel.
double kernel_value(KernelFamily family, double u);

// K_h(x) = K(x/h)/h.  Throws for h <= 0.
double kernel_eval(const KernelSpec& spec, double h, double x);

// (K*K)(t), the self-convolution of the unscaled kernel; used by the
// least-squares cross-validation bandwidth criterion.
double kernel_selfconv(KernelFamily family, double t);

KernelFamily kernel_family_from_name(const std::string& name);
std::string kernel_family_name(KernelFamily family);

}  // namespace pstmle
