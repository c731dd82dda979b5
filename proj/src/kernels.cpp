#include "pstmle/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "pstmle/common.hpp"

namespace pstmle {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2*pi)
constexpr double kInvSqrt4Pi = 0.2820947917738781;  // 1/(2*sqrt(pi))
}  // namespace

double kernel_value(KernelFamily family, double u) {
  switch (family) {
    case KernelFamily::uniform:
      return (u >= -0.5 && u <= 0.5) ? 1.0 : 0.0;
    case KernelFamily::gaussian:
      return kInvSqrt2Pi * std::exp(-0.5 * u * u);
    case KernelFamily::gaussian4:
      return 0.5 * kInvSqrt2Pi * (3.0 - u * u) * std::exp(-0.5 * u * u);
  }
  throw std::logic_error("kernel_value: unknown family");
}

double kernel_eval(const KernelSpec& spec, double h, double x) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("kernel_eval: bandwidth must be positive");
  }
  return kernel_value(spec.family, x / h) / h;
}

double kernel_selfconv(KernelFamily family, double t) {
  switch (family) {
    case KernelFamily::uniform: {
      double a = 1.0 - std::abs(t);
      return a > 0.0 ? a : 0.0;
    }
    case KernelFamily::gaussian:
      // N(0,2) density.
      return kInvSqrt4Pi * std::exp(-0.25 * t * t);
    case KernelFamily::gaussian4: {
      // c^2 sqrt(pi) e^{-t^2/4} [b^2 - b + 3/4 - t^2/2], b = 3 - t^2/4,
      // with c = 1/(2 sqrt(2pi)); derived by completing the square.
      double b = 3.0 - 0.25 * t * t;
      double poly = b * b - b + 0.75 - 0.5 * t * t;
      return 0.25 * kInvSqrt4Pi * std::exp(-0.25 * t * t) * poly;
    }
  }
  throw std::logic_error("kernel_selfconv: unknown family");
}

KernelFamily kernel_family_from_name(const std::string& name) {
  if (name == "uniform") return KernelFamily::uniform;
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "gaussian4") return KernelFamily::gaussian4;
  throw ConfigError("unknown kernel family: " + name);
}

std::string kernel_family_name(KernelFamily family) {
  switch (family) {
    case KernelFamily::uniform:
      return "uniform";
    case KernelFamily::gaussian:
      return "gaussian";
    case KernelFamily::gaussian4:
      return "gaussian4";
  }
  return "?";
}

}  // namespace pstmle
