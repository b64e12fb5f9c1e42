#pragma once

#include <cmath>
#include <stdexcept>

#include "relight/frame.hpp"

namespace relight {

// The single per-frame correction parameter of I_out = I_in^gamma.
// gamma < 1 brightens, gamma > 1 darkens; 1 is the identity.
struct GammaValue {
  double value = 1.0;
};

inline constexpr double kGammaMin = 0.1;
inline constexpr double kGammaMax = 10.0;

inline GammaValue clamp_gamma(double raw, double lo = kGammaMin,
                              double hi = kGammaMax) {
  if (!(lo > 0.0 && lo < hi)) {
    throw std::invalid_argument("clamp_gamma: need 0 < lo < hi");
  }
  return GammaValue{std::min(std::max(raw, lo), hi)};
}

// Power-law mapping applied per channel with one shared gamma.
inline Frame apply_gamma(const Frame& f, GammaValue g) {
  if (!(g.value > 0.0)) {
    throw std::domain_error("apply_gamma: gamma must be positive");
  }
  Frame out = f;
  if (g.value == 1.0) return out;
  for (double& v : out.data) v = std::pow(v, g.value);
  return out;
}

// d I_out / d gamma = I_in^gamma * ln(I_in), with 0 at I_in = 0 (the limit).
inline Frame gamma_gradient(const Frame& f, GammaValue g) {
  if (!(g.value > 0.0)) {
    throw std::domain_error("gamma_gradient: gamma must be positive");
  }
  Frame out = f;
  for (double& v : out.data) {
    v = v > 0.0 ? std::pow(v, g.value) * std::log(v) : 0.0;
  }
  return out;
}

}  // namespace relight
