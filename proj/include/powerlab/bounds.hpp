#pragma once

#include <cmath>
#include <stdexcept>

#include "core.hpp"

namespace powerlab {

/// Upper bound on sin^2 between the k-th momentum iterate and the top eigenvector.
/// `overlap` is |q0^T v1|.
inline double powerm_bound(int k, double lambda1, double lambda2, double beta, double overlap) {
  detail::require(k >= 0, "powerm_bound: k must be nonnegative");
  detail::require(0.0 < lambda2 && lambda2 < lambda1 && lambda1 <= 1.0,
                  "powerm_bound: need 0 < lambda2 < lambda1 <= 1");
  detail::require(overlap > 0.0 && overlap <= 1.0, "powerm_bound: overlap must lie in (0, 1]");
  detail::require(beta >= 0.0, "powerm_bound: beta must be nonnegative");
  const double two_sqrt_beta = 2.0 * std::sqrt(beta);
  if (two_sqrt_beta > lambda1) {
    throw std::domain_error("powerm_bound: 2*sqrt(beta) exceeds lambda1, outside guarantee region");
  }
  const double top = lambda1 + std::sqrt(lambda1 * lambda1 - 4.0 * beta);
  const double o2 = overlap * overlap;
  if (lambda2 < two_sqrt_beta) {
    return 4.0 / o2 * std::pow(two_sqrt_beta / top, 2.0 * k);
  }
  const double second = lambda2 + std::sqrt(std::max(0.0, lambda2 * lambda2 - 4.0 * beta));
  return 1.0 / o2 * std::pow(second / top, 2.0 * k);
}

/// True when the second-eigenvalue estimate is close enough for the momentum
/// phase to converge: |l2 - est| <= l1 - l2.
inline bool check_rho_precision(double lambda2_est, const Spectrum& spectrum) {
  detail::require(spectrum.dim() >= 2, "check_rho_precision: need two eigenvalues");
  return std::abs(spectrum[1] - lambda2_est) <= spectrum[0] - spectrum[1];
}

/// Budget for a fixed-length pre-momentum phase given lower bounds alpha1 <= l1 - l2
/// and alpha2 <= l2 - l3, target precision rho, tolerance tau and start angle theta0.
inline int practical_J_bound(double alpha1, double alpha2, double rho, double tau, int d, double theta0,
                             double c = 1.0) {
  detail::require(alpha1 > 0.0 && alpha2 > 0.0, "practical_J_bound: alphas must be positive");
  detail::require(rho > 0.0 && rho < 0.5, "practical_J_bound: rho must lie in (0, 1/2)");
  detail::require(tau > 1.0, "practical_J_bound: tau must exceed 1");
  detail::require(d >= 1, "practical_J_bound: d must be positive");
  detail::require(c > 0.0, "practical_J_bound: c must be positive");
  if (rho >= std::sqrt(alpha1)) {
    throw std::domain_error("practical_J_bound: rho must be below sqrt(alpha1)");
  }
  const double delta = std::min(rho, 1.0 / (tau * std::sqrt(double(d))));
  const double tan_theta = std::tan(theta0);
  const double raw = c * (std::log(tan_theta * tan_theta / (delta * alpha2)) / alpha1 +
                          std::log(double(d) * tau / rho) / alpha2);
  // Guard against values like 2.0000000000000004 landing one step too high.
  const double j = std::ceil(raw - 1e-9 * std::max(1.0, std::abs(raw)));
  return std::max(1, static_cast<int>(j));
}

}  // namespace powerlab
