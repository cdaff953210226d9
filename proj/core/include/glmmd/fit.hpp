#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "glmmd/asym_cov.hpp"
#include "glmmd/expfam.hpp"
#include "glmmd/likelihood.hpp"
#include "glmmd/model.hpp"
#include "glmmd/optim.hpp"

namespace glmmd {

struct FitOptions {
  int max_iters = 5000;
  double tol_f = 1e-9;
  double tol_x = 1e-7;
  int restarts = 1;           // extra Nelder-Mead runs from perturbed optima
  QuadratureSpec quadrature;
  std::uint64_t seed = 20220810;  // restart perturbation stream

  void validate() const;
  [[nodiscard]] NelderMeadOptions simplex() const { return {max_iters, tol_f, tol_x}; }
};

struct FitResult {
  Parameters params;
  double loglik = 0.0;
  bool converged = false;
  int iters = 0;
  int evaluations = 0;
  Parameters start;
  double start_loglik = 0.0;
  std::optional<AsymCov> asym_cov;  // filled by attach_asymptotic_covariance
  std::optional<std::string> warning;
};

struct StartingValues {
  Parameters params;
  std::optional<std::string> warning;  // set when the fallback was used
};

/// Fixed-effects-only GLM fit by IRLS with the canonical link on the
/// stacked design [X_A, X_B]; Sigma = 0.25 I and phi by the Pearson
/// estimator at u = 0. If IRLS fails, or yields a non-positive dispersion,
/// returns beta = 0, Sigma = 0.25 I, phi = 1 with a warning.
[[nodiscard]] StartingValues starting_values(const Dataset& ds, Family family);

/// Pearson dispersion estimate
///   sum_ij (y_ij - mu_ij)^2 / b''(eta_ij) / (N - dA - dB)
/// with eta at the group posterior modes (use_modes) or at u = 0. Without
/// df_correction the denominator is N.
[[nodiscard]] double pearson_dispersion(const Dataset& ds, const Parameters& p, Family family,
                                        bool use_modes, bool df_correction = true);

/// Conditional maximum likelihood by Nelder-Mead over UnconstrainedParams.
/// The Gaussian family uses the closed-form marginal likelihood. Infeasible
/// evaluations count as +inf for the minimizer. Throws DomainError for
/// responses outside the support and when the start itself is infeasible.
[[nodiscard]] FitResult fit_mle(const Dataset& ds, Family family, const FitOptions& opts = {});

/// Same, from caller-supplied starting values.
[[nodiscard]] FitResult fit_mle_from(const Dataset& ds, Family family, const Parameters& start,
                                     const FitOptions& opts = {});

}  // namespace glmmd
