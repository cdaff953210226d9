#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "glmmd/asym_cov.hpp"
#include "glmmd/expfam.hpp"
#include "glmmd/fit.hpp"
#include "glmmd/model.hpp"

namespace glmmd {

/// Plug-in estimate of Lambda_B. For each group,
///   Omega_i = (1/n_i) sum_j b''(eta_ij) x_ij x_ij',  x = (x_A, x_B),
/// with eta at the group posterior mode; returns
///   ( (1/m) sum_i [lower-right dB x dB block of Omega_i^{-1}]^{-1} )^{-1}.
/// Throws PreconditionError when dB = 0 and DomainError naming the group
/// when some Omega_i is singular.
[[nodiscard]] Eigen::MatrixXd estimate_lambda_betaB(const Dataset& ds, const Parameters& p, Family family);

/// Large-sample covariance blocks at plug-in values, using the dataset's m
/// and average group size n.
[[nodiscard]] AsymCov asymptotic_covariance(const Dataset& ds, const Parameters& p, Family family);

/// Fills fit.asym_cov from the fitted parameters.
void attach_asymptotic_covariance(FitResult& fit, const Dataset& ds, Family family);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool truncated = false;  // lower endpoint was negative and clipped to 0
};

/// phi_hat -/+ z_{1-alpha/2} [(2 d'(phi_hat)/phi_hat + d''(phi_hat)) m n]^{-1/2}.
[[nodiscard]] Interval ci_phi(double phi_hat, Family family, int m, double n, double alpha);

/// phi_hat -/+ z_{1-alpha/2} phi_hat^2 (sum d2_values)^{-1/2}, where each d2
/// value is the psi-curvature of the observation's dispersion term at
/// psi = 1/phi_hat. Throws DomainError when the sum is not positive.
[[nodiscard]] Interval ci_phi_general(double phi_hat, std::span<const double> d2_values, double alpha);

/// How standard-deviation rows (sqrt of a variance parameter) get their
/// intervals: square roots of the raw-scale endpoints, or a delta-method
/// Wald interval with Var(sqrt(v)) = Var(v) / (4 v).
enum class SdScaleMethod { Endpoint, Delta };

enum class RowScale { Raw, Sd };

struct CiRow {
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  RowScale scale = RowScale::Raw;
  bool has_interval = true;  // correlation rows carry only an estimate
  bool truncated = false;
};

struct CiTable {
  std::vector<CiRow> rows;
  [[nodiscard]] const CiRow& row(const std::string& name) const;
};

/// Wald intervals for every beta coordinate, vech(Sigma) coordinate and
/// phi, plus sd-scale rows for sqrt(Sigma_kk) and sqrt(phi) and
/// estimate-only correlation rows. Computes the covariance blocks when the
/// fit does not carry them. Throws ConvergenceError for a non-converged fit.
[[nodiscard]] CiTable ci_all(const FitResult& fit, const Dataset& ds, Family family, double alpha,
                             SdScaleMethod sd_method = SdScaleMethod::Endpoint);

/// CSV with columns name,estimate,lower,upper,scale,truncated. Rows without
/// an interval leave lower and upper empty.
void write_ci_csv(std::ostream& out, const CiTable& table);
[[nodiscard]] std::string format_ci_table(const CiTable& table, double alpha);

}  // namespace glmmd
