#pragma once

#include <Eigen/Dense>

namespace glmmd {

/// Diagonal blocks of the large-sample covariance of
/// (beta_A_hat, beta_B_hat, vech(Sigma_hat), phi_hat). Cross-blocks are zero.
struct AsymCov {
  Eigen::MatrixXd beta_a;       // Sigma / m
  Eigen::MatrixXd beta_b;       // phi Lambda_B / (m n)
  Eigen::MatrixXd vech_sigma;   // 2 D+ (Sigma (x) Sigma) D+' / m
  double phi = 0.0;             // 1 / ((2 d'(phi)/phi + d''(phi)) m n)
  Eigen::MatrixXd lambda_b;     // Lambda_B itself (dB x dB)
  int m = 0;
  double n = 0.0;
};

}  // namespace glmmd
