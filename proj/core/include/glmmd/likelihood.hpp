#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "glmmd/expfam.hpp"
#include "glmmd/model.hpp"

namespace glmmd {

/// Quadrature settings for the random-effect integral.
struct QuadratureSpec {
  int nodes_per_dim = 21;  // odd, so the centering point is a node
  bool adaptive = true;    // center at the posterior mode, scale by its curvature

  void validate() const;
};

/// Mode of the group integrand
///   f(u) = sum_j {y_j eta_j(u) - b(eta_j(u))}/phi - u' Sigma^{-1} u / 2
/// and the negated Hessian of f there.
struct PosteriorMode {
  Eigen::VectorXd u_star;
  Eigen::MatrixXd hessian;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// (beta_A + u)' x_A + beta_B' x_B.
[[nodiscard]] double eta_linear(const Parameters& p, const Eigen::Ref<const Eigen::VectorXd>& xa,
                                const Eigen::Ref<const Eigen::VectorXd>& xb,
                                const Eigen::Ref<const Eigen::VectorXd>& u);

/// Damped Newton from u = 0 (or from an admissible shift when u = 0 puts
/// some natural parameter outside the domain). Converges when
/// |grad| <= 1e-8 (1 + |f|). Throws ConvergenceError after 100 iterations
/// and DomainError when no admissible u can be found.
[[nodiscard]] PosteriorMode group_posterior_mode(const Parameters& p, const Group& group, Family family);

/// Conditional log-likelihood with every group's random-effect integral
/// computed by (adaptive) tensor-product Gauss-Hermite quadrature.
/// Quadrature needs dA <= 2; a Gaussian family with larger dA is routed to
/// gaussian_marginal_loglik. Quadrature nodes whose natural parameters leave
/// the domain contribute zero. Throws DomainError (naming the group) when no
/// admissible random effect exists or every node is outside the domain.
[[nodiscard]] double log_likelihood(const Parameters& p, const Dataset& ds, Family family,
                                    const QuadratureSpec& q = {});

/// Closed form for the Gaussian family: sum over groups of the log density
/// of N(X_A beta_A + X_B beta_B, phi I + X_A Sigma X_A').
[[nodiscard]] double gaussian_marginal_loglik(const Parameters& p, const Dataset& ds);

/// Reusable evaluator: validates the response support once and caches the
/// parameter-free c(y) and e(y) sums per group. Evaluations are pure and
/// sum group contributions in group order.
struct GroupConstants;

class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(const Dataset& ds, Family family, QuadratureSpec q = {});

  [[nodiscard]] double operator()(const Parameters& p) const;
  [[nodiscard]] std::vector<double> group_contributions(const Parameters& p) const;

  [[nodiscard]] const Dataset& dataset() const noexcept { return *ds_; }
  [[nodiscard]] Family family() const noexcept { return family_; }
  [[nodiscard]] const QuadratureSpec& quadrature() const noexcept { return q_; }

 private:
  const Dataset* ds_;
  Family family_;
  QuadratureSpec q_;
  std::vector<double> sum_c_;
  std::vector<double> sum_e_;
  std::vector<std::shared_ptr<const GroupConstants>> constants_;
};

/// Throws DomainError naming the first response outside the family support
/// (group id, position within the group and 1-based position in the data).
void check_support(const Dataset& ds, Family family);

}  // namespace glmmd
