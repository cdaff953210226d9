#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace glmmd {

/// Observations for one group. Row j of `xa` / `xb` holds the predictors
/// of response y(j). Row order carries no meaning for the likelihood.
struct Group {
  std::string id;
  Eigen::VectorXd y;
  Eigen::MatrixXd xa;  // n_i x dA, partnered by a random effect
  Eigen::MatrixXd xb;  // n_i x dB, fixed effect only

  [[nodiscard]] int size() const noexcept { return static_cast<int>(y.size()); }
};

/// Grouped data. Construction validates: m >= 2, every n_i >= 1, identical
/// dA and dB across groups, dA >= 1, all entries finite.
class Dataset {
 public:
  Dataset(std::vector<Group> groups, std::vector<std::string> xa_names = {},
          std::vector<std::string> xb_names = {});

  [[nodiscard]] std::span<const Group> groups() const noexcept { return groups_; }
  [[nodiscard]] const Group& group(int i) const { return groups_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] int num_groups() const noexcept { return static_cast<int>(groups_.size()); }
  [[nodiscard]] int dim_a() const noexcept { return dim_a_; }
  [[nodiscard]] int dim_b() const noexcept { return dim_b_; }
  [[nodiscard]] int total_obs() const noexcept { return total_obs_; }
  /// n = (1/m) sum_i n_i.
  [[nodiscard]] double mean_group_size() const noexcept {
    return static_cast<double>(total_obs_) / static_cast<double>(groups_.size());
  }
  [[nodiscard]] const std::vector<std::string>& xa_names() const noexcept { return xa_names_; }
  [[nodiscard]] const std::vector<std::string>& xb_names() const noexcept { return xb_names_; }

 private:
  std::vector<Group> groups_;
  std::vector<std::string> xa_names_;
  std::vector<std::string> xb_names_;
  int dim_a_ = 0;
  int dim_b_ = 0;
  int total_obs_ = 0;
};

/// (beta_A, beta_B, Sigma, phi).
struct Parameters {
  Eigen::VectorXd beta_a;
  Eigen::VectorXd beta_b;
  Eigen::MatrixXd sigma;
  double phi = 1.0;

  [[nodiscard]] int dim_a() const noexcept { return static_cast<int>(beta_a.size()); }
  [[nodiscard]] int dim_b() const noexcept { return static_cast<int>(beta_b.size()); }

  /// Throws DomainError unless Sigma is symmetric positive definite and
  /// phi > 0; PreconditionError on dimension mismatch.
  void validate() const;
};

/// Optimizer coordinates: [beta_a, beta_b, log-Cholesky vech(L), log phi].
/// The Cholesky block lists the lower triangle column by column with the
/// diagonal entries on the log scale.
struct UnconstrainedParams {
  Eigen::VectorXd theta;
};

[[nodiscard]] int unconstrained_size(int dim_a, int dim_b) noexcept;
[[nodiscard]] UnconstrainedParams to_unconstrained(const Parameters& p);
[[nodiscard]] Parameters from_unconstrained(const UnconstrainedParams& u, int dim_a, int dim_b);

/// Column-major lower-triangle stacking of a square matrix.
[[nodiscard]] Eigen::VectorXd vech(const Eigen::MatrixXd& a);
/// Column stacking.
[[nodiscard]] Eigen::VectorXd vec(const Eigen::MatrixXd& a);
/// Inverse of vech for symmetric matrices.
[[nodiscard]] Eigen::MatrixXd unvech(const Eigen::VectorXd& v);

/// D_d with D_d vech(A) = vec(A) for symmetric A (d^2 x d(d+1)/2).
[[nodiscard]] Eigen::MatrixXd duplication_matrix(int d);
/// Moore-Penrose inverse (D'D)^{-1} D'.
[[nodiscard]] Eigen::MatrixXd duplication_pinv(int d);

}  // namespace glmmd
