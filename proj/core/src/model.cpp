#include "glmmd/model.hpp"

#include <cmath>
#include <utility>

#include "glmmd/error.hpp"

namespace glmmd {
namespace {

std::vector<std::string> default_names(const char* prefix, int d) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) names.push_back(std::string(prefix) + std::to_string(k + 1));
  return names;
}

}  // namespace

Dataset::Dataset(std::vector<Group> groups, std::vector<std::string> xa_names,
                 std::vector<std::string> xb_names)
    : groups_(std::move(groups)), xa_names_(std::move(xa_names)), xb_names_(std::move(xb_names)) {
  if (groups_.size() < 2) {
    throw PreconditionError("dataset needs at least 2 groups, got " +
                            std::to_string(groups_.size()));
  }
  dim_a_ = static_cast<int>(groups_.front().xa.cols());
  dim_b_ = static_cast<int>(groups_.front().xb.cols());
  if (dim_a_ < 1) throw PreconditionError("dataset needs at least one random-effect predictor");
  for (const Group& g : groups_) {
    const auto n = g.y.size();
    if (n < 1) throw PreconditionError("group '" + g.id + "' has no observations");
    if (g.xa.rows() != n || g.xb.rows() != n) {
      throw PreconditionError("group '" + g.id + "': predictor rows do not match responses");
    }
    if (g.xa.cols() != dim_a_ || g.xb.cols() != dim_b_) {
      throw PreconditionError("group '" + g.id + "': predictor dimensions differ across groups");
    }
    if (!g.y.allFinite() || !g.xa.allFinite() || !g.xb.allFinite()) {
      throw DomainError("group '" + g.id + "' contains non-finite values");
    }
    total_obs_ += static_cast<int>(n);
  }
  if (xa_names_.empty()) xa_names_ = default_names("xa", dim_a_);
  if (xb_names_.empty()) xb_names_ = default_names("xb", dim_b_);
  if (static_cast<int>(xa_names_.size()) != dim_a_ || static_cast<int>(xb_names_.size()) != dim_b_) {
    throw PreconditionError("predictor name count does not match predictor dimension");
  }
}

void Parameters::validate() const {
  const auto da = beta_a.size();
  if (sigma.rows() != da || sigma.cols() != da) {
    throw PreconditionError("Sigma must be " + std::to_string(da) + "x" + std::to_string(da));
  }
  if (!beta_a.allFinite() || !beta_b.allFinite() || !sigma.allFinite()) {
    throw DomainError("parameters contain non-finite values");
  }
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw DomainError("dispersion phi must be positive, got " + std::to_string(phi));
  }
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw DomainError("Sigma is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw DomainError("Sigma is not positive definite");
}

int unconstrained_size(int dim_a, int dim_b) noexcept {
  return dim_a + dim_b + dim_a * (dim_a + 1) / 2 + 1;
}

UnconstrainedParams to_unconstrained(const Parameters& p) {
  p.validate();
  const int da = p.dim_a();
  const int db = p.dim_b();
  Eigen::VectorXd theta(unconstrained_size(da, db));
  theta.head(da) = p.beta_a;
  theta.segment(da, db) = p.beta_b;
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(p.sigma).matrixL();
  int k = da + db;
  for (int j = 0; j < da; ++j) {
    for (int i = j; i < da; ++i) theta(k++) = (i == j) ? std::log(l(i, j)) : l(i, j);
  }
  theta(k) = std::log(p.phi);
  return {std::move(theta)};
}

Parameters from_unconstrained(const UnconstrainedParams& u, int dim_a, int dim_b) {
  if (u.theta.size() != unconstrained_size(dim_a, dim_b)) {
    throw PreconditionError("unconstrained vector has length " + std::to_string(u.theta.size()) +
                            ", expected " + std::to_string(unconstrained_size(dim_a, dim_b)));
  }
  Parameters p;
  p.beta_a = u.theta.head(dim_a);
  p.beta_b = u.theta.segment(dim_a, dim_b);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(dim_a, dim_a);
  int k = dim_a + dim_b;
  for (int j = 0; j < dim_a; ++j) {
    for (int i = j; i < dim_a; ++i) l(i, j) = (i == j) ? std::exp(u.theta(k++)) : u.theta(k++);
  }
  p.sigma = l * l.transpose();
  p.phi = std::exp(u.theta(k));
  return p;
}

Eigen::VectorXd vech(const Eigen::MatrixXd& a) {
  const auto d = a.rows();
  Eigen::VectorXd v(d * (d + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) v(k++) = a(i, j);
  return v;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& a) {
  return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
}

Eigen::MatrixXd unvech(const Eigen::VectorXd& v) {
  const auto d = static_cast<Eigen::Index>(std::lround((std::sqrt(8.0 * v.size() + 1.0) - 1.0) / 2.0));
  if (d * (d + 1) / 2 != v.size()) throw PreconditionError("vector length is not triangular");
  Eigen::MatrixXd a(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) a(i, j) = a(j, i) = v(k++);
  return a;
}

Eigen::MatrixXd duplication_matrix(int d) {
  if (d < 1) throw PreconditionError("duplication matrix needs d >= 1");
  Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(d * d, d * (d + 1) / 2);
  int k = 0;
  for (int j = 0; j < d; ++j) {
    for (int i = j; i < d; ++i, ++k) {
      dup(i + j * d, k) = 1.0;
      dup(j + i * d, k) = 1.0;
    }
  }
  return dup;
}

Eigen::MatrixXd duplication_pinv(int d) {
  const Eigen::MatrixXd dup = duplication_matrix(d);
  const Eigen::MatrixXd dtd = dup.transpose() * dup;  // diagonal: 1 or 2
  return dtd.diagonal().cwiseInverse().asDiagonal() * dup.transpose();
}

}  // namespace glmmd
