#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "glmmd/expfam.hpp"
#include "glmmd/model.hpp"

namespace glmmd::testing {

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// Random SPD matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng, double lo = 0.2, double hi = 2.0) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> ev(lo, hi);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = z(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd lambda(d);
  for (int i = 0; i < d; ++i) lambda(i) = ev(rng);
  return q * lambda.asDiagonal() * q.transpose();
}

struct DesignSpec {
  int m = 10;
  int n_min = 2;
  int n_max = 10;
  int dim_a = 1;   // first column of xA is an intercept
  int dim_b = 1;
};

// Responses drawn from the model at `p`, with random predictors.
inline Dataset simulate_grouped(const DesignSpec& spec, const Parameters& p, Family family, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> size(spec.n_min, spec.n_max);
  const Eigen::LLT<Eigen::MatrixXd> llt(p.sigma);
  const Eigen::MatrixXd l = llt.matrixL();
  std::vector<Group> groups;
  for (int i = 0; i < spec.m; ++i) {
    Group g;
    g.id = "g" + std::to_string(i + 1);
    const int n = size(rng);
    g.y.resize(n);
    g.xa.resize(n, spec.dim_a);
    g.xb.resize(n, spec.dim_b);
    Eigen::VectorXd zz(spec.dim_a);
    for (int k = 0; k < spec.dim_a; ++k) zz(k) = z(rng);
    const Eigen::VectorXd u = l * zz;
    for (int j = 0; j < n; ++j) {
      g.xa(j, 0) = 1.0;
      for (int k = 1; k < spec.dim_a; ++k) g.xa(j, k) = unif(rng);
      for (int k = 0; k < spec.dim_b; ++k) g.xb(j, k) = unif(rng);
      double eta = (p.beta_a + u).dot(g.xa.row(j).transpose());
      if (spec.dim_b > 0) eta += p.beta_b.dot(g.xb.row(j).transpose());
      g.y(j) = sample_response(family, eta, p.phi, rng);
    }
    groups.push_back(std::move(g));
  }
  return Dataset(std::move(groups));
}

inline Parameters make_params(std::vector<double> beta_a, std::vector<double> beta_b, Eigen::MatrixXd sigma,
                              double phi) {
  Parameters p;
  p.beta_a = Eigen::Map<Eigen::VectorXd>(beta_a.data(), static_cast<Eigen::Index>(beta_a.size()));
  p.beta_b = Eigen::Map<Eigen::VectorXd>(beta_b.data(), static_cast<Eigen::Index>(beta_b.size()));
  p.sigma = std::move(sigma);
  p.phi = phi;
  return p;
}

}  // namespace glmmd::testing
