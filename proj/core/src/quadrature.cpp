#include "glmmd/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "glmmd/error.hpp"

namespace glmmd {
namespace {

struct OrthonormalValue {
  double p;      // p_n(x)
  double dp;     // p_n'(x)
};

// Orthonormal Hermite polynomials w.r.t. exp(-x^2):
//   p_0 = pi^{-1/4}, p_j = x sqrt(2/j) p_{j-1} - sqrt((j-1)/j) p_{j-2},
//   p_n' = sqrt(2n) p_{n-1}.
OrthonormalValue hermite_orthonormal(int n, double x) {
  double p_prev = 0.0;
  double p = 1.0 / std::pow(std::numbers::pi, 0.25);
  for (int j = 1; j <= n; ++j) {
    const double next = x * std::sqrt(2.0 / j) * p - std::sqrt(static_cast<double>(j - 1) / j) * p_prev;
    p_prev = p;
    p = next;
  }
  return {p, std::sqrt(2.0 * n) * p_prev};
}

GaussHermiteRule compute_rule(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);

  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double x = eig.eigenvalues()(k);
    OrthonormalValue v = hermite_orthonormal(n, x);
    for (int it = 0; it < 3 && v.dp != 0.0; ++it) {
      x -= v.p / v.dp;
      v = hermite_orthonormal(n, x);
    }
    rule.nodes[static_cast<std::size_t>(k)] = x;
    rule.weights[static_cast<std::size_t>(k)] = 2.0 / (v.dp * v.dp);
  }
  // Symmetrize to remove last-bit asymmetry from the eigensolver.
  for (int k = 0; k < n / 2; ++k) {
    const auto lo = static_cast<std::size_t>(k);
    const auto hi = static_cast<std::size_t>(n - 1 - k);
    const double x = 0.5 * (rule.nodes[hi] - rule.nodes[lo]);
    const double w = 0.5 * (rule.weights[hi] + rule.weights[lo]);
    rule.nodes[lo] = -x;
    rule.nodes[hi] = x;
    rule.weights[lo] = rule.weights[hi] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int n) {
  if (n < 1 || n > 200) {
    throw PreconditionError("Gauss-Hermite order must be in [1, 200], got " + std::to_string(n));
  }
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(compute_rule(n));
  return *slot;
}

}  // namespace glmmd
