#pragma once

#include <vector>

namespace glmmd {

/// Gauss-Hermite rule for the weight exp(-x^2): sum_k w_k g(x_k) approximates
/// the integral of g(x) exp(-x^2) over the real line, exactly for
/// polynomials of degree < 2n.
struct GaussHermiteRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;
};

/// Nodes from the eigenvalues of the symmetric tridiagonal Jacobi matrix
/// (Golub-Welsch), polished by Newton steps on the orthonormal Hermite
/// recurrence, which also supplies the weights. Rules are computed once per
/// order and cached; the returned reference stays valid for the program's
/// lifetime. Thread-safe. Requires 1 <= n <= 200.
const GaussHermiteRule& gauss_hermite(int n);

}  // namespace glmmd
