#pragma once

#include <Eigen/Dense>
#include <functional>

namespace glmmd {

struct NelderMeadOptions {
  int max_iters = 5000;
  double tol_f = 1e-9;  // spread of function values across the simplex
  double tol_x = 1e-7;  // largest vertex distance from the best vertex (max norm)
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  bool converged = false;
  int iters = 0;
  int evaluations = 0;
};

/// Objective for minimization. Returning +inf (or NaN) marks the point
/// infeasible; the simplex then retreats from it.
using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Nelder-Mead simplex minimization with reflection 1, expansion 2,
/// contraction 1/2 and shrink 1/2. The initial simplex offsets coordinate k
/// of x0 by 0.05 max(1, |x0_k|). Stops once both the value spread and the
/// simplex size fall below tolerance, or after max_iters iterations with
/// converged = false.
[[nodiscard]] NelderMeadResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                                           const NelderMeadOptions& opts = {});

}  // namespace glmmd
