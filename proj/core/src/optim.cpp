#include "glmmd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "glmmd/error.hpp"

namespace glmmd {
namespace {

double sanitize(double v) {
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opts) {
  if (opts.max_iters < 1 || !(opts.tol_f > 0.0) || !(opts.tol_x > 0.0)) {
    throw PreconditionError("Nelder-Mead needs max_iters >= 1 and positive tolerances");
  }
  const auto n = x0.size();
  NelderMeadResult res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    return sanitize(f(x));
  };

  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> fv(static_cast<std::size_t>(n + 1));
  fv[0] = eval(x0);
  for (Eigen::Index k = 0; k < n; ++k) {
    auto& v = simplex[static_cast<std::size_t>(k + 1)];
    v(k) += 0.05 * std::max(1.0, std::abs(x0(k)));
    fv[static_cast<std::size_t>(k + 1)] = eval(v);
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(n + 1));
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> s2;
    std::vector<double> f2;
    s2.reserve(order.size());
    f2.reserve(order.size());
    for (auto i : order) {
      s2.push_back(std::move(simplex[i]));
      f2.push_back(fv[i]);
    }
    simplex = std::move(s2);
    fv = std::move(f2);
  };

  const auto worst = static_cast<std::size_t>(n);
  Eigen::VectorXd centroid(n);
  for (;;) {
    sort_simplex();
    double size = 0.0;
    for (std::size_t k = 1; k <= worst; ++k)
      size = std::max(size, (simplex[k] - simplex[0]).lpNorm<Eigen::Infinity>());
    const double spread = fv[worst] - fv[0];
    if (std::isfinite(fv[worst]) && spread <= opts.tol_f && size <= opts.tol_x) {
      res.converged = true;
      break;
    }
    if (res.iters >= opts.max_iters) break;
    ++res.iters;

    centroid.setZero();
    for (std::size_t k = 0; k < worst; ++k) centroid += simplex[k];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[worst - 1]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    // Contraction: outside when the reflection beats the worst vertex.
    const bool outside = fr < fv[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t k = 1; k <= worst; ++k) {
      simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0]);
      fv[k] = eval(simplex[k]);
    }
  }
  res.x = simplex[0];
  res.f = fv[0];
  return res;
}

}  // namespace glmmd
