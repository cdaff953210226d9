#include "glmmd/fit.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "glmmd/error.hpp"

namespace glmmd {
namespace {

constexpr int kMaxIrlsIters = 100;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Design stack_design(const Dataset& ds) {
  const int p = ds.dim_a() + ds.dim_b();
  Design d{Eigen::MatrixXd(ds.total_obs(), p), Eigen::VectorXd(ds.total_obs())};
  Eigen::Index row = 0;
  for (const Group& g : ds.groups()) {
    d.x.block(row, 0, g.size(), ds.dim_a()) = g.xa;
    d.x.block(row, ds.dim_a(), g.size(), ds.dim_b()) = g.xb;
    d.y.segment(row, g.size()) = g.y;
    row += g.size();
  }
  return d;
}

// -sum(y eta - b(eta)), or +inf when eta leaves the domain.
double glm_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, Family family) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (!family.in_domain(eta(i))) return kInf;
    s -= y(i) * eta(i) - family.b_unchecked(eta(i));
  }
  return s;
}

std::optional<Eigen::VectorXd> weighted_ls(const Eigen::MatrixXd& x, const Eigen::VectorXd& w,
                                           const Eigen::VectorXd& z) {
  const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtwx);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) return std::nullopt;
  return Eigen::VectorXd(qr.solve(x.transpose() * (w.asDiagonal() * z)));
}

// Canonical-link IRLS; nullopt on rank deficiency or an inadmissible fit.
std::optional<Eigen::VectorXd> irls(const Design& d, Family family) {
  Eigen::VectorXd eta(d.y.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = family.mean_to_eta(d.y(i));
  Eigen::VectorXd beta;
  double dev = kInf;
  for (int it = 0; it < kMaxIrlsIters; ++it) {
    Eigen::VectorXd w(eta.size());
    Eigen::VectorXd z(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      w(i) = family.b2_unchecked(eta(i));
      z(i) = eta(i) + (d.y(i) - family.b1_unchecked(eta(i))) / w(i);
    }
    auto next = weighted_ls(d.x, w, z);
    if (!next || !next->allFinite()) return std::nullopt;
    Eigen::VectorXd cand = *next;
    double cand_dev = glm_deviance(d.y, d.x * cand, family);
    if (beta.size() > 0) {
      for (int h = 0; h < 30 && !(cand_dev <= dev); ++h) {
        cand = 0.5 * (cand + beta);
        cand_dev = glm_deviance(d.y, d.x * cand, family);
      }
    }
    if (!std::isfinite(cand_dev)) return std::nullopt;
    const bool done = beta.size() > 0 && std::abs(dev - cand_dev) <= 1e-10 * (1.0 + std::abs(cand_dev));
    beta = std::move(cand);
    dev = cand_dev;
    eta = d.x * beta;
    if (done) return beta;
  }
  return beta;
}

Parameters fallback_start(const Dataset& ds) {
  Parameters p;
  p.beta_a = Eigen::VectorXd::Zero(ds.dim_a());
  p.beta_b = Eigen::VectorXd::Zero(ds.dim_b());
  p.sigma = 0.25 * Eigen::MatrixXd::Identity(ds.dim_a(), ds.dim_a());
  p.phi = 1.0;
  return p;
}

}  // namespace

void FitOptions::validate() const {
  if (max_iters < 1) throw PreconditionError("max_iters must be >= 1");
  if (!(tol_f > 0.0) || !(tol_x > 0.0)) throw PreconditionError("tolerances must be positive");
  if (restarts < 0) throw PreconditionError("restarts must be >= 0");
  quadrature.validate();
}

double pearson_dispersion(const Dataset& ds, const Parameters& p, Family family, bool use_modes,
                          bool df_correction) {
  double ss = 0.0;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(ds.dim_a());
  for (const Group& g : ds.groups()) {
    if (use_modes) u = group_posterior_mode(p, g, family).u_star;
    Eigen::VectorXd eta = g.xa * (p.beta_a + u);
    if (ds.dim_b() > 0) eta += g.xb * p.beta_b;
    for (int j = 0; j < g.size(); ++j) {
      const CumulantDerivs b = family.b_suite(eta(j));
      const double r = g.y(j) - b.b1;
      ss += r * r / b.b2;
    }
  }
  const int denom = df_correction ? ds.total_obs() - ds.dim_a() - ds.dim_b() : ds.total_obs();
  if (denom <= 0) throw PreconditionError("too few observations for the Pearson estimator");
  return ss / denom;
}

StartingValues starting_values(const Dataset& ds, Family family) {
  check_support(ds, family);
  const Design d = stack_design(ds);
  std::optional<Eigen::VectorXd> beta;
  try {
    beta = irls(d, family);
  } catch (const DomainError&) {
    beta.reset();
  }
  Parameters p = fallback_start(ds);
  if (!beta) {
    return {p, "IRLS for starting values failed; using beta = 0, Sigma = 0.25 I, phi = 1"};
  }
  p.beta_a = beta->head(ds.dim_a());
  p.beta_b = beta->tail(ds.dim_b());
  double phi = 0.0;
  try {
    phi = pearson_dispersion(ds, p, family, false);
  } catch (const Error&) {
    phi = 0.0;
  }
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    return {fallback_start(ds),
            "Pearson dispersion at the IRLS fit is not positive; using beta = 0, Sigma = 0.25 I, phi = 1"};
  }
  p.phi = phi;
  return {p, std::nullopt};
}

FitResult fit_mle_from(const Dataset& ds, Family family, const Parameters& start, const FitOptions& opts) {
  opts.validate();
  check_support(ds, family);
  const int da = ds.dim_a();
  const int db = ds.dim_b();

  std::function<double(const Parameters&)> loglik;
  std::optional<LikelihoodEvaluator> evaluator;
  if (family == kGaussian) {
    loglik = [&ds](const Parameters& p) { return gaussian_marginal_loglik(p, ds); };
  } else {
    evaluator.emplace(ds, family, opts.quadrature);
    loglik = [&evaluator](const Parameters& p) { return (*evaluator)(p); };
  }
  const Objective objective = [&](const Eigen::VectorXd& theta) {
    try {
      const double v = loglik(from_unconstrained({theta}, da, db));
      return std::isfinite(v) ? -v : kInf;
    } catch (const Error&) {
      return kInf;
    }
  };

  FitResult res;
  res.start = start;
  const Eigen::VectorXd theta0 = to_unconstrained(start).theta;
  const double f0 = objective(theta0);
  if (!std::isfinite(f0)) {
    throw DomainError("log-likelihood is not finite at the starting values");
  }
  res.start_loglik = -f0;

  NelderMeadResult best = nelder_mead(objective, theta0, opts.simplex());
  res.iters = best.iters;
  res.evaluations = best.evaluations;

  std::mt19937_64 gen(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < opts.restarts; ++r) {
    Eigen::VectorXd theta = best.x;
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) *= 1.0 + 0.1 * normal(gen);
    NelderMeadResult run = nelder_mead(objective, theta, opts.simplex());
    res.iters += run.iters;
    res.evaluations += run.evaluations;
    if (run.f < best.f) {
      best = std::move(run);
    }
  }

  // The starting point is always a vertex of the first simplex, so
  // best.f <= f0.
  res.params = from_unconstrained({best.x}, da, db);
  res.loglik = -best.f;
  res.converged = best.converged;
  return res;
}

FitResult fit_mle(const Dataset& ds, Family family, const FitOptions& opts) {
  check_support(ds, family);
  StartingValues sv = starting_values(ds, family);
  FitResult res = fit_mle_from(ds, family, sv.params, opts);
  res.warning = std::move(sv.warning);
  return res;
}

}  // namespace glmmd
