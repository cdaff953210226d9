#include "glmmd/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>

#include "glmmd/error.hpp"
#include "glmmd/quadrature.hpp"

namespace glmmd {

struct GroupConstants {
  Eigen::VectorXd xa_y;  // X_A'y
  bool intercept_only = false;
};

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxNewtonIters = 100;
constexpr int kMaxQuadratureDim = 2;

GroupConstants group_constants(const Group& g) {
  return {g.xa.transpose() * g.y, g.xa.cols() == 1 && (g.xa.array() == 1.0).all()};
}

// Per-group integrand f(u) with parameter-dependent pieces precomputed.
class GroupIntegrand {
 public:
  GroupIntegrand(const Parameters& p, const Group& g, const GroupConstants& gc, Family family,
                 const Eigen::MatrixXd& sigma_inv)
      : g_(g), family_(family), inv_phi_(1.0 / p.phi), sigma_inv_(sigma_inv), xa_y_(gc.xa_y),
        intercept_only_(gc.intercept_only) {
    eta0_ = g.xa * p.beta_a;
    if (g.xb.cols() > 0) eta0_ += g.xb * p.beta_b;
    eta_.resize(eta0_.size());
    y_eta0_ = g.y.dot(eta0_);
  }

  // f(u), or -inf when some eta_j(u) leaves the natural-parameter domain.
  double value(const Eigen::VectorXd& u) {
    if (intercept_only_) {
      eta_.array() = eta0_.array() + u(0);
    } else {
      eta_.noalias() = eta0_ + g_.xa * u;
    }
    // sum_j y_j eta_j = y'eta0 + (X_A'y)'u
    const double y_eta = y_eta0_ + xa_y_.dot(u);
    // Out-of-domain entries make the reduction NaN or infinite.
    double b_sum = 0.0;
    switch (family_.kind()) {
      case FamilyKind::Gaussian:
        b_sum = 0.5 * eta_.squaredNorm();
        break;
      case FamilyKind::Gamma:
        b_sum = -(-eta_.array()).log().sum();
        break;
      case FamilyKind::InverseGaussian:
        b_sum = -(-2.0 * eta_.array()).sqrt().sum();
        break;
    }
    if (!std::isfinite(b_sum)) return kNegInf;
    return (y_eta - b_sum) * inv_phi_ - 0.5 * u.dot(sigma_inv_ * u);
  }

  // Gradient and negated Hessian of f at u; requires value(u) finite.
  void derivatives(const Eigen::VectorXd& u, Eigen::VectorXd& grad, Eigen::MatrixXd& neg_hess) {
    eta_.noalias() = eta0_ + g_.xa * u;
    switch (family_.kind()) {
      case FamilyKind::Gaussian:
        resid_ = g_.y - eta_;
        weight_.setOnes(eta_.size());
        break;
      case FamilyKind::Gamma:
        weight_ = eta_.array().square().inverse();
        resid_ = g_.y.array() + eta_.array().inverse();
        break;
      case FamilyKind::InverseGaussian:
        weight_ = (-2.0 * eta_.array()).sqrt().inverse();  // b' = (-2 eta)^{-1/2}
        resid_ = g_.y - weight_;
        weight_ = weight_.array().cube();
        break;
    }
    grad.noalias() = g_.xa.transpose() * resid_ * inv_phi_ - sigma_inv_ * u;
    if (intercept_only_) {
      neg_hess(0, 0) = weight_.sum() * inv_phi_;
    } else {
      neg_hess.noalias() = g_.xa.transpose() * weight_.asDiagonal() * g_.xa * inv_phi_;
    }
    neg_hess += sigma_inv_;
  }

  // Least-squares shift aiming every eta_j at -1; used when u = 0 is not
  // admissible.
  Eigen::VectorXd admissible_start() {
    const Eigen::VectorXd target = -Eigen::VectorXd::Ones(eta0_.size()) - eta0_;
    const Eigen::VectorXd u0 = g_.xa.colPivHouseholderQr().solve(target);
    for (double scale = 1.0; scale <= 64.0; scale *= 2.0) {
      const Eigen::VectorXd u = scale * u0;
      if (std::isfinite(value(u))) return u;
    }
    throw DomainError("group '" + g_.id + "': no random effect gives admissible natural parameters");
  }

  // Open interval of scalar u keeping every eta_j(u) admissible; dA = 1.
  std::pair<double, double> admissible_interval() const {
    double lo = kNegInf;
    double hi = -kNegInf;
    for (Eigen::Index j = 0; j < eta0_.size(); ++j) {
      const double x = g_.xa(j, 0);
      if (x > 0.0) hi = std::min(hi, -eta0_(j) / x);
      if (x < 0.0) lo = std::max(lo, -eta0_(j) / x);
    }
    return {lo, hi};
  }

  const Group& group() const { return g_; }
  Family family() const { return family_; }

 private:
  const Group& g_;
  Family family_;
  double inv_phi_;
  const Eigen::MatrixXd& sigma_inv_;
  Eigen::VectorXd eta0_;
  Eigen::VectorXd eta_;
  const Eigen::VectorXd& xa_y_;
  bool intercept_only_;
  double y_eta0_ = 0.0;
  Eigen::VectorXd resid_;
  Eigen::VectorXd weight_;
};

PosteriorMode find_mode(GroupIntegrand& f, int dim) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  double fu = f.value(u);
  if (!std::isfinite(fu)) {
    u = f.admissible_start();
    fu = f.value(u);
  }
  Eigen::VectorXd grad(dim);
  Eigen::MatrixXd hess(dim, dim);
  for (int it = 0; it <= kMaxNewtonIters; ++it) {
    f.derivatives(u, grad, hess);
    const double gnorm = grad.norm();
    if (gnorm <= 1e-8 * (1.0 + std::abs(fu))) {
      return PosteriorMode{u, hess, fu, gnorm, it};
    }
    if (it == kMaxNewtonIters) break;
    const Eigen::VectorXd step = hess.llt().solve(grad);
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd cand = u + t * step;
      const double fc = f.value(cand);
      if (std::isfinite(fc) && fc >= fu - 1e-13 * (1.0 + std::abs(fu))) {
        u = cand;
        fu = fc;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  throw ConvergenceError("group '" + f.group().id + "': posterior mode search did not converge");
}

struct SigmaFactor {
  Eigen::MatrixXd inverse;
  Eigen::MatrixXd lower;  // Cholesky factor
  double log_det = 0.0;
};

SigmaFactor factor_sigma(const Parameters& p) {
  Eigen::LLT<Eigen::MatrixXd> llt(p.sigma);
  if (llt.info() != Eigen::Success) throw DomainError("Sigma is not positive definite");
  SigmaFactor s;
  s.lower = llt.matrixL();
  s.inverse = llt.solve(Eigen::MatrixXd::Identity(p.sigma.rows(), p.sigma.cols()));
  s.log_det = 2.0 * s.lower.diagonal().array().log().sum();
  return s;
}

// Map from t in R onto the side of a finite end of the admissible interval
// of a scalar random effect: u = end -/+ w softplus(t). The integrand
// vanishes like a fractional power of the distance to the end, which
// Gauss-Hermite resolves only slowly in u; in t it is smooth, and far from
// the end the map is close to linear.
class EndpointMap {
 public:
  EndpointMap(double end, bool upper, double width) : end_(end), sign_(upper ? -1.0 : 1.0), width_(width) {}

  double to_t(double u) const {
    const double sp = sign_ * (u - end_) / width_;
    return sp > 30.0 ? sp + std::log1p(-std::exp(-sp)) : std::log(std::expm1(sp));
  }

  // u(t), u'(t), u''(t), log|u'(t)| and its first two derivatives.
  struct Point {
    double u, du, d2u, log_jac, dlog_jac, d2log_jac;
  };

  Point at(double t) const {
    const double softplus = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    const double softplus_neg = softplus - t;  // softplus(-t)
    const double s = 1.0 / (1.0 + std::exp(-t));
    const double c = 1.0 / (1.0 + std::exp(t));
    return {end_ + sign_ * width_ * softplus, sign_ * width_ * s, sign_ * width_ * s * c,
            std::log(width_) - softplus_neg, c, -s * c};
  }

 private:
  double end_;
  double sign_;
  double width_;
};

// g(t) = f(u(t)) + log|u'(t)| with its first two derivatives; value is -inf
// when u(t) is not admissible in floating point.
struct MappedValue {
  double value = kNegInf;
  double grad = 0.0;
  double curv = 0.0;  // -g''(t)
};

MappedValue mapped(GroupIntegrand& f, const EndpointMap& map, double t, bool with_derivs) {
  MappedValue out;
  const EndpointMap::Point pt = map.at(t);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(1, pt.u);
  const double fu = f.value(u);
  if (!std::isfinite(fu) || !std::isfinite(pt.log_jac)) return out;
  out.value = fu + pt.log_jac;
  if (with_derivs) {
    Eigen::VectorXd grad(1);
    Eigen::MatrixXd neg_hess(1, 1);
    f.derivatives(u, grad, neg_hess);
    out.grad = grad(0) * pt.du + pt.dlog_jac;
    out.curv = neg_hess(0, 0) * pt.du * pt.du - grad(0) * pt.d2u - pt.d2log_jac;
  }
  return out;
}

// log of the integral of exp f(u) over the admissible interval for dA = 1,
// by adaptive Gauss-Hermite in the mapped variable.
double log_integral_mapped(GroupIntegrand& f, const EndpointMap& map, double u_mode, const GaussHermiteRule& rule,
                           const std::vector<double>& log_weights, std::vector<double>& terms) {
  double t = map.to_t(u_mode);
  MappedValue g = mapped(f, map, t, true);
  bool converged = false;
  for (int it = 0; it < kMaxNewtonIters && std::isfinite(g.value); ++it) {
    if (std::abs(g.grad) <= 1e-10 * (1.0 + std::abs(g.value)) && g.curv > 0.0) {
      converged = true;
      break;
    }
    const double step = g.curv > 0.0 ? g.grad / g.curv : std::copysign(1.0, g.grad);
    double scale = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving, scale *= 0.5) {
      const MappedValue cand = mapped(f, map, t + scale * step, true);
      if (std::isfinite(cand.value) && cand.value >= g.value - 1e-13 * (1.0 + std::abs(g.value))) {
        t += scale * step;
        g = cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (!converged) {
    throw ConvergenceError("group '" + f.group().id + "': mode search in the mapped variable did not converge");
  }
  const double sd = 1.0 / std::sqrt(g.curv);
  const double shift = g.value;
  terms.resize(rule.nodes.size());
  double max_term = kNegInf;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double z = rule.nodes[k];
    const double gv = mapped(f, map, t + std::numbers::sqrt2 * sd * z, false).value;
    terms[k] = std::isfinite(gv) ? log_weights[k] + (gv - shift) + z * z : kNegInf;
    max_term = std::max(max_term, terms[k]);
  }
  double acc = 0.0;
  for (double v : terms) acc += std::exp(v - max_term);
  return shift + 0.5 * std::numbers::ln2 + std::log(sd) + max_term + std::log(acc);
}

// log of the integral of exp f(u) over R^d.
double log_integral(GroupIntegrand& f, int dim, const SigmaFactor& sf, const QuadratureSpec& q,
                    const GaussHermiteRule& rule, const std::vector<double>& log_weights,
                    std::vector<double>& terms) {
  Eigen::VectorXd center;
  Eigen::MatrixXd scale;  // u = center + sqrt(2) scale z
  double log_det_scale = 0.0;
  double shift = 0.0;
  if (q.adaptive) {
    const PosteriorMode mode = find_mode(f, dim);
    if (dim == 1 && f.family() != kGaussian) {
      const auto [lo, hi] = f.admissible_interval();
      const double u_star = mode.u_star(0);
      if (std::isfinite(lo) || std::isfinite(hi)) {
        // Map the nearer end; a far end is left to zero-contribution nodes.
        const bool upper = hi - u_star <= u_star - lo;
        const EndpointMap map(upper ? hi : lo, upper, 1.0 / std::sqrt(mode.hessian(0, 0)));
        return log_integral_mapped(f, map, u_star, rule, log_weights, terms);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(mode.hessian);
    const Eigen::MatrixXd l = llt.matrixL();
    scale = l.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(dim, dim));
    log_det_scale = -l.diagonal().array().log().sum();
    center = mode.u_star;
    shift = mode.objective;
  } else {
    center = Eigen::VectorXd::Zero(dim);
    scale = sf.lower;
    log_det_scale = 0.5 * sf.log_det;
  }

  const int q_n = static_cast<int>(rule.nodes.size());
  int total = 1;
  for (int k = 0; k < dim; ++k) total *= q_n;

  terms.resize(static_cast<std::size_t>(total));
  Eigen::VectorXd z(dim);
  Eigen::VectorXd u(dim);
  double max_term = kNegInf;
  for (int idx = 0; idx < total; ++idx) {
    int rem = idx;
    double log_w = 0.0;
    for (int k = 0; k < dim; ++k) {
      const auto node = static_cast<std::size_t>(rem % q_n);
      rem /= q_n;
      z(k) = rule.nodes[node];
      log_w += log_weights[node];
    }
    u.noalias() = center + std::numbers::sqrt2 * (scale * z);
    // Past the domain boundary the integrand is the continuous extension
    // exp(-inf) = 0, so such nodes contribute nothing.
    const double fu = f.value(u);
    const double t = std::isfinite(fu) ? log_w + (fu - shift) + z.squaredNorm() : kNegInf;
    terms[static_cast<std::size_t>(idx)] = t;
    max_term = std::max(max_term, t);
  }
  if (!std::isfinite(max_term)) {
    throw DomainError("group '" + f.group().id + "': natural parameter outside the domain at every quadrature node");
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return shift + 0.5 * dim * std::numbers::ln2 + log_det_scale + max_term + std::log(acc);
}

double gaussian_group_loglik(const Parameters& p, const Group& g, const Eigen::MatrixXd& sigma_lower) {
  const auto n = static_cast<double>(g.size());
  const int d = static_cast<int>(g.xa.cols());
  Eigen::VectorXd r = g.y - g.xa * p.beta_a;
  if (g.xb.cols() > 0) r -= g.xb * p.beta_b;
  // V = phi I + W W' with W = X_A L; Woodbury through K = phi I_d + W'W.
  const Eigen::MatrixXd w = g.xa * sigma_lower;
  Eigen::MatrixXd k = w.transpose() * w;
  k.diagonal().array() += p.phi;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw DomainError("group '" + g.id + "': marginal covariance is not positive definite");
  }
  const Eigen::VectorXd wr = w.transpose() * r;
  const double quad = (r.squaredNorm() - wr.dot(llt.solve(wr))) / p.phi;
  const Eigen::MatrixXd kl = llt.matrixL();
  const double log_det = (n - d) * std::log(p.phi) + 2.0 * kl.diagonal().array().log().sum();
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

}  // namespace

void QuadratureSpec::validate() const {
  if (nodes_per_dim < 3 || nodes_per_dim % 2 == 0) {
    throw PreconditionError("nodes_per_dim must be an odd integer >= 3, got " +
                            std::to_string(nodes_per_dim));
  }
}

double eta_linear(const Parameters& p, const Eigen::Ref<const Eigen::VectorXd>& xa,
                  const Eigen::Ref<const Eigen::VectorXd>& xb, const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (xa.size() != p.beta_a.size() || u.size() != p.beta_a.size() || xb.size() != p.beta_b.size()) {
    throw PreconditionError("eta_linear: dimension mismatch");
  }
  double eta = (p.beta_a + u).dot(xa);
  if (xb.size() > 0) eta += p.beta_b.dot(xb);
  return eta;
}

PosteriorMode group_posterior_mode(const Parameters& p, const Group& group, Family family) {
  p.validate();
  const SigmaFactor sf = factor_sigma(p);
  const GroupConstants gc = group_constants(group);
  GroupIntegrand f(p, group, gc, family, sf.inverse);
  return find_mode(f, p.dim_a());
}

void check_support(const Dataset& ds, Family family) {
  int global = 0;
  for (const Group& g : ds.groups()) {
    for (int j = 0; j < g.size(); ++j) {
      ++global;
      if (!family.in_support(g.y(j))) {
        throw DomainError("response " + std::to_string(g.y(j)) + " at row " + std::to_string(global) +
                          " (group '" + g.id + "', observation " + std::to_string(j + 1) +
                          ") is outside the " + std::string(family.name()) + " support");
      }
    }
  }
}

LikelihoodEvaluator::LikelihoodEvaluator(const Dataset& ds, Family family, QuadratureSpec q)
    : ds_(&ds), family_(family), q_(q) {
  q_.validate();
  check_support(ds, family);
  if (family != kGaussian && ds.dim_a() > kMaxQuadratureDim) {
    throw PreconditionError("quadrature supports at most 2 random effects for non-Gaussian families");
  }
  sum_c_.reserve(static_cast<std::size_t>(ds.num_groups()));
  sum_e_.reserve(static_cast<std::size_t>(ds.num_groups()));
  constants_.reserve(static_cast<std::size_t>(ds.num_groups()));
  for (const Group& g : ds.groups()) {
    constants_.push_back(std::make_shared<const GroupConstants>(group_constants(g)));
    double c = 0.0;
    double e = 0.0;
    for (int j = 0; j < g.size(); ++j) {
      const ResponseTerms t = family.c_e_terms(g.y(j));
      c += t.c;
      e += t.e;
    }
    sum_c_.push_back(c);
    sum_e_.push_back(e);
  }
}

std::vector<double> LikelihoodEvaluator::group_contributions(const Parameters& p) const {
  p.validate();
  if (p.dim_a() != ds_->dim_a() || p.dim_b() != ds_->dim_b()) {
    throw PreconditionError("parameter dimensions do not match the dataset");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(ds_->num_groups()));
  const SigmaFactor sf = factor_sigma(p);

  if (family_ == kGaussian && ds_->dim_a() > kMaxQuadratureDim) {
    for (const Group& g : ds_->groups()) out.push_back(gaussian_group_loglik(p, g, sf.lower));
    return out;
  }

  const int dim = p.dim_a();
  const GaussHermiteRule& rule = gauss_hermite(q_.nodes_per_dim);
  const double d_phi = family_.d_suite(p.phi).d;
  const double log_det_2pi_sigma = dim * std::log(2.0 * std::numbers::pi) + sf.log_det;
  std::vector<double> log_weights(rule.weights.size());
  std::transform(rule.weights.begin(), rule.weights.end(), log_weights.begin(), [](double w) { return std::log(w); });
  std::vector<double> terms;
  for (std::size_t i = 0; i < ds_->groups().size(); ++i) {
    const Group& g = ds_->groups()[i];
    GroupIntegrand f(p, g, *constants_[i], family_, sf.inverse);
    const double fixed = sum_c_[i] / p.phi - g.size() * d_phi - sum_e_[i];
    out.push_back(fixed - 0.5 * log_det_2pi_sigma + log_integral(f, dim, sf, q_, rule, log_weights, terms));
  }
  return out;
}

double LikelihoodEvaluator::operator()(const Parameters& p) const {
  double total = 0.0;
  for (double v : group_contributions(p)) total += v;
  return total;
}

double log_likelihood(const Parameters& p, const Dataset& ds, Family family, const QuadratureSpec& q) {
  return LikelihoodEvaluator(ds, family, q)(p);
}

double gaussian_marginal_loglik(const Parameters& p, const Dataset& ds) {
  p.validate();
  if (p.dim_a() != ds.dim_a() || p.dim_b() != ds.dim_b()) {
    throw PreconditionError("parameter dimensions do not match the dataset");
  }
  const Eigen::MatrixXd lower = Eigen::LLT<Eigen::MatrixXd>(p.sigma).matrixL();
  double total = 0.0;
  for (const Group& g : ds.groups()) total += gaussian_group_loglik(p, g, lower);
  return total;
}

}  // namespace glmmd
