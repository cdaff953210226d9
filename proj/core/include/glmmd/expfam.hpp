#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string_view>

namespace glmmd {

enum class FamilyKind { Gaussian, Gamma, InverseGaussian };

/// b(eta) and its first three derivatives.
struct CumulantDerivs {
  double b;
  double b1;
  double b2;
  double b3;
};

/// d(phi) and its first two derivatives.
struct DispersionDerivs {
  double d;
  double d1;
  double d2;
};

struct ResponseTerms {
  double c;
  double e;
  bool in_support;
};

/// A two-parameter reproductive exponential family with density
///   p(y; eta, phi) = exp[{y eta - b(eta) + c(y)}/phi - d(phi) - e(y)] h(y).
///
/// Natural-parameter domain is the real line for the Gaussian family and
/// eta < 0 for Gamma and inverse Gaussian. The checked members throw
/// DomainError outside the domain; the `*_unchecked` members are for inner
/// loops whose callers already validated eta.
class Family {
 public:
  constexpr explicit Family(FamilyKind kind) noexcept : kind_(kind) {}

  [[nodiscard]] constexpr FamilyKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::string_view name() const noexcept;

  [[nodiscard]] bool in_domain(double eta) const noexcept {
    if (!std::isfinite(eta)) return false;
    return kind_ == FamilyKind::Gaussian || eta < 0.0;
  }
  [[nodiscard]] bool in_support(double y) const noexcept {
    if (!std::isfinite(y)) return false;
    return kind_ == FamilyKind::Gaussian || y > 0.0;
  }

  [[nodiscard]] CumulantDerivs b_suite(double eta) const;
  [[nodiscard]] ResponseTerms c_e_terms(double y) const;
  [[nodiscard]] DispersionDerivs d_suite(double phi) const;

  /// 2 d'(phi)/phi + d''(phi); the reciprocal is the asymptotic variance of
  /// sqrt(N) (phi_hat - phi).
  [[nodiscard]] double dispersion_info(double phi) const;

  /// Second derivative of d(1/psi) in psi, evaluated at psi = 1/phi.
  /// Equals dispersion_info(phi) * phi^4.
  [[nodiscard]] double psi_curvature(double phi) const;

  /// Inverse of the mean map mu = b'(eta).
  [[nodiscard]] double mean_to_eta(double mu) const;

  /// log p(y; eta, phi); -inf outside the support.
  [[nodiscard]] double log_density(double y, double eta, double phi) const;

  [[nodiscard]] double b_unchecked(double eta) const noexcept {
    switch (kind_) {
      case FamilyKind::Gaussian: return 0.5 * eta * eta;
      case FamilyKind::Gamma: return -std::log(-eta);
      case FamilyKind::InverseGaussian: return -std::sqrt(-2.0 * eta);
    }
    return 0.0;
  }
  [[nodiscard]] double b1_unchecked(double eta) const noexcept {
    switch (kind_) {
      case FamilyKind::Gaussian: return eta;
      case FamilyKind::Gamma: return -1.0 / eta;
      case FamilyKind::InverseGaussian: return 1.0 / std::sqrt(-2.0 * eta);
    }
    return 0.0;
  }
  [[nodiscard]] double b2_unchecked(double eta) const noexcept {
    switch (kind_) {
      case FamilyKind::Gaussian: return 1.0;
      case FamilyKind::Gamma: return 1.0 / (eta * eta);
      case FamilyKind::InverseGaussian: {
        const double s = std::sqrt(-2.0 * eta);
        return 1.0 / (s * s * s);
      }
    }
    return 0.0;
  }

  friend constexpr bool operator==(Family a, Family b) noexcept { return a.kind_ == b.kind_; }

 private:
  FamilyKind kind_;
};

inline constexpr Family kGaussian{FamilyKind::Gaussian};
inline constexpr Family kGamma{FamilyKind::Gamma};
inline constexpr Family kInverseGaussian{FamilyKind::InverseGaussian};

/// Parses "gaussian", "gamma", "inverse_gaussian" (also "ig", "inverse-gaussian").
Family parse_family(std::string_view name);

namespace detail {

void check_sampler_args(Family family, double eta, double phi);

template <std::uniform_random_bit_generator Gen>
double uniform_open01(Gen& gen) {
  // 53 random bits, shifted off zero.
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 0.0;
  do {
    u = unif(gen);
  } while (u <= 0.0);
  return u;
}

/// Marsaglia-Tsang squeeze method; shapes below one use the
/// Gamma(a + 1) * U^(1/a) boost.
template <std::uniform_random_bit_generator Gen>
double sample_standard_gamma(double shape, Gen& gen) {
  if (shape < 1.0) {
    const double g = sample_standard_gamma(shape + 1.0, gen);
    return g * std::pow(uniform_open01(gen), 1.0 / shape);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal(gen);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open01(gen);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

/// Michael-Schucany-Haas transformation with one chi-square(1) draw.
template <std::uniform_random_bit_generator Gen>
double sample_inverse_gaussian(double mean, double shape, Gen& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double nu = normal(gen);
  const double y = nu * nu;
  const double mu2y = mean * mean * y;
  const double x = mean + mu2y / (2.0 * shape) -
                   mean / (2.0 * shape) * std::sqrt(4.0 * mean * shape * y + mu2y * y);
  const double u = uniform_open01(gen);
  return (u <= mean / (mean + x)) ? x : mean * mean / x;
}

}  // namespace detail

/// One draw from p(y; eta, phi).
///   Gaussian: N(eta, phi). Gamma: shape 1/phi, rate -eta/phi.
///   Inverse Gaussian: mean (-2 eta)^(-1/2), shape 1/phi.
template <std::uniform_random_bit_generator Gen>
double sample_response(Family family, double eta, double phi, Gen& gen) {
  detail::check_sampler_args(family, eta, phi);
  switch (family.kind()) {
    case FamilyKind::Gaussian: {
      std::normal_distribution<double> normal(eta, std::sqrt(phi));
      return normal(gen);
    }
    case FamilyKind::Gamma: {
      const double shape = 1.0 / phi;
      const double rate = -eta / phi;
      return detail::sample_standard_gamma(shape, gen) / rate;
    }
    case FamilyKind::InverseGaussian:
      return detail::sample_inverse_gaussian(1.0 / std::sqrt(-2.0 * eta), 1.0 / phi, gen);
  }
  return 0.0;
}

}  // namespace glmmd
