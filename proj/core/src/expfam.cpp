#include "glmmd/expfam.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <string>

#include "glmmd/error.hpp"
#include "glmmd/special.hpp"

namespace glmmd {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_dispersion(double phi) {
  if (!std::isfinite(phi) || phi <= 0.0) {
    throw DomainError("dispersion parameter must be finite and positive, got " +
                      std::to_string(phi));
  }
}

}  // namespace

std::string_view Family::name() const noexcept {
  switch (kind_) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::Gamma: return "gamma";
    case FamilyKind::InverseGaussian: return "inverse_gaussian";
  }
  return "unknown";
}

CumulantDerivs Family::b_suite(double eta) const {
  if (!in_domain(eta)) {
    throw DomainError("natural parameter " + std::to_string(eta) + " outside the " +
                      std::string(name()) + " domain");
  }
  switch (kind_) {
    case FamilyKind::Gaussian:
      return {0.5 * eta * eta, eta, 1.0, 0.0};
    case FamilyKind::Gamma: {
      const double inv = 1.0 / eta;
      return {-std::log(-eta), -inv, inv * inv, -2.0 * inv * inv * inv};
    }
    case FamilyKind::InverseGaussian: {
      const double s = std::sqrt(-2.0 * eta);
      return {-s, 1.0 / s, 1.0 / (s * s * s), 3.0 / (s * s * s * s * s)};
    }
  }
  return {};
}

ResponseTerms Family::c_e_terms(double y) const {
  if (!in_support(y)) return {0.0, 0.0, false};
  switch (kind_) {
    case FamilyKind::Gaussian:
      return {-0.5 * y * y, kHalfLog2Pi, true};
    case FamilyKind::Gamma: {
      const double ly = std::log(y);
      return {ly, ly, true};
    }
    case FamilyKind::InverseGaussian:
      return {-0.5 / y, kHalfLog2Pi + 1.5 * std::log(y), true};
  }
  return {0.0, 0.0, false};
}

DispersionDerivs Family::d_suite(double phi) const {
  require_dispersion(phi);
  switch (kind_) {
    case FamilyKind::Gaussian:
    case FamilyKind::InverseGaussian:
      return {0.5 * std::log(phi), 0.5 / phi, -0.5 / (phi * phi)};
    case FamilyKind::Gamma: {
      // d = log(phi)/phi + lgamma(1/phi)
      const double k = 1.0 / phi;
      const double lp = std::log(phi);
      const double g = 1.0 - lp - digamma(k);
      const double phi2 = phi * phi;
      const double d1 = g / phi2;
      const double d2 = -1.0 / (phi2 * phi) + trigamma(k) / (phi2 * phi2) - 2.0 * g / (phi2 * phi);
      return {lp * k + std::lgamma(k), d1, d2};
    }
  }
  return {};
}

double Family::dispersion_info(double phi) const {
  require_dispersion(phi);
  switch (kind_) {
    case FamilyKind::Gaussian:
    case FamilyKind::InverseGaussian:
      return 0.5 / (phi * phi);
    case FamilyKind::Gamma: {
      // Simplified 2 d'/phi + d'' = (trigamma(1/phi) - phi) / phi^4.
      const double phi2 = phi * phi;
      return (trigamma(1.0 / phi) - phi) / (phi2 * phi2);
    }
  }
  return 0.0;
}

double Family::psi_curvature(double phi) const {
  const double phi2 = phi * phi;
  return dispersion_info(phi) * phi2 * phi2;
}

double Family::mean_to_eta(double mu) const {
  switch (kind_) {
    case FamilyKind::Gaussian:
      if (!std::isfinite(mu)) break;
      return mu;
    case FamilyKind::Gamma:
      if (!(mu > 0.0) || !std::isfinite(mu)) break;
      return -1.0 / mu;
    case FamilyKind::InverseGaussian:
      if (!(mu > 0.0) || !std::isfinite(mu)) break;
      return -0.5 / (mu * mu);
  }
  throw DomainError("mean " + std::to_string(mu) + " outside the " + std::string(name()) +
                    " mean space");
}

double Family::log_density(double y, double eta, double phi) const {
  const ResponseTerms t = c_e_terms(y);
  if (!t.in_support) return -std::numeric_limits<double>::infinity();
  const CumulantDerivs b = b_suite(eta);
  const DispersionDerivs d = d_suite(phi);
  return (y * eta - b.b + t.c) / phi - d.d - t.e;
}

Family parse_family(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "gaussian" || s == "normal") return kGaussian;
  if (s == "gamma") return kGamma;
  if (s == "inverse_gaussian" || s == "ig" || s == "inversegaussian") return kInverseGaussian;
  throw PreconditionError("unknown family '" + std::string(name) +
                          "' (expected gaussian, gamma or inverse_gaussian)");
}

namespace detail {

void check_sampler_args(Family family, double eta, double phi) {
  require_dispersion(phi);
  if (!family.in_domain(eta)) {
    throw DomainError("cannot sample: natural parameter " + std::to_string(eta) +
                      " outside the " + std::string(family.name()) + " domain");
  }
}

}  // namespace detail
}  // namespace glmmd
