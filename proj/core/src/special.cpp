#include "glmmd/special.hpp"

#include <array>
#include <cmath>
#include <string>

#include "glmmd/error.hpp"

namespace glmmd {
namespace {

constexpr double kShiftThreshold = 8.0;

void require_positive(double x, const char* fn) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError(std::string(fn) + ": argument must be finite and positive, got " +
                      std::to_string(x));
  }
}

// B_{2k} for k = 1..8.
constexpr std::array<double, 8> kBernoulli = {
    1.0 / 6.0,     -1.0 / 30.0,  1.0 / 42.0,      -1.0 / 30.0,
    5.0 / 66.0,    -691.0 / 2730.0, 7.0 / 6.0,    -3617.0 / 510.0};

}  // namespace

double digamma(double x) {
  require_positive(x, "digamma");
  double shift = 0.0;
  while (x < kShiftThreshold) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  // psi(x) ~ log x - 1/(2x) - sum_k B_{2k} / (2k x^{2k})
  const double inv2 = 1.0 / (x * x);
  double series = 0.0;
  double pw = inv2;
  for (std::size_t k = 1; k <= kBernoulli.size(); ++k) {
    series += kBernoulli[k - 1] / (2.0 * static_cast<double>(k)) * pw;
    pw *= inv2;
  }
  return shift + std::log(x) - 0.5 / x - series;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  double shift = 0.0;
  while (x < kShiftThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  // psi'(x) ~ 1/x + 1/(2x^2) + sum_k B_{2k} / x^{2k+1}
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = 0.0;
  double pw = inv2 * inv;
  for (double b : kBernoulli) {
    series += b * pw;
    pw *= inv2;
  }
  return shift + inv + 0.5 * inv2 + series;
}

}  // namespace glmmd
