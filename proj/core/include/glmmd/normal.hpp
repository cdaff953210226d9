#pragma once

namespace glmmd {

/// Standard normal distribution function.
[[nodiscard]] double normal_cdf(double x);

/// Standard normal quantile for p in (0, 1): Acklam's rational
/// approximation followed by one Halley correction, accurate to about 1e-15.
[[nodiscard]] double normal_quantile(double p);

}  // namespace glmmd
