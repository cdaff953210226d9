#pragma once

namespace glmmd {

// Polygamma functions for positive real arguments. Both shift the argument
// upward with the defining recurrence until it reaches 8 and then sum the
// Bernoulli-number asymptotic series. Relative error is below 1e-13 on
// (0, inf). Non-positive or non-finite input throws DomainError.
double digamma(double x);
double trigamma(double x);

}  // namespace glmmd
