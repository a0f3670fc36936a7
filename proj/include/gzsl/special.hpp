#pragma once

#include <span>

namespace gzsl {

inline constexpr double kEulerGamma = 0.57721566490153286061;

// psi(x) = d/dx log Gamma(x), x > 0. Shifts x up past 6 with
// psi(x) = psi(x + 1) - 1/x, then sums the asymptotic series.
double digamma(double x);

// psi'(x), x > 0. Same shift-then-asymptotic scheme as digamma.
double trigamma(double x);

double log_gamma(double x);

// log B(alpha) = sum_k log Gamma(alpha_k) - log Gamma(sum_k alpha_k).
// Throws DomainError on an empty vector or a nonpositive component.
double log_beta(std::span<const double> alpha);

}  // namespace gzsl
