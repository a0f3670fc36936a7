#include "gzsl/special.hpp"

#include <cmath>
#include <string>

#include "gzsl/error.hpp"

namespace gzsl {
namespace {

constexpr double kAsymptoticThreshold = 6.0;

void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

}  // namespace

double digamma(double x) {
  require_positive(x, "digamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  // ln x - 1/(2x) - sum_{n=1..8} B_{2n} / (2n x^{2n})
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 -
                                              inv2 * (691.0 / 32760 -
                                                      inv2 * (1.0 / 12 - inv2 * 3617.0 / 8160)))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  // 1/x + 1/(2x^2) + sum_{n>=1} B_{2n} / x^{2n+1}
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * inv2 *
      (1.0 / 6 -
       inv2 * (1.0 / 30 -
               inv2 * (1.0 / 42 -
                       inv2 * (1.0 / 30 -
                               inv2 * (5.0 / 66 - inv2 * (691.0 / 2730 - inv2 * (7.0 / 6)))))));
  return shift + inv + 0.5 * inv2 + series;
}

double log_gamma(double x) {
  require_positive(x, "log_gamma");
  return std::lgamma(x);
}

double log_beta(std::span<const double> alpha) {
  if (alpha.empty()) throw DomainError("log_beta: empty concentration vector");
  double sum = 0.0;
  double acc = 0.0;
  for (double a : alpha) {
    require_positive(a, "log_beta");
    acc += std::lgamma(a);
    sum += a;
  }
  return acc - std::lgamma(sum);
}

}  // namespace gzsl
