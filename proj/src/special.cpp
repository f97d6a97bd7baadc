#include "mlama/special.hpp"

#include <cmath>
#include <numbers>

namespace mlama {

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double erfcx(double x) {
  if (x < 26.0) return std::exp(x * x) * std::erfc(x);
  // Continued fraction; converges quickly this far into the tail.
  double k = x;
  for (int n = 40; n >= 1; --n) k = x + 0.5 * n / k;
  return 1.0 / (std::sqrt(std::numbers::pi) * k);
}

}  // namespace mlama
