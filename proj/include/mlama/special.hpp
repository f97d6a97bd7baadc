#pragma once

#include <stdexcept>
#include <string>

namespace mlama {

/// Standard normal density.
double normal_pdf(double x);

/// Gaussian tail Q(x) = P(N(0,1) > x).
double q_function(double x);

/// Scaled complementary error function exp(x^2) erfc(x), for x >= 0.
double erfcx(double x);

/// Numerical failure inside an otherwise well-posed computation
/// (non-finite state, unrecoverable search failure).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mlama
