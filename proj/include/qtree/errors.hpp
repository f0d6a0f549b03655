#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace qtree {

// Malformed trees, specs, files or option values.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integrator failures, uncertified zeros, root collisions, optimizer stagnation.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::complex<double> lambda = {},
                          double x = 0.0)
      : std::runtime_error(what), lambda_(lambda), x_(x) {}

  std::complex<double> lambda() const { return lambda_; }
  double x() const { return x_; }

 private:
  std::complex<double> lambda_;
  double x_;
};

// A cross-check between two independent evaluations disagreed.
class IdentityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qtree
