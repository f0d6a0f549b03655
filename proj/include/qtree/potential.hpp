#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace qtree {

using EdgeId = int;

struct ZeroPotential {};

struct ConstantPotential {
  double value = 0.0;
};

// q(x) = sum_k coeffs[k] * x^k on [0, T].
struct PolynomialPotential {
  std::vector<double> coeffs;
};

// Samples on the uniform node set x_i = i * T / (n - 1).
// order 1: linear interpolation, order 0: value of the left node on each interval.
struct GridPotential {
  std::vector<double> samples;
  int order = 1;
};

// Constant on each of n uniform cells of [0, T].
struct PiecewiseConstantPotential {
  std::vector<double> values;
};

/// Real potential q_j on a single edge [0, T_j].
class Potential {
 public:
  using Form = std::variant<ZeroPotential, ConstantPotential, PolynomialPotential,
                            GridPotential, PiecewiseConstantPotential>;

  Potential() = default;
  explicit Potential(Form form) : form_(std::move(form)) {}

  static Potential zero() { return Potential{}; }
  static Potential constant(double c) { return Potential{ConstantPotential{c}}; }
  static Potential polynomial(std::vector<double> coeffs);
  static Potential grid(std::vector<double> samples, int order = 1);
  static Potential piecewise(std::vector<double> values);

  const Form& form() const { return form_; }
  std::string kind() const;

  double operator()(double x, double length) const;

  // Zero and constant potentials have closed-form fundamental solutions.
  bool is_closed_form() const;
  bool is_piecewise_constant() const;
  bool is_zero() const;

  // Breakpoints in (0, T) where q is not smooth.
  std::vector<double> breakpoints(double length) const;

  // The same function in the reversed coordinate T - x.
  Potential reversed(double length) const;

  // Empty string when the representation is admissible.
  std::string check(double length) const;

 private:
  Form form_ = ZeroPotential{};
};

using PotentialSet = std::map<EdgeId, Potential>;

}  // namespace qtree
