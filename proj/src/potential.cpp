#include "qtree/potential.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qtree {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Binomial expansion of p(T - x).
std::vector<double> reflect_polynomial(const std::vector<double>& c, double t) {
  const std::size_t n = c.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    // c_k (T - x)^k = c_k sum_j binom(k, j) T^{k-j} (-x)^j
    double binom = 1.0;
    for (std::size_t j = 0; j <= k; ++j) {
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      out[j] += c[k] * binom * std::pow(t, static_cast<double>(k - j)) * sign;
      binom = binom * static_cast<double>(k - j) / static_cast<double>(j + 1);
    }
  }
  return out;
}

}  // namespace

Potential Potential::polynomial(std::vector<double> coeffs) {
  return Potential{PolynomialPotential{std::move(coeffs)}};
}

Potential Potential::grid(std::vector<double> samples, int order) {
  return Potential{GridPotential{std::move(samples), order}};
}

Potential Potential::piecewise(std::vector<double> values) {
  return Potential{PiecewiseConstantPotential{std::move(values)}};
}

std::string Potential::kind() const {
  return std::visit(overloaded{[](const ZeroPotential&) { return std::string("zero"); },
                               [](const ConstantPotential&) { return std::string("const"); },
                               [](const PolynomialPotential&) { return std::string("poly"); },
                               [](const GridPotential&) { return std::string("grid"); },
                               [](const PiecewiseConstantPotential&) {
                                 return std::string("piecewise");
                               }},
                    form_);
}

double Potential::operator()(double x, double length) const {
  return std::visit(
      overloaded{
          [](const ZeroPotential&) { return 0.0; },
          [](const ConstantPotential& p) { return p.value; },
          [x](const PolynomialPotential& p) {
            double acc = 0.0;
            for (auto it = p.coeffs.rbegin(); it != p.coeffs.rend(); ++it) acc = acc * x + *it;
            return acc;
          },
          [x, length](const GridPotential& p) {
            const auto n = p.samples.size();
            if (n == 1) return p.samples[0];
            const double h = length / static_cast<double>(n - 1);
            const double u = std::clamp(x / h, 0.0, static_cast<double>(n - 1));
            auto i = static_cast<std::size_t>(std::floor(u));
            if (i >= n - 1) i = n - 2;
            if (p.order == 0) return p.samples[i];
            const double t = u - static_cast<double>(i);
            return (1.0 - t) * p.samples[i] + t * p.samples[i + 1];
          },
          [x, length](const PiecewiseConstantPotential& p) {
            const auto n = p.values.size();
            const double u = std::clamp(x / length, 0.0, 1.0) * static_cast<double>(n);
            auto i = static_cast<std::size_t>(std::floor(u));
            if (i >= n) i = n - 1;
            return p.values[i];
          }},
      form_);
}

bool Potential::is_closed_form() const {
  return std::holds_alternative<ZeroPotential>(form_) ||
         std::holds_alternative<ConstantPotential>(form_);
}

bool Potential::is_piecewise_constant() const {
  return is_closed_form() || std::holds_alternative<PiecewiseConstantPotential>(form_);
}

bool Potential::is_zero() const {
  if (std::holds_alternative<ZeroPotential>(form_)) return true;
  if (const auto* c = std::get_if<ConstantPotential>(&form_)) return c->value == 0.0;
  return false;
}

std::vector<double> Potential::breakpoints(double length) const {
  std::vector<double> out;
  if (const auto* g = std::get_if<GridPotential>(&form_)) {
    const auto n = g->samples.size();
    for (std::size_t i = 1; i + 1 < n; ++i)
      out.push_back(length * static_cast<double>(i) / static_cast<double>(n - 1));
  } else if (const auto* p = std::get_if<PiecewiseConstantPotential>(&form_)) {
    const auto n = p->values.size();
    for (std::size_t i = 1; i < n; ++i)
      out.push_back(length * static_cast<double>(i) / static_cast<double>(n));
  }
  return out;
}

Potential Potential::reversed(double length) const {
  return std::visit(
      overloaded{[](const ZeroPotential&) { return Potential::zero(); },
                 [](const ConstantPotential& p) { return Potential::constant(p.value); },
                 [length](const PolynomialPotential& p) {
                   return Potential::polynomial(reflect_polynomial(p.coeffs, length));
                 },
                 [](const GridPotential& p) {
                   // order 0 uses left samples, so reversal is only exact for order 1.
                   std::vector<double> s(p.samples.rbegin(), p.samples.rend());
                   if (p.order == 0 && s.size() > 1) {
                     std::vector<double> shifted(s.size());
                     for (std::size_t i = 0; i + 1 < s.size(); ++i) shifted[i] = s[i + 1];
                     shifted.back() = s.back();
                     s = std::move(shifted);
                   }
                   return Potential::grid(std::move(s), p.order);
                 },
                 [](const PiecewiseConstantPotential& p) {
                   return Potential::piecewise({p.values.rbegin(), p.values.rend()});
                 }},
      form_);
}

std::string Potential::check(double length) const {
  if (!(length > 0.0)) return "edge length must be positive";
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
  };
  return std::visit(
      overloaded{[](const ZeroPotential&) { return std::string(); },
                 [](const ConstantPotential& p) {
                   return std::isfinite(p.value) ? std::string() : std::string("non-finite constant");
                 },
                 [&](const PolynomialPotential& p) {
                   if (p.coeffs.empty()) return std::string("polynomial without coefficients");
                   return finite(p.coeffs) ? std::string() : std::string("non-finite coefficient");
                 },
                 [&](const GridPotential& p) {
                   if (p.samples.size() < 2) return std::string("grid needs at least 2 samples");
                   if (p.order != 0 && p.order != 1)
                     return std::string("grid interpolation order must be 0 or 1");
                   return finite(p.samples) ? std::string() : std::string("non-finite sample");
                 },
                 [&](const PiecewiseConstantPotential& p) {
                   if (p.values.empty()) return std::string("piecewise potential without cells");
                   return finite(p.values) ? std::string() : std::string("non-finite cell value");
                 }},
      form_);
}

}  // namespace qtree
