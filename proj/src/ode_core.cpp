#include "qtree/ode_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "qtree/errors.hpp"

namespace qtree {

cplx principal_sqrt(cplx z) {
  cplx r = std::sqrt(z);
  if (r.real() < 0.0) r = -r;
  if (r.real() == 0.0 && r.imag() < 0.0) r = -r;
  return r;
}

SpectralParameter SpectralParameter::from_lambda(cplx lambda) {
  return {lambda, principal_sqrt(lambda)};
}

SpectralParameter SpectralParameter::from_rho(cplx rho) {
  if (rho.real() < 0.0 || (rho.real() == 0.0 && rho.imag() < 0.0)) rho = -rho;
  return {rho * rho, rho};
}

FundamentalPair FundamentalPair::then(const FundamentalPair& n) const {
  // [[C S][C' S']] matrices, product n * this.
  return {n.C * C + n.S * Cp, n.C * S + n.S * Sp, n.Cp * C + n.Sp * Cp, n.Cp * S + n.Sp * Sp};
}

FundamentalPair constant_pair(double c, double x, cplx lambda) {
  const cplx z = lambda - c;
  const cplx w = z * x * x;
  cplx C, S;
  if (std::abs(w) < 1e-2) {
    // cos(mu x) = sum (-w)^k/(2k)!,  sin(mu x)/mu = x sum (-w)^k/(2k+1)!
    cplx term_c = 1.0, term_s = 1.0;
    C = 0.0;
    S = 0.0;
    for (int k = 0; k < 10; ++k) {
      C += term_c;
      S += term_s;
      term_c *= -w / static_cast<double>((2 * k + 1) * (2 * k + 2));
      term_s *= -w / static_cast<double>((2 * k + 2) * (2 * k + 3));
    }
    S *= x;
  } else {
    const cplx mu = principal_sqrt(z);
    C = std::cos(mu * x);
    S = std::sin(mu * x) / mu;
  }
  return {C, S, -z * S, C};
}

namespace {

using State = std::array<cplx, 4>;  // C, C', S, S'

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Rhs {
  const Potential& q;
  double length;
  cplx lambda;
  State operator()(double x, const State& y) const {
    const cplx k = q(x, length) - lambda;
    return {y[1], k * y[0], y[3], k * y[2]};
  }
};

State axpy(const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
  State out = y;
  for (const auto& [w, k] : terms)
    for (int i = 0; i < 4; ++i) out[i] += h * w * (*k)[i];
  return out;
}

// Integrates y from x0 to x1 on a subinterval where q is smooth.
void dopri5(const Rhs& f, double x0, double x1, State& y, const OdeOptions& opts, double qmax,
            long& steps) {
  if (x1 <= x0) return;
  const double wavelength = 1.0 / std::max(1.0, std::sqrt(std::abs(f.lambda) + qmax));
  const double hmax = std::min(x1 - x0, opts.oscillation_fraction * wavelength);
  // The global error of an adaptive scheme sits above the local tolerance; tighten it.
  const double tol = opts.tol * 1e-2;
  double h = hmax;
  double x = x0;
  State k1 = f(x, y);
  while (x < x1) {
    if (++steps > opts.max_steps)
      throw NumericalError("integrator exceeded the step budget", f.lambda, x);
    if (x + h > x1) h = x1 - x;
    const State k2 = f(x + c2 * h, axpy(y, h, {{a21, &k1}}));
    const State k3 = f(x + c3 * h, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
    const State k4 = f(x + c4 * h, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const State k5 = f(x + c5 * h, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const State k6 =
        f(x + h, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    const State yn = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const State k7 = f(x + h, yn);

    double err = 0.0;
    for (int i = 0; i < 4; ++i) {
      const cplx ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      // Components are paired (value, derivative); scale derivatives by the wavelength.
      const double unit = (i % 2 == 0) ? 1.0 : 1.0 / wavelength;
      const double sc = tol * (unit + std::max(std::abs(y[i]), std::abs(yn[i])));
      err = std::max(err, std::abs(ei) / sc);
    }
    if (err <= 1.0) {
      x += h;
      y = yn;
      k1 = k7;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h = std::min(hmax, h * factor);
    if (h < 1e-14 * std::max(1.0, std::abs(x1)))
      throw NumericalError("integrator step underflow", f.lambda, x);
  }
}

double abs_bound(const Potential& q, double length) {
  double m = 0.0;
  const int probes = 65;
  for (int i = 0; i < probes; ++i) m = std::max(m, std::abs(q(length * i / (probes - 1), length)));
  return m;
}

FundamentalPair piecewise_product(const std::vector<double>& values, double length, double x,
                                  cplx lambda) {
  const auto n = values.size();
  const double h = length / static_cast<double>(n);
  FundamentalPair acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = h * static_cast<double>(i);
    if (a >= x) break;
    const double w = std::min(h, x - a);
    acc = acc.then(constant_pair(values[i], w, lambda));
  }
  return acc;
}

}  // namespace

FundamentalPair fundamental_pair(const Edge& edge, const Potential& q, double x,
                                 const SpectralParameter& sp, const OdeOptions& opts) {
  const double T = edge.length;
  if (!(x >= 0.0 && x <= T * (1.0 + 1e-14)))
    throw ValidationError("position outside the edge: x = " + std::to_string(x));
  if (!(opts.tol > 0.0)) throw ValidationError("integration tolerance must be positive");
  x = std::min(x, T);
  const auto& form = q.form();
  if (std::holds_alternative<ZeroPotential>(form)) return constant_pair(0.0, x, sp.lambda);
  if (const auto* c = std::get_if<ConstantPotential>(&form))
    return constant_pair(c->value, x, sp.lambda);
  if (const auto* p = std::get_if<PiecewiseConstantPotential>(&form))
    return piecewise_product(p->values, T, x, sp.lambda);
  if (const auto* g = std::get_if<GridPotential>(&form); g && g->order == 0) {
    std::vector<double> cells(g->samples.begin(), g->samples.end() - 1);
    return piecewise_product(cells, T, x, sp.lambda);
  }

  Rhs f{q, T, sp.lambda};
  const double qmax = abs_bound(q, T);
  State y{cplx(1.0), cplx(0.0), cplx(0.0), cplx(1.0)};
  std::vector<double> knots{0.0};
  for (double b : q.breakpoints(T))
    if (b < x) knots.push_back(b);
  knots.push_back(x);
  long steps = 0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) dopri5(f, knots[i], knots[i + 1], y, opts, qmax, steps);
  return {y[0], y[2], y[1], y[3]};
}

std::vector<FundamentalPair> fundamental_pair_grid_serial(const Edge& edge, const Potential& q,
                                                          const std::vector<SpectralParameter>& sps,
                                                          const OdeOptions& opts) {
  std::vector<FundamentalPair> out(sps.size());
  for (std::size_t k = 0; k < sps.size(); ++k) {
    try {
      out[k] = fundamental_pair(edge, q, edge.length, sps[k], opts);
    } catch (const NumericalError& e) {
      throw NumericalError("grid element " + std::to_string(k) + ": " + e.what(), e.lambda(), e.x());
    }
  }
  return out;
}

std::vector<FundamentalPair> fundamental_pair_grid(const Edge& edge, const Potential& q,
                                                   const std::vector<SpectralParameter>& sps,
                                                   const OdeOptions& opts) {
  const long n = static_cast<long>(sps.size());
  std::vector<FundamentalPair> out(sps.size());
  long failed = -1;
  NumericalError first("");
#pragma omp parallel for schedule(dynamic, 4)
  for (long k = 0; k < n; ++k) {
    try {
      out[k] = fundamental_pair(edge, q, edge.length, sps[k], opts);
    } catch (const NumericalError& e) {
#pragma omp critical
      if (failed < 0 || k < failed) {
        failed = k;
        first = e;
      }
    }
  }
  if (failed >= 0)
    throw NumericalError("grid element " + std::to_string(failed) + ": " + first.what(),
                         first.lambda(), first.x());
  return out;
}

}  // namespace qtree
