#include <cmath>
#include <vector>

#include "doctest.h"
#include "qtree/errors.hpp"
#include "qtree/ode_core.hpp"

using namespace qtree;

namespace {

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

Edge unit_edge() { return Edge{1, 1, 2, 1.0}; }

}  // namespace

TEST_CASE("principal branch") {
  CHECK(SpectralParameter::from_lambda(-4.0).rho == cplx(0.0, 2.0));
  CHECK(SpectralParameter::from_lambda(cplx(-4.0, -0.0)).rho.imag() >= 0.0);
  auto sp = SpectralParameter::from_lambda(cplx(3.0, -5.0));
  CHECK(sp.rho.real() >= 0.0);
  CHECK(std::abs(sp.rho * sp.rho - sp.lambda) < 1e-12);
  CHECK(SpectralParameter::from_rho(cplx(-1.0, 2.0)).rho == cplx(1.0, -2.0));
}

TEST_CASE("zero potential closed forms") {
  const Edge e = unit_edge();
  for (cplx rho : {cplx(0.7, 0.0), cplx(3.1, 0.2), cplx(12.0, -0.5), cplx(0.0, 4.0)}) {
    const auto sp = SpectralParameter::from_rho(rho);
    const double x = 0.83;
    auto p = fundamental_pair(e, Potential::zero(), x, sp);
    const cplx r = sp.rho;
    CHECK(rel(p.C, std::cos(r * x)) < 1e-13);
    CHECK(rel(p.S, std::sin(r * x) / r) < 1e-13);
    CHECK(rel(p.Cp, -r * std::sin(r * x)) < 1e-13);
    CHECK(rel(p.Sp, std::cos(r * x)) < 1e-13);
  }
}

TEST_CASE("lambda = 0 limit") {
  auto p = fundamental_pair(unit_edge(), Potential::zero(), 0.6, SpectralParameter::from_lambda(0.0));
  CHECK(p.C == cplx(1.0));
  CHECK(std::abs(p.S - 0.6) < 1e-15);
  CHECK(p.Cp == cplx(0.0));
  CHECK(p.Sp == cplx(1.0));
  // Just off zero the series branch must agree with the trigonometric one.
  auto a = constant_pair(0.0, 1.0, cplx(0.00999, 0.0));
  auto b = constant_pair(0.0, 1.0, cplx(0.01001, 0.0));
  CHECK(std::abs(a.S - b.S) < 1e-4);
}

TEST_CASE("integrator matches constant closed form") {
  const Edge e = unit_edge();
  const double c = 1.7;
  // A degree-0 polynomial forces the integrator path.
  const Potential poly = Potential::polynomial({c});
  OdeOptions o;
  o.tol = 1e-11;
  for (cplx lambda : {cplx(-3.0, 0.0), cplx(2.0, 0.0), cplx(50.0, 3.0), cplx(400.0, 0.0)}) {
    const auto sp = SpectralParameter::from_lambda(lambda);
    auto num = fundamental_pair(e, poly, 1.0, sp, o);
    auto ref = constant_pair(c, 1.0, lambda);
    const double scale = std::max(1.0, std::sqrt(std::abs(lambda)));
    CHECK(rel(num.C, ref.C) < 1e-9);
    CHECK(rel(num.S, ref.S) < 1e-9);
    CHECK(std::abs(num.Cp - ref.Cp) / scale < 1e-9 * std::max(1.0, std::abs(ref.Cp)));
    CHECK(rel(num.Sp, ref.Sp) < 1e-9);
  }
}

TEST_CASE("Wronskian stays within ten times the tolerance") {
  const Edge e{1, 1, 2, 1.3};
  std::vector<Potential> qs{Potential::polynomial({0.5, -1.0, 2.0}),
                            Potential::grid({0.0, 1.0, -0.5, 2.0, 0.3}, 1),
                            Potential::grid({0.0, 1.0, -0.5, 2.0, 0.3}, 0),
                            Potential::piecewise({0.5, -0.3}), Potential::constant(3.0)};
  for (double tol : {1e-8, 1e-10}) {
    OdeOptions o;
    o.tol = tol;
    for (const auto& q : qs)
      for (cplx lambda : {cplx(-10.0, 0.0), cplx(1.0, 0.0), cplx(100.0, 5.0), cplx(900.0, 0.0)}) {
        for (double x : {0.4, 1.3}) {
          auto p = fundamental_pair(e, q, x, SpectralParameter::from_lambda(lambda), o);
          CHECK(std::abs(p.wronskian() - 1.0) <= 10.0 * tol);
        }
      }
  }
}

TEST_CASE("realness for real lambda") {
  const Edge e = unit_edge();
  auto p = fundamental_pair(e, Potential::polynomial({1.0, 2.0}), 1.0,
                            SpectralParameter::from_lambda(37.0));
  CHECK(std::abs(p.C.imag()) < 1e-11);
  CHECK(std::abs(p.S.imag()) < 1e-11);
  CHECK(std::abs(p.Cp.imag()) < 1e-11);
  CHECK(std::abs(p.Sp.imag()) < 1e-11);
  auto n = fundamental_pair(e, Potential::piecewise({0.4, -1.1, 2.0}), 1.0,
                            SpectralParameter::from_lambda(-5.0));
  CHECK(std::abs(n.C.imag()) < 1e-13);
}

TEST_CASE("asymptotic error orders") {
  // |C - cos rho T| = O(1/rho), |S - sin rho T / rho| = O(1/rho^2).
  const Edge e = unit_edge();
  const Potential q = Potential::polynomial({0.3, 1.0, -0.8});
  OdeOptions o;
  o.tol = 1e-12;
  std::vector<double> lr, lc, ls;
  for (double rho = 8.0; rho <= 128.0; rho *= 2.0) {
    // Envelope over a period, so that zeros of the oscillating error do not bias the fit.
    double ec = 0.0, es = 0.0;
    for (int k = 0; k < 16; ++k) {
      const double r = rho + k * M_PI / 16.0;
      auto p = fundamental_pair(e, q, 1.0, SpectralParameter::from_rho(r), o);
      ec = std::max(ec, std::abs(p.C - std::cos(r)));
      es = std::max(es, std::abs(p.S - std::sin(r) / r));
    }
    lr.push_back(std::log(rho));
    lc.push_back(std::log(ec));
    ls.push_back(std::log(es));
  }
  auto slope = [&](const std::vector<double>& y) {
    const double n = static_cast<double>(y.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      sx += lr[i];
      sy += y[i];
      sxx += lr[i] * lr[i];
      sxy += lr[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  CHECK(slope(lc) <= -0.9 * 1.0);
  CHECK(slope(ls) <= -0.9 * 2.0);
}

TEST_CASE("continuity in lambda") {
  // Centered differences at h and h/2 satisfy the Richardson relation for a smooth map.
  const Edge e = unit_edge();
  const Potential q = Potential::grid({0.0, 0.5, 1.0, 0.2}, 1);
  OdeOptions o;
  o.tol = 1e-12;
  const cplx l0(20.0, 1.0);
  auto S = [&](cplx l) { return fundamental_pair(e, q, 1.0, SpectralParameter::from_lambda(l), o).S; };
  const double h = 1e-2;
  const cplx d1 = (S(l0 + h) - S(l0 - h)) / (2 * h);
  const cplx d2 = (S(l0 + h / 2) - S(l0 - h / 2)) / h;
  const cplx extrap = (4.0 * d2 - d1) / 3.0;
  CHECK(std::abs(d1 - d2) < 1e-3 * std::abs(d2) + 1e-9);
  CHECK(std::abs(extrap - d2) <= std::abs(d1 - d2));
}

TEST_CASE("batched evaluation") {
  const Edge e = unit_edge();
  SUBCASE("three zero-potential values") {
    std::vector<SpectralParameter> sps{SpectralParameter::from_lambda(1.0),
                                       SpectralParameter::from_lambda(-2.0),
                                       SpectralParameter::from_lambda(cplx(5.0, 1.0))};
    auto out = fundamental_pair_grid(e, Potential::zero(), sps);
    REQUIRE(out.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      auto ref = constant_pair(0.0, 1.0, sps[k].lambda);
      CHECK(out[k].S == ref.S);
    }
  }
  SUBCASE("grid potential matches single calls bitwise") {
    const Potential q = Potential::grid({0.1, -0.4, 0.9, 0.3, 0.0}, 1);
    std::vector<SpectralParameter> sps;
    for (int r = 1; r <= 10; ++r) sps.push_back(SpectralParameter::from_rho(r));
    auto par = fundamental_pair_grid(e, q, sps);
    auto ser = fundamental_pair_grid_serial(e, q, sps);
    for (std::size_t k = 0; k < sps.size(); ++k) {
      auto one = fundamental_pair(e, q, e.length, sps[k]);
      CHECK(par[k].C == one.C);
      CHECK(par[k].S == one.S);
      CHECK(par[k].Cp == one.Cp);
      CHECK(par[k].Sp == one.Sp);
      CHECK(ser[k].S == one.S);
    }
  }
  SUBCASE("empty batch") { CHECK(fundamental_pair_grid(e, Potential::zero(), {}).empty()); }
}

TEST_CASE("errors") {
  const Edge e = unit_edge();
  CHECK_THROWS_AS(fundamental_pair(e, Potential::zero(), 1.5, SpectralParameter::from_lambda(1.0)),
                  ValidationError);
  OdeOptions o;
  o.max_steps = 3;
  try {
    fundamental_pair(e, Potential::polynomial({1.0}), 1.0, SpectralParameter::from_lambda(1e4), o);
    FAIL("expected failure");
  } catch (const NumericalError& err) {
    CHECK(err.lambda() == cplx(1e4));
    CHECK(err.x() < 1.0);
  }
}

TEST_CASE("reversed transfer") {
  // Integrating the mirrored potential gives the reversed quadruple.
  const Edge e{1, 1, 2, 1.4};
  const Potential q = Potential::polynomial({0.2, 1.5, -0.7});
  const auto sp = SpectralParameter::from_lambda(cplx(12.0, 0.5));
  OdeOptions o;
  o.tol = 1e-12;
  auto fwd = fundamental_pair(e, q, e.length, sp, o).reversed();
  auto back = fundamental_pair(e, q.reversed(e.length), e.length, sp, o);
  CHECK(rel(fwd.C, back.C) < 1e-9);
  CHECK(rel(fwd.S, back.S) < 1e-9);
  CHECK(rel(fwd.Cp, back.Cp) < 1e-9);
  CHECK(rel(fwd.Sp, back.Sp) < 1e-9);
  const Potential pw = Potential::piecewise({0.5, -0.3, 1.0});
  auto f2 = fundamental_pair(e, pw, e.length, sp).reversed();
  auto b2 = fundamental_pair(e, pw.reversed(e.length), e.length, sp);
  CHECK(rel(f2.S, b2.S) < 1e-12);
  CHECK(rel(f2.C, b2.C) < 1e-12);
}
