#include <cmath>

#include "doctest.h"
#include "qtree/char_fn.hpp"
#include "qtree/eigen_search.hpp"
#include "qtree/errors.hpp"
#include "qtree/sample_trees.hpp"

using namespace qtree;

namespace {

// Zeros in rho of a real function on (lo, hi] by dense scan and bisection.
std::vector<double> scan_zeros(const std::function<double(double)>& g, double lo, double hi, int n) {
  std::vector<double> z;
  double x0 = lo, g0 = g(lo);
  for (int i = 1; i <= n; ++i) {
    const double x1 = lo + (hi - lo) * i / n;
    const double g1 = g(x1);
    if ((g0 < 0) != (g1 < 0)) {
      double a = x0, b = x1, ga = g0;
      for (int k = 0; k < 200; ++k) {
        const double m = 0.5 * (a + b);
        const double gm = g(m);
        if ((gm < 0) == (ga < 0)) {
          a = m;
          ga = gm;
        } else {
          b = m;
        }
      }
      z.push_back(0.5 * (a + b));
    }
    x0 = x1;
    g0 = g1;
  }
  return z;
}

}  // namespace

TEST_CASE("polynomial zero counting and moments") {
  CharFn p([](cplx z) { return (z - 1.0) * (z - 1.0) * (z - 2.5) * (z - cplx(1, -3)); }, "poly");
  CHECK(count_zeros_in_box(p, cplx(0.0, -1.0), cplx(3.0, 1.0)) == 3);
  CHECK(count_zeros_in_box(p, cplx(0.0, -4.0), cplx(3.0, 1.0)) == 4);
  CHECK(count_zeros_in_box(p, cplx(1.5, -1.0), cplx(2.0, 1.0)) == 0);
  auto m = contour_moments(p, 1.0, 0.5, 2);
  CHECK(std::abs(m[0] - 2.0) < 1e-9);
  CHECK(std::abs(m[1]) < 1e-9);
}

TEST_CASE("single edge Dirichlet spectrum") {
  auto f = characteristic_function(dirichlet_problem(single_edge_tree()));
  auto s = find_eigenvalues(f, 1.0, 400.0);
  REQUIRE(s.eigenvalues.size() == 6);
  for (int n = 1; n <= 6; ++n) {
    CHECK(s.eigenvalues[n - 1].multiplicity == 1);
    CHECK(std::abs(s.eigenvalues[n - 1].lambda - n * n * M_PI * M_PI) < 1e-10 * n * n);
  }
  CHECK(s.reference_count == 6);
}

TEST_CASE("three-star double and simple zeros") {
  auto f = characteristic_function(dirichlet_problem(star_tree(3)));
  auto s = find_eigenvalues(f, 0.5, 150.0);
  // (pi/2)^2, pi^2 (double), (3pi/2)^2, (2pi)^2 (double), (5pi/2)^2, (3pi)^2 (double), (7pi/2)^2
  std::vector<std::pair<double, int>> expected;
  for (int k = 1; k <= 7; ++k) {
    const double r = k * M_PI / 2.0;
    if (r * r > 150.0) break;
    expected.push_back({r * r, k % 2 == 0 ? 2 : 1});
  }
  REQUIRE(s.eigenvalues.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(s.eigenvalues[i].multiplicity == expected[i].second);
    CHECK(std::abs(s.eigenvalues[i].lambda - expected[i].first) < 1e-8 * expected[i].first);
  }
}

TEST_CASE("five-edge tree spectrum against the trigonometric polynomial") {
  auto f = characteristic_function(dirichlet_problem(five_edge_tree()));
  auto s = find_eigenvalues(f, 1e-6, 100.0);
  auto g = [](double r) { return -9 * std::sin(5 * r) + 13 * std::sin(3 * r) + 6 * std::sin(r); };
  auto simple = scan_zeros(g, 1e-3, 10.0, 200000);
  // Zeros at n*pi are triple: g, g', g'' vanish there and g''' does not.
  std::vector<std::pair<double, int>> expected;
  for (double r : simple) {
    const double nearest = std::round(r / M_PI) * M_PI;
    if (std::abs(r - nearest) < 1e-3)
      expected.push_back({nearest * nearest, 3});
    else
      expected.push_back({r * r, 1});
  }
  REQUIRE(s.eigenvalues.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(s.eigenvalues[i].multiplicity == expected[i].second);
    CHECK(std::abs(s.eigenvalues[i].lambda - expected[i].first) < 1e-7 * expected[i].first);
  }
}

TEST_CASE("spectrum of a perturbed problem stays close to the reference count") {
  auto t = five_edge_tree();
  PotentialSet q{{1, Potential::piecewise({0.5, -0.3})}, {2, Potential::constant(0.8)},
                 {4, Potential::polynomial({0.2, 0.4})}, {5, Potential::grid({0.1, -0.2, 0.3}, 1)}};
  auto f = characteristic_function(dirichlet_problem(t, q));
  auto s = find_eigenvalues(f, -20.0, 300.0);
  CHECK(std::abs(s.count() - s.reference_count) <= 2);
  for (const auto& e : s.eigenvalues) {
    // Each listed value is a zero: |f| is tiny against its neighbourhood.
    CHECK(pole_proximity(f, e.lambda, t.total_length()) < 1e-6);
  }
  for (std::size_t i = 1; i < s.eigenvalues.size(); ++i)
    CHECK(s.eigenvalues[i].lambda > s.eigenvalues[i - 1].lambda);
}

TEST_CASE("argument errors and density mismatch") {
  auto f = characteristic_function(dirichlet_problem(single_edge_tree()));
  CHECK_THROWS_AS(find_eigenvalues(f, 5.0, 1.0), ValidationError);
  CHECK_THROWS_AS(find_eigenvalues(f, 1.0, 400.0, 20), NumericalError);
}

TEST_CASE("expanded spectrum repeats multiple eigenvalues") {
  SpectrumSet s;
  s.eigenvalues = {{1.0, 1, 0.0}, {2.0, 3, 0.0}};
  CHECK(s.count() == 4);
  CHECK(s.expanded() == std::vector<double>{1.0, 2.0, 2.0, 2.0});
}
