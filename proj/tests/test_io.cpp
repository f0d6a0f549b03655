#include <cmath>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "qtree/csv_io.hpp"
#include "qtree/errors.hpp"
#include "qtree/partial_inverse.hpp"
#include "qtree/sample_trees.hpp"
#include "qtree/spectral_data.hpp"
#include "qtree/tree_io.hpp"

using namespace qtree;

namespace {

const char* kStar = R"({
  "vertices": [{"id": 0}, {"id": 1}, {"id": 2}, {"id": 3}],
  "edges": [
    {"id": 1, "from": 1, "to": 0, "length": 1.0, "potential": {"kind": "const", "value": 0.5}},
    {"id": 2, "from": 0, "to": 2, "length": 2.0, "potential": {"kind": "poly", "coeffs": [1.0, 2.0]}},
    {"id": 3, "from": 3, "to": 0, "length": 0.5}
  ],
  "root": 1,
  "boundary_conditions": {"1": "D", "2": "N", "3": "D"}
})";

bool same_potential(const Potential& a, const Potential& b, double len) {
  for (int i = 0; i <= 20; ++i)
    if (a(i * len / 20, len) != b(i * len / 20, len)) return false;
  return a.kind() == b.kind();
}

}  // namespace

TEST_CASE("tree file parses and reorients boundary edges") {
  auto f = parse_tree(kStar);
  CHECK(f.tree.edge_count() == 3);
  CHECK(f.tree.root() == 1);
  // edge 2 was given from the center; it is flipped so x = 0 sits at the leaf
  CHECK(f.flipped == std::vector<EdgeId>{2});
  CHECK(f.tree.edge(2).at_zero == 2);
  // q(x) = 1 + 2x on the original orientation becomes 1 + 2(2 - x)
  CHECK(f.q.at(2)(0.0, 2.0) == doctest::Approx(5.0));
  CHECK(f.q.at(2)(2.0, 2.0) == doctest::Approx(1.0));
  CHECK(f.bc.at(2) == Condition::Neumann);
  CHECK(f.bc.at(3) == Condition::Dirichlet);
  CHECK(f.q.count(3) == 0);
}

TEST_CASE("tree file round trip is exact") {
  auto tree = five_edge_tree();
  tree = MetricTree(tree.vertices(), tree.edges(), tree.root());
  PotentialSet q{{1, Potential::constant(0.1 + 1e-16)},
                 {2, Potential::polynomial({1.0 / 3.0, -2.0 / 7.0})},
                 {3, Potential::grid({0.1, 0.7, -0.3, 2.0 / 3.0}, 0)},
                 {4, Potential::piecewise({std::sqrt(2.0), -std::acos(-1.0)})},
                 {5, Potential::zero()}};
  BoundarySpec bc{{1, Condition::Dirichlet}, {2, Condition::Dirichlet}, {4, Condition::Neumann},
                  {5, Condition::Dirichlet}};
  auto back = parse_tree(tree_to_json(tree, q, bc));
  CHECK(back.flipped.empty());
  CHECK(back.bc == bc);
  CHECK(back.tree.root() == tree.root());
  for (const auto& e : tree.edges()) {
    const auto& g = back.tree.edge(e.id);
    CHECK(g.at_zero == e.at_zero);
    CHECK(g.at_end == e.at_end);
    CHECK(g.length == e.length);
    CHECK(same_potential(back.q.at(e.id), q.at(e.id), e.length));
  }
}

TEST_CASE("missing boundary conditions default to Dirichlet") {
  auto f = parse_tree(R"({"vertices":[1,2],"edges":[{"id":7,"from":1,"to":2,"length":1.5}]})");
  CHECK(f.tree.root() == 1);
  CHECK(f.bc.at(1) == Condition::Dirichlet);
  CHECK(f.bc.at(2) == Condition::Dirichlet);
}

TEST_CASE("invalid tree files are rejected") {
  auto rejects = [](const std::string& text, const std::string& fragment) {
    try {
      parse_tree(text);
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      if (what.find(fragment) == std::string::npos) FAIL("message \"" << what << "\" lacks \"" << fragment << "\"");
      return;
    }
    FAIL("accepted: " << text);
  };
  rejects("{not json", "JSON");
  rejects(R"({"edges":[]})", "vertices");
  rejects(R"({"vertices":[1,2],"edges":[{"id":1,"from":1,"length":1}]})", "\"to\"");
  rejects(R"({"vertices":[1,2],"edges":[{"id":1,"from":1,"to":2,"length":-1}]})", "length");
  rejects(R"({"vertices":[1,2,3],"edges":[{"id":1,"from":1,"to":2,"length":1},{"id":2,"from":2,"to":3,"length":1}]})",
          "degree 2");
  rejects(R"({"vertices":[1,2,3],"edges":[{"id":1,"from":1,"to":2,"length":1}]})", "vertex count");
  rejects(R"({"vertices":[1,2],"edges":[{"id":1,"from":1,"to":2,"length":1,"potential":{"kind":"spline"}}]})",
          "unknown potential kind");
  rejects(R"({"vertices":[1,2],"edges":[{"id":1,"from":1,"to":2,"length":1}],"boundary_conditions":{"1":"R"}})",
          "\"D\" or \"N\"");
  rejects(R"({"vertices":[0,1,2,3],"edges":[{"id":1,"from":1,"to":0,"length":1},{"id":2,"from":2,"to":0,"length":1},
          {"id":3,"from":3,"to":0,"length":1}],"boundary_conditions":{"0":"D"}})",
          "non-boundary vertex 0");
  rejects(R"({"vertices":[1,2],"edges":[{"id":1,"from":1,"to":2,"length":1,"potential":{"kind":"grid","samples":[1]}}]})",
          "edge 1");
}

TEST_CASE("potential objects round trip") {
  for (const auto& p : {Potential::zero(), Potential::constant(-0.25), Potential::polynomial({1, 0, 3}),
                        Potential::grid({1, 2, 3}, 1), Potential::piecewise({0.5, -0.5})}) {
    auto back = potential_from_json(potential_to_json(p));
    CHECK(same_potential(back, p, 1.3));
  }
  CHECK_THROWS_AS(potential_from_json("[1]"), ValidationError);
}

TEST_CASE("doubles are written with 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  for (double x : {std::acos(-1.0), 1e-300, -123456.789012345678, 5e-324}) CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
}

TEST_CASE("spectra CSV round trip") {
  SpectrumSet a;
  a.problem = "L0";
  a.eigenvalues = {{std::acos(-1.0), 1, 0.0}, {10.0 / 3.0, 2, 0.0}, {40.0, 1, 0.0}};
  SpectrumSet b;
  b.problem = "L4";
  b.eigenvalues = {{-0.5, 1, 0.0}};
  std::stringstream ss;
  write_spectra_csv(ss, {a, b});
  CHECK(ss.str().rfind("problem,lambda,multiplicity\n", 0) == 0);
  auto back = read_spectra_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].problem == "L0");
  REQUIRE(back[0].eigenvalues.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[0].eigenvalues[i].lambda == a.eigenvalues[i].lambda);
    CHECK(back[0].eigenvalues[i].multiplicity == a.eigenvalues[i].multiplicity);
  }
  CHECK(back[0].count() == 4);
  CHECK(back[0].window_min == -1.0);
  CHECK(back[0].window_max == doctest::Approx(40.0 + 0.5 * (40.0 - 10.0 / 3.0)));
  CHECK(back[1].window_min == -1.5);
}

TEST_CASE("malformed spectra CSV") {
  auto bad = [](const std::string& text) {
    std::stringstream ss(text);
    CHECK_THROWS_AS(read_spectra_csv(ss), ValidationError);
  };
  bad("lambda,problem,multiplicity\nL0,1,1\n");
  bad("problem,lambda,multiplicity\nL0,abc,1\n");
  bad("problem,lambda,multiplicity\nL0,1.5,0\n");
  bad("problem,lambda,multiplicity\nL0,1.5\n");
  bad("problem,lambda,multiplicity\nL0,2,1\nL0,1,1\n");
}

TEST_CASE("Weyl CSV round trip") {
  WeylSample s;
  s.vertex = 4;
  s.lambdas = {{1.0 / 3.0, 0.25}, {2.0, -1e-9}};
  s.values = {{-0.1, 7.0}, {std::acos(-1.0), 0.0}};
  std::stringstream ss;
  write_weyl_csv(ss, {s});
  auto back = read_weyl_csv(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].vertex == 4);
  CHECK(back[0].lambdas == s.lambdas);
  CHECK(back[0].values == s.values);
}

TEST_CASE("spectra read back from CSV reconstruct like the originals") {
  auto tree = five_edge_tree();
  PotentialSet q{{1, Potential::constant(0.3)}, {4, Potential::constant(-0.2)}};
  auto inputs = forward_spectra(tree, q, 3, 12);
  std::vector<SpectrumSet> sets;
  for (const auto& s : inputs) {
    sets.push_back(s.spectrum);
    sets.back().problem = s.is_l0 ? "L0" : "L" + std::to_string(s.vertex);
  }
  std::stringstream ss;
  write_spectra_csv(ss, sets);
  auto back = read_spectra_csv(ss);
  REQUIRE(back.size() == sets.size());
  const auto ref = characteristic_function(dirichlet_problem(tree));
  const auto direct = reconstruct_char_fn(sets[0], ref, 10);
  const auto loaded = reconstruct_char_fn(back[0], ref, 10);
  for (double rho : {0.7, 1.9, 3.2}) {
    const cplx lam = rho * rho;
    CHECK(std::abs(direct(lam) - loaded(lam)) <= 1e-12 * std::abs(direct(lam)));
  }
}
