// Acceptance run: one PASS/FAIL line per criterion, with the measured numbers.
// Exit status is 0 when every criterion has its expected outcome (two known reds, see
// README); --strict makes any red fatal.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "qtree/char_fn.hpp"
#include "qtree/eigen_search.hpp"
#include "qtree/identities.hpp"
#include "qtree/partial_inverse.hpp"
#include "qtree/sample_trees.hpp"
#include "qtree/spectral_data.hpp"
#include "qtree/worked_example.hpp"

using namespace qtree;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> info;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------------------

Outcome golden_values() {
  const auto t0 = Clock::now();
  std::vector<double> rhos;
  for (int i = 0; i < 50; ++i) rhos.push_back(0.3 + 5.7 * (i + 0.5) / 50);
  const auto rep = compare_five_edge_example(rhos);
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = rep.kept.size() == 50 && rep.worst() <= 1e-8 && t < 10.0;
  std::string parts;
  for (const auto& [k, v] : rep.max_error) parts += " " + k + "=" + num(v);
  o.detail = "max rel error" + parts + ", " + std::to_string(rep.kept.size()) + " points, " + num(t) + " s";
  o.info.push_back("A, B, C carry the printed closed-form sign; the printed definition from b gives the negatives");
  return o;
}

bool halving(const std::vector<double>& err) {
  // Exact agreement counts as O(1/rho) with any constant.
  bool exact = true;
  for (double e : err) exact = exact && e <= 1e-10;
  if (exact) return true;
  for (std::size_t i = 1; i < err.size(); ++i)
    if (err[i] > 0.5 * 1.25 * err[i - 1]) return false;
  return true;
}

Outcome root_asymptotics() {
  const std::vector<double> rhos{10, 20, 40};
  const auto ra = five_edge_root_asymptotics(rhos, {});
  Outcome o;
  const bool first = halving(ra.first_error), second = halving(ra.second_error);
  o.pass = first && second;
  o.detail = "first root error " + num(ra.first_error[0]) + "/" + num(ra.first_error[1]) + "/" + num(ra.first_error[2]) +
             (first ? " ok" : " not O(1/rho)") + "; second root error " + num(ra.second_error[0]) + "/" +
             num(ra.second_error[1]) + "/" + num(ra.second_error[2]) + (second ? " ok" : " not O(1/rho)");
  o.info.push_back("second root against rho * printed form: " + num(ra.second_error_scaled[0]) + "/" +
                   num(ra.second_error_scaled[1]) + "/" + num(ra.second_error_scaled[2]) +
                   (halving(ra.second_error_scaled) ? " (matches)" : " (no match)"));
  PotentialSet q{{1, Potential::constant(0.7)}, {2, Potential::constant(0.3)}, {5, Potential::constant(-0.4)}};
  const auto rq = five_edge_root_asymptotics(rhos, q);
  double c1 = 0.0, c2 = 0.0;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    c1 = std::max(c1, rq.first_error[i] * rhos[i]);
    c2 = std::max(c2, rq.second_error_scaled[i] * rhos[i]);
  }
  o.info.push_back("with a potential: max rho * error is " + num(c1) + " (first root), " + num(c2) +
                   " (second, corrected form)");
  return o;
}

PotentialSet random_potentials(const MetricTree& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  PotentialSet q;
  bool grid = false;
  for (const auto& e : t.edges()) {
    if (grid) {
      std::vector<double> s(9);
      for (auto& x : s) x = u(rng);
      q[e.id] = Potential::grid(s);
    } else {
      q[e.id] = Potential::constant(u(rng));
    }
    grid = !grid;
  }
  return q;
}

Outcome split_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  std::vector<std::pair<std::string, MetricTree>> trees{{"single edge", single_edge_tree()},
                                                        {"3-star", star_tree(3)},
                                                        {"five-edge", five_edge_tree()},
                                                        {"random 7", random_tree(7, 11)},
                                                        {"random 9", random_tree(9, 23)}};
  std::vector<cplx> grid;
  for (int i = 0; i < 20; ++i) grid.push_back(std::pow(cplx(0.5 + 7.5 * i / 19, 0.3), 2));
  double worst = 0.0;
  int splits = 0;
  for (const auto& [name, tree] : trees) {
    const auto spec = dirichlet_problem(tree, random_potentials(tree, rng));
    const auto whole = assemble_char_fn(spec).evaluate(grid);
    auto track = [&](const std::vector<cplx>& other) {
      const cplx r0 = other[0] / whole[0];
      for (std::size_t k = 1; k < grid.size(); ++k) worst = std::max(worst, std::abs(other[k] / whole[k] / r0 - 1.0));
    };
    const auto internal = tree.internal_vertices();
    // A single edge has nothing to split; its assembled determinant is checked against the folded value.
    if (internal.empty()) track(characteristic_function(spec).evaluate(grid));
    for (VertexId v : internal) {
      track(char_fn_by_split(spec, v).evaluate(grid));
      ++splits;
    }
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-8 && t < 60.0;
  o.detail = "max ratio variation " + num(worst) + " over " + std::to_string(splits) + " splits on 5 trees, " + num(t) + " s";
  return o;
}

Outcome pair_identities() {
  std::vector<cplx> grid;
  for (int i = 0; i < 12; ++i) grid.push_back(std::pow(cplx(0.6 + 0.5 * i, 0.4), 2));
  std::mt19937_64 rng(7);
  const auto star = star_tree(4);
  const auto spec_star = dirichlet_problem(star, random_potentials(star, rng));
  const double common = std::max(pair_identity_common_vertex(spec_star, 1, 2, grid),
                                 pair_identity_common_vertex(spec_star.with_condition(3, Condition::Neumann), 1, 4, grid));
  const auto five = five_edge_tree();
  const auto spec_five = dirichlet_problem(five, random_potentials(five, rng));
  const auto tree9 = random_tree(9, 23);
  const auto spec9 = dirichlet_problem(tree9, random_potentials(tree9, rng));
  double split = pair_identity_split(spec_five, 1, 4, grid);
  const auto b = tree9.boundary_vertices();
  int n9 = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j) {
      const VertexId n1 = tree9.edge(tree9.incident(b[i]).front()).other(b[i]);
      const VertexId n2 = tree9.edge(tree9.incident(b[j]).front()).other(b[j]);
      if (n1 == n2) continue;
      split = std::max(split, pair_identity_split(spec9, b[i], b[j], grid));
      ++n9;
    }
  Outcome o;
  o.pass = common <= 1e-8 && split <= 1e-8;
  o.detail = "common-vertex " + num(common) + ", split " + num(split) + " (" + std::to_string(n9 + 1) + " split pairs)";
  return o;
}

Outcome identity_suite() {
  std::vector<cplx> grid;
  for (int i = 0; i < 20; ++i) grid.push_back(std::pow(cplx(0.6 + 0.3 * i, 0.5), 2));
  const auto rep = identity_suite_q0(five_edge_tree(), 3, grid);
  Outcome o;
  o.pass = true;
  for (const char* k : {"form_a", "form_b", "form_c", "bracket"}) {
    const auto& c = rep.at(k);
    o.pass = o.pass && c.passed;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + k + " " + num(c.max_error);
  }
  o.info.push_back("discriminant with the squared L_0 factor: " + num(rep.at("discriminant").max_error));
  const auto seven = identity_suite_q0(seven_edge_tree(), 1, grid);
  o.info.push_back("seven-edge tree: form_a " + num(seven.at("form_a").max_error) + ", mirrored form_a " +
                   num(seven.at("form_a_mirrored").max_error) + ", bracket " + num(seven.at("bracket").max_error));
  return o;
}

Outcome forward_consistency() {
  const auto tree = five_edge_tree();
  const auto d = split_edge_environment(tree, 3);
  const std::vector<PotentialSet> sets{
      {{1, Potential::constant(0.7)}, {3, Potential::polynomial({0.2, -0.5})}, {4, Potential::piecewise({0.4, -0.2})}},
      {{1, Potential::piecewise({0.5, -0.3})}, {2, Potential::piecewise({-0.2, 0.4})}, {3, Potential::constant(0.3)},
       {4, Potential::piecewise({0.6, 0.0})}, {5, Potential::piecewise({-0.4, 0.2})}},
      {{1, Potential::grid({0.0, 1.0, -0.5, 0.3, 0.8})}, {2, Potential::constant(1.0)},
       {3, Potential::grid({0.3, -0.3, 0.0})}, {4, Potential::constant(-0.6)}, {5, Potential::polynomial({0.5, 0.0, -1.0})}}};
  double residual = 0.0;
  int total = 0, selected = 0;
  for (const auto& q : sets) {
    const auto spec = dirichlet_problem(tree, q);
    const auto sys = CoefficientSystem::forward(d, spec);
    const auto ev = find_eigenvalues(characteristic_function(spec), -5.0, 100.0).expanded();
    std::vector<cplx> targets;
    for (std::size_t i = 0; i + 1 < ev.size(); ++i)
      if (ev[i + 1] - ev[i] > 1e-6) targets.push_back(0.5 * (ev[i] + ev[i + 1]));
    const auto track = solve_quadratic_track(sys, targets);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto v = sys.subtree_values(targets[i]);
      const cplx m = v[1] / v[0];
      residual = std::max(residual, quadratic_residual(sys.row(targets[i]), m));
      ++total;
      if (track.accepted[i] && std::abs(track.near_ratio[i] - m) <= 1e-6 * std::max(1.0, std::abs(m))) ++selected;
    }
  }
  Outcome o;
  const double frac = static_cast<double>(selected) / total;
  o.pass = residual <= 1e-8 && frac >= 0.99;
  o.detail = "normalized residual " + num(residual) + ", tracking selects the forward root at " + std::to_string(selected) +
             "/" + std::to_string(total) + " points";
  return o;
}

Outcome hadamard_convergence() {
  const ProblemSpec spec = dirichlet_problem(single_edge_tree(), {{1, Potential::constant(1.0)}});
  const auto exact = characteristic_function(spec);
  const auto f0 = characteristic_function(spec.with_zero_potential());
  const auto s = find_eigenvalues(exact, -5.0, 18000.0);
  std::vector<double> errs;
  for (int n : {10, 20, 40}) {
    const auto g = reconstruct_char_fn(s, f0, n);
    double err = 0.0, scale = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double r = 1.0 + 4.0 * (i + 0.377) / 201;
      err = std::max(err, std::abs(g(r * r) - exact(r * r)));
      scale = std::max(scale, std::abs(exact(r * r)));
    }
    errs.push_back(err / scale);
  }
  Outcome o;
  const bool monotone = errs[1] <= 1.1 * errs[0] && errs[2] <= 1.1 * errs[1];
  o.pass = monotone && errs[2] <= 1e-2;
  o.detail = "relative sup error N=10/20/40: " + num(errs[0]) + "/" + num(errs[1]) + "/" + num(errs[2]);
  return o;
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const PotentialSet truth{{1, Potential::piecewise({0.5, -0.3})},
                           {2, Potential::piecewise({-0.2, 0.4})},
                           {3, Potential::piecewise({0.3, 0.1})},
                           {4, Potential::piecewise({0.6, 0.0})},
                           {5, Potential::piecewise({-0.4, 0.2})}};
  InverseProblem p;
  p.tree = five_edge_tree();
  p.known_edge = 3;
  p.known_potential = truth.at(3);
  p.spectra = forward_spectra(p.tree, truth, 3, 40);
  InverseOptions opts;
  opts.truncation = 40;
  const auto r = run_partial_inverse(p, opts);
  double param_err = 0.0;
  for (const auto& [e, rec] : r.recovered) {
    const auto expect = std::get<PiecewiseConstantPotential>(truth.at(e).form()).values;
    for (std::size_t k = 0; k < expect.size(); ++k) param_err = std::max(param_err, std::abs(rec.params[k] - expect[k]));
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = r.recovered.size() == 4 && param_err <= 1e-3 && r.max_mismatch <= 1e-6 && t < 600.0;
  o.detail = "max parameter error " + num(param_err) + ", max eigenvalue mismatch " + num(r.max_mismatch) + ", " +
             num(t) + " s";
  return o;
}

Outcome counting_and_order() {
  std::vector<std::pair<std::string, ProblemSpec>> problems;
  const auto five = five_edge_tree();
  const PotentialSet q{{1, Potential::constant(0.7)}, {2, Potential::grid({0.0, 1.0, -0.5})},
                       {4, Potential::polynomial({0.3, -0.6})}};
  problems.push_back({"single edge", dirichlet_problem(single_edge_tree())});
  problems.push_back({"single edge, Neumann end", dirichlet_problem(single_edge_tree()).with_condition(2, Condition::Neumann)});
  problems.push_back({"3-star", dirichlet_problem(star_tree(3), {{1, Potential::constant(2.0)}})});
  problems.push_back({"five-edge L0", dirichlet_problem(five, q)});
  problems.push_back({"five-edge L1", dirichlet_problem(five, q).with_condition(1, Condition::Neumann)});
  problems.push_back({"five-edge L4", dirichlet_problem(five, q).with_condition(4, Condition::Neumann)});
  problems.push_back({"random 8", dirichlet_problem(random_tree(8, 3))});
  int count_gap = 0;
  double printed = 0.0, corrected = 0.0;
  SearchOptions so;
  so.check_density = false;
  for (const auto& [name, spec] : problems) {
    const auto delta = characteristic_function(spec);
    const double hi = 30.0 * 30.0;
    const int n = find_eigenvalues(delta, -10.0, hi, -1, so).count();
    const int n0 = find_eigenvalues(characteristic_function(spec.with_zero_potential()), -10.0, hi, -1, so).count();
    count_gap = std::max(count_gap, std::abs(n - n0));
    const double slope = decay_slope(delta, 10.0, 40.0);
    const int d = decay_order(spec);
    printed = std::max(printed, std::abs(slope + (d - 1)));
    corrected = std::max(corrected, std::abs(slope + d));
  }
  Outcome o;
  o.pass = count_gap <= 2 && printed <= 0.2;
  o.detail = "count gap " + std::to_string(count_gap) + " (<= 2), max |slope + (d - 1)| = " + num(printed) + " (<= 0.2)";
  o.info.push_back("max |slope + d| = " + num(corrected) + ": Delta decays like rho^-d");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    bool expect_pass;
  };
  const std::vector<Criterion> criteria{
      {1, "golden closed forms", golden_values, true},
      {2, "asymptotic roots of the quadratic", root_asymptotics, false},
      {3, "split equivalence", split_equivalence, true},
      {4, "pair determinant identities", pair_identities, true},
      {5, "factorized coefficient identities", identity_suite, true},
      {6, "forward consistency of the quadratic", forward_consistency, true},
      {7, "truncated product convergence", hadamard_convergence, true},
      {8, "end-to-end partial inverse", end_to_end, true},
      {9, "eigenvalue counting and decay order", counting_and_order, false},
  };
  int unexpected = 0, reds = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << "  " << o.detail
              << std::endl;
    for (const auto& line : o.info) std::cout << "    info: " << line << std::endl;
    reds += !o.pass;
    unexpected += o.pass != c.expect_pass;
  }
  std::cout << "summary: " << (criteria.size() - reds) << " pass, " << reds << " fail, " << unexpected
            << " differ from the expected outcome (expected reds: 2, 9)" << std::endl;
  if (strict) return reds == 0 ? 0 : 1;
  return unexpected == 0 ? 0 : 1;
}
