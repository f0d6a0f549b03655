#include "qtree/worked_example.hpp"

#include <algorithm>
#include <cmath>

#include "qtree/partial_inverse.hpp"
#include "qtree/sample_trees.hpp"

namespace qtree {

namespace {

// sum_k c_k trig(f_k rho) + c0, divided by den * rho^power.
struct TrigSum {
  bool sine;
  double c0;
  std::vector<std::pair<double, double>> terms;  // (coefficient, frequency)
  double den;
  int power;

  cplx value(cplx r) const {
    cplx s = c0;
    for (auto [c, f] : terms) s += c * (sine ? std::sin(f * r) : std::cos(f * r));
    return s / (den * std::pow(r, power));
  }
  double scale(cplx r) const {
    double s = std::abs(c0);
    for (auto [c, f] : terms) s += std::abs(c) * std::abs(sine ? std::sin(f * r) : std::cos(f * r));
    return s / std::abs(den * std::pow(r, power));
  }
};

const TrigSum kDelta0{true, 0, {{-9, 5}, {13, 3}, {6, 1}}, 16, 3};
const TrigSum kDelta1{false, 0, {{-9, 5}, {7, 3}, {2, 1}}, 16, 2};
const TrigSum kB11{true, 0, {{-3, 6}, {-2, 4}, {13, 2}}, 16, 3};
const TrigSum kB12{false, -6, {{-3, 6}, {6, 4}, {3, 2}}, 16, 4};
const TrigSum kB13{false, -6, {{3, 6}, {-10, 4}, {13, 2}}, 32, 4};
const TrigSum kB14{true, 0, {{-3, 6}, {12, 4}, {-15, 2}}, 32, 5};
const TrigSum kA{true, 0, {{-27, 12}, {174, 10}, {-420, 8}, {378, 6}, {153, 4}, {-468, 2}}, 2048, 9};
const TrigSum kB{false, -154, {{-27, 12}, {84, 10}, {106, 8}, {-764, 6}, {1099, 4}, {-344, 2}}, 2048, 8};
const TrigSum kC{true, 0, {{-27, 12}, {48, 10}, {140, 8}, {-336, 6}, {-71, 4}, {512, 2}}, 1024, 7};
const TrigSum kD{false,
                 5393934,
                 {{6561, 24},
                  {-52488, 22},
                  {128628, 20},
                  {83592, 18},
                  {-987134, 16},
                  {1543976, 14},
                  {702372, 12},
                  {-4646312, 10},
                  {3755087, 8},
                  {3053616, 6},
                  {-4805144, 4},
                  {-4176688, 2}},
                 8388608,
                 16};

template <class F>
FiveEdgeForms build(cplx r, F&& get) {
  using std::cos;
  using std::sin;
  FiveEdgeForms f;
  const cplx s2s = sin(2.0 * r) * sin(r) / (r * r);
  f.a[0] = {sin(3.0 * r) / r, s2s, s2s, std::pow(sin(r), 3) / std::pow(r, 3)};
  const cplx a22 = sin(2.0 * r) * cos(r) / r, a23 = cos(2.0 * r) * sin(r) / r;
  const cplx a24 = cos(r) * sin(r) * sin(r) / (r * r);
  f.a[1] = {cos(3.0 * r), a22, a23, a24};
  f.a[2] = {cos(3.0 * r), a23, a22, a24};
  const cplx b11 = get(kB11), b12 = get(kB12), b13 = get(kB13), b14 = get(kB14);
  f.b[0] = {b11, b12, b13, b14};
  f.b[1] = {b11, b13, b12, b14};
  f.A = get(kA);
  f.B = get(kB);
  f.C = get(kC);
  f.D = get(kD);
  f.delta0 = get(kDelta0);
  f.delta1 = get(kDelta1);
  return f;
}

bool near_trig_zero(double r, double floor) {
  for (int k = 1; k <= 3; ++k)
    if (std::abs(std::sin(k * r)) < floor || std::abs(std::cos(k * r)) < floor) return true;
  return false;
}

double chordal(cplx a, cplx b) {
  return std::abs(a - b) / (std::sqrt(1.0 + std::norm(a)) * std::sqrt(1.0 + std::norm(b)));
}

}  // namespace

FiveEdgeForms five_edge_forms(cplx rho) {
  return build(rho, [&](const TrigSum& t) { return t.value(rho); });
}

FiveEdgeForms five_edge_scales(cplx rho) {
  // Products of single trigonometric factors carry no cancellation: their scale is |value|.
  FiveEdgeForms f = build(rho, [&](const TrigSum& t) { return cplx(t.scale(rho)); });
  for (auto& row : f.a)
    for (auto& x : row) x = std::abs(x);
  return f;
}

cplx printed_first_root(cplx rho) { return rho * std::cos(rho) / std::sin(rho); }

cplx printed_second_root(cplx rho) {
  const cplx c = std::cos(rho), s = std::sin(rho);
  return -(1.0 + 6.0 * c * c) / (3.0 * s * c);
}

double ExampleReport::worst() const {
  double w = 0.0;
  for (const auto& [k, v] : max_error) w = std::max(w, v);
  return w;
}

ExampleReport compare_five_edge_example(const std::vector<double>& rhos, const ExampleOptions& opts) {
  ExampleReport rep;
  for (const char* k : {"delta0", "delta1", "a", "b", "A", "B", "C", "D"}) rep.max_error[k] = 0.0;
  std::vector<cplx> grid;
  for (double r : rhos) {
    if (near_trig_zero(r, opts.trig_floor)) {
      rep.excluded.push_back(r);
      continue;
    }
    rep.kept.push_back(r);
    grid.push_back(r * r);
  }
  if (grid.empty()) return rep;
  const auto tree = five_edge_tree();
  const auto table = reference_table(split_edge_environment(tree, 3), dirichlet_problem(tree), grid);
  auto err = [&](const std::string& key, cplx got, cplx want, cplx scale) {
    const double den = std::max(std::abs(want), opts.scale_floor * std::abs(scale));
    rep.max_error[key] = std::max(rep.max_error[key], std::abs(got - want) / den);
  };
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const double r = rep.kept[n];
    const auto& row = table.rows[n];
    const auto f = five_edge_forms(r);
    const auto s = five_edge_scales(r);
    err("delta0", row.delta[0], f.delta0, s.delta0);
    err("delta1", row.delta[1], f.delta1, s.delta1);
    err("delta1", row.delta[2], f.delta1, s.delta1);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) err("a", row.a[i][j], f.a[i][j], s.a[i][j]);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) err("b", row.b[i][j], f.b[i][j], s.b[i][j]);
    err("A", row.A, f.A, s.A);
    err("B", row.B, f.B, s.B);
    err("C", row.C, f.C, s.C);
    err("D", row.D, f.D, s.D);
  }
  return rep;
}

RootAsymptotics five_edge_root_asymptotics(const std::vector<double>& rhos, const PotentialSet& q) {
  const auto tree = five_edge_tree();
  const auto system = CoefficientSystem::forward(split_edge_environment(tree, 3), dirichlet_problem(tree, q));
  RootAsymptotics out;
  out.rhos = rhos;
  for (double r : rhos) {
    const auto roots = quadratic_roots(system.row(r * r));
    const cplx p1 = printed_first_root(r);
    // The root closer to rho cot rho is the first one.
    const bool swap = chordal(roots.second, p1) < chordal(roots.first, p1);
    const cplx m1 = swap ? roots.second : roots.first;
    const cplx m2 = swap ? roots.first : roots.second;
    const cplx p2 = printed_second_root(r);
    out.first_error.push_back(std::abs(m1 / p1 - 1.0));
    out.second_error.push_back(std::abs(m2 / p2 - 1.0));
    out.second_error_scaled.push_back(std::abs(m2 / (r * p2) - 1.0));
  }
  return out;
}

}  // namespace qtree
