#include "qtree/partial_inverse.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "qtree/errors.hpp"

namespace qtree {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Mat6 = Eigen::Matrix<cplx, 6, 6>;

VertexId first_boundary_except(const MetricTree& t, VertexId skip) {
  for (VertexId v : t.boundary_vertices())
    if (v != skip) return v;
  throw ValidationError("subtree has no boundary vertex besides the split vertex");
}

std::string lambda_text(cplx l) {
  std::ostringstream os;
  os.precision(10);
  os << l;
  return os.str();
}

// Neumann / Dirichlet folded values at boundary vertex k with the potentials of `spec`.
std::pair<cplx, cplx> dir_neu_at(const ProblemSpec& spec, VertexId k, cplx lambda) {
  const auto tr = edge_transfers(spec, lambda);
  BoundarySpec bc = spec.bc;
  bc[k] = Condition::Dirichlet;
  const cplx d = folded_char_value(spec.tree, bc, tr);
  bc[k] = Condition::Neumann;
  const cplx n = folded_char_value(spec.tree, bc, tr);
  return {d, n};
}

// Weyl function -Delta^N / Delta^D at boundary vertex k.
cplx weyl_value(const ProblemSpec& spec, VertexId k, cplx lambda) {
  const auto [d, n] = dir_neu_at(spec, k, lambda);
  return -n / d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Coefficient systems

cplx CoefficientSystem::block_determinant(const std::array<cplx, 2>& g1, const std::array<cplx, 2>& g2,
                                          const std::array<cplx, 4>& g3, const std::array<cplx, 2>& g4,
                                          const std::array<cplx, 2>& g5) {
  Mat6 m = Mat6::Zero();
  m(0, 0) = g1[0];
  m(0, 1) = -g2[0];
  m(1, 1) = g2[0];
  m(1, 2) = -1.0;
  m(2, 0) = g1[1];
  m(2, 1) = g2[1];
  m(2, 3) = -1.0;
  m(3, 2) = g3[1];
  m(3, 3) = g3[0];
  m(3, 4) = -g4[0];
  m(4, 4) = g4[0];
  m(4, 5) = -g5[0];
  m(5, 2) = g3[3];
  m(5, 3) = g3[2];
  m(5, 4) = g4[1];
  m(5, 5) = g5[1];
  return m.determinant();
}

namespace {

struct PartFns {
  std::array<CharFn, 4> g1, g4;  // DD, DN, ND, NN: first letter at v1 / v4, second at the split vertex
  std::array<CharFn, 2> g2, g5;
};

PartFns make_parts(const FivePartDecomposition& d, const ProblemSpec& spec, VertexId v1, VertexId v4) {
  PartFns p;
  const ProblemSpec s1 = spec.with_condition(v1, Condition::Neumann);
  const ProblemSpec s4 = spec.with_condition(v4, Condition::Neumann);
  auto four = [&](const ProblemSpec& base, const ProblemSpec& neu, const MetricTree& part, VertexId w) {
    return std::array<CharFn, 4>{characteristic_function(part_problem(base, part, w, Condition::Dirichlet)),
                                 characteristic_function(part_problem(base, part, w, Condition::Neumann)),
                                 characteristic_function(part_problem(neu, part, w, Condition::Dirichlet)),
                                 characteristic_function(part_problem(neu, part, w, Condition::Neumann))};
  };
  p.g1 = four(spec, s1, d.parts[0], d.near);
  p.g4 = four(spec, s4, d.parts[3], d.far);
  p.g2 = {characteristic_function(part_problem(spec, d.parts[1], d.near, Condition::Dirichlet)),
          characteristic_function(part_problem(spec, d.parts[1], d.near, Condition::Neumann))};
  p.g5 = {characteristic_function(part_problem(spec, d.parts[4], d.far, Condition::Dirichlet)),
          characteristic_function(part_problem(spec, d.parts[4], d.far, Condition::Neumann))};
  return p;
}

std::array<cplx, 4> transfer_values(const ProblemSpec& spec, EdgeId f, cplx lambda) {
  const Edge& e = spec.tree.edge(f);
  const auto p = fundamental_pair(e, spec.potential(f), e.length, SpectralParameter::from_lambda(lambda), spec.ode);
  return {p.S, p.C, p.Sp, p.Cp};
}

// Unit patterns for (D2, N2) and (D5, N5) per column.
constexpr std::array<std::array<int, 2>, 4> kPattern{{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};

std::array<cplx, 2> unit(int i) { return i == 0 ? std::array<cplx, 2>{1.0, 0.0} : std::array<cplx, 2>{0.0, 1.0}; }

std::array<std::array<cplx, 4>, 3> a_rows(const std::array<cplx, 4>& g1, const std::array<cplx, 4>& g3,
                                          const std::array<cplx, 4>& g4, const std::array<double, 3>& sign) {
  std::array<std::array<cplx, 4>, 3> a{};
  const std::array<cplx, 2> g1d{g1[0], g1[1]}, g1n{g1[2], g1[3]};
  const std::array<cplx, 2> g4d{g4[0], g4[1]}, g4n{g4[2], g4[3]};
  for (int j = 0; j < 4; ++j) {
    const auto g2 = unit(kPattern[j][0]);
    const auto g5 = unit(kPattern[j][1]);
    a[0][j] = sign[0] * CoefficientSystem::block_determinant(g1d, g2, g3, g4d, g5);
    a[1][j] = sign[1] * CoefficientSystem::block_determinant(g1n, g2, g3, g4d, g5);
    a[2][j] = sign[2] * CoefficientSystem::block_determinant(g1d, g2, g3, g4n, g5);
  }
  return a;
}

template <std::size_t N>
std::array<cplx, N> eval_all(const std::array<CharFn, N>& f, cplx lambda) {
  std::array<cplx, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = f[i](lambda);
  return out;
}

}  // namespace

CoefficientSystem::CoefficientSystem(FivePartDecomposition decomposition, ProblemSpec spec, CharFn delta0,
                                     CharFn delta1, CharFn delta4, std::optional<VertexId> v1,
                                     std::optional<VertexId> v4)
    : decomposition_(std::move(decomposition)), spec_(std::move(spec)), delta_{delta0, delta1, delta4} {
  const auto& d = decomposition_;
  v1_ = v1 ? *v1 : first_boundary_except(d.parts[0], d.near);
  v4_ = v4 ? *v4 : first_boundary_except(d.parts[3], d.far);
  if (!d.parts[0].has_vertex(v1_) || !d.parts[0].is_boundary(v1_) || v1_ == d.near)
    throw ValidationError("v1 must be a boundary vertex of the first subtree");
  if (!d.parts[3].has_vertex(v4_) || !d.parts[3].is_boundary(v4_) || v4_ == d.far)
    throw ValidationError("v4 must be a boundary vertex of the fourth subtree");

  const PartFns parts = make_parts(d, spec_, v1_, v4_);
  g1_ = parts.g1;
  g4_ = parts.g4;
  g2_ = parts.g2;
  g5_ = parts.g5;
  const ProblemSpec zero = spec_.with_zero_potential();
  const PartFns z = make_parts(d, zero, v1_, v4_);
  g2_ref_ = z.g2;

  // Sign of the block determinant against the folded normalization, from q = 0 at lambda = -1.
  const cplx l = -1.0;
  const auto za = a_rows(eval_all(z.g1, l), transfer_values(zero, d.f, l), eval_all(z.g4, l), {1.0, 1.0, 1.0});
  const SubtreeValues zv{z.g2[0](l), z.g2[1](l), z.g5[0](l), z.g5[1](l)};
  const std::array<cplx, 4> prod{zv[0] * zv[2], zv[1] * zv[2], zv[0] * zv[3], zv[1] * zv[3]};
  const std::array<ProblemSpec, 3> full{zero, zero.with_condition(v1_, Condition::Neumann),
                                        zero.with_condition(v4_, Condition::Neumann)};
  for (int i = 0; i < 3; ++i) {
    cplx det = 0.0;
    for (int j = 0; j < 4; ++j) det += za[i][j] * prod[j];
    const cplx folded = characteristic_function(full[i])(l);
    const cplx ratio = folded / det;
    if (std::abs(std::abs(ratio) - 1.0) > 1e-8)
      throw IdentityError("block determinant does not reproduce the characteristic function (ratio " +
                          lambda_text(ratio) + ")");
    sign_[i] = ratio.real() > 0 ? 1.0 : -1.0;
  }
}

CoefficientSystem CoefficientSystem::forward(const FivePartDecomposition& decomposition, const ProblemSpec& spec,
                                             std::optional<VertexId> v1, std::optional<VertexId> v4) {
  const VertexId a = v1 ? *v1 : first_boundary_except(decomposition.parts[0], decomposition.near);
  const VertexId b = v4 ? *v4 : first_boundary_except(decomposition.parts[3], decomposition.far);
  return CoefficientSystem(decomposition, spec, characteristic_function(spec),
                           characteristic_function(spec.with_condition(a, Condition::Neumann)),
                           characteristic_function(spec.with_condition(b, Condition::Neumann)), a, b);
}

std::array<cplx, 4> CoefficientSystem::g3_values(cplx lambda) const {
  return transfer_values(spec_, decomposition_.f, lambda);
}

CoefficientRow CoefficientSystem::row(cplx lambda) const {
  CoefficientRow r;
  r.lambda = lambda;
  r.a = a_rows(eval_all(g1_, lambda), g3_values(lambda), eval_all(g4_, lambda), sign_);
  for (int i = 0; i < 3; ++i) r.delta[i] = delta_[i](lambda);
  for (int j = 0; j < 4; ++j) {
    r.b[0][j] = r.a[0][j] * r.delta[1] - r.a[1][j] * r.delta[0];
    r.b[1][j] = r.a[0][j] * r.delta[2] - r.a[2][j] * r.delta[0];
  }
  const auto& b = r.b;
  // Overall sign chosen so that the zero-potential closed forms come out as tabulated.
  r.A = b[1][1] * b[0][3] - b[0][1] * b[1][3];
  r.B = b[1][0] * b[0][3] + b[1][1] * b[0][2] - b[0][0] * b[1][3] - b[0][1] * b[1][2];
  r.C = b[1][0] * b[0][2] - b[0][0] * b[1][2];
  r.D = r.B * r.B - 4.0 * r.A * r.C;
  return r;
}

SubtreeValues CoefficientSystem::subtree_values(cplx lambda) const {
  return {g2_[0](lambda), g2_[1](lambda), g5_[0](lambda), g5_[1](lambda)};
}

cplx CoefficientSystem::reference_ratio(cplx lambda) const { return g2_ref_[1](lambda) / g2_ref_[0](lambda); }

namespace {

void flag_degenerate(CoefficientRow& r, double floor) {
  const double rho = std::max(1.0, std::abs(principal_sqrt(r.lambda)));
  double arow = 0.0;
  for (const auto& v : r.a[0]) arow = std::max(arow, std::abs(v));
  const double scale = std::abs(r.B) * rho + std::abs(r.C);
  r.degenerate = arow == 0.0 || !std::isfinite(scale) || std::abs(r.A) * rho * rho <= floor * scale;
}

}  // namespace

CoefficientTable build_coefficient_table(const CoefficientSystem& system, const std::vector<cplx>& grid,
                                         const TableOptions& opts) {
  CoefficientTable t;
  t.rows.resize(grid.size());
  const long n = static_cast<long>(grid.size());
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      t.rows[i] = system.row(grid[i]);
      flag_degenerate(t.rows[i], opts.degenerate_floor);
    } catch (const std::exception& e) {
#pragma omp critical
      failure = e.what();
    }
  }
  if (!failure.empty()) throw NumericalError("coefficient table: " + failure);
  return t;
}

CoefficientTable reference_table(const FivePartDecomposition& decomposition, const ProblemSpec& spec,
                                 const std::vector<cplx>& grid) {
  return build_coefficient_table(CoefficientSystem::forward(decomposition, spec.with_zero_potential()), grid);
}

double system_residual(const CoefficientSystem& system, const CoefficientRow& row) {
  const auto v = system.subtree_values(row.lambda);
  const std::array<cplx, 4> prod{v[0] * v[2], v[1] * v[2], v[0] * v[3], v[1] * v[3]};
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    cplx sum = 0.0;
    double scale = std::abs(row.delta[i]);
    for (int j = 0; j < 4; ++j) {
      sum += row.a[i][j] * prod[j];
      scale = std::max(scale, std::abs(row.a[i][j] * prod[j]));
    }
    worst = std::max(worst, std::abs(sum - row.delta[i]) / scale);
  }
  return worst;
}

QuadraticRoots quadratic_roots(const CoefficientRow& row) {
  const cplx sq = std::sqrt(row.D);
  // Pick the sign that avoids cancellation.
  const cplx s = std::real(std::conj(row.B) * sq) >= 0.0 ? sq : -sq;
  const cplx q = -0.5 * (row.B + s);
  if (q == 0.0) return {0.0, 0.0};
  return {q / row.A, row.C / q};
}

double quadratic_residual(const CoefficientRow& row, cplx m) {
  const cplx t2 = row.A * m * m, t1 = row.B * m, t0 = row.C;
  const double scale = std::max({std::abs(t2), std::abs(t1), std::abs(t0)});
  return scale > 0.0 ? std::abs(t2 + t1 + t0) / scale : 0.0;
}

cplx far_ratio(const CoefficientRow& row, cplx m, double tol) {
  std::array<cplx, 2> value{};
  std::array<bool, 2> good{};
  std::array<double, 2> quality{};
  for (int i = 0; i < 2; ++i) {
    const cplx num = row.b[i][0] + row.b[i][1] * m;
    const cplx den = row.b[i][2] + row.b[i][3] * m;
    const double scale = std::abs(row.b[i][2]) + std::abs(row.b[i][3] * m);
    quality[i] = scale > 0.0 ? std::abs(den) / scale : 0.0;
    good[i] = quality[i] > 1e-3;
    value[i] = -num / den;
  }
  if (good[0] && good[1]) {
    const double diff = std::abs(value[0] - value[1]) / std::max({1.0, std::abs(value[0]), std::abs(value[1])});
    if (diff > tol)
      throw IdentityError("far ratio cross-check failed at lambda = " + lambda_text(row.lambda) +
                          ": relative difference " + std::to_string(diff));
  }
  return quality[0] >= quality[1] ? value[0] : value[1];
}

// ---------------------------------------------------------------------------
// Root tracking

namespace {

struct Tracker {
  const CoefficientSystem& system;
  const TrackOptions& opts;
  RootTrack& track;

  bool under_floor(const CoefficientRow& r) const {
    return std::abs(r.D) < opts.floor * std::norm(r.B) || r.A == 0.0;
  }

  // Chooses the root continuing from `prev` (predicted `pred`); false if the jump is too large.
  // Distances are chordal, so a root may pass through a pole of the ratio.
  static double chordal(cplx a, cplx b) {
    if (std::isinf(std::abs(a)) || std::isinf(std::abs(b))) return 1.0;
    return std::abs(a - b) / (std::sqrt(1.0 + std::norm(a)) * std::sqrt(1.0 + std::norm(b)));
  }

  bool choose(const CoefficientRow& r, cplx prev, cplx pred, cplx& out, int& branch) const {
    const auto roots = quadratic_roots(r);
    // The linear predictor is only meaningful away from poles.
    const cplx guess = chordal(pred, prev) < 0.1 ? pred : prev;
    const double d0 = chordal(roots.first, guess), d1 = chordal(roots.second, guess);
    branch = d0 <= d1 ? 0 : 1;
    out = branch == 0 ? roots.first : roots.second;
    const double sep = chordal(roots.first, roots.second);
    return chordal(out, prev) <= opts.jump_fraction * sep + 1e-12;
  }

  // Moves from rho0 (value v0, previous value vm for prediction) to rho1. Returns false when the
  // path meets the discriminant floor; `final_row` holds the last row.
  bool walk(cplx rho0, cplx rho1, cplx& value, cplx& slope, bool record, CoefficientRow& final_row) {
    const double len = std::abs(rho1 - rho0);
    const int n = std::max(1, static_cast<int>(std::ceil(len / opts.step)));
    cplx here = rho0;
    for (int k = 1; k <= n; ++k) {
      const cplx goal = rho0 + (rho1 - rho0) * (static_cast<double>(k) / n);
      if (!advance(here, goal, value, slope, record, 0, final_row)) return false;
      here = goal;
    }
    return true;
  }

  bool advance(cplx from, cplx to, cplx& value, cplx& slope, bool record, int depth, CoefficientRow& final_row) {
    CoefficientRow r = system.row(to * to);
    if (under_floor(r)) {
      final_row = r;
      return false;
    }
    cplx chosen;
    int branch = 0;
    const cplx pred = value + slope * (to - from);
    if (!choose(r, value, pred, chosen, branch)) {
      if (depth >= opts.max_halvings)
        throw NumericalError("root tracking: roots collide near lambda = " + lambda_text(to * to) +
                             "; increase the path height");
      const cplx mid = 0.5 * (from + to);
      return advance(from, mid, value, slope, record, depth + 1, final_row) &&
             advance(mid, to, value, slope, record, depth + 1, final_row);
    }
    slope = (chosen - value) / (to - from);
    value = chosen;
    final_row = r;
    if (record) {
      track.path.push_back(to * to);
      track.values.push_back(chosen);
      track.branch.push_back(branch);
    }
    return true;
  }
};

}  // namespace

RootTrack solve_quadratic_track(const CoefficientSystem& system, const std::vector<cplx>& targets,
                                const TrackOptions& opts) {
  RootTrack track;
  track.floor = opts.floor;
  track.targets = targets;
  track.near_ratio.assign(targets.size(), 0.0);
  track.far_ratio.assign(targets.size(), 0.0);
  track.accepted.assign(targets.size(), false);
  if (targets.empty()) return track;

  std::vector<std::size_t> order(targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<cplx> rho(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) rho[i] = principal_sqrt(targets[i]);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rho[a].real() > rho[b].real(); });

  const double start_re = std::max(opts.rho_max, rho[order.front()].real() + 1.0);
  cplx pos(start_re, opts.height);
  CoefficientRow r = system.row(pos * pos);
  Tracker tracker{system, opts, track};
  if (tracker.under_floor(r))
    throw NumericalError("root tracking: discriminant under the floor at the path start " + lambda_text(pos * pos));
  const auto roots = quadratic_roots(r);
  const cplx ref = system.reference_ratio(pos * pos);
  const double d0 = std::abs(roots.first - ref), d1 = std::abs(roots.second - ref);
  if (std::min(d0, d1) > 0.5 * std::max(d0, d1))
    throw NumericalError("root tracking: ambiguous root selection at the path start " + lambda_text(pos * pos));
  cplx value = d0 <= d1 ? roots.first : roots.second;
  track.path.push_back(pos * pos);
  track.values.push_back(value);
  track.branch.push_back(d0 <= d1 ? 0 : 1);

  // Slope estimate from a short step.
  cplx slope = 0.0;
  {
    const cplx next = pos - opts.step * 0.25;
    CoefficientRow rn = system.row(next * next);
    const auto rr = quadratic_roots(rn);
    const cplx v = std::abs(rr.first - value) <= std::abs(rr.second - value) ? rr.first : rr.second;
    slope = (v - value) / (next - pos);
  }

  for (std::size_t idx : order) {
    const cplx goal_line(rho[idx].real(), opts.height);
    CoefficientRow last;
    if (!tracker.walk(pos, goal_line, value, slope, true, last))
      throw NumericalError("root tracking: discriminant under the floor on the path near lambda = " +
                           lambda_text(last.lambda) + "; change the path height");
    pos = goal_line;
    // Branch down to the target without disturbing the main path.
    cplx v = value, s = slope;
    CoefficientRow end_row;
    const bool ok = tracker.walk(pos, rho[idx], v, s, false, end_row);
    if (!ok) continue;
    flag_degenerate(end_row, 1e-13);
    if (end_row.degenerate) continue;
    track.near_ratio[idx] = v;
    track.far_ratio[idx] = far_ratio(end_row, v);
    track.accepted[idx] = true;
  }
  return track;
}

// ---------------------------------------------------------------------------
// Cutting

namespace {

void check_cut(const ProblemSpec& spec, VertexId v, const std::vector<VertexId>& removed, EdgeId& other) {
  const auto& t = spec.tree;
  if (!t.has_vertex(v) || t.is_boundary(v)) throw ValidationError("cut vertex must be internal");
  std::set<VertexId> rem(removed.begin(), removed.end());
  other = -1;
  int others = 0;
  for (EdgeId e : t.incident(v)) {
    const VertexId u = t.edge(e).other(v);
    if (rem.count(u)) {
      if (!t.is_boundary(u)) throw ValidationError("removed vertex " + std::to_string(u) + " is not a boundary vertex");
    } else {
      other = e;
      ++others;
    }
  }
  for (VertexId u : removed) {
    bool adjacent = false;
    for (EdgeId e : t.incident(v)) adjacent = adjacent || t.edge(e).other(v) == u;
    if (!adjacent) throw ValidationError("removed vertex " + std::to_string(u) + " is not adjacent to the cut vertex");
  }
  if (others != 1)
    throw ValidationError("cut vertex must keep exactly one other neighbour (has " + std::to_string(others) + ")");
}

FundamentalPair from_vertex(const Edge& e, VertexId u, const FundamentalPair& raw) {
  return e.at_zero == u ? raw : raw.reversed();
}

}  // namespace

ProblemSpec cut_problem(const ProblemSpec& spec, VertexId v, const std::vector<VertexId>& removed) {
  EdgeId other = -1;
  check_cut(spec, v, removed, other);
  std::set<VertexId> rem(removed.begin(), removed.end());
  std::vector<EdgeId> keep;
  for (const auto& e : spec.tree.edges())
    if (!(e.touches(v) && rem.count(e.other(v)))) keep.push_back(e.id);
  ProblemSpec out;
  out.tree = spec.tree.induced(keep);
  out.ode = spec.ode;
  out.tag = spec.tag + "/cut@" + std::to_string(v);
  for (EdgeId e : keep) {
    auto it = spec.q.find(e);
    if (it != spec.q.end()) out.q[e] = it->second;
  }
  for (VertexId u : out.tree.boundary_vertices()) {
    auto it = spec.bc.find(u);
    out.bc[u] = it != spec.bc.end() ? it->second : Condition::Dirichlet;
  }
  return out;
}

WeylSample cut_boundary_edges(const ProblemSpec& spec, VertexId v, const std::vector<VertexId>& removed,
                              const WeylSample& known, double floor) {
  if (removed.empty()) {
    if (known.vertex != v) throw ValidationError("nothing to cut and the sample is not at the cut vertex");
    return known;
  }
  EdgeId other = -1;
  check_cut(spec, v, removed, other);
  if (std::find(removed.begin(), removed.end(), known.vertex) == removed.end())
    throw ValidationError("the Weyl sample must belong to one of the removed vertices");
  const auto& t = spec.tree;
  auto edge_to = [&](VertexId u) {
    for (EdgeId e : t.incident(v))
      if (t.edge(e).other(v) == u) return e;
    throw ValidationError("no edge to " + std::to_string(u));
  };

  WeylSample out;
  out.vertex = v;
  for (std::size_t i = 0; i < known.lambdas.size(); ++i) {
    const cplx l = known.lambdas[i];
    const auto sp = SpectralParameter::from_lambda(l);
    bool ok = true;
    cplx m_out = 0.0;
    for (VertexId u : removed) {
      const EdgeId e = edge_to(u);
      const Edge& ed = t.edge(e);
      const FundamentalPair p = from_vertex(ed, u, fundamental_pair(ed, spec.potential(e), ed.length, sp, spec.ode));
      if (u == known.vertex) {
        const cplx mk = known.values[i];
        const cplx den = p.C + mk * p.S;
        if (std::abs(den) <= floor * (std::abs(p.C) + std::abs(mk * p.S))) {
          ok = false;
          break;
        }
        m_out += (p.Cp + mk * p.Sp) / den;
      } else {
        if (std::abs(p.S) <= floor * std::abs(p.Sp)) {
          ok = false;
          break;
        }
        m_out += p.Sp / p.S;
      }
    }
    if (!ok) continue;
    out.lambdas.push_back(l);
    out.values.push_back(m_out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edge recovery

Potential PotentialBasis::make(const std::vector<double>& params) const {
  if (static_cast<int>(params.size()) != dimension) throw ValidationError("basis dimension mismatch");
  if (kind == Kind::Polynomial) return Potential::polynomial(params);
  return Potential::piecewise(params);
}

std::vector<double> PotentialBasis::project(const Potential& q, double length) const {
  const int samples = 16;
  if (kind == Kind::Piecewise) {
    std::vector<double> out(dimension, 0.0);
    for (int k = 0; k < dimension; ++k) {
      for (int s = 0; s < samples; ++s)
        out[k] += q((k + (s + 0.5) / samples) * length / dimension, length);
      out[k] /= samples;
    }
    return out;
  }
  const int n = samples * dimension;
  Eigen::MatrixXd a(n, dimension);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) * length / n;
    double p = 1.0;
    for (int k = 0; k < dimension; ++k, p *= x) a(i, k) = p;
    y(i) = q(x, length);
  }
  Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
  return std::vector<double>(c.data(), c.data() + c.size());
}

std::vector<RecoveredPotential> recover_potentials(const std::vector<WeylTarget>& targets,
                                                   const std::vector<EdgeId>& edges,
                                                   const std::map<EdgeId, PotentialBasis>& basis,
                                                   const std::map<EdgeId, std::vector<double>>& start,
                                                   const EdgeFitOptions& opts) {
  if (edges.empty()) throw ValidationError("no edges to recover");
  std::vector<int> offset;
  int dim = 0;
  for (EdgeId e : edges) {
    offset.push_back(dim);
    dim += basis.at(e).dimension;
  }
  int samples = 0;
  for (const auto& t : targets) samples += static_cast<int>(t.sample.lambdas.size());
  if (samples * 2 < dim)
    throw ValidationError("too few Weyl samples (" + std::to_string(samples) + ") for " + std::to_string(dim) +
                          " parameters");

  auto unpack = [&](const Eigen::VectorXd& x, EdgeId e, std::size_t idx) {
    const auto& b = basis.at(e);
    std::vector<double> p(b.dimension);
    for (int k = 0; k < b.dimension; ++k) p[k] = x(offset[idx] + k);
    return b.make(p);
  };

  LeastSquaresProblem prob;
  prob.parameters = dim;
  prob.residuals = 2 * samples;
  prob.residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(2 * samples);
    int row = 0;
    for (const auto& t : targets) {
      ProblemSpec ctx = t.context;
      for (std::size_t i = 0; i < edges.size(); ++i)
        if (ctx.tree.has_edge(edges[i])) ctx.q[edges[i]] = unpack(x, edges[i], i);
      const long n = static_cast<long>(t.sample.lambdas.size());
      std::vector<cplx> model(n);
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) model[i] = weyl_value(ctx, t.sample.vertex, t.sample.lambdas[i]);
      for (long i = 0; i < n; ++i) {
        const cplx target = t.sample.values[i];
        const cplx d = (model[i] - target) / std::max(1.0, std::abs(target));
        r(row++) = d.real();
        r(row++) = d.imag();
      }
    }
    return r;
  };

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto it = start.find(edges[i]);
    if (it != start.end())
      for (int k = 0; k < basis.at(edges[i]).dimension; ++k) x0(offset[i] + k) = it->second.at(k);
  }
  const FitResult fit = least_squares(prob, x0, opts.fit);
  const double rms = fit.norm / std::sqrt(static_cast<double>(samples));
  if (opts.strict && rms > opts.tol) {
    std::ostringstream os;
    os << "edge recovery stagnated: rms Weyl mismatch " << rms << " above " << opts.tol << " (" << fit.status
       << ", residual history";
    for (double h : fit.history) os << ' ' << h;
    os << ")";
    throw NumericalError(os.str());
  }
  std::vector<RecoveredPotential> out;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    RecoveredPotential rp;
    rp.edge = edges[i];
    rp.basis = basis.at(edges[i]);
    rp.params.assign(fit.x.data() + offset[i], fit.x.data() + offset[i] + rp.basis.dimension);
    rp.history = fit.history;
    rp.mismatch = rms;
    out.push_back(rp);
  }
  return out;
}

RecoveredPotential recover_edge_potential(const WeylTarget& target, EdgeId edge, const PotentialBasis& basis,
                                          const EdgeFitOptions& opts) {
  if (static_cast<int>(target.sample.lambdas.size()) < 3 * basis.dimension)
    throw ValidationError("edge recovery needs at least 3 samples per basis function");
  return recover_potentials({target}, {edge}, {{edge, basis}}, {}, opts).front();
}

// ---------------------------------------------------------------------------
// Pipeline

std::vector<VertexId> required_vertices(const MetricTree& tree, EdgeId known_edge, std::optional<VertexId> r1,
                                        std::optional<VertexId> r2) {
  const Edge& e = tree.edge(known_edge);
  if (tree.is_boundary(e.at_zero) || tree.is_boundary(e.at_end)) {
    const VertexId vf = tree.is_boundary(e.at_zero) ? e.at_zero : e.at_end;
    if (vf == tree.root()) throw ValidationError("the known boundary edge must not end at the root");
    std::vector<VertexId> out;
    for (VertexId v : tree.boundary_vertices())
      if (v != vf && v != tree.root()) out.push_back(v);
    return out;
  }
  EdgeEnvironmentOptions o;
  o.r1 = r1;
  o.r2 = r2;
  return split_edge_environment(tree, known_edge, o).data_vertices(tree);
}

namespace {

double min_potential(const MetricTree& tree, const PotentialSet& q) {
  double lo = 0.0;
  for (const auto& [id, p] : q) {
    const double len = tree.edge(id).length;
    for (int i = 0; i <= 64; ++i) lo = std::min(lo, p(i * len / 64.0, len));
  }
  return lo;
}

ProblemSpec data_problem(const MetricTree& tree, const PotentialSet& q, const SpectrumInput& s) {
  ProblemSpec p = dirichlet_problem(tree, q);
  if (!s.is_l0) p = p.with_condition(s.vertex, Condition::Neumann, "L" + std::to_string(s.vertex));
  return p;
}

}  // namespace

std::vector<SpectrumInput> forward_spectra(const MetricTree& tree, const PotentialSet& q, EdgeId known_edge, int count,
                                           std::optional<VertexId> r1, std::optional<VertexId> r2) {
  std::vector<SpectrumInput> out;
  SpectrumInput l0;
  l0.is_l0 = true;
  out.push_back(l0);
  for (VertexId v : required_vertices(tree, known_edge, r1, r2)) {
    SpectrumInput s;
    s.vertex = v;
    out.push_back(s);
  }
  const double lo = min_potential(tree, q) - 2.0;
  const double total = tree.total_length();
  for (auto& s : out) {
    const ProblemSpec p = data_problem(tree, q, s);
    // The zero-potential count is about total * rho / pi; leave a margin of a few zeros.
    double rho = kPi * (count + tree.edge_count() + 4) / total;
    for (int attempt = 0; attempt < 6; ++attempt, rho *= 1.3) {
      s.spectrum = find_eigenvalues(characteristic_function(p), lo, rho * rho);
      if (s.spectrum.count() >= count + 2) break;
    }
    if (s.spectrum.count() < count) throw NumericalError("could not collect enough eigenvalues for " + p.tag);
  }
  return out;
}

namespace {

struct Pipeline {
  const InverseProblem& problem;
  const InverseOptions& opts;
  InverseResult result;

  MetricTree tree;
  std::map<VertexId, CharFn> delta;  // reconstructed, key 0 for L_0 (vertex ids of data are nonzero)
  CharFn delta0;
  std::map<EdgeId, PotentialBasis> basis;
  std::map<EdgeId, std::vector<double>> params;
  std::vector<EdgeId> unknown;
  double rho_fit_max = 10.0;

  PotentialSet current_q() const {
    PotentialSet q;
    q[problem.known_edge] = problem.known_potential;
    for (EdgeId e : unknown) q[e] = basis.at(e).make(params.at(e));
    return q;
  }

  ProblemSpec current_spec() const { return dirichlet_problem(tree, current_q()); }

  void stage(const std::string& name, double residual, const std::string& note = {}) {
    result.stages.push_back({name, residual, note});
  }

  void step1() {
    if (!tree.has_edge(problem.known_edge)) throw ValidationError("unknown edge id " + std::to_string(problem.known_edge));
    const auto need = required_vertices(tree, problem.known_edge, opts.r1, opts.r2);
    const SpectrumInput* l0 = nullptr;
    std::map<VertexId, const SpectrumInput*> by_vertex;
    for (const auto& s : problem.spectra) {
      if (s.is_l0)
        l0 = &s;
      else
        by_vertex[s.vertex] = &s;
    }
    if (!l0) throw ValidationError("missing spectrum of L_0");
    for (VertexId v : need)
      if (!by_vertex.count(v)) throw ValidationError("missing spectrum for boundary vertex " + std::to_string(v));

    const PotentialSet zero;
    auto build = [&](const SpectrumInput& s) {
      const ProblemSpec ref = data_problem(tree, zero, s);
      const auto product = pair_spectra(s.spectrum, characteristic_function(ref), opts.truncation, opts.reconstruction);
      const auto d = diagnose(product);
      stage("step1 " + ref.tag, d.tail_estimate, d.message);
      return product_char_fn(product, ref.tag + "/reconstructed");
    };
    delta0 = build(*l0);
    for (VertexId v : need) delta[v] = build(*by_vertex[v]);

    // Weyl matching uses the lower part of the data window, where the product is accurate.
    const auto ev = l0->spectrum.expanded();
    const double top = ev.at(std::min<std::size_t>(ev.size(), opts.truncation) - 1);
    rho_fit_max = std::max(2.0, 0.5 * std::sqrt(std::max(top, 4.0)));
  }

  std::vector<cplx> fit_grid() const {
    std::vector<cplx> g;
    for (int i = 0; i < opts.grid_points; ++i) {
      const cplx rho(0.5 + (rho_fit_max - 0.5) * i / std::max(1, opts.grid_points - 1), opts.fit_height);
      g.push_back(rho * rho);
    }
    return g;
  }

  WeylSample data_weyl(VertexId k) const {
    WeylSample s;
    s.vertex = k;
    for (cplx l : fit_grid()) {
      s.lambdas.push_back(l);
      s.values.push_back(-delta.at(k)(l) / delta0(l));
    }
    return s;
  }

  void fit(const std::vector<WeylTarget>& targets, const std::vector<EdgeId>& edges, const std::string& name) {
    EdgeFitOptions o = opts.edge_fit;
    o.strict = false;
    auto rec = recover_potentials(targets, edges, basis, params, o);
    for (auto& r : rec) {
      params[r.edge] = r.params;
      result.recovered[r.edge] = r;
    }
    stage(name, rec.front().mismatch);
  }

  // Fits boundary edges from Weyl functions and cuts them off while possible.
  void peel(std::map<VertexId, WeylSample> weyl, std::set<EdgeId> todo, const std::string& name) {
    ProblemSpec h = current_spec();
    bool progress = true;
    while (!todo.empty() && progress) {
      progress = false;
      for (const auto& [k, sample] : weyl) {
        if (!h.tree.has_vertex(k) || !h.tree.is_boundary(k)) continue;
        const EdgeId e = h.tree.incident(k).front();
        if (!todo.count(e)) continue;
        fit({{h, sample}}, {e}, name + " edge " + std::to_string(e));
        h.q[e] = basis.at(e).make(params.at(e));
        todo.erase(e);
        progress = true;
      }
      if (todo.empty()) break;
      for (VertexId v : h.tree.internal_vertices()) {
        std::vector<VertexId> leaves;
        int others = 0;
        bool known = true;
        VertexId with_weyl = -1;
        for (EdgeId e : h.tree.incident(v)) {
          const VertexId u = h.tree.edge(e).other(v);
          if (h.tree.is_boundary(u)) {
            leaves.push_back(u);
            known = known && !todo.count(e);
            if (weyl.count(u)) with_weyl = u;
          } else {
            ++others;
          }
        }
        // Keep one leaf when v has no other neighbour, so that v becomes a boundary vertex.
        if (others == 0 && leaves.size() >= 2) {
          VertexId keep = -1;
          for (VertexId u : leaves)
            if (u != with_weyl && todo.count(h.tree.incident(u).front())) keep = u;
          if (keep < 0) continue;
          leaves.erase(std::find(leaves.begin(), leaves.end(), keep));
          known = true;
          for (VertexId u : leaves) known = known && !todo.count(h.tree.incident(u).front());
          others = 1;
        }
        if (others != 1 || leaves.empty() || !known || with_weyl < 0) continue;
        const WeylSample w = cut_boundary_edges(h, v, leaves, weyl.at(with_weyl));
        h = cut_problem(h, v, leaves);
        for (VertexId u : leaves) weyl.erase(u);
        weyl[v] = w;
        progress = true;
        break;
      }
    }
    if (!todo.empty()) throw NumericalError(name + ": cutting stalled with unrecovered edges");
  }

  std::vector<cplx> track_targets() const {
    std::vector<double> ev;
    for (const auto& s : problem.spectra)
      if (s.is_l0) ev = s.spectrum.expanded();
    std::vector<cplx> out;
    for (std::size_t i = 0; i + 1 < ev.size() && static_cast<int>(i + 1) < opts.truncation; ++i) {
      const double mid = 0.5 * (ev[i] + ev[i + 1]);
      if (ev[i + 1] - ev[i] < 1e-6 * std::max(1.0, std::abs(mid))) continue;
      if (mid <= 0.0 || std::sqrt(mid) > rho_fit_max) continue;
      out.push_back(mid);
    }
    return out;
  }

  void internal_sweep(const FivePartDecomposition& d, int sweep) {
    const std::string tag = "sweep " + std::to_string(sweep) + ": ";
    // Step 2: subtrees G_1 and G_4 from the Weyl functions at their boundary vertices.
    std::set<EdgeId> side;
    std::map<VertexId, WeylSample> weyl;
    for (int p : {0, 3}) {
      for (const auto& e : d.parts[p].edges()) side.insert(e.id);
      for (VertexId v : d.parts[p].boundary_vertices())
        if (delta.count(v)) weyl[v] = data_weyl(v);
    }
    peel(weyl, side, tag + "step2");

    // Steps 3-7: coefficient system and the quadratic for the subtree ratios.
    const ProblemSpec spec = current_spec();
    CoefficientSystem sys(d, spec, delta0, delta.at(first_boundary_except(d.parts[0], d.near)),
                          delta.at(first_boundary_except(d.parts[3], d.far)));
    const auto targets = track_targets();
    const RootTrack track = solve_quadratic_track(sys, targets, opts.track);
    WeylSample m2, m5;
    m2.vertex = d.near;
    m5.vertex = d.far;
    // Samples next to a pole carry the pole position, which is too sensitive to fit against.
    auto near_pole = [](cplx l, cplx m) { return std::abs(m) > 5.0 * std::max(1.0, std::abs(principal_sqrt(l))); };
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (!track.accepted[i]) continue;
      if (!near_pole(targets[i], track.near_ratio[i])) {
        m2.lambdas.push_back(targets[i]);
        m2.values.push_back(-track.near_ratio[i]);
      }
      if (!near_pole(targets[i], track.far_ratio[i])) {
        m5.lambdas.push_back(targets[i]);
        m5.values.push_back(-track.far_ratio[i]);
      }
    }
    int accepted = 0;
    for (bool a : track.accepted) accepted += a;
    stage(tag + "steps3-7", static_cast<double>(accepted),
          std::to_string(accepted) + " of " + std::to_string(targets.size()) + " points accepted, " +
              std::to_string(m2.lambdas.size()) + " and " + std::to_string(m5.lambdas.size()) + " off poles");

    // Step 8: subtrees G_2 and G_5 from the tracked ratios and their own data vertices.
    for (int p : {1, 4}) {
      const VertexId split = p == 1 ? d.near : d.far;
      std::vector<WeylTarget> t;
      t.push_back({part_problem(spec, d.parts[p], split, Condition::Dirichlet), p == 1 ? m2 : m5});
      for (VertexId v : d.parts[p].boundary_vertices())
        if (delta.count(v)) t.push_back({spec, data_weyl(v)});
      std::vector<EdgeId> edges;
      for (const auto& e : d.parts[p].edges()) edges.push_back(e.id);
      fit(t, edges, tag + "step8 part " + std::to_string(p + 1));
    }
  }

  void boundary_sweep(int sweep) {
    std::map<VertexId, WeylSample> weyl;
    for (const auto& [v, f] : delta) weyl[v] = data_weyl(v);
    std::set<EdgeId> todo(unknown.begin(), unknown.end());
    peel(weyl, todo, "sweep " + std::to_string(sweep) + ": cut");
  }

  // Joint fit of all unknown parameters to the characteristic functions at the input eigenvalues.
  void polish() {
    struct Row {
      ProblemSpec spec;
      double lambda;
      double scale;
    };
    std::vector<Row> rows;
    const PotentialSet zero;
    const double total = tree.total_length();
    for (const auto& s : problem.spectra) {
      const auto ev = s.spectrum.expanded();
      const ProblemSpec ref = data_problem(tree, zero, s);
      const CharFn f0 = characteristic_function(ref);
      for (int n = 0; n < std::min<int>(opts.truncation, ev.size()); ++n) {
        const double l = ev[n];
        const cplx rho = principal_sqrt(l);
        const double h = 0.5 / total;
        double env = 0.0;
        for (cplx d : {cplx(h, 0), cplx(-h, 0), cplx(0, h), cplx(0, -h)}) env = std::max(env, std::abs(f0((rho + d) * (rho + d))));
        // Envelope of |Delta'| in lambda units.
        const double scale = env / (h * std::max(1.0, 2.0 * std::abs(rho)));
        rows.push_back({data_problem(tree, zero, s), l, scale});
      }
    }
    std::vector<int> offset;
    int dim = 0;
    for (EdgeId e : unknown) {
      offset.push_back(dim);
      dim += basis.at(e).dimension;
    }
    LeastSquaresProblem prob;
    prob.parameters = dim;
    prob.residuals = static_cast<int>(rows.size());
    auto to_q = [&](const Eigen::VectorXd& x) {
      PotentialSet q;
      q[problem.known_edge] = problem.known_potential;
      for (std::size_t i = 0; i < unknown.size(); ++i) {
        const auto& b = basis.at(unknown[i]);
        q[unknown[i]] = b.make(std::vector<double>(x.data() + offset[i], x.data() + offset[i] + b.dimension));
      }
      return q;
    };
    prob.residual = [&](const Eigen::VectorXd& x) {
      const PotentialSet q = to_q(x);
      Eigen::VectorXd r(rows.size());
      const long n = static_cast<long>(rows.size());
#pragma omp parallel for schedule(static)
      for (long i = 0; i < n; ++i) {
        ProblemSpec p = rows[i].spec;
        p.q = q;
        r(i) = folded_char_value(p.tree, p.bc, edge_transfers(p, rows[i].lambda)).real() / rows[i].scale;
      }
      return r;
    };
    Eigen::VectorXd x0(dim);
    for (std::size_t i = 0; i < unknown.size(); ++i)
      for (int k = 0; k < basis.at(unknown[i]).dimension; ++k) x0(offset[i] + k) = params.at(unknown[i])[k];
    FitOptions fo = opts.edge_fit.fit;
    fo.tol = 1e-14;
    const FitResult fit = least_squares(prob, x0, fo);
    for (std::size_t i = 0; i < unknown.size(); ++i) {
      const auto& b = basis.at(unknown[i]);
      params[unknown[i]].assign(fit.x.data() + offset[i], fit.x.data() + offset[i] + b.dimension);
      auto& rec = result.recovered[unknown[i]];
      rec.edge = unknown[i];
      rec.basis = b;
      rec.params = params[unknown[i]];
    }
    stage("polish", fit.norm, fit.status);
  }

  void certify() {
    const PotentialSet q = current_q();
    result.eigenvalue_mismatch.clear();
    result.max_mismatch = 0.0;
    for (const auto& s : problem.spectra) {
      const ProblemSpec p = data_problem(tree, q, s);
      SearchOptions so;
      so.check_density = false;
      const auto found = find_eigenvalues(characteristic_function(p), s.spectrum.window_min, s.spectrum.window_max, -1, so)
                             .expanded();
      const auto given = s.spectrum.expanded();
      const int n = std::min<int>(opts.truncation, given.size());
      for (int i = 0; i < n; ++i) {
        const double m = i < static_cast<int>(found.size()) ? std::abs(found[i] - given[i]) : HUGE_VAL;
        result.eigenvalue_mismatch.push_back(m);
        result.max_mismatch = std::max(result.max_mismatch, m);
      }
    }
    result.certified = result.max_mismatch <= opts.spec_tol;
    stage("certificate", result.max_mismatch, result.certified ? "passed" : "failed");
  }

  InverseResult run() {
    tree = problem.tree;
    {
      ValidationOptions vo;
      vo.require_boundary_orientation = true;
      const auto rep = validate_tree(tree, vo);
      if (!rep.ok()) throw ValidationError("tree: " + rep.summary());
    }
    for (const auto& e : tree.edges())
      if (e.id != problem.known_edge) unknown.push_back(e.id);
    for (EdgeId e : unknown) {
      auto it = opts.edge_basis.find(e);
      basis[e] = it != opts.edge_basis.end() ? it->second : opts.basis;
      params[e].assign(basis[e].dimension, 0.0);
    }
    const Edge& ef = tree.edge(problem.known_edge);
    const bool boundary = tree.is_boundary(ef.at_zero) || tree.is_boundary(ef.at_end);

    try {
      step1();
    } catch (const std::exception& e) {
      rethrow("step1", e);
    }
    std::optional<FivePartDecomposition> d;
    if (!boundary) {
      EdgeEnvironmentOptions eo;
      eo.r1 = opts.r1;
      eo.r2 = opts.r2;
      d = split_edge_environment(tree, problem.known_edge, eo);
    }
    for (int s = 0; s < opts.sweeps; ++s) {
      const auto before = params;
      try {
        if (boundary)
          boundary_sweep(s);
        else
          internal_sweep(*d, s);
      } catch (const std::exception& e) {
        rethrow("sweep " + std::to_string(s), e);
      }
      double change = 0.0;
      for (const auto& [e, p] : params)
        for (std::size_t k = 0; k < p.size(); ++k) change = std::max(change, std::abs(p[k] - before.at(e)[k]));
      stage("sweep " + std::to_string(s) + " change", change);
      if (change < 1e-10) break;
    }
    if (opts.polish) {
      try {
        polish();
      } catch (const std::exception& e) {
        rethrow("polish", e);
      }
    }
    result.q = current_q();
    certify();
    if (!result.certified && opts.throw_on_certificate_failure) {
      std::ostringstream os;
      os << "certificate failed: max eigenvalue mismatch " << result.max_mismatch << " > " << opts.spec_tol
         << "; mismatches";
      for (double m : result.eigenvalue_mismatch) os << ' ' << m;
      throw NumericalError(os.str());
    }
    return result;
  }

  [[noreturn]] static void rethrow(const std::string& stage, const std::exception& e) {
    const std::string msg = stage + ": " + e.what();
    if (dynamic_cast<const ValidationError*>(&e)) throw ValidationError(msg);
    if (dynamic_cast<const IdentityError*>(&e)) throw IdentityError(msg);
    throw NumericalError(msg);
  }
};

}  // namespace

InverseResult run_partial_inverse(const InverseProblem& problem, const InverseOptions& opts) {
  Pipeline p{problem, opts, {}, {}, {}, {}, {}, {}, {}};
  return p.run();
}

}  // namespace qtree
