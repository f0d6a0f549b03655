#include "qtree/char_fn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "qtree/errors.hpp"

namespace qtree {

namespace {
const Potential kZeroPotential{};

using Mat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;
}  // namespace

const Potential& ProblemSpec::potential(EdgeId e) const {
  auto it = q.find(e);
  return it == q.end() ? kZeroPotential : it->second;
}

ProblemSpec ProblemSpec::with_condition(VertexId v, Condition c, std::string new_tag) const {
  ProblemSpec out = *this;
  out.bc[v] = c;
  if (!new_tag.empty()) out.tag = std::move(new_tag);
  return out;
}

ProblemSpec ProblemSpec::with_zero_potential() const {
  ProblemSpec out = *this;
  out.q.clear();
  return out;
}

void check_spec(const ProblemSpec& spec, const ValidationOptions& opts) {
  auto rep = validate_tree(spec.tree, opts);
  if (!rep.ok()) throw ValidationError("invalid tree: " + rep.summary());
  const auto bnd = spec.tree.boundary_vertices();
  for (VertexId v : bnd)
    if (!spec.bc.count(v))
      throw ValidationError("missing boundary condition at vertex " + std::to_string(v));
  for (const auto& [v, c] : spec.bc)
    if (!std::binary_search(bnd.begin(), bnd.end(), v))
      throw ValidationError("boundary condition given at non-boundary vertex " + std::to_string(v));
  for (const auto& [e, p] : spec.q) {
    if (!spec.tree.has_edge(e)) throw ValidationError("potential for unknown edge " + std::to_string(e));
    auto msg = p.check(spec.tree.edge(e).length);
    if (!msg.empty()) throw ValidationError("edge " + std::to_string(e) + ": " + msg);
  }
}

ProblemSpec dirichlet_problem(const MetricTree& tree, const PotentialSet& q) {
  ProblemSpec s;
  s.tree = tree;
  s.q = q;
  for (VertexId v : tree.boundary_vertices()) s.bc[v] = Condition::Dirichlet;
  return s;
}

TransferMap edge_transfers(const ProblemSpec& spec, cplx lambda) {
  TransferMap tr;
  const auto sp = SpectralParameter::from_lambda(lambda);
  for (const auto& e : spec.tree.edges())
    tr[e.id] = fundamental_pair(e, spec.potential(e.id), e.length, sp, spec.ode);
  return tr;
}

namespace {

struct Folded {
  cplx dir;  // value with Dirichlet at the top vertex
  cplx neu;  // value with Neumann at the top vertex
};

Folded fold_below(const MetricTree& t, const BoundarySpec& bc, const TransferMap& tr, VertexId c,
                  EdgeId parent);

// Subtree made of edge e and everything behind its endpoint away from u.
Folded fold_edge(const MetricTree& t, const BoundarySpec& bc, const TransferMap& tr, VertexId u,
                 EdgeId e) {
  const Edge& edge = t.edge(e);
  const VertexId c = edge.other(u);
  const Folded below = fold_below(t, bc, tr, c, e);
  const FundamentalPair& raw = tr.at(e);
  const FundamentalPair f = edge.at_zero == u ? raw : raw.reversed();
  return {f.Sp * below.dir + f.S * below.neu, f.Cp * below.dir + f.C * below.neu};
}

Folded fold_below(const MetricTree& t, const BoundarySpec& bc, const TransferMap& tr, VertexId c,
                  EdgeId parent) {
  if (t.degree(c) == 1) {
    auto it = bc.find(c);
    if (it == bc.end()) throw ValidationError("missing boundary condition at vertex " + std::to_string(c));
    return it->second == Condition::Dirichlet ? Folded{0.0, 1.0} : Folded{1.0, 0.0};
  }
  Folded acc{1.0, 0.0};
  for (EdgeId e : t.incident(c)) {
    if (e == parent) continue;
    const Folded child = fold_edge(t, bc, tr, c, e);
    acc = {acc.dir * child.dir, acc.neu * child.dir + acc.dir * child.neu};
  }
  return acc;
}

}  // namespace

cplx folded_char_value(const MetricTree& tree, const BoundarySpec& bc, const TransferMap& tr) {
  const VertexId r = tree.root();
  if (tree.degree(r) != 1) throw ValidationError("root must be a boundary vertex");
  const Folded top = fold_edge(tree, bc, tr, r, tree.incident(r).front());
  auto it = bc.find(r);
  if (it == bc.end()) throw ValidationError("missing boundary condition at the root");
  return it->second == Condition::Dirichlet ? top.dir : top.neu;
}

std::vector<cplx> CharFn::evaluate(const std::vector<cplx>& lambdas) const {
  const long n = static_cast<long>(lambdas.size());
  std::vector<cplx> out(lambdas.size());
  std::string failure;
  long failed = -1;
#pragma omp parallel for schedule(dynamic, 2)
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = eval_(lambdas[i]);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failed < 0 || i < failed) {
        failed = i;
        failure = e.what();
      }
    }
  }
  if (failed >= 0)
    throw NumericalError(tag_ + ": evaluation failed at grid index " + std::to_string(failed) + ": " +
                             failure,
                         lambdas[failed]);
  return out;
}

std::vector<cplx> CharFn::evaluate_serial(const std::vector<cplx>& lambdas) const {
  std::vector<cplx> out;
  out.reserve(lambdas.size());
  for (cplx l : lambdas) out.push_back(eval_(l));
  return out;
}

CharFn characteristic_function(const ProblemSpec& spec) {
  ValidationOptions vo;
  vo.require_boundary_orientation = false;
  vo.allow_degree_two = true;
  check_spec(spec, vo);
  auto shared = std::make_shared<const ProblemSpec>(spec);
  return CharFn(
      [shared](cplx lambda) {
        return folded_char_value(shared->tree, shared->bc, edge_transfers(*shared, lambda));
      },
      spec.tag, spec);
}

namespace {

// Full 2m x 2m matching system. Unknowns per edge: coefficient of C, coefficient of S.
struct FullSystem {
  Mat a;
  std::map<EdgeId, int> column;  // column of the C coefficient; S follows
  std::map<VertexId, int> boundary_row;
};

FullSystem build_full_system(const ProblemSpec& spec, const TransferMap& tr) {
  const auto& t = spec.tree;
  const int m = static_cast<int>(t.edge_count());
  FullSystem sys;
  sys.a = Mat::Zero(2 * m, 2 * m);
  int col = 0;
  for (const auto& e : t.edges()) {
    sys.column[e.id] = col;
    col += 2;
  }
  // Value and outgoing derivative of edge e at its endpoint v as row coefficients.
  auto value_coeffs = [&](EdgeId e, VertexId v, cplx& c0, cplx& c1) {
    const Edge& ed = t.edge(e);
    if (ed.at_zero == v) {
      c0 = 1.0;
      c1 = 0.0;
    } else {
      c0 = tr.at(e).C;
      c1 = tr.at(e).S;
    }
  };
  auto derivative_coeffs = [&](EdgeId e, VertexId v, cplx& c0, cplx& c1) {
    const Edge& ed = t.edge(e);
    if (ed.at_zero == v) {
      c0 = 0.0;
      c1 = 1.0;
    } else {
      c0 = -tr.at(e).Cp;
      c1 = -tr.at(e).Sp;
    }
  };

  int row = 0;
  for (VertexId v : t.vertices()) {
    const auto inc = t.incident(v);
    if (inc.size() == 1) {
      const EdgeId e = inc.front();
      const int c = sys.column[e];
      cplx c0, c1;
      if (spec.bc.at(v) == Condition::Dirichlet)
        value_coeffs(e, v, c0, c1);
      else
        derivative_coeffs(e, v, c0, c1);
      sys.a(row, c) = c0;
      sys.a(row, c + 1) = c1;
      sys.boundary_row[v] = row;
      ++row;
      continue;
    }
    cplx f0, f1;
    value_coeffs(inc.front(), v, f0, f1);
    const int cf = sys.column[inc.front()];
    for (std::size_t i = 1; i < inc.size(); ++i) {
      cplx c0, c1;
      value_coeffs(inc[i], v, c0, c1);
      const int ci = sys.column[inc[i]];
      sys.a(row, cf) += f0;
      sys.a(row, cf + 1) += f1;
      sys.a(row, ci) -= c0;
      sys.a(row, ci + 1) -= c1;
      ++row;
    }
    for (EdgeId e : inc) {
      cplx c0, c1;
      derivative_coeffs(e, v, c0, c1);
      const int ci = sys.column[e];
      sys.a(row, ci) += c0;
      sys.a(row, ci + 1) += c1;
    }
    ++row;
  }
  return sys;
}

// Removes rows that are unit vectors together with their column.
Mat eliminate_unit_rows(const Mat& a) {
  std::vector<int> keep_rows, keep_cols;
  std::set<int> dropped_cols;
  for (int r = 0; r < a.rows(); ++r) {
    int nonzero = 0, where = -1;
    for (int c = 0; c < a.cols(); ++c)
      if (a(r, c) != cplx(0.0)) {
        ++nonzero;
        where = c;
      }
    if (nonzero == 1 && a(r, where) == cplx(1.0) && !dropped_cols.count(where))
      dropped_cols.insert(where);
    else
      keep_rows.push_back(r);
  }
  for (int c = 0; c < a.cols(); ++c)
    if (!dropped_cols.count(c)) keep_cols.push_back(c);
  Mat out(keep_rows.size(), keep_cols.size());
  for (std::size_t i = 0; i < keep_rows.size(); ++i)
    for (std::size_t j = 0; j < keep_cols.size(); ++j) out(i, j) = a(keep_rows[i], keep_cols[j]);
  return out;
}

cplx determinant(const Mat& a) {
  if (a.rows() == 0) return 1.0;
  return a.partialPivLu().determinant();
}

}  // namespace

AssembledSystem assemble_system(const ProblemSpec& spec, cplx lambda, const AssemblyHooks& hooks) {
  const auto tr = edge_transfers(spec, lambda);
  Mat reduced = eliminate_unit_rows(build_full_system(spec, tr).a);
  if (hooks.corrupt_row >= 0 && hooks.corrupt_row < reduced.rows()) {
    for (int c = 0; c < reduced.cols(); ++c)
      if (reduced(hooks.corrupt_row, c) != cplx(0.0)) {
        reduced(hooks.corrupt_row, c) = -reduced(hooks.corrupt_row, c);
        break;
      }
  }
  return {static_cast<std::size_t>(reduced.rows()), determinant(reduced)};
}

CharFn assemble_char_fn(const ProblemSpec& spec, const AssemblyHooks& hooks) {
  ValidationOptions vo;
  vo.require_boundary_orientation = false;
  vo.allow_degree_two = true;
  check_spec(spec, vo);
  const cplx ref = assemble_system(spec.with_zero_potential(), -1.0, hooks).determinant;
  if (ref.real() == 0.0)
    throw NumericalError(spec.tag + ": normalization determinant vanishes at lambda = -1", -1.0);
  const double kappa = ref.real() > 0.0 ? 1.0 : -1.0;
  auto shared = std::make_shared<const ProblemSpec>(spec);
  return CharFn([shared, hooks, kappa](cplx lambda) {
    return kappa * assemble_system(*shared, lambda, hooks).determinant;
  }, spec.tag, spec);
}

cplx bordered_determinant(const std::vector<cplx>& dirichlet, const std::vector<cplx>& neumann) {
  const int n = static_cast<int>(dirichlet.size());
  Mat a = Mat::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    a(i, i) = dirichlet[i];
    a(i, i + 1) = -dirichlet[i + 1];
  }
  for (int i = 0; i < n; ++i) a(n - 1, i) = neumann[i];
  return determinant(a);
}

ProblemSpec part_problem(const ProblemSpec& parent, const MetricTree& part, VertexId split_vertex,
                         Condition c) {
  ProblemSpec s;
  s.tree = part;
  s.ode = parent.ode;
  for (const auto& e : part.edges()) {
    auto it = parent.q.find(e.id);
    if (it != parent.q.end()) s.q[e.id] = it->second;
  }
  for (VertexId v : part.boundary_vertices()) {
    if (v == split_vertex)
      s.bc[v] = c;
    else
      s.bc[v] = parent.bc.at(v);
  }
  s.tag = parent.tag + "/part@" + std::to_string(split_vertex) + condition_letter(c);
  return s;
}

CharFn char_fn_by_split(const ProblemSpec& spec, VertexId w) {
  const VertexSplit split = split_at_vertex(spec.tree, w);
  std::vector<CharFn> dir, neu;
  for (const auto& p : split.parts) {
    dir.push_back(assemble_char_fn(part_problem(spec, p.tree, w, Condition::Dirichlet)));
    neu.push_back(assemble_char_fn(part_problem(spec, p.tree, w, Condition::Neumann)));
  }
  return CharFn(
      [dir, neu](cplx lambda) {
        std::vector<cplx> d, n;
        for (std::size_t i = 0; i < dir.size(); ++i) {
          d.push_back(dir[i](lambda));
          n.push_back(neu[i](lambda));
        }
        return bordered_determinant(d, n);
      },
      spec.tag + "/split@" + std::to_string(w), spec);
}

double pole_proximity(const CharFn& delta, cplx lambda, double total_length) {
  const cplx rho = principal_sqrt(lambda);
  const double step = 0.1 / std::max(total_length, 1e-12);
  double scale = 0.0;
  for (cplx d : {cplx(step, 0), cplx(-step, 0), cplx(0, step), cplx(0, -step)}) {
    const cplx r = rho + d;
    scale = std::max(scale, std::abs(delta(r * r)));
  }
  const double here = std::abs(delta(lambda));
  return scale > 0.0 ? here / scale : 0.0;
}

cplx weyl_by_solve(const ProblemSpec& spec, VertexId k, cplx lambda) {
  const auto tr = edge_transfers(spec, lambda);
  ProblemSpec dir = spec.with_condition(k, Condition::Dirichlet);
  FullSystem sys = build_full_system(dir, tr);
  Vec rhs = Vec::Zero(sys.a.rows());
  rhs(sys.boundary_row.at(k)) = 1.0;
  Vec sol = sys.a.partialPivLu().solve(rhs);
  const EdgeId e = spec.tree.incident(k).front();
  const Edge& ed = spec.tree.edge(e);
  const int c = sys.column.at(e);
  if (ed.at_zero == k) return sol(c + 1);
  return -(tr.at(e).Cp * sol(c) + tr.at(e).Sp * sol(c + 1));
}

namespace {

void check_pole(const CharFn& d0, cplx lambda, double total_length, const WeylOptions& opts,
                std::size_t index, bool& reject) {
  reject = pole_proximity(d0, lambda, total_length) < opts.pole_floor;
  if (reject && !opts.skip_poles)
    throw NumericalError("grid point " + std::to_string(index) + " is too close to a pole", lambda);
}

}  // namespace

WeylSample weyl_function(const ProblemSpec& spec, VertexId k, const std::vector<cplx>& grid,
                         const WeylOptions& opts) {
  if (!spec.tree.has_vertex(k) || !spec.tree.is_boundary(k))
    throw ValidationError("Weyl function requested at non-boundary vertex " + std::to_string(k));
  const ProblemSpec base = spec.with_condition(k, Condition::Dirichlet);
  const ProblemSpec neu = spec.with_condition(k, Condition::Neumann);
  const CharFn d0 = characteristic_function(base);
  const double total = spec.tree.total_length();
  WeylSample out;
  out.vertex = k;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    bool reject = false;
    check_pole(d0, grid[i], total, opts, i, reject);
    if (reject) continue;
    const auto tr = edge_transfers(base, grid[i]);
    const cplx v0 = folded_char_value(base.tree, base.bc, tr);
    const cplx vk = folded_char_value(neu.tree, neu.bc, tr);
    const cplx m = -vk / v0;
    const cplx solved = weyl_by_solve(base, k, grid[i]);
    if (std::abs(m - solved) > opts.check_tol * std::max(1.0, std::abs(m)))
      throw IdentityError("Weyl function mismatch at grid point " + std::to_string(i) +
                          ": ratio and linear solve disagree");
    out.lambdas.push_back(grid[i]);
    out.values.push_back(m);
  }
  return out;
}

WeylSample subtree_weyl_ratio(const ProblemSpec& spec, VertexId at, const std::vector<cplx>& grid,
                              const WeylOptions& opts) {
  if (!spec.tree.has_vertex(at) || !spec.tree.is_boundary(at))
    throw ValidationError("Weyl ratio requested at non-boundary vertex " + std::to_string(at));
  const ProblemSpec dir = spec.with_condition(at, Condition::Dirichlet);
  const ProblemSpec neu = spec.with_condition(at, Condition::Neumann);
  const CharFn dd = characteristic_function(dir);
  const double total = spec.tree.total_length();
  WeylSample out;
  out.vertex = at;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    bool reject = false;
    check_pole(dd, grid[i], total, opts, i, reject);
    if (reject) continue;
    const auto tr = edge_transfers(dir, grid[i]);
    out.lambdas.push_back(grid[i]);
    out.values.push_back(folded_char_value(neu.tree, neu.bc, tr) /
                         folded_char_value(dir.tree, dir.bc, tr));
  }
  return out;
}

}  // namespace qtree
