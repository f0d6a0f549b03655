#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qtree/graph_model.hpp"
#include "qtree/ode_core.hpp"

namespace qtree {

/// Boundary value problem on a (sub)tree: standard matching conditions at internal
/// vertices, D/N at boundary vertices.
struct ProblemSpec {
  MetricTree tree;
  PotentialSet q;
  BoundarySpec bc;
  OdeOptions ode;
  std::string tag = "L0";

  const Potential& potential(EdgeId e) const;
  ProblemSpec with_condition(VertexId v, Condition c, std::string new_tag = {}) const;
  ProblemSpec with_zero_potential() const;
};

// Throws ValidationError unless bc covers exactly the boundary vertices and q only
// names existing edges with admissible representations.
void check_spec(const ProblemSpec& spec, const ValidationOptions& opts = {});

// Convenience: all-Dirichlet problem.
ProblemSpec dirichlet_problem(const MetricTree& tree, const PotentialSet& q = {});

using TransferMap = std::map<EdgeId, FundamentalPair>;

// Fundamental pairs at x = T for every edge (shared by all problems on the same tree).
TransferMap edge_transfers(const ProblemSpec& spec, cplx lambda);

// Characteristic function evaluated from edge transfers by folding subtrees towards
// the root. Normalized so that for q = 0 it is positive at lambda = -1.
cplx folded_char_value(const MetricTree& tree, const BoundarySpec& bc, const TransferMap& tr);

/// Evaluable characteristic function with a human-readable tag.
class CharFn {
 public:
  using Eval = std::function<cplx(cplx)>;

  CharFn() = default;
  CharFn(Eval eval, std::string tag, std::optional<ProblemSpec> spec = std::nullopt)
      : eval_(std::move(eval)), tag_(std::move(tag)),
        spec_(spec ? std::make_shared<const ProblemSpec>(std::move(*spec)) : nullptr) {}

  cplx operator()(cplx lambda) const { return eval_(lambda); }
  const std::string& tag() const { return tag_; }
  const ProblemSpec* spec() const { return spec_.get(); }
  bool valid() const { return static_cast<bool>(eval_); }

  // Batched evaluation; the parallel version is the default.
  std::vector<cplx> evaluate(const std::vector<cplx>& lambdas) const;
  std::vector<cplx> evaluate_serial(const std::vector<cplx>& lambdas) const;

 private:
  Eval eval_;
  std::string tag_;
  std::shared_ptr<const ProblemSpec> spec_;
};

CharFn characteristic_function(const ProblemSpec& spec);

struct AssemblyHooks {
  // Test hook: flip the sign of the first nonzero entry of this (reduced) row.
  int corrupt_row = -1;
};

// Determinant of the matching/boundary system in the coefficients of C_j and S_j,
// after eliminating unit boundary rows, normalized by the sign it has for q = 0 at
// lambda = -1.
CharFn assemble_char_fn(const ProblemSpec& spec, const AssemblyHooks& hooks = {});

// Raw (unnormalized) determinant and its dimension, exposed for tests.
struct AssembledSystem {
  std::size_t dimension = 0;
  cplx determinant;
};
AssembledSystem assemble_system(const ProblemSpec& spec, cplx lambda, const AssemblyHooks& hooks = {});

// Bordered determinant over the parts obtained by splitting at w.
CharFn char_fn_by_split(const ProblemSpec& spec, VertexId w);

// Bordered determinant from part values: rows D_i - D_{i+1} and a last row of N_i.
cplx bordered_determinant(const std::vector<cplx>& dirichlet, const std::vector<cplx>& neumann);

// Problem on a part of a split: parent conditions, plus `c` at the split vertex.
ProblemSpec part_problem(const ProblemSpec& parent, const MetricTree& part, VertexId split_vertex,
                         Condition c);

struct WeylSample {
  VertexId vertex = 0;
  std::vector<cplx> lambdas;
  std::vector<cplx> values;
};

struct WeylOptions {
  double pole_floor = 1e-8;  // relative to the stencil maximum of |Delta_0|
  double check_tol = 1e-8;   // agreement between -Delta_k/Delta_0 and the linear solve
  bool skip_poles = false;   // drop rejected points instead of throwing
};

// Relative size of |Delta(lambda)| against the maximum on a small stencil around it.
double pole_proximity(const CharFn& delta, cplx lambda, double total_length);

WeylSample weyl_function(const ProblemSpec& spec, VertexId k, const std::vector<cplx>& grid,
                         const WeylOptions& opts = {});

// psi'_kk(0) from the linear system with psi_kk(v_k) = 1.
cplx weyl_by_solve(const ProblemSpec& spec, VertexId k, cplx lambda);

// Delta^N / Delta^D at the boundary vertex `at`.
WeylSample subtree_weyl_ratio(const ProblemSpec& spec, VertexId at, const std::vector<cplx>& grid,
                              const WeylOptions& opts = {});

}  // namespace qtree
