#pragma once

#include <string>
#include <vector>

#include "qtree/char_fn.hpp"
#include "qtree/graph_model.hpp"

namespace qtree {

struct IdentityCheck {
  std::string name;
  double max_error = 0.0;  // relative, worst over the grid
  double tol = 0.0;
  bool passed = false;
};

struct IdentityReport {
  std::vector<IdentityCheck> checks;
  bool passed() const;
  const IdentityCheck& at(const std::string& name) const;
};

/// Zero-potential identities for the coefficient quadratic around the internal edge f
/// (unit length): factorized forms of A, B, C, the bracket in the discriminant, the
/// discriminant itself and the transfer values of f.
IdentityReport identity_suite_q0(const MetricTree& tree, EdgeId f, const std::vector<cplx>& grid,
                                 double tol = 1e-8);

// |sin(rho)/rho * Delta_0| / |Delta_5^D * Pi| at rho = i r (q = 0).
double growth_ratio(const MetricTree& tree, EdgeId f, double r);

// Delta^DD Delta^NN - Delta^DN Delta^ND for the conditions at boundary vertices v1, v2.
cplx pair_determinant(const ProblemSpec& spec, VertexId v1, VertexId v2, cplx lambda);

// v1 and v2 hang at the same vertex: the pair determinant equals -(prod of Delta_i^D)^2
// over the other subtrees there. Returns the worst relative error on the grid.
double pair_identity_common_vertex(const ProblemSpec& spec, VertexId v1, VertexId v2,
                                   const std::vector<cplx>& grid);

// v1, v2 hang at different vertices: the pair determinant factors through the middle
// subtree times the squared products of the side subtrees. Worst relative error.
double pair_identity_split(const ProblemSpec& spec, VertexId v1, VertexId v2, const std::vector<cplx>& grid);

// edges - internal vertices - Neumann boundary vertices
int decay_order(const ProblemSpec& spec);

// Least-squares fit of log|Delta(-r^2)| = c + t r + s log r + u / r on n points of [r0, r1];
// returns s. On the imaginary rho axis the trigonometric part grows like exp(r T), so
// s is the power of rho in front of it.
double decay_slope(const CharFn& delta, double r0, double r1, int n = 24);

}  // namespace qtree
