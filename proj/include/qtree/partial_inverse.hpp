#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qtree/char_fn.hpp"
#include "qtree/eigen_search.hpp"
#include "qtree/graph_model.hpp"
#include "qtree/lm_fit.hpp"
#include "qtree/spectral_data.hpp"

namespace qtree {

// ---------------------------------------------------------------------------
// Coefficient systems around an internal edge

/// Coefficients at one lambda. Columns j = 0..3 multiply the products
/// D2 D5, N2 D5, D2 N5, N2 N5 of the unknown subtree characteristic functions.
struct CoefficientRow {
  cplx lambda;
  std::array<std::array<cplx, 4>, 3> a{};
  std::array<std::array<cplx, 4>, 2> b{};
  cplx A, B, C, D;
  std::array<cplx, 3> delta{};  // right-hand sides: L_0, and the problems with Neumann at v1, v4
  bool degenerate = false;
};

struct CoefficientTable {
  std::vector<CoefficientRow> rows;
};

// Values D2, N2, D5, N5 of the unknown subtrees at lambda.
using SubtreeValues = std::array<cplx, 4>;

/// Evaluates coefficient rows from the known parts of a five-part decomposition and
/// three characteristic functions of the whole tree (computed or reconstructed).
class CoefficientSystem {
 public:
  // `spec` is the L_0 problem on the whole tree; its potentials are used on G_1, G_3, G_4
  // (and on G_2, G_5 by the forward helpers only). v1, v4 default to the smallest
  // boundary vertex of G_1, G_4 other than the split vertex.
  CoefficientSystem(FivePartDecomposition decomposition, ProblemSpec spec, CharFn delta0, CharFn delta1,
                    CharFn delta4, std::optional<VertexId> v1 = {}, std::optional<VertexId> v4 = {});

  // Forward version: the three characteristic functions are computed from `spec`.
  static CoefficientSystem forward(const FivePartDecomposition& decomposition, const ProblemSpec& spec,
                                   std::optional<VertexId> v1 = {}, std::optional<VertexId> v4 = {});

  CoefficientRow row(cplx lambda) const;
  // Forward values of the unknown subtrees from the potentials in `spec`.
  SubtreeValues subtree_values(cplx lambda) const;
  // Reference (q = 0) forward ratio N2 / D2, used to pick the physical root.
  cplx reference_ratio(cplx lambda) const;

  const FivePartDecomposition& decomposition() const { return decomposition_; }
  const ProblemSpec& spec() const { return spec_; }
  VertexId v1() const { return v1_; }
  VertexId v4() const { return v4_; }

  // Determinant in block form for arbitrary part values (exposed for tests).
  // g1, g4 = (Dirichlet, Neumann) at the split vertex; g3 = (DD, ND, DN, NN) at (near, far).
  static cplx block_determinant(const std::array<cplx, 2>& g1, const std::array<cplx, 2>& g2,
                                const std::array<cplx, 4>& g3, const std::array<cplx, 2>& g4,
                                const std::array<cplx, 2>& g5);

 private:
  FivePartDecomposition decomposition_;
  ProblemSpec spec_;
  CharFn delta_[3];
  VertexId v1_ = 0, v4_ = 0;
  std::array<double, 3> sign_{1.0, 1.0, 1.0};
  std::array<CharFn, 4> g1_, g4_;  // DD, DN, ND, NN
  std::array<CharFn, 2> g2_, g5_;  // D, N
  std::array<CharFn, 2> g2_ref_;

  std::array<cplx, 4> g3_values(cplx lambda) const;
};

struct TableOptions {
  double degenerate_floor = 1e-13;  // |A| or the a-row scale relative to |B| + |C| or the row size
};

CoefficientTable build_coefficient_table(const CoefficientSystem& system, const std::vector<cplx>& grid,
                                         const TableOptions& opts = {});

// q = 0 on the same tree and grid.
CoefficientTable reference_table(const FivePartDecomposition& decomposition, const ProblemSpec& spec,
                                 const std::vector<cplx>& grid);

// Max relative residual of the three equations with forward subtree values.
double system_residual(const CoefficientSystem& system, const CoefficientRow& row);

struct QuadraticRoots {
  cplx first, second;
};
QuadraticRoots quadratic_roots(const CoefficientRow& row);

// Normalized residual |A m^2 + B m + C| / max(|A m^2|, |B m|, |C|).
double quadratic_residual(const CoefficientRow& row, cplx m);

// The two expressions for the ratio at the far split vertex; throws IdentityError when
// they disagree beyond `tol` and both denominators are well away from zero.
cplx far_ratio(const CoefficientRow& row, cplx near_ratio, double tol = 1e-6);

struct TrackOptions {
  double rho_max = 40.0;      // start of the path on the real rho axis (shifted by `height`)
  double height = 1.0;        // Im rho of the horizontal part of the path
  double floor = 1e-6;        // |D| floor relative to |B|^2
  double step = 0.05;         // initial step in rho along the path
  double jump_fraction = 0.3;  // allowed jump relative to the root separation
  int max_halvings = 24;
};

struct RootTrack {
  std::vector<cplx> path;    // lambda along the path, in visiting order
  std::vector<cplx> values;  // chosen root at each path point
  std::vector<int> branch;   // 0 = first root of quadratic_roots, 1 = second
  double floor = 0.0;

  std::vector<cplx> targets;       // requested lambdas
  std::vector<cplx> near_ratio;    // tracked N2 / D2 at the targets
  std::vector<cplx> far_ratio;     // N5 / D5 at the targets
  std::vector<bool> accepted;      // false where the target row is degenerate or under the floor
};

RootTrack solve_quadratic_track(const CoefficientSystem& system, const std::vector<cplx>& targets,
                                const TrackOptions& opts = {});

// ---------------------------------------------------------------------------
// Cutting boundary edges and edge recovery

// Weyl function (derivative over value into the tree) at vertex v of the tree left
// after removing the boundary edges at v, from a Weyl function at one of the removed
// boundary vertices. `spec` must hold the potentials of all removed edges.
// `removed` lists the boundary neighbours of v that are cut off; empty returns `known`.
WeylSample cut_boundary_edges(const ProblemSpec& spec, VertexId v, const std::vector<VertexId>& removed,
                              const WeylSample& known, double floor = 1e-12);

// The reduced tree and problem after such a cut.
ProblemSpec cut_problem(const ProblemSpec& spec, VertexId v, const std::vector<VertexId>& removed);

/// Piecewise-constant (equal pieces) or polynomial parametrization of an edge potential.
struct PotentialBasis {
  enum class Kind { Piecewise, Polynomial };
  Kind kind = Kind::Piecewise;
  int dimension = 2;

  Potential make(const std::vector<double>& params) const;
  std::vector<double> project(const Potential& q, double length) const;  // least-squares fit, used for start values
};

struct EdgeFitOptions {
  FitOptions fit;
  double tol = 1e-6;  // final relative Weyl mismatch (rms) declared as success
  bool strict = true;  // throw when the mismatch stays above `tol`
};

struct RecoveredPotential {
  EdgeId edge = 0;
  std::vector<double> params;
  PotentialBasis basis;
  std::vector<double> history;  // residual norm at accepted optimizer steps
  double mismatch = 0.0;        // rms relative Weyl mismatch
  Potential potential() const { return basis.make(params); }
};

// A Weyl function sample with the problem whose Weyl function it is.
struct WeylTarget {
  ProblemSpec context;
  WeylSample sample;
};

// Least-squares fit of the potentials on `edges` so that the Weyl functions of the
// targets' problems (with current potentials elsewhere) match the samples.
std::vector<RecoveredPotential> recover_potentials(const std::vector<WeylTarget>& targets,
                                                   const std::vector<EdgeId>& edges,
                                                   const std::map<EdgeId, PotentialBasis>& basis,
                                                   const std::map<EdgeId, std::vector<double>>& start,
                                                   const EdgeFitOptions& opts = {});

// Single edge, context problem given explicitly.
RecoveredPotential recover_edge_potential(const WeylTarget& target, EdgeId edge, const PotentialBasis& basis,
                                          const EdgeFitOptions& opts = {});

// ---------------------------------------------------------------------------
// Pipeline

struct SpectrumInput {
  VertexId vertex = 0;  // 0 for L_0 is not a vertex id; use `is_l0`
  bool is_l0 = false;
  SpectrumSet spectrum;
};

struct InverseOptions {
  int truncation = 40;
  ReconstructionOptions reconstruction{8, true, 0};
  TrackOptions track{};
  EdgeFitOptions edge_fit{};
  PotentialBasis basis{};
  std::map<EdgeId, PotentialBasis> edge_basis;  // overrides `basis`
  int sweeps = 4;                               // block-coordinate sweeps before the polish
  bool polish = true;
  double spec_tol = 1e-6;  // certificate: forward eigenvalue mismatch
  int grid_points = 40;    // Weyl samples per target
  double fit_height = 1.0;  // Im rho of the Weyl-matching grids
  std::optional<VertexId> r1, r2;
  bool throw_on_certificate_failure = false;
};

struct StageReport {
  std::string stage;
  double residual = 0.0;
  std::string note;
};

struct InverseResult {
  PotentialSet q;  // full potential, known edge included
  std::map<EdgeId, RecoveredPotential> recovered;
  std::vector<StageReport> stages;
  std::vector<double> eigenvalue_mismatch;  // per input eigenvalue, in input order
  double max_mismatch = 0.0;
  bool certified = false;
};

struct InverseProblem {
  MetricTree tree;
  EdgeId known_edge = 0;
  Potential known_potential;
  std::vector<SpectrumInput> spectra;  // L_0 plus the data vertices
};

// Dispatches on the known edge: internal edges use the coefficient/quadratic route,
// boundary edges the cutting route. Throws with the stage in the message.
InverseResult run_partial_inverse(const InverseProblem& problem, const InverseOptions& opts = {});

// Forward helper: spectra of L_0 and the required L_k for a given potential.
std::vector<SpectrumInput> forward_spectra(const MetricTree& tree, const PotentialSet& q, EdgeId known_edge,
                                           int count, std::optional<VertexId> r1 = {},
                                           std::optional<VertexId> r2 = {});

// Boundary vertices whose spectra are required, besides L_0.
std::vector<VertexId> required_vertices(const MetricTree& tree, EdgeId known_edge, std::optional<VertexId> r1 = {},
                                        std::optional<VertexId> r2 = {});

}  // namespace qtree
