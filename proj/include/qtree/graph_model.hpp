#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qtree/potential.hpp"

namespace qtree {

using VertexId = int;

struct Edge {
  EdgeId id = 0;
  VertexId at_zero = 0;  // endpoint with x = 0
  VertexId at_end = 0;   // endpoint with x = T
  double length = 1.0;

  VertexId other(VertexId v) const { return v == at_zero ? at_end : at_zero; }
  bool touches(VertexId v) const { return v == at_zero || v == at_end; }
};

enum class Condition { Dirichlet, Neumann };

using BoundarySpec = std::map<VertexId, Condition>;

char condition_letter(Condition c);

/// Compact metric tree. Vertex and edge ids are arbitrary integers; parts produced
/// by splitting keep the ids of the parent tree.
class MetricTree {
 public:
  MetricTree() = default;
  MetricTree(std::vector<VertexId> vertices, std::vector<Edge> edges, VertexId root);

  const std::vector<VertexId>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  VertexId root() const { return root_; }
  void set_root(VertexId r) { root_ = r; }

  std::size_t edge_count() const { return edges_.size(); }
  bool has_vertex(VertexId v) const;
  bool has_edge(EdgeId e) const;
  const Edge& edge(EdgeId e) const;

  int degree(VertexId v) const;
  bool is_boundary(VertexId v) const { return degree(v) == 1; }
  std::vector<EdgeId> incident(VertexId v) const;  // sorted by edge id
  std::vector<VertexId> boundary_vertices() const;
  std::vector<VertexId> internal_vertices() const;
  double total_length() const;

  // Edges of the component of (tree minus vertex `cut`) that contains edge `start`.
  std::vector<EdgeId> component_through(VertexId cut, EdgeId start) const;

  // Subtree induced by an edge subset; the root is kept when it is still a
  // boundary vertex, otherwise the smallest boundary vertex is used.
  MetricTree induced(const std::vector<EdgeId>& edge_ids) const;

  // Reorients internal edges so x = 0 lies closer to the root (ties: lower id) and
  // boundary edges so x = 0 lies at the boundary vertex. Returns ids of flipped edges.
  std::vector<EdgeId> canonicalize_orientation();

 private:
  std::vector<VertexId> vertices_;
  std::vector<Edge> edges_;
  VertexId root_ = 0;
  std::map<EdgeId, std::size_t> edge_index_;
  std::map<VertexId, std::vector<EdgeId>> incidence_;

  void rebuild_index();
};

struct ValidationOptions {
  bool require_boundary_orientation = true;
  bool allow_degree_two = false;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

ValidationReport validate_tree(const MetricTree& tree, const ValidationOptions& opts = {});

// Flips potentials of the edges reported by canonicalize_orientation.
void reverse_potentials(const MetricTree& tree, const std::vector<EdgeId>& flipped,
                        PotentialSet& q);

struct SubtreePart {
  MetricTree tree;
  VertexId split_vertex = 0;  // the copy of the split vertex, a boundary vertex of `tree`
};

struct VertexSplit {
  VertexId vertex = 0;
  std::vector<SubtreePart> parts;  // ordered by smallest incident edge id at the split vertex
};

VertexSplit split_at_vertex(const MetricTree& tree, VertexId w);

// Union of edge sets; copies of a split vertex share its id, so they are glued back.
MetricTree merge_parts(const std::vector<MetricTree>& parts, VertexId root);

/// Decomposition around an internal edge e_f = [near, far], both endpoints of degree 3.
/// parts[0..4] correspond to the subtrees G_1..G_5: G_1, G_2 hang at `near`,
/// G_3 = {e_f}, G_4, G_5 hang at `far`; G_2 contains r1, G_5 contains r2.
struct FivePartDecomposition {
  EdgeId f = 0;
  VertexId near = 0;
  VertexId far = 0;
  VertexId r1 = 0;
  VertexId r2 = 0;
  std::array<MetricTree, 5> parts;

  // Boundary vertices of the full tree for which spectra are required (besides L_0).
  std::vector<VertexId> data_vertices(const MetricTree& tree) const;
};

struct EdgeEnvironmentOptions {
  std::optional<VertexId> r1;
  std::optional<VertexId> r2;
};

FivePartDecomposition split_edge_environment(const MetricTree& tree, EdgeId f,
                                             const EdgeEnvironmentOptions& opts = {});

}  // namespace qtree
