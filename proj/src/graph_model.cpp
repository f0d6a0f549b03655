#include "qtree/graph_model.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

#include "qtree/errors.hpp"

namespace qtree {

char condition_letter(Condition c) { return c == Condition::Dirichlet ? 'D' : 'N'; }

MetricTree::MetricTree(std::vector<VertexId> vertices, std::vector<Edge> edges, VertexId root)
    : vertices_(std::move(vertices)), edges_(std::move(edges)), root_(root) {
  std::sort(vertices_.begin(), vertices_.end());
  std::sort(edges_.begin(), edges_.end(),
            [](const Edge& a, const Edge& b) { return a.id < b.id; });
  rebuild_index();
}

void MetricTree::rebuild_index() {
  edge_index_.clear();
  incidence_.clear();
  for (VertexId v : vertices_) incidence_[v];
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    edge_index_[edges_[i].id] = i;
    incidence_[edges_[i].at_zero].push_back(edges_[i].id);
    if (edges_[i].at_end != edges_[i].at_zero) incidence_[edges_[i].at_end].push_back(edges_[i].id);
  }
  for (auto& [v, list] : incidence_) std::sort(list.begin(), list.end());
}

bool MetricTree::has_vertex(VertexId v) const {
  return std::binary_search(vertices_.begin(), vertices_.end(), v);
}

bool MetricTree::has_edge(EdgeId e) const { return edge_index_.count(e) > 0; }

const Edge& MetricTree::edge(EdgeId e) const {
  auto it = edge_index_.find(e);
  if (it == edge_index_.end()) throw ValidationError("unknown edge " + std::to_string(e));
  return edges_[it->second];
}

int MetricTree::degree(VertexId v) const {
  auto it = incidence_.find(v);
  return it == incidence_.end() ? 0 : static_cast<int>(it->second.size());
}

std::vector<EdgeId> MetricTree::incident(VertexId v) const {
  auto it = incidence_.find(v);
  return it == incidence_.end() ? std::vector<EdgeId>{} : it->second;
}

std::vector<VertexId> MetricTree::boundary_vertices() const {
  std::vector<VertexId> out;
  for (VertexId v : vertices_)
    if (degree(v) == 1) out.push_back(v);
  return out;
}

std::vector<VertexId> MetricTree::internal_vertices() const {
  std::vector<VertexId> out;
  for (VertexId v : vertices_)
    if (degree(v) > 1) out.push_back(v);
  return out;
}

double MetricTree::total_length() const {
  double s = 0.0;
  for (const auto& e : edges_) s += e.length;
  return s;
}

std::vector<EdgeId> MetricTree::component_through(VertexId cut, EdgeId start) const {
  std::set<EdgeId> seen{start};
  std::deque<VertexId> queue;
  const Edge& e0 = edge(start);
  if (e0.at_zero != cut) queue.push_back(e0.at_zero);
  if (e0.at_end != cut) queue.push_back(e0.at_end);
  while (!queue.empty()) {
    VertexId v = queue.front();
    queue.pop_front();
    for (EdgeId id : incident(v)) {
      if (seen.count(id)) continue;
      seen.insert(id);
      VertexId u = edge(id).other(v);
      if (u != cut) queue.push_back(u);
    }
  }
  return {seen.begin(), seen.end()};
}

MetricTree MetricTree::induced(const std::vector<EdgeId>& edge_ids) const {
  std::set<VertexId> vs;
  std::vector<Edge> es;
  for (EdgeId id : edge_ids) {
    const Edge& e = edge(id);
    es.push_back(e);
    vs.insert(e.at_zero);
    vs.insert(e.at_end);
  }
  MetricTree sub({vs.begin(), vs.end()}, std::move(es), root_);
  if (!sub.has_vertex(root_) || !sub.is_boundary(root_)) {
    auto bnd = sub.boundary_vertices();
    if (!bnd.empty()) sub.root_ = bnd.front();
  }
  return sub;
}

std::vector<EdgeId> MetricTree::canonicalize_orientation() {
  // Breadth-first distances (in edges) from the root.
  std::map<VertexId, int> dist;
  std::deque<VertexId> queue{root_};
  dist[root_] = 0;
  while (!queue.empty()) {
    VertexId v = queue.front();
    queue.pop_front();
    for (EdgeId id : incident(v)) {
      VertexId u = edge(id).other(v);
      if (!dist.count(u)) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  std::vector<EdgeId> flipped;
  for (auto& e : edges_) {
    const bool a_bnd = degree(e.at_zero) == 1;
    const bool b_bnd = degree(e.at_end) == 1;
    bool flip = false;
    if (a_bnd != b_bnd) {
      flip = b_bnd;
    } else if (!a_bnd && dist.count(e.at_zero) && dist.count(e.at_end)) {
      const int da = dist[e.at_zero];
      const int db = dist[e.at_end];
      flip = db < da || (db == da && e.at_end < e.at_zero);
    } else if (a_bnd && b_bnd) {
      // Single-edge tree: keep the root at x = 0.
      flip = e.at_end == root_;
    }
    if (flip) {
      std::swap(e.at_zero, e.at_end);
      flipped.push_back(e.id);
    }
  }
  rebuild_index();
  return flipped;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < issues.size(); ++i) os << (i ? "; " : "") << issues[i];
  return os.str();
}

ValidationReport validate_tree(const MetricTree& tree, const ValidationOptions& opts) {
  ValidationReport rep;
  const auto& vs = tree.vertices();
  const auto& es = tree.edges();
  if (vs.empty()) rep.issues.push_back("tree has no vertices");
  if (es.size() + 1 != vs.size())
    rep.issues.push_back("edge count " + std::to_string(es.size()) + " is not vertex count - 1");
  if (std::adjacent_find(vs.begin(), vs.end()) != vs.end())
    rep.issues.push_back("duplicate vertex id");
  for (std::size_t i = 1; i < es.size(); ++i)
    if (es[i].id == es[i - 1].id) rep.issues.push_back("duplicate edge id " + std::to_string(es[i].id));

  for (const auto& e : es) {
    const std::string tag = "edge " + std::to_string(e.id);
    if (!(e.length > 0.0)) rep.issues.push_back(tag + ": length must be positive");
    if (e.at_zero == e.at_end) rep.issues.push_back(tag + ": endpoints coincide");
    if (!tree.has_vertex(e.at_zero) || !tree.has_vertex(e.at_end)) {
      rep.issues.push_back(tag + ": endpoint is not a listed vertex");
      return rep;
    }
  }
  if (vs.empty()) return rep;

  // Connectivity (with |E| = |V| - 1 this also rules out cycles).
  std::set<VertexId> reached{vs.front()};
  std::deque<VertexId> queue{vs.front()};
  while (!queue.empty()) {
    VertexId v = queue.front();
    queue.pop_front();
    for (EdgeId id : tree.incident(v)) {
      VertexId u = tree.edge(id).other(v);
      if (reached.insert(u).second) queue.push_back(u);
    }
  }
  if (reached.size() != vs.size()) rep.issues.push_back("graph is not connected");

  for (VertexId v : vs) {
    const int d = tree.degree(v);
    if (d == 0 && vs.size() > 1) rep.issues.push_back("vertex " + std::to_string(v) + " is isolated");
    if (d == 2 && !opts.allow_degree_two)
      rep.issues.push_back("vertex " + std::to_string(v) + " has degree 2");
  }
  if (!tree.has_vertex(tree.root()))
    rep.issues.push_back("root " + std::to_string(tree.root()) + " is not a vertex");
  else if (tree.degree(tree.root()) != 1)
    rep.issues.push_back("root " + std::to_string(tree.root()) + " is not a boundary vertex");

  if (opts.require_boundary_orientation) {
    for (const auto& e : es) {
      const bool a_bnd = tree.degree(e.at_zero) == 1;
      const bool b_bnd = tree.degree(e.at_end) == 1;
      if (b_bnd && !a_bnd)
        rep.issues.push_back("edge " + std::to_string(e.id) +
                             ": boundary vertex must sit at x = 0");
    }
  }
  return rep;
}

void reverse_potentials(const MetricTree& tree, const std::vector<EdgeId>& flipped,
                        PotentialSet& q) {
  for (EdgeId id : flipped) {
    auto it = q.find(id);
    if (it != q.end()) it->second = it->second.reversed(tree.edge(id).length);
  }
}

VertexSplit split_at_vertex(const MetricTree& tree, VertexId w) {
  if (!tree.has_vertex(w)) throw ValidationError("unknown vertex " + std::to_string(w));
  if (tree.degree(w) < 2) throw ValidationError("cannot split boundary vertex " + std::to_string(w));
  VertexSplit split;
  split.vertex = w;
  for (EdgeId start : tree.incident(w)) {
    SubtreePart part;
    part.tree = tree.induced(tree.component_through(w, start));
    part.split_vertex = w;
    split.parts.push_back(std::move(part));
  }
  return split;
}

MetricTree merge_parts(const std::vector<MetricTree>& parts, VertexId root) {
  std::set<VertexId> vs;
  std::map<EdgeId, Edge> es;
  for (const auto& p : parts) {
    for (VertexId v : p.vertices()) vs.insert(v);
    for (const auto& e : p.edges()) es[e.id] = e;
  }
  std::vector<Edge> list;
  for (auto& [id, e] : es) list.push_back(e);
  return MetricTree({vs.begin(), vs.end()}, std::move(list), root);
}

std::vector<VertexId> FivePartDecomposition::data_vertices(const MetricTree& tree) const {
  std::vector<VertexId> out;
  for (VertexId v : tree.boundary_vertices())
    if (v != r1 && v != r2) out.push_back(v);
  return out;
}

namespace {

std::vector<EdgeId> other_branches(const MetricTree& tree, VertexId v, EdgeId f) {
  std::vector<EdgeId> out;
  for (EdgeId id : tree.incident(v))
    if (id != f) out.push_back(id);
  return out;
}

bool contains_vertex(const MetricTree& t, VertexId v) { return t.has_vertex(v) && t.degree(v) == 1; }

}  // namespace

FivePartDecomposition split_edge_environment(const MetricTree& tree, EdgeId f,
                                             const EdgeEnvironmentOptions& opts) {
  const Edge& ef = tree.edge(f);
  if (tree.is_boundary(ef.at_zero) || tree.is_boundary(ef.at_end))
    throw ValidationError("edge " + std::to_string(f) + " is a boundary edge");
  if (tree.degree(ef.at_zero) != 3 || tree.degree(ef.at_end) != 3)
    throw ValidationError("unsupported degree: both endpoints of edge " + std::to_string(f) +
                          " must have degree 3");

  FivePartDecomposition d;
  d.f = f;
  d.near = ef.at_zero;
  d.far = ef.at_end;

  auto near_branches = other_branches(tree, d.near, f);
  auto far_branches = other_branches(tree, d.far, f);
  std::array<MetricTree, 2> near_parts{tree.induced(tree.component_through(d.near, near_branches[0])),
                                       tree.induced(tree.component_through(d.near, near_branches[1]))};
  std::array<MetricTree, 2> far_parts{tree.induced(tree.component_through(d.far, far_branches[0])),
                                      tree.induced(tree.component_through(d.far, far_branches[1]))};

  auto boundary_of_side = [&](const std::array<MetricTree, 2>& side, VertexId split) {
    std::vector<VertexId> out;
    for (const auto& p : side)
      for (VertexId v : p.boundary_vertices())
        if (v != split) out.push_back(v);
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto near_bnd = boundary_of_side(near_parts, d.near);
  const auto far_bnd = boundary_of_side(far_parts, d.far);

  if (opts.r1) {
    if (!std::binary_search(near_bnd.begin(), near_bnd.end(), *opts.r1))
      throw ValidationError("r1 must be a boundary vertex on the near side of edge " + std::to_string(f));
    d.r1 = *opts.r1;
  } else {
    d.r1 = std::binary_search(near_bnd.begin(), near_bnd.end(), tree.root()) ? tree.root()
                                                                            : near_bnd.back();
  }
  if (opts.r2) {
    if (!std::binary_search(far_bnd.begin(), far_bnd.end(), *opts.r2))
      throw ValidationError("r2 must be a boundary vertex on the far side of edge " + std::to_string(f));
    d.r2 = *opts.r2;
  } else {
    d.r2 = far_bnd.back();
  }

  const int g2 = contains_vertex(near_parts[0], d.r1) ? 0 : 1;
  const int g5 = contains_vertex(far_parts[0], d.r2) ? 0 : 1;
  d.parts[0] = near_parts[1 - g2];
  d.parts[1] = near_parts[g2];
  d.parts[2] = tree.induced({f});
  d.parts[3] = far_parts[1 - g5];
  d.parts[4] = far_parts[g5];
  return d;
}

}  // namespace qtree
