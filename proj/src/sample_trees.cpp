#include "qtree/sample_trees.hpp"

#include <algorithm>
#include <random>

#include "qtree/errors.hpp"

namespace qtree {

MetricTree single_edge_tree(double length) {
  return MetricTree({1, 2}, {Edge{1, 1, 2, length}}, 1);
}

MetricTree star_tree(int leaves, double length) {
  std::vector<VertexId> vs{0};
  std::vector<Edge> es;
  for (int j = 1; j <= leaves; ++j) {
    vs.push_back(j);
    es.push_back(Edge{j, j, 0, length});
  }
  return MetricTree(std::move(vs), std::move(es), 1);
}

MetricTree five_edge_tree(double length) {
  return MetricTree({1, 2, 3, 4, 5, 6},
                    {Edge{1, 1, 3, length}, Edge{2, 2, 3, length}, Edge{3, 3, 6, length},
                     Edge{4, 4, 6, length}, Edge{5, 5, 6, length}},
                    2);
}

MetricTree seven_edge_tree() {
  // 10 -1- 20 is the internal edge; 20 carries the internal vertex 30 with two leaves.
  return MetricTree({1, 2, 10, 20, 30, 4, 5, 6},
                    {Edge{1, 10, 20, 1.0}, Edge{2, 1, 10, 0.9}, Edge{3, 2, 10, 1.1},
                     Edge{4, 20, 30, 0.8}, Edge{5, 4, 20, 1.2}, Edge{6, 5, 30, 0.7},
                     Edge{7, 6, 30, 1.3}},
                    1);
}

MetricTree random_tree(int edges, std::uint64_t seed) {
  if (edges < 1) throw ValidationError("random tree needs at least one edge");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> len(0.6, 1.4);
  if (edges == 1) return single_edge_tree(len(rng));
  if (edges == 2) throw ValidationError("no tree with 2 edges avoids degree-2 vertices");

  struct Link {
    int a, b;
  };
  std::vector<Link> links{{0, 1}, {0, 2}, {0, 3}};
  int next = 4;
  std::vector<int> degree{3, 1, 1, 1};
  while (static_cast<int>(links.size()) < edges) {
    const int remaining = edges - static_cast<int>(links.size());
    std::uniform_int_distribution<int> pick(0, next - 1);
    const int v = pick(rng);
    if (degree[v] == 1) {
      if (remaining < 2) continue;
      // A leaf becomes internal with two new leaves.
      for (int k = 0; k < 2; ++k) {
        links.push_back({v, next});
        degree.push_back(1);
        ++degree[v];
        ++next;
      }
    } else {
      links.push_back({v, next});
      degree.push_back(1);
      ++degree[v];
      ++next;
    }
  }
  std::vector<VertexId> vs;
  for (int v = 0; v < next; ++v) vs.push_back(v);
  std::vector<Edge> es;
  for (std::size_t i = 0; i < links.size(); ++i)
    es.push_back(Edge{static_cast<EdgeId>(i + 1), links[i].a, links[i].b, len(rng)});
  VertexId root = 0;
  for (int v = 0; v < next; ++v)
    if (degree[v] == 1) {
      root = v;
      break;
    }
  MetricTree t(std::move(vs), std::move(es), root);
  t.canonicalize_orientation();
  return t;
}

}  // namespace qtree
