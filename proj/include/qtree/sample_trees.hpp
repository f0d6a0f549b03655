#pragma once

#include <cstdint>

#include "qtree/graph_model.hpp"

namespace qtree {

// Single edge [1, 2] of length T, root 1.
MetricTree single_edge_tree(double length = 1.0);

// Star with center 0 and leaves 1..n, edge j = [j, 0]; root 1.
MetricTree star_tree(int leaves, double length = 1.0);

// Five edges e1=[1,3], e2=[2,3], e3=[3,6], e4=[4,6], e5=[5,6], unit lengths, root 2.
MetricTree five_edge_tree(double length = 1.0);

// Random tree without degree-2 vertices, `edges` edges, lengths in [0.6, 1.4].
MetricTree random_tree(int edges, std::uint64_t seed);

// Tree whose internal edge 1 joins two degree-3 vertices, with deeper subtrees (7 edges).
MetricTree seven_edge_tree();

}  // namespace qtree
