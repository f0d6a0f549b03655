#pragma once

#include <string>
#include <vector>

#include "qtree/char_fn.hpp"

namespace qtree {

/// Contents of a tree description file.
struct TreeFile {
  MetricTree tree;
  PotentialSet q;
  BoundarySpec bc;
  std::vector<EdgeId> flipped;  // edges reoriented on load

  ProblemSpec problem() const;
};

// Parses the JSON description, reorients edges canonically (flipping their potentials)
// and validates the result. Throws ValidationError with the offending field.
TreeFile parse_tree(const std::string& text);
TreeFile load_tree(const std::string& path);

std::string tree_to_json(const MetricTree& tree, const PotentialSet& q, const BoundarySpec& bc);
void save_tree(const std::string& path, const MetricTree& tree, const PotentialSet& q, const BoundarySpec& bc);

// {"kind": ...} objects as used in the "potential" field of an edge.
std::string potential_to_json(const Potential& q);
Potential potential_from_json(const std::string& text);

}  // namespace qtree
