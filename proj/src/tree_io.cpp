#include "qtree/tree_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qtree/errors.hpp"

namespace qtree {

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field \"" + key + "\"");
  return *it;
}

std::vector<double> numbers(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) throw ValidationError(where + ": expected a non-empty number array");
  std::vector<double> out;
  for (const auto& x : arr) {
    if (!x.is_number()) throw ValidationError(where + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Potential read_potential(const json& p, const std::string& where) {
  if (!p.is_object()) throw ValidationError(where + ": potential must be an object");
  const json& k = field(p, "kind", where);
  if (!k.is_string()) throw ValidationError(where + ": kind must be a string");
  const auto kind = k.get<std::string>();
  if (kind == "zero") return Potential::zero();
  if (kind == "const") {
    const json& v = field(p, "value", where);
    if (!v.is_number()) throw ValidationError(where + ": value must be a number");
    return Potential::constant(v.get<double>());
  }
  if (kind == "poly") return Potential::polynomial(numbers(field(p, "coeffs", where), where + ".coeffs"));
  if (kind == "grid") {
    int order = 1;
    if (p.contains("order")) {
      if (!p["order"].is_number_integer()) throw ValidationError(where + ": order must be an integer");
      order = p["order"].get<int>();
    }
    if (order != 0 && order != 1) throw ValidationError(where + ": interpolation order must be 0 or 1");
    return Potential::grid(numbers(field(p, "samples", where), where + ".samples"), order);
  }
  if (kind == "piecewise") return Potential::piecewise(numbers(field(p, "values", where), where + ".values"));
  throw ValidationError(where + ": unknown potential kind \"" + kind + "\"");
}

json write_potential(const Potential& q) {
  json out;
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ZeroPotential>) {
          out["kind"] = "zero";
        } else if constexpr (std::is_same_v<T, ConstantPotential>) {
          out["kind"] = "const";
          out["value"] = f.value;
        } else if constexpr (std::is_same_v<T, PolynomialPotential>) {
          out["kind"] = "poly";
          out["coeffs"] = f.coeffs;
        } else if constexpr (std::is_same_v<T, GridPotential>) {
          out["kind"] = "grid";
          out["samples"] = f.samples;
          out["order"] = f.order;
        } else {
          out["kind"] = "piecewise";
          out["values"] = f.values;
        }
      },
      q.form());
  return out;
}

int read_id(const json& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::size_t used = 0;
    try {
      const int id = std::stoi(s, &used);
      if (used == s.size()) return id;
    } catch (const std::exception&) {
    }
  }
  throw ValidationError(where + ": ids must be integers");
}

}  // namespace

ProblemSpec TreeFile::problem() const {
  ProblemSpec s;
  s.tree = tree;
  s.q = q;
  s.bc = bc;
  return s;
}

TreeFile parse_tree(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("tree file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("tree file: top level must be an object");

  std::vector<VertexId> vertices;
  const json& vs = field(doc, "vertices", "tree file");
  if (!vs.is_array()) throw ValidationError("vertices must be an array");
  for (const auto& v : vs) {
    if (v.is_object()) vertices.push_back(read_id(field(v, "id", "vertex"), "vertex"));
    else vertices.push_back(read_id(v, "vertex"));
  }

  TreeFile out;
  std::vector<Edge> edges;
  const json& es = field(doc, "edges", "tree file");
  if (!es.is_array()) throw ValidationError("edges must be an array");
  for (const auto& e : es) {
    if (!e.is_object()) throw ValidationError("edges must be objects");
    Edge edge;
    edge.id = read_id(field(e, "id", "edge"), "edge");
    const std::string where = "edge " + std::to_string(edge.id);
    edge.at_zero = read_id(field(e, "from", where), where);
    edge.at_end = read_id(field(e, "to", where), where);
    const json& len = field(e, "length", where);
    if (!len.is_number()) throw ValidationError(where + ": length must be a number");
    edge.length = len.get<double>();
    edges.push_back(edge);
    if (e.contains("potential")) out.q[edge.id] = read_potential(e["potential"], where);
  }

  VertexId root = 0;
  bool has_root = doc.contains("root");
  if (has_root) root = read_id(doc["root"], "root");

  out.tree = MetricTree(vertices, edges, root);
  ValidationOptions loose;
  loose.require_boundary_orientation = false;
  if (!has_root) {
    const auto b = out.tree.boundary_vertices();
    if (!b.empty()) out.tree.set_root(b.front());
  }
  auto rep = validate_tree(out.tree, loose);
  if (!rep.ok()) throw ValidationError("invalid tree: " + rep.summary());

  out.flipped = out.tree.canonicalize_orientation();
  reverse_potentials(out.tree, out.flipped, out.q);

  for (VertexId v : out.tree.boundary_vertices()) out.bc[v] = Condition::Dirichlet;
  if (doc.contains("boundary_conditions")) {
    const json& bc = doc["boundary_conditions"];
    if (!bc.is_object()) throw ValidationError("boundary_conditions must be an object");
    for (auto it = bc.begin(); it != bc.end(); ++it) {
      const VertexId v = read_id(json(it.key()), "boundary_conditions");
      const std::string c = it.value().is_string() ? it.value().get<std::string>() : "";
      if (c != "D" && c != "N")
        throw ValidationError("boundary condition at vertex " + it.key() + " must be \"D\" or \"N\"");
      out.bc[v] = c == "D" ? Condition::Dirichlet : Condition::Neumann;
    }
  }
  check_spec(out.problem());
  return out;
}

TreeFile load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open tree file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_tree(ss.str());
}

std::string tree_to_json(const MetricTree& tree, const PotentialSet& q, const BoundarySpec& bc) {
  json doc;
  doc["vertices"] = json::array();
  for (VertexId v : tree.vertices()) doc["vertices"].push_back({{"id", v}});
  doc["edges"] = json::array();
  for (const auto& e : tree.edges()) {
    json je{{"id", e.id}, {"from", e.at_zero}, {"to", e.at_end}, {"length", e.length}};
    auto it = q.find(e.id);
    je["potential"] = write_potential(it == q.end() ? Potential::zero() : it->second);
    doc["edges"].push_back(je);
  }
  doc["root"] = tree.root();
  json jbc = json::object();
  for (const auto& [v, c] : bc) jbc[std::to_string(v)] = std::string(1, condition_letter(c));
  doc["boundary_conditions"] = jbc;
  // nlohmann prints doubles with enough digits to round-trip.
  return doc.dump(2) + "\n";
}

void save_tree(const std::string& path, const MetricTree& tree, const PotentialSet& q, const BoundarySpec& bc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << tree_to_json(tree, q, bc);
}

std::string potential_to_json(const Potential& q) { return write_potential(q).dump(); }

Potential potential_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("potential is not valid JSON: ") + e.what());
  }
  return read_potential(doc, "potential");
}

}  // namespace qtree
