// qtree: forward spectra, identity checks, the five-edge example and the partial inverse
// problem from the command line. Human-readable lines start with '#'; every other line
// on stdout is key=value.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "qtree/csv_io.hpp"
#include "qtree/errors.hpp"
#include "qtree/identities.hpp"
#include "qtree/partial_inverse.hpp"
#include "qtree/tree_io.hpp"
#include "qtree/worked_example.hpp"

using namespace qtree;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kValidation = 2, kNumerical = 3, kIdentity = 4 };

struct GridSpec {
  bool rho = true;
  double min = 0.0, max = 0.0;
  int count = 2;
  double imag = 0.0;  // added to rho (or lambda) for complex grids

  std::vector<double> reals() const {
    std::vector<double> out;
    for (int i = 0; i < count; ++i) out.push_back(min + (max - min) * i / (count - 1));
    return out;
  }
  std::vector<cplx> lambdas() const {
    std::vector<cplx> out;
    for (double x : reals()) out.push_back(rho ? std::pow(cplx(x, imag), 2) : cplx(x, imag));
    return out;
  }
  double lambda_of(double x) const { return rho ? (x >= 0 ? x * x : -x * x) : x; }
};

// "rho:min:max:count" or "lambda:min:max:count", optionally ":imag".
GridSpec parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 4 && parts.size() != 5)
    throw ValidationError("grid must be rho|lambda:min:max:count[:imag], got \"" + text + "\"");
  GridSpec g;
  if (parts[0] == "lambda")
    g.rho = false;
  else if (parts[0] != "rho")
    throw ValidationError("grid kind must be rho or lambda, got \"" + parts[0] + "\"");
  try {
    g.min = std::stod(parts[1]);
    g.max = std::stod(parts[2]);
    g.count = std::stoi(parts[3]);
    if (parts.size() == 5) g.imag = std::stod(parts[4]);
  } catch (const std::exception&) {
    throw ValidationError("grid \"" + text + "\" has a malformed number");
  }
  if (g.count < 2) throw ValidationError("grid count must be at least 2");
  if (!(g.max > g.min)) throw ValidationError("grid max must exceed min");
  return g;
}

struct Config {
  std::string tree;
  std::string spectra_dir;
  std::string grid;
  double tol_int = 1e-11;
  double tol_id = 1e-8;
  double tol_opt = 1e-6;
  double spec_tol = 1e-6;
  int truncation = 40;
  std::string out;
  std::string suite = "all";
  std::vector<int> neumann;
  int known_edge = -1;
  int count = 0;
  int basis_dim = 2;
  int corrupt_row = -1;
};

void check_tolerances(const Config& c) {
  for (auto [name, v] : {std::pair{"--tol-int", c.tol_int}, {"--tol-id", c.tol_id}, {"--tol-opt", c.tol_opt},
                         {"--spec-tol", c.spec_tol}})
    if (!(v > 0.0)) throw ValidationError(std::string(name) + " must be positive");
}

/// Collects key=value pairs, prints them and mirrors them into <out>/<name>_summary.txt.
class Summary {
 public:
  explicit Summary(std::string command) : command_(std::move(command)) { set("command", command_); }

  void note(const std::string& line) { std::cout << "# " << line << '\n'; }
  void set(const std::string& key, const std::string& value) { pairs_.emplace_back(clean(key), value); }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "pass" : "fail")); }

  int finish(int status, const std::string& out_dir) {
    set("exit_status", status);
    for (const auto& [k, v] : pairs_) std::cout << k << '=' << v << '\n';
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ofstream f(fs::path(out_dir) / (command_ + "_summary.txt"));
      for (const auto& [k, v] : pairs_) f << k << '=' << v << '\n';
    }
    return status;
  }

 private:
  std::string command_;

  // Keys carry no spaces or colons: "sweep 0: step2" becomes "sweep_0.step2".
  static std::string clean(const std::string& key) {
    std::string out;
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (key[i] == ':') {
        out += '.';
        if (i + 1 < key.size() && key[i + 1] == ' ') ++i;
      } else {
        out += key[i] == ' ' ? '_' : key[i];
      }
    }
    return out;
  }
  std::vector<std::pair<std::string, std::string>> pairs_;
};

double min_potential(const TreeFile& f) {
  double lo = 0.0;
  for (const auto& [id, p] : f.q) {
    const double len = f.tree.edge(id).length;
    for (int i = 0; i <= 64; ++i) lo = std::min(lo, p(i * len / 64.0, len));
  }
  return lo;
}

std::string problem_name(VertexId v) { return "L" + std::to_string(v); }

// ---------------------------------------------------------------------------- spectra

int cmd_spectra(const Config& c) {
  Summary sum("spectra");
  const TreeFile f = load_tree(c.tree);
  const ProblemSpec base = [&] {
    ProblemSpec p = f.problem();
    p.ode.tol = c.tol_int;
    return p;
  }();
  std::set<VertexId> vertices(c.neumann.begin(), c.neumann.end());
  if (c.known_edge >= 0)
    for (VertexId v : required_vertices(f.tree, c.known_edge)) vertices.insert(v);
  std::vector<ProblemSpec> problems{base};
  for (VertexId v : vertices) {
    if (!f.tree.has_vertex(v) || !f.tree.is_boundary(v))
      throw ValidationError("vertex " + std::to_string(v) + " is not a boundary vertex");
    problems.push_back(base.with_condition(v, Condition::Neumann, problem_name(v)));
  }

  const std::string out = c.out.empty() ? "." : c.out;
  fs::create_directories(out);
  const double lo_default = min_potential(f) - 2.0;
  for (const auto& p : problems) {
    const CharFn delta = characteristic_function(p);
    SpectrumSet s;
    if (c.count > 0) {
      // Enough window for count eigenvalues: about total length * rho / pi of them.
      double rho = std::acos(-1.0) * (c.count + f.tree.edge_count() + 4) / f.tree.total_length();
      for (int attempt = 0; attempt < 6; ++attempt, rho *= 1.3) {
        s = find_eigenvalues(delta, lo_default, rho * rho);
        if (s.count() >= c.count + 2) break;
      }
      if (s.count() < c.count)
        throw NumericalError("could not collect " + std::to_string(c.count) + " eigenvalues for " + p.tag);
    } else {
      const GridSpec g = parse_grid(c.grid.empty() ? "rho:0:10:2" : c.grid);
      const double lo = g.min <= 0.0 ? std::min(g.lambda_of(g.min), lo_default) : g.lambda_of(g.min);
      s = find_eigenvalues(delta, lo, g.lambda_of(g.max));
      // A window starting at rho > 0 is open on the left.
      if (g.min > 0.0)
        s.eigenvalues.erase(std::remove_if(s.eigenvalues.begin(), s.eigenvalues.end(),
                                           [&](const Eigenvalue& e) { return e.lambda <= g.lambda_of(g.min); }),
                            s.eigenvalues.end());
    }
    s.problem = p.tag;
    const auto path = (fs::path(out) / (p.tag + ".csv")).string();
    write_spectra_csv(path, {s});
    sum.note(p.tag + ": " + std::to_string(s.count()) + " eigenvalues (with multiplicity) on [" +
             format_double(s.window_min) + ", " + format_double(s.window_max) + "] -> " + path);
    sum.set(p.tag + ".count", s.count());
    sum.set(p.tag + ".distinct", s.eigenvalues.size());
    if (s.reference_count >= 0) sum.set(p.tag + ".reference_count", s.reference_count);
    sum.set(p.tag + ".file", path);
  }
  sum.set("problems", problems.size());
  return sum.finish(kOk, c.out);
}

// ----------------------------------------------------------------------------- verify

struct SuiteResult {
  std::string name;
  double residual = 0.0;
  double tol = 0.0;
  bool passed = true;
  std::string note;
};

SuiteResult split_suite(const ProblemSpec& spec, const std::vector<cplx>& grid, double tol, int corrupt_row) {
  SuiteResult r{"split", 0.0, tol, true, {}};
  const auto internal = spec.tree.internal_vertices();
  if (internal.empty()) {
    r.note = "no internal vertex";
    return r;
  }
  AssemblyHooks hooks;
  hooks.corrupt_row = corrupt_row;
  const CharFn whole = assemble_char_fn(spec, hooks);
  const auto w = whole.evaluate(grid);
  for (VertexId v : internal) {
    const auto s = char_fn_by_split(spec, v).evaluate(grid);
    const cplx ratio0 = s[0] / w[0];
    for (std::size_t k = 1; k < grid.size(); ++k) r.residual = std::max(r.residual, std::abs(s[k] / w[k] / ratio0 - 1.0));
  }
  r.passed = r.residual <= tol;
  r.note = std::to_string(internal.size()) + " split vertices";
  return r;
}

SuiteResult pair_suite(const ProblemSpec& spec, const std::vector<cplx>& grid, double tol) {
  SuiteResult r{"pairs", 0.0, tol, true, {}};
  const auto& t = spec.tree;
  if (t.internal_vertices().empty()) {
    r.note = "no internal vertex";
    return r;
  }
  const auto b = t.boundary_vertices();
  int common = 0, split = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j) {
      const VertexId n1 = t.edge(t.incident(b[i]).front()).other(b[i]);
      const VertexId n2 = t.edge(t.incident(b[j]).front()).other(b[j]);
      if (n1 == n2) {
        r.residual = std::max(r.residual, pair_identity_common_vertex(spec, b[i], b[j], grid));
        ++common;
      } else {
        r.residual = std::max(r.residual, pair_identity_split(spec, b[i], b[j], grid));
        ++split;
      }
    }
  r.passed = r.residual <= tol;
  r.note = std::to_string(common) + " common-vertex pairs, " + std::to_string(split) + " split pairs";
  return r;
}

std::vector<SuiteResult> form_suites(const ProblemSpec& spec, const std::vector<cplx>& grid, double tol) {
  std::vector<SuiteResult> out;
  const auto& t = spec.tree;
  for (const auto& e : t.edges()) {
    if (t.degree(e.at_zero) != 3 || t.degree(e.at_end) != 3 || std::abs(e.length - 1.0) > 1e-12) continue;
    const auto rep = identity_suite_q0(t, e.id, grid, tol);
    for (const auto& ch : rep.checks)
      out.push_back({"forms.e" + std::to_string(e.id) + "." + ch.name, ch.max_error, ch.tol, ch.passed, "q = 0"});
  }
  if (out.empty()) out.push_back({"forms", 0.0, tol, true, "no unit internal edge between degree-3 vertices"});
  return out;
}

SuiteResult wronskian_suite(const ProblemSpec& spec, const std::vector<cplx>& grid) {
  SuiteResult r{"wronskian", 0.0, 10.0 * spec.ode.tol, true, {}};
  std::vector<SpectralParameter> sps;
  for (cplx l : grid) sps.push_back(SpectralParameter::from_lambda(l));
  for (const auto& e : spec.tree.edges()) {
    for (const auto& fp : fundamental_pair_grid(e, spec.potential(e.id), sps, spec.ode))
      r.residual = std::max(r.residual, std::abs(fp.C * fp.Sp - fp.Cp * fp.S - 1.0));
  }
  r.passed = r.residual <= r.tol;
  return r;
}

std::vector<SuiteResult> asymptotic_suites(const ProblemSpec& spec, double rho_max) {
  std::vector<SuiteResult> out;
  const CharFn delta = characteristic_function(spec);
  const int d = decay_order(spec);
  const double slope = decay_slope(delta, 10.0, 40.0);
  out.push_back({"asymptotics.order", std::abs(slope + d), 0.2, std::abs(slope + d) <= 0.2,
                 "fitted power " + format_double(slope) + ", order d = " + std::to_string(d)});
  SearchOptions so;
  so.check_density = false;
  const double lo = -2.0, hi = rho_max * rho_max;
  const auto s = find_eigenvalues(delta, lo, hi, -1, so);
  const auto ref = find_eigenvalues(characteristic_function(spec.with_zero_potential()), lo, hi, -1, so);
  const double gap = std::abs(s.count() - ref.count());
  out.push_back({"asymptotics.count", gap, 2.0, gap <= 2.0,
                 std::to_string(s.count()) + " eigenvalues against " + std::to_string(ref.count()) + " for q = 0"});
  return out;
}

int cmd_verify(const Config& c) {
  Summary sum("verify");
  const TreeFile f = load_tree(c.tree);
  ProblemSpec spec = f.problem();
  spec.ode.tol = c.tol_int;
  const GridSpec g = parse_grid(c.grid.empty() ? "rho:0.6:6:20:0.5" : c.grid);
  const auto grid = g.lambdas();
  static const std::set<std::string> known{"all", "split", "pairs", "forms", "wronskian", "asymptotics"};
  if (!known.count(c.suite)) throw ValidationError("unknown suite \"" + c.suite + "\"");
  auto want = [&](const char* s) { return c.suite == "all" || c.suite == s; };

  std::vector<SuiteResult> results;
  if (want("split")) results.push_back(split_suite(spec, grid, c.tol_id, c.corrupt_row));
  if (want("pairs")) results.push_back(pair_suite(spec, grid, c.tol_id));
  if (want("forms"))
    for (auto& r : form_suites(spec, grid, c.tol_id)) results.push_back(r);
  if (want("wronskian")) results.push_back(wronskian_suite(spec, grid));
  if (want("asymptotics"))
    for (auto& r : asymptotic_suites(spec, std::max(std::abs(std::sqrt(grid.back())), 5.0))) results.push_back(r);

  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed;
    sum.note((r.passed ? "PASS " : "FAIL ") + r.name + "  residual " + format_double(r.residual) + "  tol " +
             format_double(r.tol) + (r.note.empty() ? "" : "  (" + r.note + ")"));
    sum.set(r.name + ".residual", r.residual);
    sum.set(r.name + ".status", r.passed);
  }
  sum.set("suites", results.size());
  sum.set("status", ok);
  return sum.finish(ok ? kOk : kIdentity, c.out);
}

// ---------------------------------------------------------------------------- example

int cmd_example(const Config& c) {
  Summary sum("example");
  const GridSpec g = parse_grid(c.grid.empty() ? "rho:0.3:6:50" : c.grid);
  if (!g.rho || g.imag != 0.0) throw ValidationError("the example needs a real rho grid");
  const auto rhos = g.reals();
  const auto rep = compare_five_edge_example(rhos);
  bool ok = true;
  sum.note("five-edge tree, unit edges, q = 0: library values against the closed forms");
  for (const auto& [name, err] : rep.max_error) {
    const bool pass = err <= c.tol_id;
    ok = ok && pass;
    sum.note(std::string(pass ? "PASS " : "FAIL ") + name + "  max relative error " + format_double(err));
    sum.set(name + ".max_error", err);
  }
  sum.set("points", rep.kept.size());
  sum.set("excluded", rep.excluded.size());
  for (double r : rep.excluded) sum.note("excluded rho = " + format_double(r) + " (trigonometric zero)");

  // Root asymptotics where rho is large enough for them to mean something.
  std::vector<double> large;
  for (double r : rep.kept)
    if (r >= 10.0) large.push_back(r);
  if (!large.empty()) {
    const auto ra = five_edge_root_asymptotics(large, {});
    double first = 0.0, second = 0.0, scaled = 0.0;
    for (std::size_t i = 0; i < large.size(); ++i) {
      first = std::max(first, ra.first_error[i] * large[i]);
      second = std::max(second, ra.second_error[i]);
      scaled = std::max(scaled, ra.second_error_scaled[i]);
    }
    // The first root must agree up to a factor 1 + O(1 / rho).
    const bool pass = first <= 1.0;
    ok = ok && pass;
    sum.note(std::string(pass ? "PASS " : "FAIL ") + "first root against rho cot rho, max rho * error " +
             format_double(first));
    sum.note("second root against the printed form: max error " + format_double(second) +
             "; against rho times the printed form: " + format_double(scaled));
    sum.set("first_root.scaled_error", first);
    sum.set("second_root.error", second);
    sum.set("second_root.rho_scaled_error", scaled);
  }
  sum.set("status", ok);
  return sum.finish(ok ? kOk : kNumerical, c.out);
}

// ---------------------------------------------------------------------------- inverse

int cmd_inverse(const Config& c) {
  Summary sum("inverse");
  if (c.known_edge < 0) throw ValidationError("--known-edge is required");
  if (c.spectra_dir.empty()) throw ValidationError("--spectra-dir is required");
  const TreeFile f = load_tree(c.tree);
  for (const auto& [v, cond] : f.bc)
    if (cond != Condition::Dirichlet)
      throw ValidationError("the inverse problem uses Dirichlet conditions at every boundary vertex");
  if (!f.tree.has_edge(c.known_edge)) throw ValidationError("unknown edge " + std::to_string(c.known_edge));

  InverseProblem problem;
  problem.tree = f.tree;
  problem.known_edge = c.known_edge;
  auto kq = f.q.find(c.known_edge);
  problem.known_potential = kq == f.q.end() ? Potential::zero() : kq->second;
  for (auto& s : read_spectra_dir(c.spectra_dir)) {
    SpectrumInput in;
    if (s.problem == "L0") {
      in.is_l0 = true;
    } else {
      std::size_t used = 0;
      int v = -1;
      if (s.problem.size() > 1 && s.problem[0] == 'L') {
        try {
          v = std::stoi(s.problem.substr(1), &used);
        } catch (const std::exception&) {
          used = 0;
        }
      }
      if (used == 0 || used + 1 != s.problem.size())
        throw ValidationError("spectrum problem name \"" + s.problem + "\" is not L0 or L<vertex>");
      in.vertex = v;
    }
    in.spectrum = std::move(s);
    problem.spectra.push_back(std::move(in));
  }

  InverseOptions opts;
  opts.truncation = c.truncation;
  opts.edge_fit.tol = c.tol_opt;
  opts.spec_tol = c.spec_tol;
  opts.basis.dimension = c.basis_dim;
  const InverseResult res = run_partial_inverse(problem, opts);

  for (const auto& st : res.stages) {
    sum.note("stage " + st.stage + "  residual " + format_double(st.residual) + (st.note.empty() ? "" : "  " + st.note));
    sum.set("stage." + st.stage, st.residual);
  }
  for (const auto& [e, r] : res.recovered) {
    std::string params;
    for (double p : r.params) params += (params.empty() ? "" : " ") + format_double(p);
    sum.note("edge " + std::to_string(e) + ": " + r.potential().kind() + " [" + params + "]");
    sum.set("edge." + std::to_string(e) + ".params", params);
  }
  sum.set("max_eigenvalue_mismatch", res.max_mismatch);
  sum.set("certified", res.certified);
  sum.note(res.certified ? "certificate passed" : "certificate FAILED");

  if (!c.out.empty()) {
    fs::create_directories(c.out);
    const auto qpath = (fs::path(c.out) / "recovered.json").string();
    save_tree(qpath, f.tree, res.q, f.bc);
    std::ofstream cert(fs::path(c.out) / "certificate.txt");
    cert << "known_edge=" << c.known_edge << '\n' << "truncation=" << c.truncation << '\n';
    for (const auto& st : res.stages) cert << "stage." << st.stage << '=' << format_double(st.residual) << '\n';
    for (std::size_t i = 0; i < res.eigenvalue_mismatch.size(); ++i)
      cert << "mismatch." << i << '=' << format_double(res.eigenvalue_mismatch[i]) << '\n';
    cert << "max_eigenvalue_mismatch=" << format_double(res.max_mismatch) << '\n';
    cert << "spec_tol=" << format_double(c.spec_tol) << '\n';
    cert << "certified=" << (res.certified ? "pass" : "fail") << '\n';
    sum.set("recovered_file", qpath);
  }
  return sum.finish(res.certified ? kOk : kNumerical, c.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward and partial inverse spectral problems on metric trees"};
  app.require_subcommand(1);
  Config c;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--tol-int", c.tol_int, "integration tolerance")->capture_default_str();
    sub->add_option("--tol-id", c.tol_id, "identity tolerance")->capture_default_str();
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--grid", c.grid, "rho|lambda:min:max:count[:imag]");
  };

  auto* spectra = app.add_subcommand("spectra", "eigenvalues of L_0 and of the requested L_k");
  spectra->add_option("--tree", c.tree, "tree description file")->required();
  spectra->add_option("--neumann", c.neumann, "boundary vertices k for the problems L_k");
  spectra->add_option("--known-edge", c.known_edge, "add every L_k the inverse problem needs for this edge");
  spectra->add_option("--count", c.count, "collect this many eigenvalues per problem instead of a window");
  common(spectra);

  auto* verify = app.add_subcommand("verify", "identity suites on a tree");
  verify->add_option("--tree", c.tree, "tree description file")->required();
  verify->add_option("--suite", c.suite, "all, split, pairs, forms, wronskian or asymptotics")->capture_default_str();
  verify->add_option("--corrupt-row", c.corrupt_row, "test hook: flip the sign of one determinant row");
  common(verify);

  auto* example = app.add_subcommand("example", "five-edge tree closed forms");
  common(example);

  auto* inverse = app.add_subcommand("inverse", "recover the unknown edge potentials");
  inverse->add_option("--tree", c.tree, "tree description file; supplies the known edge potential")->required();
  inverse->add_option("--known-edge", c.known_edge, "edge with the known potential")->required();
  inverse->add_option("--spectra-dir", c.spectra_dir, "directory of spectrum CSV files")->required();
  inverse->add_option("--truncation", c.truncation, "eigenvalues used per spectrum")->capture_default_str();
  inverse->add_option("--tol-opt", c.tol_opt, "Weyl mismatch accepted per edge fit")->capture_default_str();
  inverse->add_option("--spec-tol", c.spec_tol, "certificate tolerance on eigenvalues")->capture_default_str();
  inverse->add_option("--basis-dim", c.basis_dim, "piecewise-constant cells per edge")->capture_default_str();
  common(inverse);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cout << "error=" << e.what() << "\nexit_status=" << kValidation << '\n';
    return kValidation;
  }

  auto fail = [](const char* kind, const std::exception& e, int status) {
    std::cerr << kind << ": " << e.what() << '\n';
    std::cout << "# " << kind << ": " << e.what() << "\nerror=" << kind << "\nexit_status=" << status << '\n';
    return status;
  };
  try {
    check_tolerances(c);
    if (c.truncation < 1) throw ValidationError("--truncation must be positive");
    if (*spectra) return cmd_spectra(c);
    if (*verify) return cmd_verify(c);
    if (*example) return cmd_example(c);
    return cmd_inverse(c);
  } catch (const ValidationError& e) {
    return fail("validation failed", e, kValidation);
  } catch (const IdentityError& e) {
    return fail("identity failure", e, kIdentity);
  } catch (const NumericalError& e) {
    return fail("numerical failure", e, kNumerical);
  } catch (const std::exception& e) {
    return fail("numerical failure", e, kNumerical);
  }
}
