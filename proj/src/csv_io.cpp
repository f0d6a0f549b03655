#include "qtree/csv_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "qtree/errors.hpp"

namespace qtree {

namespace {

const char* kSpectraHeader = "problem,lambda,multiplicity";
const char* kWeylHeader = "vertex,re_lambda,im_lambda,re_M,im_M";

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  // strtod, unlike stod, accepts subnormals
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(x))
    throw ValidationError(where + ": not a number: \"" + s + "\"");
  return x;
}

int parse_int(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  int x = 0;
  try {
    x = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ValidationError(where + ": not an integer: \"" + s + "\"");
  return x;
}

template <class Row>
void read_rows(std::istream& in, const std::string& source, const char* header, std::size_t columns, Row&& row) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != header)
    throw ValidationError(source + ": expected header \"" + header + "\"");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (cells.size() != columns)
      throw ValidationError(where + ": expected " + std::to_string(columns) + " columns");
    row(cells, where);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_spectra_csv(std::ostream& out, const std::vector<SpectrumSet>& sets) {
  out << kSpectraHeader << '\n';
  for (const auto& s : sets)
    for (const auto& e : s.eigenvalues) out << s.problem << ',' << format_double(e.lambda) << ',' << e.multiplicity << '\n';
}

void write_spectra_csv(const std::string& path, const std::vector<SpectrumSet>& sets) {
  auto out = open_out(path);
  write_spectra_csv(out, sets);
}

std::vector<SpectrumSet> read_spectra_csv(std::istream& in, const std::string& source) {
  std::vector<SpectrumSet> sets;
  std::map<std::string, std::size_t> index;
  read_rows(in, source, kSpectraHeader, 3, [&](const std::vector<std::string>& c, const std::string& where) {
    if (c[0].empty()) throw ValidationError(where + ": empty problem name");
    Eigenvalue e;
    e.lambda = parse_double(c[1], where);
    e.multiplicity = parse_int(c[2], where);
    if (e.multiplicity < 1) throw ValidationError(where + ": multiplicity must be positive");
    auto [it, fresh] = index.try_emplace(c[0], sets.size());
    if (fresh) {
      sets.emplace_back();
      sets.back().problem = c[0];
    }
    auto& ev = sets[it->second].eigenvalues;
    if (!ev.empty() && !(e.lambda > ev.back().lambda))
      throw ValidationError(where + ": eigenvalues of " + c[0] + " must be strictly increasing");
    ev.push_back(e);
  });
  for (auto& s : sets) {
    const auto& ev = s.eigenvalues;
    const double first = ev.front().lambda, last = ev.back().lambda;
    const double gap = ev.size() > 1 ? last - ev[ev.size() - 2].lambda : 1.0;
    s.window_min = std::min(first - 1.0, -1.0);
    s.window_max = last + 0.5 * gap;
  }
  return sets;
}

std::vector<SpectrumSet> read_spectra_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_spectra_csv(in, path);
}

std::vector<SpectrumSet> read_spectra_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("spectra directory " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<SpectrumSet> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string first;
    std::getline(in, first);
    if (trim(first) != kSpectraHeader) continue;
    in.clear();
    in.seekg(0);
    for (auto& s : read_spectra_csv(in, f.string())) {
      for (const auto& o : out)
        if (o.problem == s.problem) throw ValidationError("problem " + s.problem + " appears in several files");
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) throw ValidationError("no spectrum files in " + dir);
  return out;
}

void write_weyl_csv(std::ostream& out, const std::vector<WeylSample>& samples) {
  out << kWeylHeader << '\n';
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.lambdas.size(); ++i)
      out << s.vertex << ',' << format_double(s.lambdas[i].real()) << ',' << format_double(s.lambdas[i].imag())
          << ',' << format_double(s.values[i].real()) << ',' << format_double(s.values[i].imag()) << '\n';
}

void write_weyl_csv(const std::string& path, const std::vector<WeylSample>& samples) {
  auto out = open_out(path);
  write_weyl_csv(out, samples);
}

std::vector<WeylSample> read_weyl_csv(std::istream& in, const std::string& source) {
  std::vector<WeylSample> out;
  std::map<VertexId, std::size_t> index;
  read_rows(in, source, kWeylHeader, 5, [&](const std::vector<std::string>& c, const std::string& where) {
    const VertexId v = parse_int(c[0], where);
    auto [it, fresh] = index.try_emplace(v, out.size());
    if (fresh) {
      out.emplace_back();
      out.back().vertex = v;
    }
    auto& s = out[it->second];
    s.lambdas.emplace_back(parse_double(c[1], where), parse_double(c[2], where));
    s.values.emplace_back(parse_double(c[3], where), parse_double(c[4], where));
  });
  return out;
}

}  // namespace qtree
