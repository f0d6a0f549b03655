#include "qtree/eigen_search.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <sstream>

#include "qtree/errors.hpp"

namespace qtree {

int SpectrumSet::count() const {
  int n = 0;
  for (const auto& e : eigenvalues) n += e.multiplicity;
  return n;
}

std::vector<double> SpectrumSet::expanded() const {
  std::vector<double> out;
  for (const auto& e : eigenvalues)
    for (int k = 0; k < e.multiplicity; ++k) out.push_back(e.lambda);
  return out;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

double t_of(double lambda) { return lambda >= 0 ? std::sqrt(lambda) : -std::sqrt(-lambda); }
double lambda_of(double t) { return t >= 0 ? t * t : -t * t; }

std::string interval_text(double a, double b) {
  std::ostringstream os;
  os.precision(12);
  os << "[" << a << ", " << b << "]";
  return os.str();
}

// Phase increment of f along the segment z0 -> z1, subdividing until steps are small.
double phase_walk(const CharFn& f, cplx z0, cplx f0, cplx z1, cplx f1, int depth) {
  const double d = std::arg(f1 / f0);
  if (std::abs(d) < kPi / 6.0 || depth >= 48) {
    if (depth >= 48) throw NumericalError("contour passes too close to a zero", z0);
    return d;
  }
  const cplx zm = 0.5 * (z0 + z1);
  const cplx fm = f(zm);
  if (std::abs(fm) == 0.0 || !std::isfinite(std::abs(fm)))
    throw NumericalError("contour passes through a zero", zm);
  return phase_walk(f, z0, f0, zm, fm, depth + 1) + phase_walk(f, zm, fm, z1, f1, depth + 1);
}

double contour_phase(const CharFn& f, const std::vector<cplx>& corners, double length) {
  double total = 0.0;
  for (std::size_t s = 0; s < corners.size(); ++s) {
    const cplx a = corners[s];
    const cplx b = corners[(s + 1) % corners.size()];
    // Initial resolution: about ten samples per local oscillation of the function.
    const double rho = std::sqrt(std::max(std::abs(a), std::abs(b))) + 1.0;
    const double wavelength = 2.0 * rho * kPi / std::max(length, 1e-12);
    const int n = std::clamp(static_cast<int>(std::ceil(10.0 * std::abs(b - a) / wavelength)), 8, 20000);
    cplx z0 = a, f0 = f(a);
    if (std::abs(f0) == 0.0) throw NumericalError("contour corner is a zero", a);
    for (int k = 1; k <= n; ++k) {
      const cplx z1 = a + (b - a) * (static_cast<double>(k) / n);
      const cplx f1 = f(z1);
      if (std::abs(f1) == 0.0) throw NumericalError("contour passes through a zero", z1);
      total += phase_walk(f, z0, f0, z1, f1, 0);
      z0 = z1;
      f0 = f1;
    }
  }
  return total;
}

int rounded_count(double phase, cplx where) {
  const double w = phase / (2.0 * kPi);
  const double r = std::round(w);
  if (std::abs(w - r) > 0.05)
    throw NumericalError("winding number is not an integer near the requested box", where);
  return static_cast<int>(r);
}

double length_of(const CharFn& f, const SearchOptions& opts) {
  if (opts.length > 0.0) return opts.length;
  if (f.spec()) return f.spec()->tree.total_length();
  return 1.0;
}

int box_count(const CharFn& f, double a, double b, double height, double length) {
  std::vector<cplx> corners{cplx(a, -height), cplx(b, -height), cplx(b, height), cplx(a, height)};
  return rounded_count(contour_phase(f, corners, length), cplx(0.5 * (a + b), 0.0));
}

struct Finder {
  const CharFn& f;
  const SearchOptions& opts;
  double length;
  std::vector<Eigenvalue> found;

  double box_height(double a, double b) const { return 0.5 * (b - a); }

  double centroid(double a, double b, int n) const {
    const cplx c(0.5 * (a + b), 0.0);
    auto m = contour_moments(f, c, 0.5 * (b - a), 1);
    if (std::abs(m[0] - static_cast<double>(n)) > 0.05)
      throw NumericalError("moment count disagrees with the box count on " + interval_text(a, b), c);
    return (c + m[1] / m[0]).real();
  }

  void resolve(double a, double b, int n) {
    if (n == 0) return;
    const double mid = 0.5 * (a + b);
    if (n == 1) {
      const double fa = f(a).real(), fb = f(b).real();
      double x = mid;
      if (fa == 0.0) {
        x = a;
      } else if (fb == 0.0) {
        x = b;
      } else if ((fa < 0) != (fb < 0)) {
        auto g = [&](double l) { return f(l).real(); };
        std::uintmax_t iters = 200;
        auto r = boost::math::tools::toms748_solve(g, a, b, fa, fb,
                                                   boost::math::tools::eps_tolerance<double>(52), iters);
        x = 0.5 * (r.first + r.second);
      } else {
        x = centroid(a, b, 1);
      }
      found.push_back({x, 1, 0.5 * (b - a)});
      return;
    }
    const double tmid = t_of(mid);
    const double width_t = std::abs(t_of(b) - t_of(a));
    if (width_t < opts.merge_width * std::max(1.0, std::abs(tmid)) / std::max(length, 1e-12) ||
        width_t < 1e-4 / std::max(length, 1e-12)) {
      found.push_back({centroid(a, b, n), n, 0.5 * (b - a)});
      return;
    }
    // Split where |f| is largest among a few interior points, away from the zeros.
    double best = mid, best_val = -1.0;
    for (double s : {0.5, 0.37, 0.63, 0.29, 0.71}) {
      const double x = a + s * (b - a);
      const double v = std::abs(f(x));
      if (v > best_val) {
        best_val = v;
        best = x;
      }
    }
    const int left = box_count(f, a, best, box_height(a, best), length);
    const int right = box_count(f, best, b, box_height(best, b), length);
    if (left + right != n)
      throw NumericalError("cannot certify zeros on " + interval_text(a, b) + ": subdivided counts " +
                               std::to_string(left) + " + " + std::to_string(right) + " != " +
                               std::to_string(n),
                           cplx(mid, 0.0));
    resolve(a, best, left);
    resolve(best, b, right);
  }
};

}  // namespace

int count_zeros_in_box(const CharFn& f, cplx lo, cplx hi) {
  const double length = f.spec() ? f.spec()->tree.total_length() : 1.0;
  std::vector<cplx> corners{lo, cplx(hi.real(), lo.imag()), hi, cplx(lo.real(), hi.imag())};
  return rounded_count(contour_phase(f, corners, length), 0.5 * (lo + hi));
}

std::vector<cplx> contour_moments(const CharFn& f, cplx center, double radius, int order, int nodes) {
  std::vector<cplx> s(order + 1, 0.0);
  const double h = 1e-3 * radius;
  for (int k = 0; k < nodes; ++k) {
    const cplx u = std::polar(radius, 2.0 * kPi * (k + 0.5) / nodes);
    const cplx z = center + u;
    const cplx fz = f(z);
    const cplx d = (f(z - 2.0 * h) - 8.0 * f(z - h) + 8.0 * f(z + h) - f(z + 2.0 * h)) / (12.0 * h);
    const cplx ratio = d / fz;
    cplx w = u;
    for (int p = 0; p <= order; ++p) {
      s[p] += w * ratio;
      w *= u;
    }
  }
  for (auto& v : s) v /= static_cast<double>(nodes);
  return s;
}

SpectrumSet find_eigenvalues(const CharFn& f, double lambda_min, double lambda_max, int count_hint,
                             const SearchOptions& opts) {
  if (!(lambda_min < lambda_max)) throw ValidationError("eigenvalue window must satisfy min < max");
  const double length = length_of(f, opts);
  double dt = kPi * opts.step_factor / length;

  SpectrumSet out;
  out.problem = f.tag();
  out.window_min = lambda_min;
  out.window_max = lambda_max;

  std::string last_failure;
  bool done = false;
  for (int attempt = 0; attempt <= opts.rescans && !done; ++attempt, dt *= 0.5) {
    // Grid shifted by a fraction of a step on retries so that contours move.
    const double shift = attempt * 0.31 * dt;
    const double t_lo = t_of(lambda_min) - dt - shift;
    const double t_hi = t_of(lambda_max) + dt;
    const int n = static_cast<int>(std::ceil((t_hi - t_lo) / dt)) + 1;
    std::vector<cplx> lambdas(n);
    for (int i = 0; i < n; ++i) lambdas[i] = lambda_of(t_lo + dt * i);
    const auto vals = f.evaluate(lambdas);

    // Candidate index ranges: sign changes and local minima of |f|.
    std::vector<std::pair<int, int>> ranges;
    for (int i = 0; i + 1 < n; ++i)
      if ((vals[i].real() < 0) != (vals[i + 1].real() < 0) || vals[i].real() == 0.0) ranges.push_back({i, i + 1});
    for (int i = 1; i + 1 < n; ++i)
      if (std::abs(vals[i]) <= std::abs(vals[i - 1]) && std::abs(vals[i]) <= std::abs(vals[i + 1]))
        ranges.push_back({i - 1, i + 1});
    std::sort(ranges.begin(), ranges.end());
    std::vector<std::pair<int, int>> clusters;
    for (auto r : ranges) {
      if (!clusters.empty() && r.first < clusters.back().second)
        clusters.back().second = std::max(clusters.back().second, r.second);
      else
        clusters.push_back(r);
    }

    Finder finder{f, opts, length, {}};
    try {
      int total_found = 0;
      for (auto [i, j] : clusters) {
        const double a = lambdas[i].real(), b = lambdas[j].real();
        const int c = box_count(f, a, b, finder.box_height(a, b), length);
        total_found += c;
        finder.resolve(a, b, c);
      }
      // Everything between the scan ends must have been seen.
      const double a = lambdas.front().real(), b = lambdas.back().real();
      const double height = 0.5 / length * 2.0 * std::max(std::abs(t_lo), std::abs(t_hi)) + 0.5 * dt;
      const int total = box_count(f, a, b, height, length);
      if (total != total_found) {
        last_failure = "scan found " + std::to_string(total_found) + " zeros but the window " +
                       interval_text(a, b) + " holds " + std::to_string(total);
        continue;
      }
      done = true;
    } catch (const NumericalError& e) {
      last_failure = e.what();
      continue;
    }
    std::sort(finder.found.begin(), finder.found.end(),
              [](const Eigenvalue& x, const Eigenvalue& y) { return x.lambda < y.lambda; });
    for (const auto& e : finder.found)
      if (e.lambda >= lambda_min && e.lambda <= lambda_max) out.eigenvalues.push_back(e);
  }
  if (!done)
    throw NumericalError(f.tag() + ": failed to certify eigenvalues in " +
                         interval_text(lambda_min, lambda_max) + ": " + last_failure);

  if (count_hint >= 0) {
    out.reference_count = count_hint;
  } else if (opts.check_density && f.spec()) {
    SearchOptions ro = opts;
    ro.check_density = false;
    ro.length = length;
    const ProblemSpec ref = f.spec()->with_zero_potential();
    out.reference_count = find_eigenvalues(characteristic_function(ref), lambda_min, lambda_max, -1, ro).count();
  }
  if (out.reference_count >= 0 && std::abs(out.count() - out.reference_count) > opts.density_slack)
    throw NumericalError(f.tag() + ": " + std::to_string(out.count()) +
                         " eigenvalues found but the zero-potential problem has " +
                         std::to_string(out.reference_count) + " in " +
                         interval_text(lambda_min, lambda_max));
  return out;
}

}  // namespace qtree
