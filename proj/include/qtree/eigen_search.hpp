#pragma once

#include <string>
#include <vector>

#include "qtree/char_fn.hpp"

namespace qtree {

struct Eigenvalue {
  double lambda = 0.0;
  int multiplicity = 1;
  double box_halfwidth = 0.0;  // half width (in lambda) of the certifying box
};

struct SpectrumSet {
  std::string problem;
  std::vector<Eigenvalue> eigenvalues;  // increasing
  double window_min = 0.0;
  double window_max = 0.0;
  int reference_count = -1;  // zeros of the q = 0 problem in the same window, if computed

  int count() const;                    // with multiplicity
  std::vector<double> expanded() const;  // multiplicities repeated
};

struct SearchOptions {
  // Scan step in t (lambda = sign(t) t^2) is pi * step_factor / total length.
  double step_factor = 1.0 / 16.0;
  // Total length used for the step; 0 takes it from the characteristic function's spec.
  double length = 0.0;
  // Boxes narrower than this (relative to max(1, |lambda|)) holding several zeros are
  // reported as one multiple eigenvalue.
  double merge_width = 1e-6;
  // Compare the count with the zero-potential problem on the same window (needs a spec).
  bool check_density = true;
  int density_slack = 2;
  int rescans = 3;
};

// Zeros inside the rectangle [lo.real, hi.real] x [lo.imag, hi.imag] by the argument
// principle with adaptive phase tracking. Throws if the contour passes too close to a zero.
int count_zeros_in_box(const CharFn& f, cplx lo, cplx hi);

// Power sums of the zeros (relative to `center`) inside a circle, p = 0..order.
std::vector<cplx> contour_moments(const CharFn& f, cplx center, double radius, int order,
                                  int nodes = 128);

SpectrumSet find_eigenvalues(const CharFn& f, double lambda_min, double lambda_max,
                             int count_hint = -1, const SearchOptions& opts = {});

}  // namespace qtree
