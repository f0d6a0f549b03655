#pragma once

#include <complex>
#include <vector>

#include "qtree/graph_model.hpp"
#include "qtree/potential.hpp"

namespace qtree {

using cplx = std::complex<double>;

/// lambda together with its principal square root: Re rho >= 0, and Im rho >= 0 on the cut.
struct SpectralParameter {
  cplx lambda;
  cplx rho;

  static SpectralParameter from_lambda(cplx lambda);
  static SpectralParameter from_rho(cplx rho);  // normalizes rho onto the principal branch
};

cplx principal_sqrt(cplx z);

/// Values of C, S and their x-derivatives at one point.
struct FundamentalPair {
  cplx C{1.0, 0.0};
  cplx S{0.0, 0.0};
  cplx Cp{0.0, 0.0};
  cplx Sp{1.0, 0.0};

  cplx wronskian() const { return C * Sp - Cp * S; }
  // Fundamental pair of the same edge with x measured from the other end, evaluated at x = T.
  FundamentalPair reversed() const { return {Sp, S, Cp, C}; }
  // Composition: first this transfer, then `next`.
  FundamentalPair then(const FundamentalPair& next) const;
};

// Closed form for q = c on [0, x]; uses a series when |(lambda - c) x^2| is small.
FundamentalPair constant_pair(double c, double x, cplx lambda);

struct OdeOptions {
  double tol = 1e-11;
  // Step size cap as a fraction of the local wavelength 1/|sqrt(lambda - q)|.
  double oscillation_fraction = 0.5;
  long max_steps = 4'000'000;
};

FundamentalPair fundamental_pair(const Edge& edge, const Potential& q, double x,
                                 const SpectralParameter& sp, const OdeOptions& opts = {});

inline FundamentalPair fundamental_pair(const Edge& edge, const Potential& q, double x,
                                        const SpectralParameter& sp, double tol) {
  OdeOptions o;
  o.tol = tol;
  return fundamental_pair(edge, q, x, sp, o);
}

// Values at x = T for every spectral parameter; OpenMP over the batch.
std::vector<FundamentalPair> fundamental_pair_grid(const Edge& edge, const Potential& q,
                                                   const std::vector<SpectralParameter>& sps,
                                                   const OdeOptions& opts = {});

// Serial reference kept for tests and benchmarks.
std::vector<FundamentalPair> fundamental_pair_grid_serial(const Edge& edge, const Potential& q,
                                                          const std::vector<SpectralParameter>& sps,
                                                          const OdeOptions& opts = {});

}  // namespace qtree
