#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "qtree/ode_core.hpp"
#include "qtree/potential.hpp"

namespace qtree {

/// Closed forms for the five-edge tree (unit edges, q = 0, all Dirichlet), split at edge 3,
/// as trigonometric polynomials over powers of rho.
struct FiveEdgeForms {
  std::array<std::array<cplx, 4>, 3> a{};
  std::array<std::array<cplx, 4>, 2> b{};
  cplx A, B, C, D;
  cplx delta0;  // L_0
  cplx delta1;  // Neumann at vertex 1 (the same at vertex 4 by symmetry)
};

FiveEdgeForms five_edge_forms(cplx rho);

// Magnitude scale of each closed form: the sum of the absolute values of its terms.
// Errors are measured relative to max(|value|, floor * scale).
FiveEdgeForms five_edge_scales(cplx rho);

// Asymptotic roots of the zero-potential quadratic as printed.
cplx printed_first_root(cplx rho);   // rho cos(rho) / sin(rho)
cplx printed_second_root(cplx rho);  // -(1 + 6 cos^2 rho) / (3 sin(rho) cos(rho))

struct ExampleReport {
  std::map<std::string, double> max_error;  // per quantity, over the kept points
  std::vector<double> kept;                 // rho values used
  std::vector<double> excluded;             // rho values dropped by the floor
  double worst() const;
};

struct ExampleOptions {
  // Points with |sin k rho| or |cos k rho| below this (k = 1, 2, 3) are excluded.
  double trig_floor = 1e-6;
  // Relative errors use max(|value|, scale_floor * scale) as the denominator.
  double scale_floor = 1e-3;
};

// Coefficients computed by the library on the five-edge tree against the closed forms.
// Quantities: delta0, delta1, a, b, A, B, C, D.
ExampleReport compare_five_edge_example(const std::vector<double>& rhos, const ExampleOptions& opts = {});

struct RootAsymptotics {
  std::vector<double> rhos;
  std::vector<double> first_error;   // |root / printed - 1| for the root near rho cot rho
  std::vector<double> second_error;  // the same for the other root against the printed form
  std::vector<double> second_error_scaled;  // against rho times the printed form
};

// Roots of the quadratic for the five-edge tree with potential q (q = {} for zero).
RootAsymptotics five_edge_root_asymptotics(const std::vector<double>& rhos, const PotentialSet& q);

}  // namespace qtree
