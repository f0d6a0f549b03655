#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace qtree {

/// Nonlinear least squares: minimize |r(x)|^2 over x.
struct LeastSquaresProblem {
  int parameters = 0;
  int residuals = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
};

struct FitOptions {
  double tol = 1e-12;          // relative reduction / step tolerance handed to the solver
  int max_evaluations = 4000;  // residual evaluations, Jacobian columns included
  double fd_step = 1e-6;       // relative central-difference step for the Jacobian
};

struct FitResult {
  Eigen::VectorXd x;
  double norm = 0.0;            // |r(x)|
  std::vector<double> history;  // |r| after each accepted iteration, starting at x0
  int evaluations = 0;
  bool converged = false;
  std::string status;
};

FitResult least_squares(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0,
                        const FitOptions& opts = {});

}  // namespace qtree
