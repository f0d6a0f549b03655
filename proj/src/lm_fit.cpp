#include "qtree/lm_fit.hpp"

#include <unsupported/Eigen/LevenbergMarquardt>
#include <cmath>

#include "qtree/errors.hpp"

namespace qtree {

namespace {

struct Functor : Eigen::DenseFunctor<double> {
  const LeastSquaresProblem& p;
  double step;
  int* evaluations;

  Functor(const LeastSquaresProblem& prob, double h, int* count)
      : Eigen::DenseFunctor<double>(prob.parameters, prob.residuals), p(prob), step(h), evaluations(count) {}

  int operator()(const InputType& x, ValueType& f) const {
    f = p.residual(x);
    ++*evaluations;
    if (f.size() != p.residuals) throw NumericalError("residual size changed during the fit");
    return f.allFinite() ? 0 : -1;
  }

  int df(const InputType& x, JacobianType& jac) const {
    InputType xp = x;
    for (int j = 0; j < p.parameters; ++j) {
      const double h = step * std::max(1.0, std::abs(x(j)));
      xp(j) = x(j) + h;
      const Eigen::VectorXd fp = p.residual(xp);
      xp(j) = x(j) - h;
      const Eigen::VectorXd fm = p.residual(xp);
      xp(j) = x(j);
      *evaluations += 2;
      jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac.allFinite() ? 0 : -1;
  }
};

std::string status_text(Eigen::LevenbergMarquardtSpace::Status s) {
  using namespace Eigen::LevenbergMarquardtSpace;
  switch (s) {
    case RelativeReductionTooSmall: return "relative reduction below tolerance";
    case RelativeErrorTooSmall: return "relative step below tolerance";
    case RelativeErrorAndReductionTooSmall: return "step and reduction below tolerance";
    case CosinusTooSmall: return "residual orthogonal to the Jacobian";
    case TooManyFunctionEvaluation: return "evaluation budget exhausted";
    case FtolTooSmall: return "ftol too small";
    case XtolTooSmall: return "xtol too small";
    case GtolTooSmall: return "gtol too small";
    case UserAsked: return "non-finite residual";
    default: return "solver error";
  }
}

}  // namespace

FitResult least_squares(const LeastSquaresProblem& problem, const Eigen::VectorXd& x0, const FitOptions& opts) {
  if (problem.parameters <= 0 || problem.residuals < problem.parameters)
    throw ValidationError("least squares needs at least as many residuals as parameters");
  int evaluations = 0;
  Functor f(problem, opts.fd_step, &evaluations);
  Eigen::LevenbergMarquardt<Functor> lm(f);
  lm.setFtol(opts.tol);
  lm.setXtol(opts.tol);
  lm.setGtol(0.0);
  lm.setMaxfev(opts.max_evaluations);

  FitResult out;
  Eigen::VectorXd x = x0;
  auto status = lm.minimizeInit(x);
  if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters)
    throw NumericalError("least squares: improper input");
  out.history.push_back(lm.fnorm());
  do {
    status = lm.minimizeOneStep(x);
    if (lm.fnorm() < out.history.back()) out.history.push_back(lm.fnorm());
  } while (status == Eigen::LevenbergMarquardtSpace::Running && evaluations < opts.max_evaluations);

  out.x = x;
  out.norm = problem.residual(x).norm();
  out.evaluations = evaluations;
  out.status = status_text(status);
  using namespace Eigen::LevenbergMarquardtSpace;
  out.converged = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                  status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall;
  return out;
}

}  // namespace qtree
