#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <vector>

namespace nebid {

// Value, gradient and a positive semidefinite curvature model at a point.
struct LocalModel {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Returns std::nullopt (or a non-finite value) for inadmissible points. When
// `with_derivatives` is false only `value` is read.
using SmoothObjective = std::function<std::optional<LocalModel>(const Eigen::VectorXd& x, bool with_derivatives)>;

struct MinimizeOptions {
  int max_iter = 200;
  double xtol = 1e-12;  // relative step size
  double gtol = 1e-12;  // gradient infinity norm
  int max_backtracks = 30;
  double armijo = 1e-4;
  // Extra stopping rule on consecutive accepted iterates.
  std::function<bool(const Eigen::VectorXd& previous, const Eigen::VectorXd& next)> stop;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective at every accepted iterate, starting point included
};

// Levenberg-Marquardt damped Newton steps with Armijo backtracking. The
// objective never increases between accepted iterates. Throws
// OptimizationFailure if the starting point is inadmissible.
MinimizeResult minimize_damped_newton(const SmoothObjective& f, Eigen::VectorXd x0, const MinimizeOptions& opts = {});

// Golden-section search for a unimodal scalar function on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-10,
                      int max_iter = 200);

}  // namespace nebid
