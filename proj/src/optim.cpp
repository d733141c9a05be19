#include "nebid/optim.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "nebid/errors.hpp"

namespace nebid {

namespace {

bool usable(const std::optional<LocalModel>& m) { return m && std::isfinite(m->value); }

}  // namespace

MinimizeResult minimize_damped_newton(const SmoothObjective& f, Eigen::VectorXd x0, const MinimizeOptions& opts) {
  auto model = f(x0, true);
  if (!usable(model) || !model->gradient.allFinite())
    throw OptimizationFailure("minimize: objective is not finite at the starting point");

  MinimizeResult res;
  res.x = std::move(x0);
  res.value = model->value;
  res.trace.push_back(res.value);
  const Eigen::Index n = res.x.size();
  if (n == 0) {
    res.converged = true;
    return res;
  }

  double mu = 1e-6;
  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    const Eigen::VectorXd& g = model->gradient;
    if (g.lpNorm<Eigen::Infinity>() <= opts.gtol) {
      res.converged = true;
      break;
    }
    const Eigen::VectorXd diag = model->hessian.diagonal().cwiseAbs().cwiseMax(1e-12 * (1.0 + model->hessian.diagonal().cwiseAbs().maxCoeff()));

    bool accepted = false;
    while (!accepted && mu < 1e20) {
      Eigen::MatrixXd h = model->hessian;
      h.diagonal() += mu * diag;
      Eigen::LLT<Eigen::MatrixXd> llt(h);
      if (llt.info() != Eigen::Success) {
        mu = std::max(mu * 10.0, 1e-8);
        continue;
      }
      const Eigen::VectorXd d = -llt.solve(g);
      const double slope = g.dot(d);
      if (!d.allFinite() || slope >= 0.0) {
        mu = std::max(mu * 10.0, 1e-8);
        continue;
      }
      double alpha = 1.0;
      for (int bt = 0; bt < opts.max_backtracks; ++bt, alpha *= 0.5) {
        const Eigen::VectorXd trial = res.x + alpha * d;
        const auto tm = f(trial, false);
        if (usable(tm) && tm->value <= res.value + opts.armijo * alpha * slope) {
          auto full = f(trial, true);
          if (!usable(full) || !full->gradient.allFinite()) break;
          const Eigen::VectorXd prev = res.x;
          res.x = trial;
          res.value = full->value;
          model = std::move(full);
          res.trace.push_back(res.value);
          accepted = true;
          mu = alpha == 1.0 ? std::max(mu / 3.0, 1e-12) : mu * 2.0;
          const double step = (alpha * d).norm();
          if (step <= opts.xtol * (res.x.norm() + opts.xtol) || (opts.stop && opts.stop(prev, res.x)))
            res.converged = true;
          break;
        }
      }
      if (!accepted) mu = std::max(mu * 10.0, 1e-8);
    }
    if (!accepted) {
      // No descent direction yields a decrease: numerically stationary.
      res.converged = true;
      break;
    }
    if (res.converged) break;
  }
  return res;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol, int max_iter) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

}  // namespace nebid
