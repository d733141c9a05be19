#include <doctest.h>

#include <Eigen/Cholesky>

#include "nebid/errors.hpp"
#include "nebid/optim.hpp"

using namespace nebid;

namespace {

// Rosenbrock with its exact Hessian, which is indefinite away from the valley.
std::optional<LocalModel> rosenbrock(const Eigen::VectorXd& x, bool deriv) {
  LocalModel m;
  const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
  m.value = a * a + 100.0 * b * b;
  if (deriv) {
    m.gradient = Eigen::Vector2d(-2.0 * a - 400.0 * x(0) * b, 200.0 * b);
    m.hessian.resize(2, 2);
    m.hessian << 2.0 - 400.0 * b + 800.0 * x(0) * x(0), -400.0 * x(0), -400.0 * x(0), 200.0;
  }
  return m;
}

}  // namespace

TEST_CASE("damped Newton minimizes Rosenbrock with a monotone trace") {
  MinimizeOptions opts;
  opts.max_iter = 500;
  const auto res = minimize_damped_newton(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts);
  CHECK(res.converged);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t k = 1; k < res.trace.size(); ++k) CHECK(res.trace[k] <= res.trace[k - 1]);
  CHECK(res.trace.size() <= static_cast<std::size_t>(res.iterations) + 1);
}

TEST_CASE("damped Newton solves a quadratic in one step") {
  Eigen::Matrix2d A;
  A << 3.0, 1.0, 1.0, 2.0;
  const Eigen::Vector2d b(1.0, -1.0);
  SmoothObjective f = [&](const Eigen::VectorXd& x, bool deriv) -> std::optional<LocalModel> {
    LocalModel m;
    m.value = 0.5 * x.dot(A * x) - b.dot(x);
    if (deriv) {
      m.gradient = A * x - b;
      m.hessian = A;
    }
    return m;
  };
  const auto res = minimize_damped_newton(f, Eigen::Vector2d::Zero());
  CHECK((res.x - A.ldlt().solve(b)).norm() < 1e-10);
}

TEST_CASE("inadmissible regions are avoided and bad starts rejected") {
  // Minimum of (x - 2)^2 lies outside the admissible set x < 1.
  SmoothObjective f = [](const Eigen::VectorXd& x, bool deriv) -> std::optional<LocalModel> {
    if (x(0) >= 1.0) return std::nullopt;
    LocalModel m;
    m.value = (x(0) - 2.0) * (x(0) - 2.0);
    if (deriv) {
      m.gradient = Eigen::VectorXd::Constant(1, 2.0 * (x(0) - 2.0));
      m.hessian = Eigen::MatrixXd::Constant(1, 1, 2.0);
    }
    return m;
  };
  const auto res = minimize_damped_newton(f, Eigen::VectorXd::Zero(1));
  CHECK(res.x(0) < 1.0);
  CHECK(res.x(0) > 0.9);
  CHECK_THROWS_AS(minimize_damped_newton(f, Eigen::VectorXd::Constant(1, 1.5)), OptimizationFailure);
}

TEST_CASE("custom stop predicate ends the iteration") {
  MinimizeOptions opts;
  opts.xtol = 0.0;
  opts.gtol = 0.0;
  int calls = 0;
  opts.stop = [&](const Eigen::VectorXd&, const Eigen::VectorXd&) { return ++calls >= 3; };
  const auto res = minimize_damped_newton(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts);
  CHECK(res.converged);
  CHECK(calls == 3);
  CHECK(res.trace.size() == 4);
}

TEST_CASE("golden section finds the minimizer of a unimodal function") {
  const double x = golden_section([](double t) { return (t - 0.3) * (t - 0.3) + 1.0; }, -2.0, 5.0, 1e-10);
  CHECK(x == doctest::Approx(0.3).epsilon(1e-8));
  const double y = golden_section([](double t) { return std::cosh(t - 1.5); }, 0.0, 1.0, 1e-10);
  CHECK(y == doctest::Approx(1.0).epsilon(1e-8));
}
