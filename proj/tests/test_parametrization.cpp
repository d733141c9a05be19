#include <doctest.h>

#include "nebid/parametrization.hpp"
#include "oracles.hpp"

using namespace nebid;

TEST_CASE("rational generator is the lag-0-first impulse response") {
  const auto par = ModuleParametrization::rational(2, 2);
  const Eigen::VectorXd theta = (Eigen::VectorXd(4) << 0.2, 0.3, 0.4, 0.5).finished();
  const Eigen::VectorXd g = par.generator(theta, 30);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(30);
  delta(0) = 1.0;
  const Eigen::VectorXd ref = oracle::difference_equation(theta.head(2), theta.tail(2), 0.0, delta);
  CHECK(oracle::max_abs(g - ref) < 1e-15);
  CHECK(g(0) == 0.0);
  CHECK(par.param_names() == std::vector<std::string>{"b1", "b2", "a1", "a2"});
}

TEST_CASE("rational Jacobian matches central differences at random stable points") {
  std::mt19937_64 rng(12);
  const ModuleSet set({ModuleParametrization::rational(2, 2), ModuleParametrization::rational(1, 3)});
  const Index N = 40;
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd theta = random_admissible(set, rng);
    REQUIRE(set.admissible(theta));
    const Eigen::MatrixXd J = set.jacobian(theta, N);
    for (Index k = 0; k < theta.size(); ++k) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp(k) += 1e-6;
      tm(k) -= 1e-6;
      const auto gp = set.generators(tp, N), gm = set.generators(tm, N);
      Eigen::VectorXd fd(2 * N);
      fd << (gp[0] - gm[0]) / 2e-6, (gp[1] - gm[1]) / 2e-6;
      const double scale = std::max(1.0, fd.norm());
      CHECK((J.col(k) - fd).norm() / scale < 1e-6);
    }
  }
}

TEST_CASE("linear and FIR parametrizations") {
  const auto fir = ModuleParametrization::fir(3, 10);
  const Eigen::VectorXd th = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
  const Eigen::VectorXd g = fir.generator(th, 10);
  CHECK(g(0) == 0.0);
  CHECK(g.segment(1, 3) == th);
  CHECK(g.tail(6).isZero(0.0));
  CHECK(fir.is_linear());
  CHECK(fir.transfer_function(th).num == th);
  CHECK(fir.param_names() == std::vector<std::string>{"b1", "b2", "b3"});

  const auto lin = ModuleParametrization::linear(Eigen::MatrixXd::Identity(5, 2));
  CHECK(lin.param_names() == std::vector<std::string>{"theta1", "theta2"});
  CHECK_THROWS_AS(lin.transfer_function(Eigen::VectorXd::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(lin.generator(Eigen::VectorXd::Zero(2), 6), InvalidArgument);
}

TEST_CASE("admissibility is stability of the denominator") {
  const auto par = ModuleParametrization::rational(1, 1);
  CHECK(par.admissible((Eigen::VectorXd(2) << 1.0, 0.9).finished()));
  CHECK_FALSE(par.admissible((Eigen::VectorXd(2) << 1.0, 1.1).finished()));
  CHECK_FALSE(par.admissible(Eigen::VectorXd::Zero(3)));
  CHECK_FALSE(par.admissible((Eigen::VectorXd(2) << std::nan(""), 0.1).finished()));
}

TEST_CASE("random_admissible respects the radius bound and the seed") {
  const ModuleSet set({ModuleParametrization::rational(2, 3)});
  std::mt19937_64 a(5), b(5);
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd x = random_admissible(set, a, 0.5, 0.8);
    CHECK(set[0].transfer_function(x).pole_radius() < 0.8);
    CHECK(x == random_admissible(set, b, 0.5, 0.8));
  }
}

TEST_CASE("module set stacking") {
  const ModuleSet set({ModuleParametrization::rational(2, 2), ModuleParametrization::fir(2, 12)});
  CHECK(set.num_params() == 6);
  CHECK(set.offset(1) == 4);
  CHECK_FALSE(set.all_linear());
  const Eigen::VectorXd th = (Eigen::VectorXd(6) << 0.1, 0.2, 0.3, 0.1, 1.0, 2.0).finished();
  const auto gens = set.generators(th, 12);
  REQUIRE(gens.size() == 2);
  CHECK(gens[1](1) == 1.0);
  CHECK(gens[1](2) == 2.0);
  const Eigen::MatrixXd J = set.jacobian(th, 12);
  CHECK(J.rows() == 24);
  CHECK(J.block(12, 4, 12, 2) == set[1].basis());
  CHECK(J.block(0, 4, 12, 2).isZero(0.0));
  CHECK_THROWS_AS(set.generators(th.head(5), 12), InvalidArgument);
}
