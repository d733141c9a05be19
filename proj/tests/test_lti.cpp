#include <doctest.h>

#include "nebid/lti.hpp"
#include "oracles.hpp"

using namespace nebid;

TEST_CASE("impulse_response of a first-order system is geometric") {
  // 0.5 q^-1 / (1 - 0.8 q^-1): g(k) = 0.5 * 0.8^(k-1).
  const RationalTF tf(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, -0.8));
  const Eigen::VectorXd g = impulse_response(tf, 10);
  for (Index k = 0; k < 10; ++k) CHECK(g(k) == doctest::Approx(0.5 * std::pow(0.8, k)).epsilon(1e-14));
}

TEST_CASE("impulse_response and filter agree with the difference equation") {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd b = (Eigen::VectorXd(3) << 0.2, -0.3, 0.1).finished();
  const Eigen::VectorXd a = (Eigen::VectorXd(2) << -0.5, 0.2).finished();
  const RationalTF tf(b, a, 0.7);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(30);
  delta(0) = 1.0;
  const Eigen::VectorXd ref = oracle::difference_equation(b, a, 0.7, delta);
  CHECK(oracle::max_abs(impulse_response(tf, 29) - ref.tail(29)) < 1e-14);
  CHECK(oracle::max_abs(module_generator(tf, 30) - ref) < 1e-14);

  const Eigen::VectorXd x = oracle::random_vector(50, rng);
  CHECK(oracle::max_abs(filter(tf, x) - oracle::difference_equation(b, a, 0.7, x)) < 1e-13);
}

TEST_CASE("poles and stability") {
  // (1 - 0.5 z^-1)(1 + 0.4 z^-1) = 1 - 0.1 z^-1 - 0.2 z^-2.
  const RationalTF tf(Eigen::VectorXd::Ones(1), (Eigen::VectorXd(2) << -0.1, -0.2).finished());
  CHECK(tf.pole_radius() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tf.is_stable());
  const RationalTF unstable(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, -1.1));
  CHECK_FALSE(unstable.is_stable());
  CHECK(RationalTF::fir(Eigen::VectorXd::Ones(3)).pole_radius() == 0.0);
}

TEST_CASE("toeplitz, convolve and toeplitz_apply match the definition") {
  std::mt19937_64 rng(5);
  const Eigen::VectorXd a = oracle::random_vector(12, rng);
  const Eigen::VectorXd b = oracle::random_vector(12, rng);
  CHECK(oracle::max_abs(toeplitz(a, 5) - oracle::toeplitz(a, 5)) == 0.0);
  CHECK(oracle::max_abs(toeplitz(a, 12) - oracle::toeplitz(a, 12)) == 0.0);
  CHECK(oracle::max_abs(convolve(a, b) - oracle::toeplitz(a, 12) * b) < 1e-13);

  const Eigen::MatrixXd x = oracle::random_matrix(12, 4, rng);
  CHECK(oracle::max_abs(toeplitz_apply(a, x) - oracle::toeplitz(a, 12) * x) < 1e-13);
  // Short generator, zero padded.
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(12);
  padded.head(3) = a.head(3);
  CHECK(oracle::max_abs(toeplitz_apply(a.head(3), x) - oracle::toeplitz(padded, 12) * x) < 1e-13);
}

TEST_CASE("toeplitz is templated on the scalar type") {
  const Eigen::VectorXf a = Eigen::VectorXf::LinSpaced(4, 1.0f, 4.0f);
  const Eigen::MatrixXf t = toeplitz(a, 4);
  CHECK(t(3, 0) == 4.0f);
  CHECK(t(0, 3) == 0.0f);
  CHECK(t(3, 3) == 1.0f);
}

TEST_CASE("DuplicationMap reproduces vec(T_N(a))") {
  std::mt19937_64 rng(7);
  const Index n = 6;
  const DuplicationMap d(n);
  const Eigen::VectorXd a = oracle::random_vector(n, rng);
  const Eigen::MatrixXd t = oracle::toeplitz(a, n);
  const Eigen::VectorXd vec = Eigen::Map<const Eigen::VectorXd>(t.data(), n * n);
  CHECK(oracle::max_abs(d.apply(a) - vec) == 0.0);
  const Eigen::MatrixXd dense = Eigen::MatrixXd(d.to_sparse());
  CHECK(oracle::max_abs(dense * a - vec) == 0.0);
  const Eigen::VectorXd y = oracle::random_vector(n * n, rng);
  CHECK(oracle::max_abs(d.apply_transpose(y) - dense.transpose() * y) < 1e-13);
}

TEST_CASE("toeplitz_gram equals the duplication-map sandwich") {
  std::mt19937_64 rng(11);
  const Index n = 7;
  const Eigen::MatrixXd m = oracle::random_matrix(n, n, rng);  // not symmetric
  const Eigen::MatrixXd dense = Eigen::MatrixXd(DuplicationMap(n).to_sparse());
  Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = m(i, j) * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd ref = dense.transpose() * kron * dense;
  CHECK(oracle::max_abs(toeplitz_gram(m) - ref) < 1e-12);

  const Eigen::VectorXd ga = oracle::random_vector(n, rng), gb = oracle::random_vector(n, rng);
  const double tr = (oracle::toeplitz(ga, n) * m * oracle::toeplitz(gb, n).transpose()).trace();
  CHECK(ga.dot(toeplitz_gram(m) * gb) == doctest::Approx(tr).epsilon(1e-12));
}

TEST_CASE("lti argument validation") {
  const RationalTF tf(Eigen::VectorXd::Ones(1), Eigen::VectorXd());
  CHECK_THROWS_AS(impulse_response(tf, 0), InvalidArgument);
  CHECK_THROWS_AS(convolve(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)), InvalidArgument);
  CHECK_THROWS_AS(toeplitz_gram(Eigen::MatrixXd::Ones(2, 3)), InvalidArgument);
  CHECK_THROWS_AS(DuplicationMap(0), InvalidArgument);
}
