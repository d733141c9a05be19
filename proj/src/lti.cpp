#include "nebid/lti.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace nebid {

std::vector<std::complex<double>> RationalTF::poles() const {
  const Index na = den.size();
  if (na == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(na, na);
  companion.row(0) = -den.transpose();
  if (na > 1) companion.bottomLeftCorner(na - 1, na - 1).setIdentity();
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(na));
  for (Index i = 0; i < na; ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
  return out;
}

double RationalTF::pole_radius() const {
  double r = 0.0;
  for (const auto& p : poles()) r = std::max(r, std::abs(p));
  return r;
}

Eigen::VectorXd impulse_response(const RationalTF& tf, Index n) {
  if (n < 1) throw InvalidArgument("impulse_response: n must be >= 1");
  // g(t) = b_t - sum_k a_k g(t - k), with g(0) = b0.
  const Index nb = tf.num.size();
  const Index na = tf.den.size();
  Eigen::VectorXd g(n + 1);
  g(0) = tf.feedthrough;
  for (Index t = 1; t <= n; ++t) {
    double v = t <= nb ? tf.num(t - 1) : 0.0;
    for (Index k = 1; k <= std::min(na, t); ++k) v -= tf.den(k - 1) * g(t - k);
    g(t) = v;
  }
  return g.tail(n);
}

Eigen::VectorXd module_generator(const RationalTF& tf, Index n) {
  if (n < 1) throw InvalidArgument("module_generator: n must be >= 1");
  Eigen::VectorXd h(n);
  h(0) = tf.feedthrough;
  if (n > 1) h.tail(n - 1) = impulse_response(tf, n - 1);
  return h;
}

Eigen::VectorXd filter(const RationalTF& tf, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Index n = x.size();
  const Index nb = tf.num.size();
  const Index na = tf.den.size();
  Eigen::VectorXd y(n);
  for (Index t = 0; t < n; ++t) {
    double v = tf.feedthrough * x(t);
    for (Index k = 1; k <= std::min(nb, t); ++k) v += tf.num(k - 1) * x(t - k);
    for (Index k = 1; k <= std::min(na, t); ++k) v -= tf.den(k - 1) * y(t - k);
    y(t) = v;
  }
  return y;
}

Eigen::MatrixXd toeplitz_apply(const Eigen::Ref<const Eigen::VectorXd>& h,
                               const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const Index n = x.rows();
  const Index len = std::min<Index>(h.size(), n);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, x.cols());
  for (Index k = 0; k < len; ++k) {
    const double hk = h(k);
    if (hk == 0.0) continue;
    out.bottomRows(n - k).noalias() += hk * x.topRows(n - k);
  }
  return out;
}

DuplicationMap::DuplicationMap(Index n) : n_(n) {
  if (n < 1) throw InvalidArgument("DuplicationMap: N must be >= 1");
  src_.assign(static_cast<std::size_t>(n * n), -1);
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) src_[static_cast<std::size_t>(j * n + i)] = i - j;
}

Eigen::VectorXd DuplicationMap::apply(const Eigen::Ref<const Eigen::VectorXd>& a) const {
  if (a.size() != n_) throw InvalidArgument("DuplicationMap::apply: length mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows());
  for (Index r = 0; r < rows(); ++r)
    if (const Index s = source(r); s >= 0) out(r) = a(s);
  return out;
}

Eigen::VectorXd DuplicationMap::apply_transpose(const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (y.size() != rows()) throw InvalidArgument("DuplicationMap::apply_transpose: length mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (Index r = 0; r < rows(); ++r)
    if (const Index s = source(r); s >= 0) out(s) += y(r);
  return out;
}

Eigen::SparseMatrix<double> DuplicationMap::to_sparse() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n_ * (n_ + 1) / 2));
  for (Index r = 0; r < rows(); ++r)
    if (const Index s = source(r); s >= 0) trips.emplace_back(r, s, 1.0);
  Eigen::SparseMatrix<double> d(rows(), n_);
  d.setFromTriplets(trips.begin(), trips.end());
  return d;
}

Eigen::MatrixXd toeplitz_gram(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  const Index n = m.rows();
  if (m.cols() != n) throw InvalidArgument("toeplitz_gram: matrix must be square");
  Eigen::MatrixXd a(n, n);
  // a(u, v) = a(u + 1, v + 1) + m(n - 1 - u, n - 1 - v)
  for (Index u = n - 1; u >= 0; --u) {
    for (Index v = n - 1; v >= 0; --v) {
      const double prev = (u + 1 < n && v + 1 < n) ? a(u + 1, v + 1) : 0.0;
      a(u, v) = prev + m(n - 1 - u, n - 1 - v);
    }
  }
  return a;
}

}  // namespace nebid
