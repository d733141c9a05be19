#pragma once

// Discrete-time LTI primitives: rational transfer functions, truncated impulse
// responses, lower-triangular Toeplitz operators and the vec-duplication map.
//
// Sequence conventions used throughout the library:
//   * impulse_response() returns the samples g(1), ..., g(n) of a strictly
//     proper system, i.e. entry k-1 holds the coefficient of q^-k.
//   * "generators" (signals, sensitivity paths, module_generator()) are
//     lag-0-first: entry t holds the sample at lag t. Toeplitz matrices are
//     always built from generators, so T_N(h) x is the causal convolution.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <complex>
#include <cstdint>
#include <vector>

#include "nebid/errors.hpp"

namespace nebid {

using Index = Eigen::Index;

// B(q)/A(q) with B = b0 + b1 q^-1 + ... + b_nb q^-nb and
// A = 1 + a1 q^-1 + ... + a_na q^-na. The leading 1 of A is implicit.
struct RationalTF {
  Eigen::VectorXd num;  // b1 ... b_nb
  Eigen::VectorXd den;  // a1 ... a_na
  double feedthrough = 0.0;  // b0, zero for the strictly proper modules

  RationalTF() = default;
  RationalTF(Eigen::VectorXd b, Eigen::VectorXd a, double b0 = 0.0)
      : num(std::move(b)), den(std::move(a)), feedthrough(b0) {}

  static RationalTF fir(const Eigen::VectorXd& b) { return {b, Eigen::VectorXd(), 0.0}; }

  bool is_strictly_proper() const { return feedthrough == 0.0; }

  // Roots of z^na + a1 z^(na-1) + ... + a_na.
  std::vector<std::complex<double>> poles() const;
  double pole_radius() const;
  bool is_stable() const { return pole_radius() < 1.0; }
};

// First n samples g(1..n) of a strictly proper response (lag 1 first). The
// feedthrough term, if any, is not part of the result. Unstable systems are
// not rejected; check RationalTF::is_stable().
Eigen::VectorXd impulse_response(const RationalTF& tf, Index n);

// Lag-0-first response of length n: [b0, g(1), ..., g(n-1)].
Eigen::VectorXd module_generator(const RationalTF& tf, Index n);

// y = B(q)/A(q) x with zero initial conditions.
Eigen::VectorXd filter(const RationalTF& tf, const Eigen::Ref<const Eigen::VectorXd>& x);

// m x n lower-triangular Toeplitz matrix with first column a.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> toeplitz(
    const Eigen::MatrixBase<Derived>& a, Index n) {
  using Scalar = typename Derived::Scalar;
  const Index m = a.size();
  if (m < 1 || n < 1) throw InvalidArgument("toeplitz: empty generator or zero columns");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> t =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(m, n);
  for (Index j = 0; j < std::min(m, n); ++j) t.col(j).tail(m - j) = a.head(m - j);
  return t;
}

// First n samples of a * b, where n is the common length.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> convolve(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw InvalidArgument("convolve: length mismatch");
  const Index n = a.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar ai = a(i);
    if (ai == Scalar(0)) continue;
    out.tail(n - i) += ai * b.head(n - i);
  }
  return out;
}

// T_N(h) X without forming T_N(h); h may be shorter than N (zero padded).
Eigen::MatrixXd toeplitz_apply(const Eigen::Ref<const Eigen::VectorXd>& h,
                               const Eigen::Ref<const Eigen::MatrixXd>& x);

// The N^2 x N matrix D with D a = vec(T_N(a)), stored as a row -> source map.
class DuplicationMap {
 public:
  explicit DuplicationMap(Index n);

  Index size() const { return n_; }
  Index rows() const { return n_ * n_; }
  // Source index of row r, or -1 for structurally zero rows.
  Index source(Index r) const { return src_[static_cast<std::size_t>(r)]; }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& a) const;
  Eigen::VectorXd apply_transpose(const Eigen::Ref<const Eigen::VectorXd>& y) const;
  Eigen::SparseMatrix<double> to_sparse() const;

 private:
  Index n_;
  std::vector<Index> src_;
};

// D^T (M kron I_N) D for an N x N matrix M, so that
// g_a^T toeplitz_gram(M) g_b = tr(T_N(g_a) M T_N(g_b)^T). Entry (u, v) is
// sum_t M(t - u, t - v), accumulated along diagonals in O(N^2). M need not be
// symmetric.
Eigen::MatrixXd toeplitz_gram(const Eigen::Ref<const Eigen::MatrixXd>& m);

}  // namespace nebid
