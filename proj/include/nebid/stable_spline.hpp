#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nebid/errors.hpp"
#include "nebid/lti.hpp"

namespace nebid {

// First-order stable spline kernel K(i, j) = beta^max(i, j), 1-based.
//
// K is the covariance of a Brownian motion sampled at the decreasing times
// beta^1 > ... > beta^n, hence K = U diag(c) U^T with U the upper-triangular
// all-ones matrix and increments c_k = beta^k (1 - beta) for k < n and
// c_n = beta^n. The factor F = U diag(sqrt(c)) gives K = F F^T exactly, and
// K^-1 = U^-T diag(1/c) U^-1 is tridiagonal. Both are used instead of a dense
// factorization.
class StableSplineKernel {
 public:
  StableSplineKernel(Index n, double beta);

  Index size() const { return n_; }
  double beta() const { return beta_; }

  Eigen::MatrixXd matrix() const;

  // log c_k; -inf at beta = 0.
  const Eigen::VectorXd& log_increments() const { return log_c_; }
  // log det K = n(n+1)/2 log beta + (n-1) log(1 - beta).
  double log_det() const;
  // tr(K^-1 S) in O(n). Infinite if an increment underflows.
  double trace_inverse_product(const Eigen::Ref<const Eigen::MatrixXd>& s) const;
  // x^T K^-1 x.
  double inverse_quadratic(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Upper-triangular F with K = F F^T, and products with it in O(n) per column.
  Eigen::MatrixXd factor() const;
  Eigen::MatrixXd factor_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd factor_transpose_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  // F^-1 x.
  Eigen::MatrixXd factor_solve(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

 private:
  Index n_;
  double beta_;
  Eigen::VectorXd log_c_;
  Eigen::VectorXd sqrt_c_;
};

// lambda * K_beta, the prior covariance of one latent impulse response.
struct ScaledKernel {
  StableSplineKernel kernel;
  double lambda;

  ScaledKernel(StableSplineKernel k, double l);
  ScaledKernel(Index n, double beta, double l) : ScaledKernel(StableSplineKernel(n, beta), l) {}

  Index size() const { return kernel.size(); }
  Eigen::MatrixXd matrix() const { return lambda * kernel.matrix(); }
};

StableSplineKernel build_kernel(Index n, double beta);

// Second moment S of one latent block stored in the whitened coordinates of
// the prior (lambda, beta) it was computed under: S = F W F^T with
// F = sqrt(lambda) U diag(sqrt(c_beta)). Since F^T K_b^-1 F is diagonal for
// every b, diag(W) suffices for tr(K_b^-1 S) and no tail cancellation occurs.
struct WhitenedMoment {
  Eigen::VectorXd diag;
  double lambda = 1.0;
  double beta = 0.5;
};

// log tr(K_b^-1 S); -inf when diag(W) is identically zero.
double log_trace_inverse_product(const WhitenedMoment& w, double b);

struct InvQuadLogDet {
  double trace_term;  // tr((lambda K)^-1 S)
  double logdet;      // log det(lambda K)
};

// Throws IllConditioned when the kernel is numerically singular.
InvQuadLogDet inv_quad_and_logdet(const ScaledKernel& sk, const Eigen::Ref<const Eigen::MatrixXd>& s);

// Dense Cholesky of a symmetric PSD matrix with escalating diagonal jitter
// eps * tr(A) / n, eps = 1e-12, 1e-11, ..., 1e-6. Throws IllConditioned.
Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                                  double* jitter_used = nullptr);

// Admissible beta interval used by all hyperparameter searches.
inline constexpr double kBetaMin = 1e-6;
inline constexpr double kBetaMax = 1.0 - 1e-6;

}  // namespace nebid
