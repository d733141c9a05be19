#include "nebid/stable_spline.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace nebid {

StableSplineKernel::StableSplineKernel(Index n, double beta) : n_(n), beta_(beta) {
  if (n < 1) throw InvalidArgument("stable spline kernel: n must be >= 1");
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("stable spline kernel: beta must lie in [0, 1)");
  const double lb = std::log(beta);  // -inf at 0
  const double l1b = std::log1p(-beta);
  log_c_.resize(n);
  for (Index k = 1; k <= n; ++k) log_c_(k - 1) = k < n ? k * lb + l1b : n * lb;
  sqrt_c_ = (0.5 * log_c_.array()).exp().matrix();
}

Eigen::MatrixXd StableSplineKernel::matrix() const {
  Eigen::MatrixXd k(n_, n_);
  for (Index j = 0; j < n_; ++j)
    for (Index i = 0; i < n_; ++i) k(i, j) = std::pow(beta_, static_cast<double>(std::max(i, j) + 1));
  return k;
}

double StableSplineKernel::log_det() const { return log_c_.sum(); }

double StableSplineKernel::trace_inverse_product(const Eigen::Ref<const Eigen::MatrixXd>& s) const {
  if (s.rows() != n_ || s.cols() != n_) throw InvalidArgument("trace_inverse_product: dimension mismatch");
  double tr = 0.0;
  for (Index k = 0; k < n_; ++k) {
    double y = s(k, k);
    if (k + 1 < n_) y += s(k + 1, k + 1) - s(k, k + 1) - s(k + 1, k);
    if (y == 0.0) continue;
    tr += y * std::exp(-log_c_(k));
  }
  return tr;
}

double StableSplineKernel::inverse_quadratic(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_) throw InvalidArgument("inverse_quadratic: dimension mismatch");
  double q = 0.0;
  for (Index k = 0; k < n_; ++k) {
    const double d = k + 1 < n_ ? x(k) - x(k + 1) : x(k);
    if (d == 0.0) continue;
    q += d * d * std::exp(-log_c_(k));
  }
  return q;
}

Eigen::MatrixXd StableSplineKernel::factor() const {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n_, n_);
  for (Index k = 0; k < n_; ++k) f.col(k).head(k + 1).setConstant(sqrt_c_(k));
  return f;
}

Eigen::MatrixXd StableSplineKernel::factor_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != n_) throw InvalidArgument("factor_times: dimension mismatch");
  // F x = U (sqrt(c) .* x): reverse cumulative sum over rows.
  Eigen::MatrixXd out(n_, x.cols());
  out.row(n_ - 1) = sqrt_c_(n_ - 1) * x.row(n_ - 1);
  for (Index k = n_ - 2; k >= 0; --k) out.row(k) = out.row(k + 1) + sqrt_c_(k) * x.row(k);
  return out;
}

Eigen::MatrixXd StableSplineKernel::factor_transpose_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != n_) throw InvalidArgument("factor_transpose_times: dimension mismatch");
  // F^T x = sqrt(c) .* (U^T x): cumulative sum over rows, then scale.
  Eigen::MatrixXd out(n_, x.cols());
  out.row(0) = x.row(0);
  for (Index k = 1; k < n_; ++k) out.row(k) = out.row(k - 1) + x.row(k);
  for (Index k = 0; k < n_; ++k) out.row(k) *= sqrt_c_(k);
  return out;
}

Eigen::MatrixXd StableSplineKernel::factor_solve(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != n_) throw InvalidArgument("factor_solve: dimension mismatch");
  // F^-1 x = diag(1/sqrt(c)) U^-1 x, U^-1 taking forward differences.
  Eigen::MatrixXd out(n_, x.cols());
  for (Index k = 0; k < n_; ++k) {
    out.row(k) = k + 1 < n_ ? (x.row(k) - x.row(k + 1)).eval() : x.row(k);
    out.row(k) /= sqrt_c_(k);
  }
  return out;
}

ScaledKernel::ScaledKernel(StableSplineKernel k, double l) : kernel(std::move(k)), lambda(l) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("scaled kernel: lambda must be positive");
}

StableSplineKernel build_kernel(Index n, double beta) { return StableSplineKernel(n, beta); }

double log_trace_inverse_product(const WhitenedMoment& w, double b) {
  const Index n = w.diag.size();
  if (n < 1) throw InvalidArgument("log_trace_inverse_product: empty moment");
  const StableSplineKernel k0(n, w.beta), k1(n, b);
  double mx = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(n);
  for (Index k = 0; k < n; ++k) {
    terms(k) = w.diag(k) > 0.0 ? std::log(w.diag(k)) + k0.log_increments()(k) - k1.log_increments()(k)
                               : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, terms(k));
  }
  if (!std::isfinite(mx)) return mx;
  return std::log(w.lambda) + mx + std::log((terms.array() - mx).exp().sum());
}

InvQuadLogDet inv_quad_and_logdet(const ScaledKernel& sk, const Eigen::Ref<const Eigen::MatrixXd>& s) {
  const auto& k = sk.kernel;
  const double logdet = k.log_det();
  const double tr = k.trace_inverse_product(s);
  if (!std::isfinite(logdet) || !std::isfinite(tr)) {
    std::ostringstream msg;
    msg << "stable spline kernel is numerically singular (beta=" << k.beta() << ", lambda=" << sk.lambda
        << ", n=" << k.size() << ")";
    throw IllConditioned(msg.str());
  }
  const double n = static_cast<double>(k.size());
  return {tr / sk.lambda, n * std::log(sk.lambda) + logdet};
}

Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::Ref<const Eigen::MatrixXd>& a, double* jitter_used) {
  const Index n = a.rows();
  if (a.cols() != n) throw InvalidArgument("cholesky_with_jitter: matrix must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) {
    if (jitter_used) *jitter_used = 0.0;
    return llt;
  }
  const double scale = std::max(a.trace() / static_cast<double>(n), std::numeric_limits<double>::min());
  for (double eps = 1e-12; eps <= 1e-6 * (1 + 1e-9); eps *= 10.0) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += eps * scale;
    llt.compute(b);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = eps * scale;
      return llt;
    }
  }
  std::ostringstream msg;
  msg << "Cholesky failed after jitter escalation (n=" << n << ", trace=" << a.trace() << ")";
  throw IllConditioned(msg.str());
}

}  // namespace nebid
