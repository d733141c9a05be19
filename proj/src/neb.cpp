#include "nebid/neb.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "nebid/baselines.hpp"
#include "nebid/errors.hpp"

namespace nebid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logit(double b) { return std::log(b) - std::log1p(-b); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> logistic_grid(double lo, double hi, int count) {
  std::vector<double> g(static_cast<std::size_t>(count));
  const double a = logit(lo), b = logit(hi);
  for (int k = 0; k < count; ++k) g[static_cast<std::size_t>(k)] = logistic(a + (b - a) * k / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

// Symmetrize and, if the block is not numerically PSD, clip its spectrum at 0.
Eigen::MatrixXd psd_block(const Eigen::Ref<const Eigen::MatrixXd>& s) {
  Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  const double scale = std::max(sym.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  Eigen::MatrixXd probe = sym;
  probe.diagonal().array() += 1e-13 * scale;
  Eigen::LLT<Eigen::MatrixXd> llt(probe);
  if (llt.info() == Eigen::Success) return sym;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw DegenerateMoments("second-moment block eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// T_N(x)^T y: correlation of y with the lag-0-first signal x.
Eigen::VectorXd toeplitz_transpose_apply(const Eigen::Ref<const Eigen::VectorXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y) {
  const Index N = x.size();
  Eigen::VectorXd out(N);
  for (Index k = 0; k < N; ++k) out(k) = x.head(N - k).dot(y.tail(N - k));
  return out;
}

}  // namespace

NetworkData::NetworkData(const Dataset& data, const TargetStructure& structure, Index n)
    : structure_(structure), N_(data.N), n_(n) {
  const Index L = data.w_tilde.cols();
  if (data.w_tilde.rows() != N_ || data.r.rows() != N_ || data.r.cols() != L)
    throw InvalidArgument("NetworkData: dataset dimensions are inconsistent");
  if (n < 1 || n > N_) throw InvalidArgument("NetworkData: need 1 <= n <= N");
  auto in_range = [L](Index k) { return k >= 0 && k < L; };
  if (!in_range(structure.output)) throw InvalidArgument("NetworkData: output node out of range");
  if (structure.inputs.empty()) throw InvalidArgument("NetworkData: no input modules");
  if (structure.references.empty()) throw InvalidArgument("NetworkData: no references");
  std::set<Index> seen;
  for (Index i : structure.inputs) {
    if (!in_range(i) || i == structure.output || !seen.insert(i).second)
      throw InvalidArgument("NetworkData: invalid input node");
  }
  seen.clear();
  for (Index l : structure.references)
    if (!in_range(l) || !seen.insert(l).second) throw InvalidArgument("NetworkData: invalid reference node");
  if (structure.downstream) {
    const Index f = *structure.downstream;
    if (!in_range(f) || f == structure.output) throw InvalidArgument("NetworkData: invalid downstream node");
  }

  const Index m = static_cast<Index>(structure.references.size());
  R_.resize(N_, n * m);
  for (Index l = 0; l < m; ++l) {
    r_blocks_.push_back(toeplitz(data.r.col(structure.references[static_cast<std::size_t>(l)]), n));
    R_.middleCols(l * n, n) = r_blocks_.back();
  }
  RtR_ = R_.transpose() * R_;
  inputs_.resize(N_, p());
  for (Index i = 0; i < p(); ++i) inputs_.col(i) = data.w_tilde.col(structure.inputs[static_cast<std::size_t>(i)]);
  output_ = data.w_tilde.col(structure.output) - data.r.col(structure.output);
  if (structure.downstream)
    downstream_ = data.w_tilde.col(*structure.downstream) - data.r.col(*structure.downstream);
}

Eigen::VectorXd NetworkData::stacked_z() const {
  Eigen::VectorXd z((p() + 1) * N_);
  for (Index i = 0; i < p(); ++i) z.segment(i * N_, N_) = inputs_.col(i);
  z.tail(N_) = output_;
  return z;
}

Eigen::VectorXd HyperParameters::flatten() const {
  Eigen::VectorXd v(sigmas.size() + lambdas.size() + betas.size() + theta.size());
  v << sigmas, lambdas, betas, theta;
  return v;
}

bool HyperParameters::valid() const {
  if (lambdas.size() != betas.size()) return false;
  if (!(sigmas.array() > 0.0).all() || !sigmas.allFinite()) return false;
  if (!(lambdas.array() > 0.0).all() || !lambdas.allFinite()) return false;
  if (!(betas.array() > 0.0).all() || !(betas.array() < 1.0).all()) return false;
  return theta.allFinite();
}

double relative_change(const HyperParameters& prev, const HyperParameters& next) {
  const Eigen::VectorXd a = prev.flatten();
  const Eigen::VectorXd b = next.flatten();
  if (a.size() != b.size()) throw InvalidArgument("relative_change: size mismatch");
  return (b - a).norm() / std::max(a.norm(), std::numeric_limits<double>::min());
}

BlockPrior make_prior(const HyperParameters& eta, Index n, Index blocks) {
  if (eta.lambdas.size() < blocks || eta.betas.size() < blocks)
    throw InvalidArgument("make_prior: not enough kernel hyperparameters");
  std::vector<ScaledKernel> ks;
  ks.reserve(static_cast<std::size_t>(blocks));
  for (Index b = 0; b < blocks; ++b) ks.emplace_back(n, eta.betas(b), eta.lambdas(b));
  return BlockPrior(std::move(ks));
}

Eigen::MatrixXd output_regressor(const NetworkData& data, const std::vector<Eigen::VectorXd>& generators) {
  if (static_cast<Index>(generators.size()) != data.p())
    throw InvalidArgument("output_regressor: one generator per input module is required");
  const Index d = data.path_dim();
  Eigen::MatrixXd x(data.N(), data.latent_dim());
  for (Index i = 0; i < data.p(); ++i) {
    const auto& g = generators[static_cast<std::size_t>(i)];
    if (g.size() != data.N()) throw InvalidArgument("output_regressor: generator length must equal N");
    x.middleCols(i * d, d) = toeplitz_apply(g, data.R());
  }
  return x;
}

InformationForm neb_information(const NetworkData& data, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  const Index p = data.p(), N = data.N(), d = data.path_dim();
  if (sigmas.size() < p + 1) throw InvalidArgument("neb_information: one noise variance per channel is required");
  if (x.rows() != N || x.cols() != data.latent_dim()) throw InvalidArgument("neb_information: regressor shape");
  for (Index c = 0; c <= p; ++c)
    if (!(sigmas(c) > 0.0) || !std::isfinite(sigmas(c)))
      throw InvalidArgument("neb_information: noise variances must be positive");
  InformationForm info;
  const double sj = sigmas(p);
  info.H = Eigen::MatrixXd::Zero(data.latent_dim(), data.latent_dim());
  info.H.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / sj);
  info.H.triangularView<Eigen::StrictlyUpper>() = info.H.transpose();
  info.y = x.transpose() * data.output() / sj;
  info.z_quad = data.output().squaredNorm() / sj;
  info.logdet_noise = static_cast<double>(N) * std::log(sj);
  for (Index i = 0; i < p; ++i) {
    const double si = sigmas(i);
    info.H.block(i * d, i * d, d, d) += data.RtR() / si;
    info.y.segment(i * d, d) += data.R().transpose() * data.inputs().col(i) / si;
    info.z_quad += data.inputs().col(i).squaredNorm() / si;
    info.logdet_noise += static_cast<double>(N) * std::log(si);
  }
  return info;
}

Moments estep_moments(const GaussianPosterior& post) {
  Moments m;
  m.s_hat = post.mean;
  m.P_hat = 0.5 * (post.cov + post.cov.transpose());
  m.S_hat = m.P_hat + m.s_hat * m.s_hat.transpose();
  return m;
}

Moments estep_moments(const LatentPosterior& post, const BlockPrior& prior) {
  Eigen::VectorXd wdiag;
  Moments m = estep_moments(post.moments(&wdiag));
  m.white = prior.whitened_blocks(wdiag);
  return m;
}

double prior_term(const ScaledKernel& sk, const WhitenedMoment& w) {
  const double n = static_cast<double>(sk.size());
  const double tr = std::exp(log_trace_inverse_product(w, sk.kernel.beta())) / sk.lambda;
  const double logdet = n * std::log(sk.lambda) + sk.kernel.log_det();
  if (!std::isfinite(tr) || !std::isfinite(logdet)) {
    std::ostringstream msg;
    msg << "stable spline kernel is numerically singular (beta=" << sk.kernel.beta() << ", lambda=" << sk.lambda
        << ", n=" << sk.size() << ")";
    throw IllConditioned(msg.str());
  }
  return logdet + tr;
}

QTerms q_function(const InformationForm& info, const BlockPrior& prior, const Moments& moments) {
  const Index d = prior.dim();
  if (info.H.rows() != d || moments.s_hat.size() != d || moments.S_hat.rows() != d)
    throw InvalidArgument("q_function: dimension mismatch");
  QTerms q;
  q.q0 = info.logdet_noise + info.z_quad - 2.0 * info.y.dot(moments.s_hat) +
         info.H.cwiseProduct(moments.S_hat).sum();
  const bool white = moments.white.size() == prior.blocks().size();
  for (std::size_t b = 0; b < prior.blocks().size(); ++b) {
    const auto& blk = prior.blocks()[b];
    if (white) {
      q.qs += prior_term(blk, moments.white[b]);
      continue;
    }
    const Index off = prior.offset(b);
    const auto t = inv_quad_and_logdet(blk, moments.S_hat.block(off, off, blk.size(), blk.size()));
    q.qs += t.logdet + t.trace_term;
  }
  return q;
}

QTerms q_function(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta,
                  const Moments& moments) {
  const Eigen::MatrixXd x = output_regressor(data, modules.generators(eta.theta, data.N()));
  const InformationForm info = neb_information(data, x, eta.sigmas);
  const BlockPrior prior = make_prior(eta, data.n(), data.p() * data.m());
  return q_function(info, prior, moments);
}

const std::vector<double>& beta_grid() {
  static const std::vector<double> grid = logistic_grid(kBetaMin, kBetaMax, 200);
  return grid;
}

double q_beta(const Eigen::Ref<const Eigen::MatrixXd>& s_hat_block, double beta) {
  const StableSplineKernel k(s_hat_block.rows(), beta);
  const double tr = k.trace_inverse_product(s_hat_block);
  if (!(tr > 0.0) || !std::isfinite(tr)) return kInf;
  return k.log_det() + static_cast<double>(k.size()) * std::log(tr);
}

namespace {

// Grid search over beta_grid() with golden-section refinement; keeps
// `current` unless a strictly better point is found.
double search_beta(const std::function<double(double)>& q, std::optional<double> current) {
  const auto& grid = beta_grid();
  std::size_t best = grid.size();
  double best_q = kInf;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double v = q(grid[k]);
    if (std::isfinite(v) && (best == grid.size() || v < best_q - 1e-12 * std::max(1.0, std::abs(best_q)))) {
      best_q = v;
      best = k;
    }
  }
  if (best == grid.size()) throw DegenerateMoments("update_hyperparameters: objective is not finite on the grid");

  double beta = grid[best];
  const double lo = logit(grid[best == 0 ? 0 : best - 1]);
  const double hi = logit(grid[std::min(best + 1, grid.size() - 1)]);
  const double x = golden_section([&](double t) { return q(logistic(t)); }, lo, hi, 1e-10);
  const double refined = std::clamp(logistic(x), kBetaMin, kBetaMax);
  const double q_ref = q(refined);
  if (q_ref < best_q) {
    best_q = q_ref;
    beta = refined;
  }
  if (current && *current >= kBetaMin && *current <= kBetaMax && q(*current) <= best_q) beta = *current;
  return beta;
}

}  // namespace

KernelHyper update_hyperparameters(const Eigen::Ref<const Eigen::MatrixXd>& s_hat_block, Index n,
                                   std::optional<double> current_beta) {
  if (s_hat_block.rows() != n || s_hat_block.cols() != n)
    throw InvalidArgument("update_hyperparameters: block must be n x n");
  if (!s_hat_block.allFinite()) throw DegenerateMoments("update_hyperparameters: non-finite second moment");
  const Eigen::MatrixXd s = psd_block(s_hat_block);
  if (!(s.trace() > 0.0)) throw DegenerateMoments("update_hyperparameters: second moment has zero trace");
  const double beta = search_beta([&](double b) { return q_beta(s, b); }, current_beta);
  const double lambda = StableSplineKernel(n, beta).trace_inverse_product(s) / static_cast<double>(n);
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DegenerateMoments("update_hyperparameters: scale estimate is not positive");
  return {lambda, beta};
}

double q_beta(const WhitenedMoment& w, double beta) {
  const double lt = log_trace_inverse_product(w, beta);
  if (!std::isfinite(lt)) return kInf;
  const double n = static_cast<double>(w.diag.size());
  const double v = StableSplineKernel(w.diag.size(), beta).log_det() + n * lt;
  return std::isfinite(v) ? v : kInf;
}

KernelHyper update_hyperparameters(const WhitenedMoment& w, std::optional<double> current_beta) {
  if (!w.diag.allFinite() || !(w.diag.array() >= 0.0).all())
    throw DegenerateMoments("update_hyperparameters: invalid whitened second moment");
  if (!(w.diag.sum() > 0.0)) throw DegenerateMoments("update_hyperparameters: second moment has zero trace");
  const double beta = search_beta([&](double b) { return q_beta(w, b); }, current_beta);
  const double n = static_cast<double>(w.diag.size());
  const double lambda = std::exp(log_trace_inverse_product(w, beta)) / n;
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DegenerateMoments("update_hyperparameters: scale estimate is not positive");
  return {lambda, beta};
}

ThetaQuadratic theta_quadratic(const NetworkData& data, const Eigen::Ref<const Eigen::VectorXd>& s_mean,
                               const Eigen::Ref<const Eigen::MatrixXd>& S_hat,
                               const Eigen::Ref<const Eigen::VectorXd>& y) {
  const Index p = data.p(), N = data.N(), d = data.path_dim();
  if (s_mean.size() != p * d || S_hat.rows() != p * d || S_hat.cols() != p * d || y.size() != N)
    throw InvalidArgument("theta_quadratic: dimension mismatch");
  ThetaQuadratic q;
  q.A.resize(p * N, p * N);
  q.b.resize(p * N);
  const Eigen::MatrixXd& R = data.R();
  for (Index a = 0; a < p; ++a) {
    q.b.segment(a * N, N) = toeplitz_transpose_apply(R * s_mean.segment(a * d, d), y);
    for (Index c = a; c < p; ++c) {
      const Eigen::MatrixXd rs = R * S_hat.block(a * d, c * d, d, d);
      const Eigen::MatrixXd M = rs * R.transpose();
      q.A.block(a * N, c * N, N, N) = toeplitz_gram(M);
      if (c != a) q.A.block(c * N, a * N, N, N) = q.A.block(a * N, c * N, N, N).transpose();
    }
  }
  q.A = 0.5 * (q.A + q.A.transpose()).eval();
  return q;
}

std::optional<LocalModel> theta_objective(const ThetaQuadratic& quad, const ModuleSet& modules, Index N,
                                          const Eigen::Ref<const Eigen::VectorXd>& theta, bool with_derivatives) {
  if (!modules.admissible(theta)) return std::nullopt;
  const auto gens = modules.generators(theta, N);
  Eigen::VectorXd g(static_cast<Index>(gens.size()) * N);
  for (std::size_t i = 0; i < gens.size(); ++i) g.segment(static_cast<Index>(i) * N, N) = gens[i];
  if (!g.allFinite()) return std::nullopt;
  LocalModel lm;
  const Eigen::VectorXd ag = quad.A * g;
  lm.value = g.dot(ag) - 2.0 * quad.b.dot(g);
  if (with_derivatives) {
    const Eigen::MatrixXd J = modules.jacobian(theta, N);
    lm.gradient = 2.0 * J.transpose() * (ag - quad.b);
    const Eigen::MatrixXd aj = quad.A * J;
    lm.hessian = 2.0 * J.transpose() * aj;
    lm.hessian = 0.5 * (lm.hessian + lm.hessian.transpose()).eval();
  }
  return lm;
}

Eigen::VectorXd update_theta(const ThetaQuadratic& quad, const ModuleSet& modules, Index N,
                             const Eigen::Ref<const Eigen::VectorXd>& theta_start, const ThetaSolveOptions& opts) {
  if (theta_start.size() != modules.num_params()) throw InvalidArgument("update_theta: parameter length mismatch");
  if (quad.A.rows() != static_cast<Index>(modules.size()) * N) throw InvalidArgument("update_theta: quadratic size");

  if (modules.all_linear()) {
    const Eigen::MatrixXd L = modules.jacobian(theta_start, N);
    const Eigen::MatrixXd M = L.transpose() * quad.A * L;
    const Eigen::VectorXd rhs = L.transpose() * quad.b;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (M + M.transpose()));
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13) || !ldlt.isPositive())
      throw RankDeficient("update_theta: the parameter normal equations are singular");
    return ldlt.solve(rhs);
  }

  const SmoothObjective f = [&](const Eigen::VectorXd& th, bool deriv) {
    return theta_objective(quad, modules, N, th, deriv);
  };
  std::optional<MinimizeResult> best;
  if (modules.admissible(theta_start)) {
    try {
      best = minimize_damped_newton(f, theta_start, opts.local);
    } catch (const OptimizationFailure&) {
    }
  }
  if (best) return best->x;

  // Deterministic restarts seeded by the rejected start.
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
  for (Index k = 0; k < theta_start.size(); ++k)
    seed ^= std::hash<double>{}(theta_start(k)) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
  std::mt19937_64 rng(seed);
  for (int r = 0; r < opts.restarts; ++r) {
    try {
      auto res = minimize_damped_newton(f, random_admissible(modules, rng), opts.local);
      if (!best || res.value < best->value) best = std::move(res);
    } catch (const OptimizationFailure&) {
    }
  }
  if (!best) throw OptimizationFailure("update_theta: no admissible start found");
  return best->x;
}

Eigen::VectorXd update_noise_variances(const NetworkData& data, const Moments& moments,
                                       const Eigen::Ref<const Eigen::MatrixXd>& x_new) {
  const Index p = data.p(), N = data.N(), d = data.path_dim();
  Eigen::VectorXd s2(p + 1);
  const auto floor_of = [N](const Eigen::VectorXd& w) {
    return std::max(1e-12 * w.squaredNorm() / static_cast<double>(N), std::numeric_limits<double>::min());
  };
  for (Index i = 0; i < p; ++i) {
    const Eigen::VectorXd res = data.inputs().col(i) - data.R() * moments.s_hat.segment(i * d, d);
    const double tr = moments.P_hat.block(i * d, i * d, d, d).cwiseProduct(data.RtR()).sum();
    s2(i) = std::max((res.squaredNorm() + tr) / static_cast<double>(N), floor_of(data.inputs().col(i)));
  }
  const Eigen::VectorXd res = data.output() - x_new * moments.s_hat;
  const Eigen::MatrixXd xp = x_new * moments.P_hat;
  const double tr = xp.cwiseProduct(x_new).sum();
  s2(p) = std::max((res.squaredNorm() + tr) / static_cast<double>(N), floor_of(data.output()));
  return s2;
}

KernelRegressionFit fit_kernel_regression(const Eigen::Ref<const Eigen::MatrixXd>& phi,
                                          const Eigen::Ref<const Eigen::VectorXd>& y, Index n,
                                          std::optional<double> fixed_sigma2) {
  const Index N = phi.rows(), d = phi.cols();
  if (y.size() != N || n < 1 || d % n != 0 || d == 0)
    throw InvalidArgument("fit_kernel_regression: dimension mismatch");
  if (fixed_sigma2 && !(*fixed_sigma2 > 0.0)) throw InvalidArgument("fit_kernel_regression: sigma2 must be positive");
  const Index blocks = d / n;
  const double yy = y.squaredNorm();
  const double dN = static_cast<double>(N);

  KernelRegressionFit best;
  best.objective = kInf;
  const std::vector<double> betas = logistic_grid(0.05, 0.99, 20);
  std::vector<double> log_tau;
  for (int k = 0; k <= 80; ++k) log_tau.push_back(-20.0 + 0.5 * k);

  for (double beta : betas) {
    const StableSplineKernel kern(n, beta);
    // phi F with unit scale.
    Eigen::MatrixXd pf(N, d);
    for (Index b = 0; b < blocks; ++b)
      pf.middleCols(b * n, n) = kern.factor_transpose_times(phi.middleCols(b * n, n).transpose()).transpose();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, d);
    B.selfadjointView<Eigen::Lower>().rankUpdate(pf.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    if (es.info() != Eigen::Success) continue;
    const Eigen::VectorXd e = es.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd c = es.eigenvectors().transpose() * (pf.transpose() * y);
    const Eigen::ArrayXd c2 = c.array().square();

    // tau = lambda / sigma^2.
    auto eval = [&](double lt, double* s2_out) {
      const double tau = std::exp(lt);
      const Eigen::ArrayXd den = 1.0 + tau * e.array();
      const double quad = yy - tau * (c2 / den).sum();
      const double logdet = den.log().sum();
      double s2;
      double obj;
      if (fixed_sigma2) {
        s2 = *fixed_sigma2;
        obj = dN * std::log(s2) + logdet + quad / s2;
      } else {
        s2 = std::max(quad / dN, std::numeric_limits<double>::min());
        obj = dN * std::log(s2) + logdet + dN;
      }
      if (s2_out) *s2_out = s2;
      return std::isfinite(obj) ? obj : kInf;
    };
    std::size_t kb = 0;
    double qb = kInf;
    for (std::size_t k = 0; k < log_tau.size(); ++k) {
      const double q = eval(log_tau[k], nullptr);
      if (q < qb) {
        qb = q;
        kb = k;
      }
    }
    if (!std::isfinite(qb)) continue;
    const double lo = log_tau[kb == 0 ? 0 : kb - 1];
    const double hi = log_tau[std::min(kb + 1, log_tau.size() - 1)];
    double lt = golden_section([&](double t) { return eval(t, nullptr); }, lo, hi, 1e-8);
    if (eval(lt, nullptr) > qb) lt = log_tau[kb];
    double s2 = 0.0;
    const double obj = eval(lt, &s2);
    if (obj < best.objective) {
      const double tau = std::exp(lt);
      const Eigen::VectorXd w = (tau * c.array() / (1.0 + tau * e.array())).matrix();
      const Eigen::VectorXd u = es.eigenvectors() * w;
      best.mean.resize(d);
      for (Index b = 0; b < blocks; ++b) best.mean.segment(b * n, n) = kern.factor_times(u.segment(b * n, n));
      best.objective = obj;
      best.beta = beta;
      best.sigma2 = s2;
      best.lambda = tau * s2;
    }
  }
  if (!std::isfinite(best.objective)) throw IllConditioned("fit_kernel_regression: no finite marginal objective");
  return best;
}

HyperParameters initialize(const NetworkData& data, const ModuleSet& modules, const NebOptions& opts) {
  TwoStageOptions ts_opts;
  ts_opts.restarts = opts.two_stage_restarts;
  return initialize(data, two_stage(data, modules, ts_opts));
}

HyperParameters initialize(const NetworkData& data, const TwoStageResult& ts) {
  const Index p = data.p(), m = data.m();
  if (ts.sigmas.size() != p + 1) throw InvalidArgument("initialize: two-stage result does not match the data");
  HyperParameters eta;
  eta.theta = ts.theta;
  eta.sigmas = ts.sigmas;
  eta.lambdas.resize(p * m);
  eta.betas.resize(p * m);
  for (Index i = 0; i < p; ++i) {
    const auto fit = fit_kernel_regression(data.R(), data.inputs().col(i), data.n(), ts.sigmas(i));
    eta.lambdas.segment(i * m, m).setConstant(fit.lambda);
    eta.betas.segment(i * m, m).setConstant(std::clamp(fit.beta, kBetaMin, kBetaMax));
  }
  return eta;
}

NebEstimate neb_identify(const NetworkData& data, const ModuleSet& modules, const NebOptions& opts,
                         std::optional<HyperParameters> init) {
  const Index p = data.p(), m = data.m(), n = data.n(), N = data.N();
  if (static_cast<Index>(modules.size()) != p) throw InvalidArgument("neb_identify: one module per input is required");
  HyperParameters eta = init ? *init : initialize(data, modules, opts);
  if (eta.sigmas.size() != p + 1 || eta.lambdas.size() != p * m || eta.betas.size() != p * m ||
      eta.theta.size() != modules.num_params() || !eta.valid())
    throw InvalidArgument("neb_identify: initial hyperparameters have the wrong shape or range");
  if (!modules.admissible(eta.theta)) throw InvalidArgument("neb_identify: initial parameters are not admissible");

  NebEstimate est;
  const Index blocks = p * m;
  Eigen::MatrixXd x = output_regressor(data, modules.generators(eta.theta, N));
  for (int it = 0; it < opts.max_iter; ++it) {
    const BlockPrior prior = make_prior(eta, n, blocks);
    const LatentPosterior post(neb_information(data, x, eta.sigmas), prior);
    est.objective_trace.push_back(post.marginal_objective());
    const Moments mom = estep_moments(post, prior);

    HyperParameters next = eta;
    for (Index b = 0; b < blocks; ++b) {
      const auto kh = update_hyperparameters(mom.white[static_cast<std::size_t>(b)], eta.betas(b));
      next.lambdas(b) = kh.lambda;
      next.betas(b) = kh.beta;
    }
    const ThetaQuadratic quad = theta_quadratic(data, mom.s_hat, mom.S_hat, data.output());
    next.theta = update_theta(quad, modules, N, eta.theta, opts.theta);
    x = output_regressor(data, modules.generators(next.theta, N));
    next.sigmas = update_noise_variances(data, mom, x);

    const double change = relative_change(eta, next);
    eta = std::move(next);
    est.iterations = it + 1;
    if (change < opts.tol) {
      est.converged = true;
      break;
    }
  }
  const BlockPrior prior = make_prior(eta, n, blocks);
  const LatentPosterior post(neb_information(data, x, eta.sigmas), prior);
  est.objective_trace.push_back(post.marginal_objective());
  est.s_mean = post.mean();
  est.g_hat = modules.generators(eta.theta, N);
  est.eta = std::move(eta);
  return est;
}

}  // namespace nebid
