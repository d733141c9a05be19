#include "nebid/nebx.hpp"

#include <algorithm>
#include <cmath>

#include "nebid/errors.hpp"
#include "nebid/random.hpp"

namespace nebid {

namespace {

void check_eta(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta) {
  const Index p = data.p(), blocks = data.p() * data.m();
  if (!data.has_downstream()) throw InvalidArgument("nebx: the data carry no downstream sensor");
  if (eta.sigmas.size() != p + 2 || eta.lambdas.size() != blocks + 1 || eta.betas.size() != blocks + 1 ||
      eta.theta.size() != modules.num_params() || !eta.valid())
    throw InvalidArgument("nebx: hyperparameters have the wrong shape or range");
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& samples, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd c = samples.colwise() - mean;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(samples.rows(), samples.rows());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(c, 1.0 / static_cast<double>(samples.cols()));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov;
}

double prior_terms(const BlockPrior& prior, const std::vector<WhitenedMoment>& white) {
  if (white.size() != prior.blocks().size()) throw InvalidArgument("nebx: whitened moments do not match the prior");
  double q = 0.0;
  for (std::size_t b = 0; b < white.size(); ++b) q += prior_term(prior.blocks()[b], white[b]);
  return q;
}

double log_mean_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s / static_cast<double>(v.size()));
}

}  // namespace

NebxModel::NebxModel(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta) : data_(&data) {
  check_eta(data, modules, eta);
  const Index p = data.p(), blocks = p * data.m(), n = data.n();
  x_ = nebid::output_regressor(data, modules.generators(eta.theta, data.N()));
  sigma_f_ = eta.sigmas(p + 1);
  prior_s_ = make_prior(eta, n, blocks);
  prior_f_ = BlockPrior({ScaledKernel(n, eta.betas(blocks), eta.lambdas(blocks))});
  base_ = whiten(neb_information(data, x_, eta.sigmas), prior_s_);
  y_ = prior_s_.factor_transpose_times(x_.transpose()).transpose();
}

WhitenedSystem NebxModel::s_system(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  if (f.size() != path_length()) throw InvalidArgument("nebx: downstream path has the wrong length");
  const Eigen::VectorXd& zf = data_->downstream();
  const Eigen::MatrixXd fy = toeplitz_apply(f, y_);
  WhitenedSystem sys = base_;
  sys.A.selfadjointView<Eigen::Lower>().rankUpdate(fy.transpose(), 1.0 / sigma_f_);
  sys.A.triangularView<Eigen::StrictlyUpper>() = sys.A.transpose();
  sys.b.noalias() += fy.transpose() * zf / sigma_f_;
  sys.z_quad += zf.squaredNorm() / sigma_f_;
  sys.logdet_noise += static_cast<double>(data_->N()) * std::log(sigma_f_);
  return sys;
}

InformationForm NebxModel::f_information(const Eigen::Ref<const Eigen::VectorXd>& s) const {
  if (s.size() != latent_dim()) throw InvalidArgument("nebx: latent vector has the wrong length");
  const Eigen::VectorXd& zf = data_->downstream();
  const Eigen::MatrixXd wf = toeplitz(x_ * s, path_length());
  InformationForm info;
  info.H = wf.transpose() * wf / sigma_f_;
  info.y = wf.transpose() * zf / sigma_f_;
  info.z_quad = zf.squaredNorm() / sigma_f_;
  info.logdet_noise = static_cast<double>(data_->N()) * std::log(sigma_f_);
  return info;
}

GaussianPosterior NebxModel::conditional_s(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  return LatentPosterior(s_system(f), prior_s_).moments();
}

GaussianPosterior NebxModel::conditional_f(const Eigen::Ref<const Eigen::VectorXd>& s) const {
  return LatentPosterior(f_information(s), prior_f_).moments();
}

Eigen::VectorXd NebxModel::draw_s(const Eigen::Ref<const Eigen::VectorXd>& f, std::mt19937_64& rng) const {
  return LatentPosterior(s_system(f), prior_s_).draw(rng);
}

Eigen::VectorXd NebxModel::draw_f(const Eigen::Ref<const Eigen::VectorXd>& s, std::mt19937_64& rng) const {
  return LatentPosterior(f_information(s), prior_f_).draw(rng);
}

Eigen::VectorXd NebxModel::draw_s_whitened(const Eigen::Ref<const Eigen::VectorXd>& f, std::mt19937_64& rng) const {
  return LatentPosterior(s_system(f), prior_s_).draw_whitened(rng);
}

Eigen::VectorXd NebxModel::draw_f_whitened(const Eigen::Ref<const Eigen::VectorXd>& s, std::mt19937_64& rng) const {
  return LatentPosterior(f_information(s), prior_f_).draw_whitened(rng);
}

double NebxModel::conditional_objective(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  return LatentPosterior(s_system(f), prior_s_).marginal_objective();
}

double NebxModel::conditional_log_density_f(const Eigen::Ref<const Eigen::VectorXd>& f_star,
                                            const Eigen::Ref<const Eigen::VectorXd>& s) const {
  // P^-1 = H + (lambda K)^-1, log det P = log det(lambda K) - log det A.
  const InformationForm info = f_information(s);
  const LatentPosterior post(info, prior_f_);
  const Eigen::VectorXd delta = f_star - post.mean();
  const auto& blk = prior_f_.blocks().front();
  const double quad = delta.dot(info.H * delta) + blk.kernel.inverse_quadratic(delta) / blk.lambda;
  const double logdet_p = blk.kernel.log_det() + static_cast<double>(blk.size()) * std::log(blk.lambda) -
                          post.logdet_information();
  return -0.5 * (logdet_p + quad);
}

double NebxModel::prior_objective_f(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  const auto& blk = prior_f_.blocks().front();
  return blk.kernel.log_det() + static_cast<double>(blk.size()) * std::log(blk.lambda) +
         blk.kernel.inverse_quadratic(f) / blk.lambda;
}

Eigen::VectorXd NebxModel::convolve_paths(const Eigen::Ref<const Eigen::VectorXd>& f,
                                          const Eigen::Ref<const Eigen::VectorXd>& s) const {
  const Index n = path_length();
  if (f.size() != n || s.size() != latent_dim()) throw InvalidArgument("convolve_paths: dimension mismatch");
  Eigen::VectorXd v(s.size());
  for (Index b = 0; b < s.size() / n; ++b) v.segment(b * n, n) = convolve(f, s.segment(b * n, n));
  return v;
}

GibbsStats gibbs_sample(const NebxModel& model, const Eigen::Ref<const Eigen::VectorXd>& s0,
                        const Eigen::Ref<const Eigen::VectorXd>& f0, const GibbsOptions& opts) {
  const Index d = model.latent_dim(), n = model.path_length();
  if (s0.size() != d || f0.size() != n) throw InvalidArgument("gibbs_sample: initial state has the wrong size");
  if (opts.samples < 1 || opts.burn_in < 0) throw InvalidArgument("gibbs_sample: need samples >= 1, burn_in >= 0");
  std::mt19937_64 rng(opts.seed);
  const Index M = opts.samples;
  Eigen::MatrixXd ss(d, M), fs(n, M), vs(d, M);
  Eigen::VectorXd s = s0, f = f0;
  Eigen::VectorXd us = Eigen::VectorXd::Zero(d), uf = Eigen::VectorXd::Zero(n);
  if (opts.freeze_s) us = model.prior_s().factor_solve(s0);
  if (opts.freeze_f) uf = model.prior_f().factor_solve(f0);
  Eigen::VectorXd us2 = Eigen::VectorXd::Zero(d), uf2 = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < opts.burn_in + opts.samples; ++k) {
    if (!opts.freeze_s) {
      us = model.draw_s_whitened(f, rng);
      s = model.prior_s().factor_times(us);
    }
    if (!opts.freeze_f) {
      uf = model.draw_f_whitened(s, rng);
      f = model.prior_f().factor_times(uf);
    }
    if (k >= opts.burn_in) {
      const Index c = k - opts.burn_in;
      ss.col(c) = s;
      fs.col(c) = f;
      vs.col(c) = model.convolve_paths(f, s);
      us2 += us.cwiseAbs2();
      uf2 += uf.cwiseAbs2();
    }
  }
  GibbsStats st;
  st.s_white = model.prior_s().whitened_blocks(us2 / static_cast<double>(M));
  st.f_white = model.prior_f().whitened_blocks(uf2 / static_cast<double>(M)).front();
  st.samples = opts.samples;
  st.s_mean = ss.rowwise().mean();
  st.f_mean = fs.rowwise().mean();
  st.v_mean = vs.rowwise().mean();
  st.s_cov = sample_cov(ss, st.s_mean);
  st.f_cov = sample_cov(fs, st.f_mean);
  st.v_cov = sample_cov(vs, st.v_mean);

  if (opts.objective_samples > 0 && !opts.freeze_s && !opts.freeze_f) {
    // -2 log p(z) = -2 log p(z | f*) - 2 log p(f*) + 2 log p(f* | z), with
    // p(f* | z) averaged over the s draws.
    const Index count = std::min<Index>(opts.objective_samples, M);
    const Index stride = M / count;
    std::vector<double> logs;
    for (Index c = 0; c < count; ++c) logs.push_back(model.conditional_log_density_f(st.f_mean, ss.col(c * stride)));
    st.objective = model.conditional_objective(st.f_mean) + model.prior_objective_f(st.f_mean) +
                   2.0 * log_mean_exp(logs);
  }
  if (opts.keep_samples) {
    st.s_samples = std::move(ss);
    st.f_samples = std::move(fs);
    st.v_samples = std::move(vs);
  }
  return st;
}

NebxQTerms nebx_q(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta,
                  const GibbsStats& stats) {
  check_eta(data, modules, eta);
  const Index p = data.p(), N = data.N(), d = data.path_dim(), blocks = p * data.m(), n = data.n();
  const double dN = static_cast<double>(N);
  NebxQTerms q;
  q.prior_s = prior_terms(make_prior(eta, n, blocks), stats.s_white);
  q.prior_f = prior_terms(BlockPrior({ScaledKernel(n, eta.betas(blocks), eta.lambdas(blocks))}), {stats.f_white});
  for (Index i = 0; i < p; ++i) {
    const double s2 = eta.sigmas(i);
    const Eigen::VectorXd res = data.inputs().col(i) - data.R() * stats.s_mean.segment(i * d, d);
    const double tr = stats.s_cov.block(i * d, i * d, d, d).cwiseProduct(data.RtR()).sum();
    q.inputs += dN * std::log(s2) + (res.squaredNorm() + tr) / s2;
  }
  const Eigen::MatrixXd x = output_regressor(data, modules.generators(eta.theta, N));
  {
    const double s2 = eta.sigmas(p);
    const Eigen::VectorXd res = data.output() - x * stats.s_mean;
    const double tr = (x * stats.s_cov).cwiseProduct(x).sum();
    q.output = dN * std::log(s2) + (res.squaredNorm() + tr) / s2;
  }
  {
    const double s2 = eta.sigmas(p + 1);
    const Eigen::VectorXd res = data.downstream() - x * stats.v_mean;
    const double tr = (x * stats.v_cov).cwiseProduct(x).sum();
    q.downstream = dN * std::log(s2) + (res.squaredNorm() + tr) / s2;
  }
  return q;
}

Eigen::VectorXd nebx_update_theta(const NetworkData& data, const ModuleSet& modules, const GibbsStats& stats,
                                  const Eigen::Ref<const Eigen::VectorXd>& sigmas,
                                  const Eigen::Ref<const Eigen::VectorXd>& theta_start, const ThetaSolveOptions& opts) {
  const Index p = data.p();
  if (sigmas.size() != p + 2) throw InvalidArgument("nebx_update_theta: one noise variance per channel is required");
  const ThetaQuadratic qs = theta_quadratic(data, stats.s_mean, stats.s_second(), data.output());
  const ThetaQuadratic qv = theta_quadratic(data, stats.v_mean, stats.v_second(), data.downstream());
  ThetaQuadratic q;
  q.A = qs.A / sigmas(p) + qv.A / sigmas(p + 1);
  q.b = qs.b / sigmas(p) + qv.b / sigmas(p + 1);
  return update_theta(q, modules, data.N(), theta_start, opts);
}

Eigen::VectorXd nebx_update_variances(const NetworkData& data, const ModuleSet& modules, const GibbsStats& stats,
                                      const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const Index p = data.p(), N = data.N();
  const Eigen::MatrixXd x = output_regressor(data, modules.generators(theta, N));
  Moments mom;
  mom.s_hat = stats.s_mean;
  mom.P_hat = stats.s_cov;
  Eigen::VectorXd out(p + 2);
  out.head(p + 1) = update_noise_variances(data, mom, x);
  const Eigen::VectorXd res = data.downstream() - x * stats.v_mean;
  const double tr = (x * stats.v_cov).cwiseProduct(x).sum();
  const double floor = std::max(1e-12 * data.downstream().squaredNorm() / static_cast<double>(N),
                                std::numeric_limits<double>::min());
  out(p + 1) = std::max((res.squaredNorm() + tr) / static_cast<double>(N), floor);
  return out;
}

HyperParameters nebx_initialize(const NetworkData& data, const ModuleSet& modules, const NebEstimate& neb,
                                Eigen::VectorXd* f0) {
  if (!data.has_downstream()) throw InvalidArgument("nebx: the data carry no downstream sensor");
  const Index p = data.p(), blocks = p * data.m();
  if (neb.eta.sigmas.size() != p + 1 || neb.eta.lambdas.size() != blocks || neb.s_mean.size() != data.latent_dim())
    throw InvalidArgument("nebx_initialize: NEB estimate does not match the data");
  const Eigen::MatrixXd x = output_regressor(data, modules.generators(neb.eta.theta, data.N()));
  const Eigen::MatrixXd phi = toeplitz(x * neb.s_mean, data.n());
  const KernelRegressionFit fit = fit_kernel_regression(phi, data.downstream(), data.n());
  HyperParameters eta;
  eta.theta = neb.eta.theta;
  eta.sigmas.resize(p + 2);
  eta.sigmas << neb.eta.sigmas, fit.sigma2;
  eta.lambdas.resize(blocks + 1);
  eta.lambdas << neb.eta.lambdas, fit.lambda;
  eta.betas.resize(blocks + 1);
  eta.betas << neb.eta.betas, std::clamp(fit.beta, kBetaMin, kBetaMax);
  if (f0) *f0 = fit.mean;
  return eta;
}

NebxEstimate nebx_identify(const NetworkData& data, const ModuleSet& modules, const NebxOptions& opts,
                           std::optional<NebEstimate> neb) {
  if (!data.has_downstream()) throw InvalidArgument("nebx: the data carry no downstream sensor");
  if (!neb) neb = neb_identify(data, modules, opts.neb);
  const Index n = data.n(), blocks = data.p() * data.m();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  HyperParameters eta = nebx_initialize(data, modules, *neb, &f);
  Eigen::VectorXd s = neb->s_mean;

  NebxEstimate est;
  for (int it = 0; it < opts.max_iter; ++it) {
    const NebxModel model(data, modules, eta);
    GibbsOptions go;
    go.samples = opts.samples;
    go.burn_in = opts.burn_in;
    go.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(it));
    go.objective_samples = opts.objective_samples;
    const GibbsStats st = gibbs_sample(model, s, f, go);
    est.objective_trace.push_back(st.objective);

    HyperParameters next = eta;
    for (Index b = 0; b < blocks; ++b) {
      const auto kh = update_hyperparameters(st.s_white[static_cast<std::size_t>(b)], eta.betas(b));
      next.lambdas(b) = kh.lambda;
      next.betas(b) = kh.beta;
    }
    const auto kf = update_hyperparameters(st.f_white, eta.betas(blocks));
    next.lambdas(blocks) = kf.lambda;
    next.betas(blocks) = kf.beta;
    next.theta = nebx_update_theta(data, modules, st, eta.sigmas, eta.theta, opts.theta);
    next.sigmas = nebx_update_variances(data, modules, st, next.theta);

    s = st.s_mean;
    f = st.f_mean;
    const double change = relative_change(eta, next);
    eta = std::move(next);
    est.iterations = it + 1;
    if (change < opts.tol) {
      est.converged = true;
      break;
    }
  }
  est.s_mean = s;
  est.f_mean = f;
  est.g_hat = modules.generators(eta.theta, data.N());
  est.eta = std::move(eta);
  return est;
}

}  // namespace nebid
