#include "nebid/gaussian.hpp"

#include <cmath>

namespace nebid {

StackedRegressor build_regressor(const std::vector<Eigen::VectorXd>& generators,
                                 const std::vector<Eigen::MatrixXd>& r_blocks) {
  if (generators.empty() || r_blocks.empty()) throw InvalidArgument("build_regressor: empty structure");
  const Index N = r_blocks.front().rows();
  const Index n = r_blocks.front().cols();
  for (const auto& r : r_blocks)
    if (r.rows() != N || r.cols() != n) throw InvalidArgument("build_regressor: inconsistent reference blocks");
  for (const auto& g : generators)
    if (g.size() != N) throw InvalidArgument("build_regressor: generator length must equal N");

  const Index p = static_cast<Index>(generators.size());
  const Index m = static_cast<Index>(r_blocks.size());
  Eigen::MatrixXd rr(N, n * m);
  for (Index l = 0; l < m; ++l) rr.middleCols(l * n, n) = r_blocks[static_cast<std::size_t>(l)];

  StackedRegressor w;
  w.block_rows = N;
  w.p = p;
  w.m = m;
  w.n = n;
  w.matrix = Eigen::MatrixXd::Zero((p + 1) * N, p * n * m);
  for (Index i = 0; i < p; ++i) {
    w.matrix.block(i * N, i * n * m, N, n * m) = rr;
    w.matrix.block(p * N, i * n * m, N, n * m) = toeplitz_apply(generators[static_cast<std::size_t>(i)], rr);
    w.channel.push_back(i);
  }
  w.channel.push_back(p);
  return w;
}

BlockPrior::BlockPrior(std::vector<ScaledKernel> blocks) : blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) {
    offsets_.push_back(dim_);
    dim_ += b.size();
  }
}

Eigen::MatrixXd BlockPrior::covariance() const {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(dim_, dim_);
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    c.block(offsets_[b], offsets_[b], blocks_[b].size(), blocks_[b].size()) = blocks_[b].matrix();
  return c;
}

Eigen::MatrixXd BlockPrior::factor_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != dim_) throw InvalidArgument("BlockPrior::factor_times: dimension mismatch");
  Eigen::MatrixXd out(dim_, x.cols());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Index nb = blocks_[b].size();
    out.middleRows(offsets_[b], nb) =
        std::sqrt(blocks_[b].lambda) * blocks_[b].kernel.factor_times(x.middleRows(offsets_[b], nb));
  }
  return out;
}

Eigen::MatrixXd BlockPrior::factor_transpose_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != dim_) throw InvalidArgument("BlockPrior::factor_transpose_times: dimension mismatch");
  Eigen::MatrixXd out(dim_, x.cols());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Index nb = blocks_[b].size();
    out.middleRows(offsets_[b], nb) =
        std::sqrt(blocks_[b].lambda) * blocks_[b].kernel.factor_transpose_times(x.middleRows(offsets_[b], nb));
  }
  return out;
}

Eigen::MatrixXd BlockPrior::factor_solve(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != dim_) throw InvalidArgument("BlockPrior::factor_solve: dimension mismatch");
  Eigen::MatrixXd out(dim_, x.cols());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Index nb = blocks_[b].size();
    out.middleRows(offsets_[b], nb) =
        blocks_[b].kernel.factor_solve(x.middleRows(offsets_[b], nb)) / std::sqrt(blocks_[b].lambda);
  }
  return out;
}

std::vector<WhitenedMoment> BlockPrior::whitened_blocks(const Eigen::Ref<const Eigen::VectorXd>& u_second_diag) const {
  if (u_second_diag.size() != dim_) throw InvalidArgument("BlockPrior::whitened_blocks: dimension mismatch");
  std::vector<WhitenedMoment> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    out.push_back({u_second_diag.segment(offsets_[b], blocks_[b].size()), blocks_[b].lambda, blocks_[b].kernel.beta()});
  return out;
}

InformationForm information(const StackedRegressor& w, const Eigen::Ref<const Eigen::VectorXd>& z,
                            const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  const Index N = w.block_rows;
  const Index blocks = static_cast<Index>(w.channel.size());
  if (z.size() != w.matrix.rows() || blocks * N != w.matrix.rows())
    throw InvalidArgument("information: data length does not match regressor");
  InformationForm info;
  const Index d = w.latent_dim();
  info.H = Eigen::MatrixXd::Zero(d, d);
  info.y = Eigen::VectorXd::Zero(d);
  for (Index b = 0; b < blocks; ++b) {
    const Index c = w.channel[static_cast<std::size_t>(b)];
    if (c < 0 || c >= sigmas.size()) throw InvalidArgument("information: channel without a noise variance");
    const double s2 = sigmas(c);
    if (!(s2 > 0.0)) throw InvalidArgument("information: noise variances must be positive");
    const auto wb = w.matrix.middleRows(b * N, N);
    const auto zb = z.segment(b * N, N);
    info.H.selfadjointView<Eigen::Lower>().rankUpdate(wb.transpose(), 1.0 / s2);
    info.y.noalias() += wb.transpose() * zb / s2;
    info.z_quad += zb.squaredNorm() / s2;
    info.logdet_noise += static_cast<double>(N) * std::log(s2);
  }
  info.H.triangularView<Eigen::StrictlyUpper>() = info.H.transpose();
  return info;
}

WhitenedSystem whiten(const InformationForm& info, const BlockPrior& prior) {
  const Index d = prior.dim();
  if (info.H.rows() != d || info.y.size() != d) throw InvalidArgument("whiten: prior/data dimension mismatch");
  WhitenedSystem sys;
  const Eigen::MatrixXd fth = prior.factor_transpose_times(info.H);
  sys.A = prior.factor_transpose_times(fth.transpose());
  sys.A = 0.5 * (sys.A + sys.A.transpose());
  sys.A.diagonal().array() += 1.0;
  sys.b = prior.factor_transpose_times(info.y);
  sys.z_quad = info.z_quad;
  sys.logdet_noise = info.logdet_noise;
  return sys;
}

LatentPosterior::LatentPosterior(const InformationForm& info, const BlockPrior& prior)
    : LatentPosterior(whiten(info, prior), prior) {}

LatentPosterior::LatentPosterior(const WhitenedSystem& sys, const BlockPrior& prior) : prior_(&prior) {
  const Index d = prior.dim();
  if (sys.A.rows() != d || sys.A.cols() != d || sys.b.size() != d)
    throw InvalidArgument("LatentPosterior: prior/data dimension mismatch");
  llt_.compute(sys.A);
  if (llt_.info() != Eigen::Success || !sys.A.allFinite())
    throw IllConditioned("posterior: information matrix Cholesky failed");
  u_mean_ = llt_.solve(sys.b);
  mean_ = prior.factor_times(u_mean_);
  logdet_a_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  objective_ = sys.logdet_noise + logdet_a_ + sys.z_quad - sys.b.dot(u_mean_);
}

Eigen::MatrixXd LatentPosterior::covariance() const { return moments(nullptr).cov; }

GaussianPosterior LatentPosterior::moments(Eigen::VectorXd* whitened_second_diag) const {
  // P = F A^-1 F^T
  const Index d = prior_->dim();
  const Eigen::MatrixXd ainv = llt_.solve(Eigen::MatrixXd::Identity(d, d));
  if (whitened_second_diag) *whitened_second_diag = ainv.diagonal() + u_mean_.cwiseAbs2();
  const Eigen::MatrixXd fa = prior_->factor_times(ainv);
  Eigen::MatrixXd p = prior_->factor_times(fa.transpose());
  return {mean_, 0.5 * (p + p.transpose())};
}

Eigen::VectorXd LatentPosterior::draw_whitened(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(u_mean_.size());
  for (Index i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
  // u = u_mean + L^-T xi has covariance A^-1.
  return u_mean_ + llt_.matrixU().solve(xi);
}

Eigen::VectorXd LatentPosterior::draw(std::mt19937_64& rng) const { return prior_->factor_times(draw_whitened(rng)); }

GaussianPosterior posterior(const Eigen::Ref<const Eigen::VectorXd>& z, const StackedRegressor& w,
                            const Eigen::Ref<const Eigen::VectorXd>& sigmas, const BlockPrior& prior) {
  return LatentPosterior(information(w, z, sigmas), prior).moments();
}

double marginal_objective(const Eigen::Ref<const Eigen::VectorXd>& z, const StackedRegressor& w,
                          const Eigen::Ref<const Eigen::VectorXd>& sigmas, const BlockPrior& prior) {
  return LatentPosterior(information(w, z, sigmas), prior).marginal_objective();
}

}  // namespace nebid
