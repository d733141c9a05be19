#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <random>
#include <vector>

#include "nebid/lti.hpp"
#include "nebid/stable_spline.hpp"

namespace nebid {

// Row-stacked regressor. Every row block has `block_rows` rows and is tied to
// one noise channel.
struct StackedRegressor {
  Eigen::MatrixXd matrix;
  std::vector<Index> channel;  // noise channel per row block
  Index block_rows = 0;
  Index p = 0;  // modules
  Index m = 0;  // references
  Index n = 0;  // samples per latent path

  Index latent_dim() const { return matrix.cols(); }
};

// W = [I_p kron R; G (I_p kron R)], R = [R_1 ... R_m] (each N x n), G = [T_N(g_1) ... T_N(g_p)].
// Generators are lag-0-first and of length N. Channels: 0..p-1 for the inputs,
// p for the output.
StackedRegressor build_regressor(const std::vector<Eigen::VectorXd>& generators,
                                 const std::vector<Eigen::MatrixXd>& r_blocks);

// Independent stable-spline priors on consecutive latent blocks.
class BlockPrior {
 public:
  BlockPrior() = default;
  explicit BlockPrior(std::vector<ScaledKernel> blocks);

  const std::vector<ScaledKernel>& blocks() const { return blocks_; }
  Index dim() const { return dim_; }
  Index offset(std::size_t b) const { return offsets_[b]; }

  Eigen::MatrixXd covariance() const;
  // F and F^T products, F block-diagonal with prior covariance F F^T.
  Eigen::MatrixXd factor_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd factor_transpose_times(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd factor_solve(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  // Per-block whitened moments from diag(E[u u^T]), s = F u.
  std::vector<WhitenedMoment> whitened_blocks(const Eigen::Ref<const Eigen::VectorXd>& u_second_diag) const;

 private:
  std::vector<ScaledKernel> blocks_;
  std::vector<Index> offsets_;
  Index dim_ = 0;
};

struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::MatrixXd second_moment() const { return cov + mean * mean.transpose(); }
};

// Sufficient statistics of z = W s + e, e ~ N(0, Sigma_e):
// H = W^T Sigma^-1 W, y = W^T Sigma^-1 z, z_quad = z^T Sigma^-1 z,
// logdet_noise = log det Sigma.
struct InformationForm {
  Eigen::MatrixXd H;
  Eigen::VectorXd y;
  double z_quad = 0.0;
  double logdet_noise = 0.0;
};

// sigmas are indexed by regressor channel.
InformationForm information(const StackedRegressor& w, const Eigen::Ref<const Eigen::VectorXd>& z,
                            const Eigen::Ref<const Eigen::VectorXd>& sigmas);

// Information form in whitened coordinates s = F u: A = I + F^T H F, b = F^T y.
struct WhitenedSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double z_quad = 0.0;
  double logdet_noise = 0.0;
};

WhitenedSystem whiten(const InformationForm& info, const BlockPrior& prior);

// Posterior of the latent vector in whitened coordinates. Nothing of size 2N
// is factored and the prior covariance is never inverted. The prior must
// outlive the posterior.
class LatentPosterior {
 public:
  LatentPosterior(const InformationForm& info, const BlockPrior& prior);
  LatentPosterior(const WhitenedSystem& sys, const BlockPrior& prior);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& whitened_mean() const { return u_mean_; }
  Eigen::MatrixXd covariance() const;
  GaussianPosterior moments() const { return moments(nullptr); }
  // Also returns diag(A^-1 + u u^T), the whitened second-moment diagonal.
  GaussianPosterior moments(Eigen::VectorXd* whitened_second_diag) const;
  // log det Sigma_z + z^T Sigma_z^-1 z, via the determinant and inversion lemmas.
  double marginal_objective() const { return objective_; }
  Eigen::VectorXd draw(std::mt19937_64& rng) const;
  // Draw of u with s = F u.
  Eigen::VectorXd draw_whitened(std::mt19937_64& rng) const;
  // log det A = log det(P^-1 Sigma_s).
  double logdet_information() const { return logdet_a_; }

 private:
  const BlockPrior* prior_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd u_mean_;
  Eigen::VectorXd mean_;
  double objective_ = 0.0;
  double logdet_a_ = 0.0;
};

GaussianPosterior posterior(const Eigen::Ref<const Eigen::VectorXd>& z, const StackedRegressor& w,
                            const Eigen::Ref<const Eigen::VectorXd>& sigmas, const BlockPrior& prior);

double marginal_objective(const Eigen::Ref<const Eigen::VectorXd>& z, const StackedRegressor& w,
                          const Eigen::Ref<const Eigen::VectorXd>& sigmas, const BlockPrior& prior);

}  // namespace nebid
