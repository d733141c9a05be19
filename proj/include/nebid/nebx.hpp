#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "nebid/neb.hpp"

namespace nebid {

// Conditionals of the model with a downstream sensor
//   z_f = w~_f - r_f = F G Rbar s + e_f,  F = T_N(f),  f ~ N(0, lambda_f K_beta_f),
// at fixed eta. Channels: inputs 0..p-1, output p, downstream p+1. The kernel
// hyperparameters of f are the last entries of eta.lambdas / eta.betas.
class NebxModel {
 public:
  NebxModel(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta);

  NebxModel(const NebxModel&) = delete;
  NebxModel& operator=(const NebxModel&) = delete;

  const NetworkData& data() const { return *data_; }
  const Eigen::MatrixXd& output_regressor() const { return x_; }
  const BlockPrior& prior_s() const { return prior_s_; }
  const BlockPrior& prior_f() const { return prior_f_; }
  Index latent_dim() const { return prior_s_.dim(); }
  Index path_length() const { return data_->n(); }

  // p(s | f, z) and p(f | s, z).
  GaussianPosterior conditional_s(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  GaussianPosterior conditional_f(const Eigen::Ref<const Eigen::VectorXd>& s) const;
  Eigen::VectorXd draw_s(const Eigen::Ref<const Eigen::VectorXd>& f, std::mt19937_64& rng) const;
  Eigen::VectorXd draw_f(const Eigen::Ref<const Eigen::VectorXd>& s, std::mt19937_64& rng) const;
  // Draws in the whitened coordinates of prior_s() / prior_f().
  Eigen::VectorXd draw_s_whitened(const Eigen::Ref<const Eigen::VectorXd>& f, std::mt19937_64& rng) const;
  Eigen::VectorXd draw_f_whitened(const Eigen::Ref<const Eigen::VectorXd>& s, std::mt19937_64& rng) const;

  // -2 log p(z | f) without the 2 pi constant.
  double conditional_objective(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  // log p(f_star | s, z) without the 2 pi constant.
  double conditional_log_density_f(const Eigen::Ref<const Eigen::VectorXd>& f_star,
                                   const Eigen::Ref<const Eigen::VectorXd>& s) const;
  // -2 log p(f) without the 2 pi constant.
  double prior_objective_f(const Eigen::Ref<const Eigen::VectorXd>& f) const;

  // v = f * s blockwise, each block truncated to n samples.
  Eigen::VectorXd convolve_paths(const Eigen::Ref<const Eigen::VectorXd>& f,
                                 const Eigen::Ref<const Eigen::VectorXd>& s) const;

 private:
  WhitenedSystem s_system(const Eigen::Ref<const Eigen::VectorXd>& f) const;
  InformationForm f_information(const Eigen::Ref<const Eigen::VectorXd>& s) const;

  const NetworkData* data_;
  Eigen::MatrixXd x_;
  double sigma_f_ = 1.0;
  BlockPrior prior_s_;
  BlockPrior prior_f_;
  WhitenedSystem base_;
  Eigen::MatrixXd y_;  // X F_s, the output regressor in whitened coordinates
};

struct GibbsOptions {
  int samples = 500;
  int burn_in = 100;
  std::uint64_t seed = 0;
  bool freeze_s = false;  // keep s at its initial value
  bool freeze_f = false;  // keep f at its initial value
  int objective_samples = 100;  // draws used for the marginal objective estimate; 0 disables it
  bool keep_samples = false;
};

struct GibbsStats {
  Eigen::VectorXd s_mean;
  Eigen::MatrixXd s_cov;
  Eigen::VectorXd f_mean;
  Eigen::MatrixXd f_cov;
  Eigen::VectorXd v_mean;
  Eigen::MatrixXd v_cov;
  int samples = 0;
  // Estimate of -2 log p(z) without the 2 pi constant, NaN when disabled.
  double objective = std::numeric_limits<double>::quiet_NaN();
  // One column per retained draw when keep_samples is set.
  Eigen::MatrixXd s_samples;
  Eigen::MatrixXd f_samples;
  Eigen::MatrixXd v_samples;
  // Per-block whitened second-moment diagonals, used for the kernel terms.
  std::vector<WhitenedMoment> s_white;
  WhitenedMoment f_white;

  Eigen::MatrixXd s_second() const { return s_cov + s_mean * s_mean.transpose(); }
  Eigen::MatrixXd f_second() const { return f_cov + f_mean * f_mean.transpose(); }
  Eigen::MatrixXd v_second() const { return v_cov + v_mean * v_mean.transpose(); }
};

// Alternating draws s ~ p(s | f), f ~ p(f | s) started at (s0, f0). Sample
// covariances use the divisor M.
GibbsStats gibbs_sample(const NebxModel& model, const Eigen::Ref<const Eigen::VectorXd>& s0,
                        const Eigen::Ref<const Eigen::VectorXd>& f0, const GibbsOptions& opts);

// Sampled -2 Q split by term, without 2 pi constants.
struct NebxQTerms {
  double prior_s = 0.0;
  double prior_f = 0.0;
  double inputs = 0.0;
  double output = 0.0;
  double downstream = 0.0;
  double total() const { return prior_s + prior_f + inputs + output + downstream; }
};

NebxQTerms nebx_q(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta,
                  const GibbsStats& stats);

Eigen::VectorXd nebx_update_theta(const NetworkData& data, const ModuleSet& modules, const GibbsStats& stats,
                                  const Eigen::Ref<const Eigen::VectorXd>& sigmas,
                                  const Eigen::Ref<const Eigen::VectorXd>& theta_start,
                                  const ThetaSolveOptions& opts = {});

// Noise variances for inputs, output and downstream sensor at the new theta.
Eigen::VectorXd nebx_update_variances(const NetworkData& data, const ModuleSet& modules, const GibbsStats& stats,
                                      const Eigen::Ref<const Eigen::VectorXd>& theta);

struct NebxOptions {
  double tol = 1e-10;
  int max_iter = 50;
  int samples = 500;
  int burn_in = 100;
  std::uint64_t seed = 0;
  int objective_samples = 100;
  ThetaSolveOptions theta;
  NebOptions neb;  // used when no NEB estimate is supplied
};

struct NebxEstimate {
  HyperParameters eta;
  std::vector<Eigen::VectorXd> g_hat;
  Eigen::VectorXd s_mean;
  Eigen::VectorXd f_mean;
  int iterations = 0;
  std::vector<double> objective_trace;  // estimated marginal objective per iteration
  bool converged = false;
};

// Extends a NEB estimate with the downstream sensor: f and its
// hyperparameters are initialized by an empirical-Bayes fit of z_f on the
// simulated output, then Monte Carlo ECM iterations follow.
HyperParameters nebx_initialize(const NetworkData& data, const ModuleSet& modules, const NebEstimate& neb,
                                Eigen::VectorXd* f0 = nullptr);

NebxEstimate nebx_identify(const NetworkData& data, const ModuleSet& modules, const NebxOptions& opts = {},
                           std::optional<NebEstimate> neb = std::nullopt);

}  // namespace nebid
