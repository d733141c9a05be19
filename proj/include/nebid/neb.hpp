#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "nebid/gaussian.hpp"
#include "nebid/network.hpp"
#include "nebid/optim.hpp"
#include "nebid/parametrization.hpp"

namespace nebid {

struct TwoStageResult;

// Which part of the network is identified: the modules G_{output, i} for every
// i in `inputs`, with the sensitivity paths from `references` to the inputs
// modelled as latent impulse responses.
struct TargetStructure {
  Index output = 0;
  std::vector<Index> inputs;
  std::vector<Index> references;
  std::optional<Index> downstream;  // extra sensor after the output node
};

// Measurements rearranged for the estimators.
//   inputs.col(i)  = w~_i for i in the input set
//   output         = w~_j - r_j
//   downstream     = w~_f - r_f (empty without a downstream sensor)
//   R              = [T_N(r_l1)[:, :n] ... T_N(r_lm)[:, :n]]
class NetworkData {
 public:
  NetworkData(const Dataset& data, const TargetStructure& structure, Index n);

  Index N() const { return N_; }
  Index n() const { return n_; }
  Index p() const { return static_cast<Index>(structure_.inputs.size()); }
  Index m() const { return static_cast<Index>(structure_.references.size()); }
  // Length of one input's latent vector s_i = [s_{i,l1}; ...; s_{i,lm}].
  Index path_dim() const { return n_ * m(); }
  Index latent_dim() const { return p() * path_dim(); }
  bool has_downstream() const { return downstream_.size() > 0; }

  const TargetStructure& structure() const { return structure_; }
  const Eigen::MatrixXd& R() const { return R_; }
  const Eigen::MatrixXd& RtR() const { return RtR_; }
  const std::vector<Eigen::MatrixXd>& r_blocks() const { return r_blocks_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& output() const { return output_; }
  const Eigen::VectorXd& downstream() const { return downstream_; }

  // [w~_1; ...; w~_p; w~_j - r_j]
  Eigen::VectorXd stacked_z() const;

 private:
  TargetStructure structure_;
  Index N_;
  Index n_;
  Eigen::MatrixXd R_;
  Eigen::MatrixXd RtR_;
  std::vector<Eigen::MatrixXd> r_blocks_;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd output_;
  Eigen::VectorXd downstream_;
};

// eta: noise variances per channel (inputs, output[, downstream]), kernel
// hyperparameters per latent block (input-major, reference-minor; NEBX appends
// the downstream path f as the last block), and the stacked module parameters.
struct HyperParameters {
  Eigen::VectorXd sigmas;
  Eigen::VectorXd lambdas;
  Eigen::VectorXd betas;
  Eigen::VectorXd theta;

  Eigen::VectorXd flatten() const;
  // sigmas > 0, lambdas > 0, betas in (0, 1).
  bool valid() const;
};

double relative_change(const HyperParameters& prev, const HyperParameters& next);

// Prior over the first `blocks` latent blocks of length n.
BlockPrior make_prior(const HyperParameters& eta, Index n, Index blocks);

// X = G (I_p kron R) = [T_N(g_1) R ... T_N(g_p) R], N x latent_dim.
Eigen::MatrixXd output_regressor(const NetworkData& data, const std::vector<Eigen::VectorXd>& generators);

// Information form of z = W_theta s + e without materializing W_theta.
InformationForm neb_information(const NetworkData& data, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& sigmas);

// E-step moments s^, P^, S^ = P^ + s^ s^^T. `white` holds the diagonal blocks
// of S^ in the whitened coordinates of the prior they were computed under and
// is used for every inverse-kernel term when present.
struct Moments {
  Eigen::VectorXd s_hat;
  Eigen::MatrixXd P_hat;
  Eigen::MatrixXd S_hat;
  std::vector<WhitenedMoment> white;
};

Moments estep_moments(const GaussianPosterior& post);
Moments estep_moments(const LatentPosterior& post, const BlockPrior& prior);

// log det(lambda K) + tr((lambda K)^-1 S) for one block.
double prior_term(const ScaledKernel& sk, const WhitenedMoment& w);

// -2 Q(eta) = Q0(sigma, theta) + Qs(lambda, beta).
struct QTerms {
  double q0 = 0.0;
  double qs = 0.0;
  double total() const { return q0 + qs; }
};

// Generic form: `info` built at the evaluated (sigma, theta), `prior` at the
// evaluated (lambda, beta), moments from the previous iterate.
QTerms q_function(const InformationForm& info, const BlockPrior& prior, const Moments& moments);
QTerms q_function(const NetworkData& data, const ModuleSet& modules, const HyperParameters& eta,
                  const Moments& moments);

// Kernel hyperparameter CM-step on one diagonal block of S^. Returns the
// current beta when no grid or refined point improves on it.
struct KernelHyper {
  double lambda;
  double beta;
};
// Q_beta(beta) = log det K_beta + n log tr(K_beta^-1 S).
double q_beta(const Eigen::Ref<const Eigen::MatrixXd>& s_hat_block, double beta);
double q_beta(const WhitenedMoment& w, double beta);
KernelHyper update_hyperparameters(const Eigen::Ref<const Eigen::MatrixXd>& s_hat_block, Index n,
                                   std::optional<double> current_beta = std::nullopt);
KernelHyper update_hyperparameters(const WhitenedMoment& w, std::optional<double> current_beta = std::nullopt);
// 200-point grid, logistic spacing on [kBetaMin, kBetaMax].
const std::vector<double>& beta_grid();

// J(theta) = g^T A g - 2 b^T g over the stacked generators g (length p N).
struct ThetaQuadratic {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  double value(const Eigen::Ref<const Eigen::VectorXd>& g) const { return g.dot(A * g) - 2.0 * b.dot(g); }
};

// A = (I_p kron D)^T (Rbar S^ Rbar^T kron I_N)(I_p kron D), b_i = T_N(R s^_i)^T y.
ThetaQuadratic theta_quadratic(const NetworkData& data, const Eigen::Ref<const Eigen::VectorXd>& s_mean,
                               const Eigen::Ref<const Eigen::MatrixXd>& S_hat,
                               const Eigen::Ref<const Eigen::VectorXd>& y);

struct ThetaSolveOptions {
  int restarts = 5;
  MinimizeOptions local;
};

// Linear modules: closed form (L^T A L)^-1 L^T b. Rational modules: damped
// Newton from `theta_start` with random stable restarts if that fails.
// Never returns a point with a larger J than an admissible start.
Eigen::VectorXd update_theta(const ThetaQuadratic& quad, const ModuleSet& modules, Index N,
                             const Eigen::Ref<const Eigen::VectorXd>& theta_start,
                             const ThetaSolveOptions& opts = {});

// Value, gradient and Gauss-Newton curvature of J(theta).
std::optional<LocalModel> theta_objective(const ThetaQuadratic& quad, const ModuleSet& modules, Index N,
                                          const Eigen::Ref<const Eigen::VectorXd>& theta, bool with_derivatives);

// Closed-form noise variances for the inputs and the output.
Eigen::VectorXd update_noise_variances(const NetworkData& data, const Moments& moments,
                                       const Eigen::Ref<const Eigen::MatrixXd>& x_new);

// Empirical-Bayes fit of y = Phi s + e, s = [s_1; ...; s_m] with a shared
// stable-spline prior (lambda, beta) on each length-n block.
struct KernelRegressionFit {
  Eigen::VectorXd mean;
  double lambda = 1.0;
  double beta = 0.5;
  double sigma2 = 1.0;
  double objective = 0.0;
};
KernelRegressionFit fit_kernel_regression(const Eigen::Ref<const Eigen::MatrixXd>& phi,
                                          const Eigen::Ref<const Eigen::VectorXd>& y, Index n,
                                          std::optional<double> fixed_sigma2 = std::nullopt);

struct NebOptions {
  double tol = 1e-10;
  int max_iter = 300;
  ThetaSolveOptions theta;
  int two_stage_restarts = 5;
};

// Two-stage theta, kernel hyperparameters from an empirical-Bayes fit of each
// input's sensitivities, noise variances from the two-stage residuals.
HyperParameters initialize(const NetworkData& data, const ModuleSet& modules, const NebOptions& opts = {});
HyperParameters initialize(const NetworkData& data, const TwoStageResult& two_stage);

struct NebEstimate {
  HyperParameters eta;
  std::vector<Eigen::VectorXd> g_hat;  // module generators, length N
  Eigen::VectorXd s_mean;              // latent posterior mean at eta
  int iterations = 0;
  std::vector<double> objective_trace;  // marginal objective at every iterate
  bool converged = false;
};

NebEstimate neb_identify(const NetworkData& data, const ModuleSet& modules, const NebOptions& opts = {},
                         std::optional<HyperParameters> init = std::nullopt);

}  // namespace nebid
