#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "nebid/neb.hpp"

namespace nebid {

struct TwoStageOptions {
  int restarts = 5;        // random stable starts for rational modules
  std::uint64_t seed = 0;  // seeds the random starts
  Index fir_length = 20;   // FIR length used to seed the rational fit
};

struct TwoStageResult {
  Eigen::VectorXd theta;
  Eigen::MatrixXd alpha;  // path_dim x p, stage-1 sensitivity estimates
  Eigen::MatrixXd w_hat;  // N x p, simulated inputs R alpha_i
  Eigen::VectorXd sigmas;  // stage-1 residual variances (inputs), stage-2 (output)
  double cost = 0.0;       // stage-2 residual sum of squares
};

// Stage 1: least-squares FIR fit of every input on the references. Stage 2:
// output-error fit of the output on the simulated inputs. Throws RankDeficient
// when the reference regressor does not have full column rank.
TwoStageResult two_stage(const NetworkData& data, const ModuleSet& modules, const TwoStageOptions& opts = {});

// Least-squares rational fit of a lag-1-first impulse response (Prony / ARX on
// the response). Falls back to the FIR part when the denominator is unstable.
Eigen::VectorXd rational_from_impulse(const Eigen::Ref<const Eigen::VectorXd>& ir, Index nb, Index na);

struct SmpeState {
  Eigen::VectorXd theta;
  Eigen::MatrixXd alpha;        // path_dim x p
  Eigen::VectorXd log_sigmas;   // log noise variances, inputs then output
};

struct SmpeOptions {
  int max_iter = 500;
  double tol = 1e-10;  // relative change of theta
};

struct SmpeResult {
  SmpeState state;
  std::vector<double> cost_trace;  // cost at every accepted iterate
  int iterations = 0;
  bool converged = false;
};

SmpeState smpe_initial_state(const TwoStageResult& ts);

// V = (1/N) sum_c [exp(-l_c) ||eps_c||^2 + N l_c] over the input and output channels.
double smpe_cost(const NetworkData& data, const ModuleSet& modules, const SmpeState& state);

// Joint minimization of V over (theta, alpha, l) by damped Gauss-Newton.
SmpeResult smpe(const NetworkData& data, const ModuleSet& modules, const SmpeState& init,
                const SmpeOptions& opts = {});

// FIT = 1 - ||g0 - g^|| / ||g0||. Throws InvalidArgument for a zero g0.
double fit_metric(const Eigen::Ref<const Eigen::VectorXd>& g_true, const Eigen::Ref<const Eigen::VectorXd>& g_hat);

}  // namespace nebid
