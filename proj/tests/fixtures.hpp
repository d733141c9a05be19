#pragma once

// Small closed-loop and network instances shared by the tests.

#include "nebid/neb.hpp"
#include "nebid/network.hpp"
#include "nebid/parametrization.hpp"

namespace fixture {

using nebid::Index;

inline Eigen::VectorXd vec(std::initializer_list<double> x) {
  Eigen::VectorXd out(static_cast<Index>(x.size()));
  Index k = 0;
  for (double a : x) out(k++) = a;
  return out;
}

// w1 = r1 + C w2, w2 = G w1 with the module G given by (b, a).
inline nebid::NetworkModel closed_loop(const Eigen::VectorXd& b, const Eigen::VectorXd& a, double ratio = 1.0) {
  std::vector<nebid::Edge> edges{{0, 1, nebid::RationalTF(vec({0.4, -0.5}), vec({0.5, 0.2}), 0.8)},
                                 {1, 0, nebid::RationalTF(b, a)}};
  return nebid::NetworkModel(2, edges, {0}, Eigen::VectorXd::Constant(2, ratio));
}

inline nebid::TargetStructure closed_loop_target() {
  nebid::TargetStructure t;
  t.output = 1;
  t.inputs = {0};
  t.references = {0};
  return t;
}

struct Instance {
  nebid::Dataset dataset;
  nebid::NetworkData data;
  nebid::ModuleSet modules;
};

// FIR module of order nb in the loop; the model uses the matching FIR
// parametrization.
inline Instance fir_closed_loop(Index N, Index n, Index nb, std::uint64_t seed) {
  Eigen::VectorXd b(nb);
  for (Index k = 0; k < nb; ++k) b(k) = 0.3 * std::pow(-0.7, static_cast<double>(k));
  const auto ds = nebid::simulate(closed_loop(b, Eigen::VectorXd()), N, seed);
  return {ds, nebid::NetworkData(ds, closed_loop_target(), n),
          nebid::ModuleSet({nebid::ModuleParametrization::fir(nb, N)})};
}

inline Instance rational_closed_loop(Index N, Index n, std::uint64_t seed) {
  const auto ds = nebid::simulate(closed_loop(vec({0.2, 0.3}), vec({0.4, 0.5})), N, seed);
  return {ds, nebid::NetworkData(ds, closed_loop_target(), n),
          nebid::ModuleSet({nebid::ModuleParametrization::rational(2, 2)})};
}

// Reasonable hyperparameters for a closed-loop instance.
inline nebid::HyperParameters default_eta(const Instance& in, const Eigen::VectorXd& theta) {
  nebid::HyperParameters eta;
  eta.sigmas = Eigen::VectorXd::Constant(2, 0.5);
  eta.lambdas = Eigen::VectorXd::Constant(1, 1.0);
  eta.betas = Eigen::VectorXd::Constant(1, 0.6);
  eta.theta = theta;
  (void)in;
  return eta;
}

}  // namespace fixture
