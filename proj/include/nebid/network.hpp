#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "nebid/lti.hpp"

namespace nebid {

// Module G_{to,from} on the edge from node `from` to node `to` (0-based).
struct Edge {
  Index to = 0;
  Index from = 0;
  RationalTF tf;
};

// Known-topology network w = G(q) w + r, measured as w~ = w + e.
class NetworkModel {
 public:
  // noise_ratio(k) is var(e_k) / var(w_k); zero means node k is noise free.
  NetworkModel(Index nodes, std::vector<Edge> edges, std::vector<Index> references,
               Eigen::VectorXd noise_ratio);

  Index nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Index>& references() const { return references_; }
  const Eigen::VectorXd& noise_ratio() const { return noise_ratio_; }

  const RationalTF* module(Index to, Index from) const;
  std::vector<Index> in_neighbors(Index node) const;
  bool is_reference(Index node) const;

  // lim_{q -> inf} G(q).
  Eigen::MatrixXd feedthrough_matrix() const;
  // Every principal minor of I - feedthrough_matrix() is nonzero.
  bool is_well_posed() const;

  NetworkModel without_edge(Index to, Index from) const;
  NetworkModel with_noise_ratio(Eigen::VectorXd ratio) const;

 private:
  Index nodes_;
  std::vector<Edge> edges_;
  std::vector<Index> references_;
  Eigen::VectorXd noise_ratio_;
};

// Noise-free node signals (N x L) driven by references r (N x L), zero
// initial conditions. Direct feedthrough is handled by a per-step static solve.
Eigen::MatrixXd network_response(const NetworkModel& net, const Eigen::Ref<const Eigen::MatrixXd>& r);

struct SensitivityOptions {
  Index horizon = 2000;     // samples simulated for the decay check
  double decay_tol = 1e-6;  // tail peak relative to overall peak
};

// Truncated impulse responses of S = (I - G)^-1, lag 0 first.
class SensitivitySet {
 public:
  SensitivitySet() = default;
  SensitivitySet(Index n, std::map<std::pair<Index, Index>, Eigen::VectorXd> paths)
      : n_(n), paths_(std::move(paths)) {}

  Index length() const { return n_; }
  // Path from reference l to node i.
  const Eigen::VectorXd& path(Index i, Index l) const;
  const std::map<std::pair<Index, Index>, Eigen::VectorXd>& paths() const { return paths_; }

 private:
  Index n_ = 0;
  std::map<std::pair<Index, Index>, Eigen::VectorXd> paths_;
};

// Throws UnstableSystem when a path has not decayed within the horizon.
SensitivitySet sensitivity(const NetworkModel& net, Index n, const SensitivityOptions& opts = {});

struct Dataset {
  Index N = 0;
  Eigen::MatrixXd r;        // N x L references
  Eigen::MatrixXd w_tilde;  // N x L measurements
  Eigen::MatrixXd w_clean;  // N x L noise-free node signals
  Eigen::VectorXd true_sigmas;
  std::uint64_t seed = 0;
};

// sigma^2 = ratio * signal_variance, ratio being var(e) / var(w).
double calibrate_noise(double signal_variance, double ratio);

// White unit-variance references on the active reference nodes, measurement
// noise calibrated on the realized variance of each noise-free column.
Dataset simulate(const NetworkModel& net, Index N, std::uint64_t seed,
                 const SensitivityOptions& stability = {});

// Same as simulate() with caller-provided references.
Dataset simulate_with_references(const NetworkModel& net, const Eigen::Ref<const Eigen::MatrixXd>& r,
                                 std::uint64_t seed);

}  // namespace nebid
