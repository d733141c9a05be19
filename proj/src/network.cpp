#include "nebid/network.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace nebid {

NetworkModel::NetworkModel(Index nodes, std::vector<Edge> edges, std::vector<Index> references,
                           Eigen::VectorXd noise_ratio)
    : nodes_(nodes), edges_(std::move(edges)), references_(std::move(references)),
      noise_ratio_(std::move(noise_ratio)) {
  if (nodes_ < 1) throw InvalidArgument("NetworkModel: need at least one node");
  if (noise_ratio_.size() == 0) noise_ratio_ = Eigen::VectorXd::Zero(nodes_);
  if (noise_ratio_.size() != nodes_) throw InvalidArgument("NetworkModel: noise ratio length != node count");
  if ((noise_ratio_.array() < 0.0).any()) throw InvalidArgument("NetworkModel: negative noise ratio");
  for (const auto& e : edges_) {
    if (e.to < 0 || e.to >= nodes_ || e.from < 0 || e.from >= nodes_)
      throw InvalidArgument("NetworkModel: edge endpoint out of range");
    if (e.to == e.from) throw InvalidArgument("NetworkModel: self loops are not allowed");
  }
  for (std::size_t a = 0; a < edges_.size(); ++a)
    for (std::size_t b = a + 1; b < edges_.size(); ++b)
      if (edges_[a].to == edges_[b].to && edges_[a].from == edges_[b].from)
        throw InvalidArgument("NetworkModel: duplicate edge");
  for (Index l : references_)
    if (l < 0 || l >= nodes_) throw InvalidArgument("NetworkModel: reference index out of range");
  std::sort(references_.begin(), references_.end());
  references_.erase(std::unique(references_.begin(), references_.end()), references_.end());
  if (!is_well_posed()) throw InvalidArgument("NetworkModel: network is not well posed");
}

const RationalTF* NetworkModel::module(Index to, Index from) const {
  for (const auto& e : edges_)
    if (e.to == to && e.from == from) return &e.tf;
  return nullptr;
}

std::vector<Index> NetworkModel::in_neighbors(Index node) const {
  std::vector<Index> out;
  for (const auto& e : edges_)
    if (e.to == node) out.push_back(e.from);
  std::sort(out.begin(), out.end());
  return out;
}

bool NetworkModel::is_reference(Index node) const {
  return std::binary_search(references_.begin(), references_.end(), node);
}

Eigen::MatrixXd NetworkModel::feedthrough_matrix() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(nodes_, nodes_);
  for (const auto& e : edges_) d(e.to, e.from) = e.tf.feedthrough;
  return d;
}

bool NetworkModel::is_well_posed() const {
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(nodes_, nodes_) - feedthrough_matrix();
  if (m.isIdentity()) return true;
  const std::uint64_t subsets = std::uint64_t{1} << nodes_;
  for (std::uint64_t mask = 1; mask < subsets; ++mask) {
    std::vector<Index> idx;
    for (Index k = 0; k < nodes_; ++k)
      if (mask & (std::uint64_t{1} << k)) idx.push_back(k);
    Eigen::MatrixXd sub(static_cast<Index>(idx.size()), static_cast<Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b)
        sub(static_cast<Index>(a), static_cast<Index>(b)) = m(idx[a], idx[b]);
    if (std::abs(sub.determinant()) < 1e-12) return false;
  }
  return true;
}

NetworkModel NetworkModel::without_edge(Index to, Index from) const {
  std::vector<Edge> kept;
  for (const auto& e : edges_)
    if (!(e.to == to && e.from == from)) kept.push_back(e);
  return NetworkModel(nodes_, std::move(kept), references_, noise_ratio_);
}

NetworkModel NetworkModel::with_noise_ratio(Eigen::VectorXd ratio) const {
  return NetworkModel(nodes_, edges_, references_, std::move(ratio));
}

Eigen::MatrixXd network_response(const NetworkModel& net, const Eigen::Ref<const Eigen::MatrixXd>& r) {
  const Index L = net.nodes();
  if (r.cols() != L) throw InvalidArgument("network_response: reference matrix must have one column per node");
  const Index N = r.rows();
  const auto& edges = net.edges();
  const Index ne = static_cast<Index>(edges.size());

  const Eigen::MatrixXd d0 = net.feedthrough_matrix();
  const bool algebraic = !d0.isZero(0.0);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  if (algebraic) lu.compute(Eigen::MatrixXd::Identity(L, L) - d0);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(N, L);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(N, ne);  // edge outputs
  Eigen::VectorXd past(ne);
  Eigen::VectorXd rhs(L);
  for (Index t = 0; t < N; ++t) {
    rhs = r.row(t).transpose();
    for (Index k = 0; k < ne; ++k) {
      const auto& e = edges[static_cast<std::size_t>(k)];
      const Index nb = e.tf.num.size();
      const Index na = e.tf.den.size();
      double v = 0.0;
      for (Index i = 1; i <= std::min(nb, t); ++i) v += e.tf.num(i - 1) * w(t - i, e.from);
      for (Index i = 1; i <= std::min(na, t); ++i) v -= e.tf.den(i - 1) * y(t - i, k);
      past(k) = v;
      rhs(e.to) += v;
    }
    Eigen::VectorXd wt = algebraic ? Eigen::VectorXd(lu.solve(rhs)) : rhs;
    w.row(t) = wt.transpose();
    for (Index k = 0; k < ne; ++k) {
      const auto& e = edges[static_cast<std::size_t>(k)];
      y(t, k) = past(k) + e.tf.feedthrough * wt(e.from);
    }
  }
  return w;
}

const Eigen::VectorXd& SensitivitySet::path(Index i, Index l) const {
  auto it = paths_.find({i, l});
  if (it == paths_.end())
    throw InvalidArgument("SensitivitySet: no path from reference " + std::to_string(l + 1) + " to node " +
                          std::to_string(i + 1));
  return it->second;
}

SensitivitySet sensitivity(const NetworkModel& net, Index n, const SensitivityOptions& opts) {
  if (n < 1) throw InvalidArgument("sensitivity: n must be >= 1");
  const Index L = net.nodes();
  const Index horizon = std::max(n, opts.horizon);
  const Index tail = std::max<Index>(1, horizon / 10);
  std::map<std::pair<Index, Index>, Eigen::VectorXd> paths;
  for (Index l : net.references()) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(horizon, L);
    r(0, l) = 1.0;
    const Eigen::MatrixXd w = network_response(net, r);
    for (Index i = 0; i < L; ++i) {
      const auto col = w.col(i);
      if (!col.allFinite()) throw UnstableSystem("sensitivity: non-finite response");
      const double peak = col.cwiseAbs().maxCoeff();
      const double tail_peak = col.tail(tail).cwiseAbs().maxCoeff();
      if (tail_peak > opts.decay_tol * std::max(1.0, peak))
        throw UnstableSystem("sensitivity: path from reference " + std::to_string(l + 1) + " to node " +
                             std::to_string(i + 1) + " does not decay within " + std::to_string(horizon) +
                             " samples");
      paths[{i, l}] = col.head(n);
    }
  }
  return SensitivitySet(n, std::move(paths));
}

double calibrate_noise(double signal_variance, double ratio) {
  if (!(signal_variance > 0.0)) throw InvalidArgument("calibrate_noise: signal variance must be positive");
  if (!(ratio > 0.0)) throw InvalidArgument("calibrate_noise: ratio must be positive");
  return ratio * signal_variance;
}

namespace {

double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = x.mean();
  return (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
}

Dataset add_measurement_noise(const NetworkModel& net, Eigen::MatrixXd r, std::mt19937_64& rng,
                              std::uint64_t seed) {
  Dataset d;
  d.N = r.rows();
  d.seed = seed;
  d.w_clean = network_response(net, r);
  d.r = std::move(r);
  d.true_sigmas = Eigen::VectorXd::Zero(net.nodes());
  d.w_tilde = d.w_clean;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index k = 0; k < net.nodes(); ++k) {
    const double ratio = net.noise_ratio()(k);
    if (ratio == 0.0) continue;
    const double var = calibrate_noise(sample_variance(d.w_clean.col(k)), ratio);
    d.true_sigmas(k) = var;
    const double sd = std::sqrt(var);
    for (Index t = 0; t < d.N; ++t) d.w_tilde(t, k) += sd * normal(rng);
  }
  return d;
}

}  // namespace

Dataset simulate(const NetworkModel& net, Index N, std::uint64_t seed, const SensitivityOptions& stability) {
  if (N < 1) throw InvalidArgument("simulate: N must be >= 1");
  // Stability is established before any random draw.
  if (!net.references().empty()) sensitivity(net, 1, stability);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(N, net.nodes());
  for (Index l : net.references())
    for (Index t = 0; t < N; ++t) r(t, l) = normal(rng);
  return add_measurement_noise(net, std::move(r), rng, seed);
}

Dataset simulate_with_references(const NetworkModel& net, const Eigen::Ref<const Eigen::MatrixXd>& r,
                                 std::uint64_t seed) {
  if (r.cols() != net.nodes()) throw InvalidArgument("simulate_with_references: column count != node count");
  std::mt19937_64 rng(seed);
  return add_measurement_noise(net, Eigen::MatrixXd(r), rng, seed);
}

}  // namespace nebid
