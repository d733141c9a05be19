#include "nebid/parametrization.hpp"

#include <algorithm>
#include <cmath>

namespace nebid {

ModuleParametrization ModuleParametrization::rational(Index nb, Index na) {
  if (nb < 1 || na < 0) throw InvalidArgument("rational parametrization needs nb >= 1, na >= 0");
  ModuleParametrization p;
  p.kind_ = Kind::Rational;
  p.nb_ = nb;
  p.na_ = na;
  return p;
}

ModuleParametrization ModuleParametrization::linear(Eigen::MatrixXd basis) {
  if (basis.cols() < 1 || basis.rows() < 1) throw InvalidArgument("linear parametrization needs a nonempty basis");
  ModuleParametrization p;
  p.kind_ = Kind::Linear;
  p.basis_ = std::move(basis);
  return p;
}

ModuleParametrization ModuleParametrization::fir(Index nb, Index N) {
  if (nb < 1 || nb >= N) throw InvalidArgument("FIR parametrization needs 1 <= nb < N");
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(N, nb);
  for (Index k = 0; k < nb; ++k) basis(k + 1, k) = 1.0;
  auto p = linear(std::move(basis));
  p.nb_ = nb;
  p.is_fir_ = true;
  return p;
}

Index ModuleParametrization::num_params() const {
  return kind_ == Kind::Linear ? basis_.cols() : nb_ + na_;
}

RationalTF ModuleParametrization::transfer_function(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != num_params()) throw InvalidArgument("parameter vector has the wrong length");
  if (kind_ == Kind::Linear) {
    if (!is_fir_) throw InvalidArgument("transfer_function: generic linear bases have no rational form");
    return RationalTF::fir(theta);
  }
  return RationalTF(theta.head(nb_), theta.tail(na_));
}

bool ModuleParametrization::admissible(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != num_params() || !theta.allFinite()) return false;
  if (kind_ == Kind::Linear || na_ == 0) return true;
  return transfer_function(theta).is_stable();
}

Eigen::VectorXd ModuleParametrization::generator(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const {
  if (theta.size() != num_params()) throw InvalidArgument("parameter vector has the wrong length");
  if (kind_ == Kind::Linear) {
    if (basis_.rows() != N) throw InvalidArgument("linear basis row count differs from N");
    return basis_ * theta;
  }
  return module_generator(transfer_function(theta), N);
}

Eigen::MatrixXd ModuleParametrization::jacobian(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const {
  if (theta.size() != num_params()) throw InvalidArgument("parameter vector has the wrong length");
  if (kind_ == Kind::Linear) {
    if (basis_.rows() != N) throw InvalidArgument("linear basis row count differs from N");
    return basis_;
  }
  // dg/db_k = q^-k / A, dg/da_k = -q^-k B / A^2 = -q^-k g filtered by 1/A.
  const RationalTF inv_a(Eigen::VectorXd(), theta.tail(na_), 1.0);
  const Eigen::VectorXd g = generator(theta, N);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(N, num_params());
  Eigen::VectorXd x(N);
  for (Index k = 1; k <= nb_ && k < N; ++k) {
    x.setZero();
    x(k) = 1.0;
    j.col(k - 1) = filter(inv_a, x);
  }
  for (Index k = 1; k <= na_ && k < N; ++k) {
    x.setZero();
    x.tail(N - k) = g.head(N - k);
    j.col(nb_ + k - 1) = -filter(inv_a, x);
  }
  return j;
}

std::vector<std::string> ModuleParametrization::param_names() const {
  std::vector<std::string> names;
  if (kind_ == Kind::Linear && !is_fir_) {
    for (Index k = 0; k < basis_.cols(); ++k) names.push_back("theta" + std::to_string(k + 1));
    return names;
  }
  for (Index k = 1; k <= nb_; ++k) names.push_back("b" + std::to_string(k));
  for (Index k = 1; k <= na_; ++k) names.push_back("a" + std::to_string(k));
  return names;
}

ModuleSet::ModuleSet(std::vector<ModuleParametrization> modules) : modules_(std::move(modules)) {
  for (const auto& m : modules_) {
    offsets_.push_back(total_);
    total_ += m.num_params();
  }
}

bool ModuleSet::all_linear() const {
  return std::all_of(modules_.begin(), modules_.end(), [](const auto& m) { return m.is_linear(); });
}

std::vector<Eigen::VectorXd> ModuleSet::generators(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const {
  if (theta.size() != total_) throw InvalidArgument("stacked parameter vector has the wrong length");
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < modules_.size(); ++i) out.push_back(modules_[i].generator(segment(theta, i), N));
  return out;
}

Eigen::MatrixXd ModuleSet::jacobian(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const {
  if (theta.size() != total_) throw InvalidArgument("stacked parameter vector has the wrong length");
  const Index p = static_cast<Index>(modules_.size());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(p * N, total_);
  for (std::size_t i = 0; i < modules_.size(); ++i)
    j.block(static_cast<Index>(i) * N, offsets_[i], N, modules_[i].num_params()) =
        modules_[i].jacobian(segment(theta, i), N);
  return j;
}

bool ModuleSet::admissible(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != total_) return false;
  for (std::size_t i = 0; i < modules_.size(); ++i)
    if (!modules_[i].admissible(segment(theta, i))) return false;
  return true;
}

Eigen::VectorXd random_admissible(const ModuleSet& modules, std::mt19937_64& rng, double scale, double max_radius) {
  std::normal_distribution<double> normal(0.0, scale);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Eigen::VectorXd theta(modules.num_params());
  for (std::size_t i = 0; i < modules.size(); ++i) {
    const auto& mod = modules[i];
    const Index off = modules.offset(i);
    if (mod.is_linear()) {
      for (Index k = 0; k < mod.num_params(); ++k) theta(off + k) = normal(rng);
      continue;
    }
    for (Index k = 0; k < mod.nb(); ++k) theta(off + k) = normal(rng);
    // Coefficients of a monic polynomial with roots in the max_radius disc
    // are bounded by binomial(na, k) max_radius^k.
    Eigen::VectorXd a(mod.na());
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw OptimizationFailure("random_admissible: could not draw a stable denominator");
      for (Index k = 0; k < mod.na(); ++k) a(k) = uniform(rng) * std::pow(max_radius, static_cast<double>(k + 1)) * 2.0;
      if (RationalTF(Eigen::VectorXd::Zero(1), a).pole_radius() < max_radius) break;
    }
    theta.segment(off + mod.nb(), mod.na()) = a;
  }
  return theta;
}

}  // namespace nebid
