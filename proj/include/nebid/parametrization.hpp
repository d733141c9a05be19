#pragma once

#include <Eigen/Core>

#include <random>
#include <string>
#include <vector>

#include "nebid/lti.hpp"

namespace nebid {

// Map theta -> g_theta for one module. g_theta is the lag-0-first generator of
// length N (entry 0 is zero for strictly proper models).
class ModuleParametrization {
 public:
  enum class Kind { Rational, Linear };

  // (b1 q^-1 + ... + b_nb q^-nb) / (1 + a1 q^-1 + ... + a_na q^-na),
  // theta = [b1 ... b_nb a1 ... a_na].
  static ModuleParametrization rational(Index nb, Index na);
  // g_theta = basis * theta; the basis row count fixes N.
  static ModuleParametrization linear(Eigen::MatrixXd basis);
  // FIR b1 q^-1 + ... + b_nb q^-nb as a linear parametrization.
  static ModuleParametrization fir(Index nb, Index N);

  Kind kind() const { return kind_; }
  bool is_linear() const { return kind_ == Kind::Linear; }
  Index num_params() const;
  Index nb() const { return nb_; }
  Index na() const { return na_; }
  const Eigen::MatrixXd& basis() const { return basis_; }

  Eigen::VectorXd generator(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const;
  // d generator / d theta, N x num_params.
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const;

  // Rational kind only; also accepted for FIR bases built by fir().
  RationalTF transfer_function(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  // Stable denominator for the rational kind; always true for the linear kind.
  bool admissible(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  std::vector<std::string> param_names() const;

 private:
  Kind kind_ = Kind::Rational;
  Index nb_ = 0;
  Index na_ = 0;
  bool is_fir_ = false;
  Eigen::MatrixXd basis_;
};

// Several modules sharing one output, with their parameters stacked.
class ModuleSet {
 public:
  ModuleSet() = default;
  explicit ModuleSet(std::vector<ModuleParametrization> modules);

  std::size_t size() const { return modules_.size(); }
  const ModuleParametrization& operator[](std::size_t i) const { return modules_[i]; }
  Index num_params() const { return total_; }
  Index offset(std::size_t i) const { return offsets_[i]; }
  bool all_linear() const;

  Eigen::VectorXd segment(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t i) const {
    return theta.segment(offsets_[i], modules_[i].num_params());
  }
  std::vector<Eigen::VectorXd> generators(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const;
  // Block-diagonal (p N) x num_params Jacobian of the stacked generators.
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& theta, Index N) const;
  bool admissible(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

 private:
  std::vector<ModuleParametrization> modules_;
  std::vector<Index> offsets_;
  Index total_ = 0;
};

// Random admissible parameters: numerator ~ N(0, scale^2), denominator drawn
// uniformly until its poles lie within `max_radius`.
Eigen::VectorXd random_admissible(const ModuleSet& modules, std::mt19937_64& rng, double scale = 0.5,
                                  double max_radius = 0.9);

}  // namespace nebid
