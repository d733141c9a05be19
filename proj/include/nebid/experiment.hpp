#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nebid/neb.hpp"
#include "nebid/network.hpp"
#include "nebid/parametrization.hpp"

namespace nebid {

struct MethodOptions {
  double tol = 1e-10;
  int neb_max_iter = 300;
  int nebx_max_iter = 50;
  int samples = 500;   // M
  int burn_in = 100;   // M0
  int smpe_max_iter = 500;
  int restarts = 5;
  int objective_samples = 0;  // NEBX marginal-objective draws per iteration
};

// Node indices are 0-based in memory and 1-based in config files.
struct ExperimentConfig {
  std::string name;
  Index nodes = 0;
  std::vector<Edge> edges;
  std::vector<Index> references;
  Eigen::VectorXd noise_ratio;
  TargetStructure target;
  std::vector<std::pair<Index, Index>> orders;  // (nb, na) per target module
  Index N = 200;
  Index n = 100;
  std::vector<std::string> methods;
  int runs = 1;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0: one per hardware thread
  MethodOptions options;

  NetworkModel network() const;
  ModuleSet module_set() const;
  // True transfer function of every target module, in input order.
  std::vector<RationalTF> true_modules() const;
  std::vector<std::string> module_names() const;
  // Throws InvalidArgument or UnstableSystem.
  void validate() const;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"two_stage", "smpe", "neb", "nebx"};
  return m;
}

// "G31" for the module from node 1 to node 3 (1-based).
std::string module_name(Index to, Index from, Index nodes);

// One row per (run, method, module). Failed methods give NaN values and
// converged = false.
struct ResultRow {
  int run_id = 0;
  std::string method;
  std::string module;
  std::vector<std::string> param_names;
  std::vector<double> theta;
  double fit = 0.0;
  int iterations = 0;
  bool converged = false;
  double wall_ms = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

std::uint64_t run_seed(std::uint64_t master_seed, int run_id);

// All requested methods on the dataset of one run.
std::vector<ResultRow> run_single(const ExperimentConfig& config, int run_id);

// Runs on a worker pool; rows sorted by (run_id, method order, module order).
ResultTable run_monte_carlo(const ExperimentConfig& config,
                            const std::function<void(int done, int total)>& progress = {});

struct ParamSummary {
  std::string method;
  std::string module;
  std::string param;
  double truth = 0.0;
  int count = 0;
  double mean = 0.0;
  double nvar = 0.0;  // N * sample variance, divisor count - 1
  int count_filtered = 0;
  double mean_filtered = 0.0;
  double nvar_filtered = 0.0;
};

struct FitSummary {
  std::string method;
  std::string module;
  int count = 0;  // rows with a finite fit
  int failed = 0;
  int negative = 0;
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  int count_filtered = 0;
  double mean_filtered = 0.0;
};

struct SummaryStats {
  std::vector<ParamSummary> params;
  std::vector<FitSummary> fits;
  int runs_dropped = 0;  // (run, method) pairs with a negative module fit
};

// Per-run filter: a (run, method) pair is dropped from the filtered columns
// when any of its modules has a negative fit. `truth` maps module name to the
// true parameter vector and may be empty.
SummaryStats summarize(const ResultTable& table, Index N,
                       const std::vector<std::pair<std::string, std::vector<double>>>& truth = {});

// Linear-interpolation quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);

}  // namespace nebid
