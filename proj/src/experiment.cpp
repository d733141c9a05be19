#include "nebid/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "nebid/baselines.hpp"
#include "nebid/errors.hpp"
#include "nebid/nebx.hpp"
#include "nebid/random.hpp"

namespace nebid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const RationalTF& edge_tf(const ExperimentConfig& c, Index to, Index from) {
  for (const auto& e : c.edges)
    if (e.to == to && e.from == from) return e.tf;
  throw InvalidArgument("config: target module " + module_name(to, from, c.nodes) + " is not an edge");
}

int method_rank(const std::string& m) {
  const auto& all = known_methods();
  return static_cast<int>(std::find(all.begin(), all.end(), m) - all.begin());
}

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

std::string module_name(Index to, Index from, Index nodes) {
  const std::string a = std::to_string(to + 1), b = std::to_string(from + 1);
  return nodes < 10 ? "G" + a + b : "G" + a + "_" + b;
}

NetworkModel ExperimentConfig::network() const { return NetworkModel(nodes, edges, references, noise_ratio); }

ModuleSet ExperimentConfig::module_set() const {
  std::vector<ModuleParametrization> mods;
  for (const auto& [nb, na] : orders) mods.push_back(ModuleParametrization::rational(nb, na));
  return ModuleSet(std::move(mods));
}

std::vector<RationalTF> ExperimentConfig::true_modules() const {
  std::vector<RationalTF> out;
  for (Index i : target.inputs) out.push_back(edge_tf(*this, target.output, i));
  return out;
}

std::vector<std::string> ExperimentConfig::module_names() const {
  std::vector<std::string> out;
  for (Index i : target.inputs) out.push_back(module_name(target.output, i, nodes));
  return out;
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw InvalidArgument("config: runs must be >= 1");
  if (N < 2 || n < 1 || n >= N) throw InvalidArgument("config: need 1 <= n < N");
  if (orders.size() != target.inputs.size()) throw InvalidArgument("config: one model order per target input");
  for (const auto& m : methods)
    if (method_rank(m) >= static_cast<int>(known_methods().size()))
      throw InvalidArgument("config: unknown method '" + m + "'");
  std::set<std::string> uniq(methods.begin(), methods.end());
  if (uniq.size() != methods.size()) throw InvalidArgument("config: duplicate method");
  if (uniq.count("nebx") && !target.downstream) throw InvalidArgument("config: nebx needs a downstream node");
  if (options.samples < 1 || options.burn_in < 0 || options.neb_max_iter < 1 || options.nebx_max_iter < 1 ||
      options.smpe_max_iter < 1 || !(options.tol > 0.0))
    throw InvalidArgument("config: invalid method options");
  const NetworkModel net = network();
  for (Index l : target.references)
    if (!net.is_reference(l)) throw InvalidArgument("config: target reference is not an active reference");
  if (target.downstream && net.is_reference(target.output))
    throw InvalidArgument("config: nebx requires no reference at the output node");
  for (const auto& tf : true_modules())
    if (!tf.is_strictly_proper()) throw InvalidArgument("config: target modules must be strictly proper");
  (void)sensitivity(net, n);
}

std::uint64_t run_seed(std::uint64_t master_seed, int run_id) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(run_id));
}

std::vector<ResultRow> run_single(const ExperimentConfig& config, int run_id) {
  const std::uint64_t seed = run_seed(config.master_seed, run_id);
  const NetworkModel net = config.network();
  const Dataset ds = simulate(net, config.N, seed);
  const NetworkData data(ds, config.target, config.n);
  const ModuleSet modules = config.module_set();
  const auto truth = config.true_modules();
  const auto names = config.module_names();
  const MethodOptions& mo = config.options;

  std::vector<std::string> methods = config.methods;
  std::sort(methods.begin(), methods.end(), [](const auto& a, const auto& b) { return method_rank(a) < method_rank(b); });

  std::vector<ResultRow> rows;
  auto add_rows = [&](const std::string& method, const std::optional<Eigen::VectorXd>& theta, int iterations,
                      bool converged, double wall_ms) {
    for (std::size_t i = 0; i < modules.size(); ++i) {
      ResultRow r;
      r.run_id = run_id;
      r.method = method;
      r.module = names[i];
      r.param_names = modules[i].param_names();
      r.iterations = iterations;
      r.converged = converged;
      r.wall_ms = wall_ms;
      if (theta && theta->allFinite()) {
        const Eigen::VectorXd th = modules.segment(*theta, i);
        r.theta.assign(th.data(), th.data() + th.size());
        const Eigen::VectorXd g0 = module_generator(truth[i], config.N);
        r.fit = fit_metric(g0, modules[i].generator(th, config.N));
      } else {
        r.theta.assign(static_cast<std::size_t>(modules[i].num_params()), kNaN);
        r.fit = kNaN;
        r.converged = false;
      }
      rows.push_back(std::move(r));
    }
  };

  // Shared initialization: every method starts from the same two-stage fit.
  std::optional<TwoStageResult> ts;
  double ts_ms = 0.0;
  {
    const auto t0 = Clock::now();
    try {
      TwoStageOptions opt;
      opt.restarts = mo.restarts;
      opt.seed = derive_seed(seed, 1);
      ts = two_stage(data, modules, opt);
    } catch (const Error&) {
    }
    ts_ms = elapsed_ms(t0);
  }
  std::optional<NebEstimate> neb;
  for (const auto& method : methods) {
    const auto t0 = Clock::now();
    std::optional<Eigen::VectorXd> theta;
    int iterations = 0;
    bool converged = false;
    try {
      if (!ts) throw OptimizationFailure("two-stage initialization failed");
      if (method == "two_stage") {
        theta = ts->theta;
        iterations = 1;
        converged = true;
      } else if (method == "smpe") {
        SmpeOptions so;
        so.tol = mo.tol;
        so.max_iter = mo.smpe_max_iter;
        const auto r = smpe(data, modules, smpe_initial_state(*ts), so);
        theta = r.state.theta;
        iterations = r.iterations;
        converged = r.converged;
      } else if (method == "neb" || method == "nebx") {
        if (!neb) {
          NebOptions no;
          no.tol = mo.tol;
          no.max_iter = mo.neb_max_iter;
          no.theta.restarts = mo.restarts;
          neb = neb_identify(data, modules, no, initialize(data, *ts));
        }
        if (method == "neb") {
          theta = neb->eta.theta;
          iterations = neb->iterations;
          converged = neb->converged;
        } else {
          NebxOptions xo;
          xo.tol = mo.tol;
          xo.max_iter = mo.nebx_max_iter;
          xo.samples = mo.samples;
          xo.burn_in = mo.burn_in;
          xo.seed = derive_seed(seed, 2);
          xo.objective_samples = mo.objective_samples;
          xo.theta.restarts = mo.restarts;
          const auto r = nebx_identify(data, modules, xo, *neb);
          theta = r.eta.theta;
          iterations = r.iterations;
          converged = r.converged;
        }
      }
    } catch (const Error&) {
      theta.reset();
    }
    add_rows(method, theta, iterations, converged, elapsed_ms(t0) + ts_ms);
  }
  return rows;
}

ResultTable run_monte_carlo(const ExperimentConfig& config, const std::function<void(int, int)>& progress) {
  config.validate();
  const int total = config.runs;
  std::vector<std::vector<ResultRow>> per_run(static_cast<std::size_t>(total));
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::max(1, std::min(total, config.threads > 0 ? config.threads : static_cast<int>(hw)));

  auto worker = [&] {
    for (int k = next++; k < total; k = next++) {
      per_run[static_cast<std::size_t>(k)] = run_single(config, k);
      const int d = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(d, total);
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ResultTable table;
  for (auto& rows : per_run)
    for (auto& r : rows) table.rows.push_back(std::move(r));
  return table;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return kNaN;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(const ResultTable& table, Index N,
                       const std::vector<std::pair<std::string, std::vector<double>>>& truth) {
  SummaryStats st;
  // (run, method) pairs dropped by the negative-fit filter.
  std::set<std::pair<int, std::string>> dropped;
  for (const auto& r : table.rows)
    if (std::isfinite(r.fit) && r.fit < 0.0) dropped.insert({r.run_id, r.method});
  st.runs_dropped = static_cast<int>(dropped.size());

  using Key = std::pair<std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<const ResultRow*>> groups;
  for (const auto& r : table.rows) {
    const Key k{r.method, r.module};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::stable_sort(order.begin(), order.end(), [](const Key& a, const Key& b) {
    return method_rank(a.first) < method_rank(b.first);
  });

  auto mean_nvar = [N](const std::vector<double>& v, double& mean, double& nvar) {
    mean = kNaN;
    nvar = kNaN;
    if (v.empty()) return;
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    nvar = static_cast<double>(N) * ss / static_cast<double>(v.size() - 1);
  };

  for (const auto& key : order) {
    const auto& rows = groups[key];
    const auto& names = rows.front()->param_names;
    std::vector<double> truth_vec;
    for (const auto& [mod, t] : truth)
      if (mod == key.second) truth_vec = t;
    for (std::size_t p = 0; p < names.size(); ++p) {
      ParamSummary ps;
      ps.method = key.first;
      ps.module = key.second;
      ps.param = names[p];
      ps.truth = p < truth_vec.size() ? truth_vec[p] : kNaN;
      std::vector<double> all, kept;
      for (const auto* r : rows) {
        if (p >= r->theta.size() || !std::isfinite(r->theta[p])) continue;
        all.push_back(r->theta[p]);
        if (!dropped.count({r->run_id, r->method})) kept.push_back(r->theta[p]);
      }
      ps.count = static_cast<int>(all.size());
      ps.count_filtered = static_cast<int>(kept.size());
      mean_nvar(all, ps.mean, ps.nvar);
      mean_nvar(kept, ps.mean_filtered, ps.nvar_filtered);
      st.params.push_back(ps);
    }
    FitSummary fs;
    fs.method = key.first;
    fs.module = key.second;
    std::vector<double> fits, kept;
    for (const auto* r : rows) {
      if (!std::isfinite(r->fit)) {
        ++fs.failed;
        continue;
      }
      fits.push_back(r->fit);
      if (r->fit < 0.0) ++fs.negative;
      if (!dropped.count({r->run_id, r->method})) kept.push_back(r->fit);
    }
    std::sort(fits.begin(), fits.end());
    fs.count = static_cast<int>(fits.size());
    fs.count_filtered = static_cast<int>(kept.size());
    double unused;
    mean_nvar(fits, fs.mean, unused);
    mean_nvar(kept, fs.mean_filtered, unused);
    fs.q1 = quantile_sorted(fits, 0.25);
    fs.median = quantile_sorted(fits, 0.5);
    fs.q3 = quantile_sorted(fits, 0.75);
    st.fits.push_back(fs);
  }
  return st;
}

}  // namespace nebid
