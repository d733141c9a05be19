#include "nebid/presets.hpp"

#include <fstream>
#include <sstream>

#include "nebid/errors.hpp"

namespace nebid {

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Edge edge(Index to, Index from, std::initializer_list<double> b, std::initializer_list<double> a, double b0 = 0.0) {
  return {to - 1, from - 1, RationalTF(vec(b), vec(a), b0)};
}

ExperimentConfig closed_loop(const Eigen::VectorXd& theta, const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.nodes = 2;
  // w1 = r1 + C w2, w2 = G w1.
  c.edges = {edge(1, 2, {0.4, -0.5}, {0.5, 0.2}, 0.8),
             {1, 0, RationalTF(theta.head(2), theta.tail(2))}};
  c.references = {0};
  c.noise_ratio = vec({1.0, 1.0});
  c.target.output = 1;
  c.target.inputs = {0};
  c.target.references = {0};
  c.orders = {{2, 2}};
  c.N = 200;
  c.n = 100;
  c.methods = {"two_stage", "smpe", "neb"};
  c.runs = 100;
  c.master_seed = 1;
  return c;
}

ExperimentConfig example_network() {
  ExperimentConfig c;
  c.name = "example_network";
  c.nodes = 4;
  c.edges = {edge(3, 1, {0.2, 0.3}, {0.4, 0.5}),      // target
             edge(3, 2, {0.4, 0.5}, {0.5, 0.15}),     // target
             edge(1, 2, {0.3, 0.1}, {-0.5, 0.2}),
             edge(1, 4, {0.2, -0.1}, {0.3, 0.2}),
             edge(2, 4, {-0.25, 0.15}, {-0.4, 0.3}),
             edge(4, 3, {0.5, 0.3}, {-0.6, 0.25})};   // downstream sensor path
  c.references = {1, 3};
  c.noise_ratio = vec({0.1, 0.1, 0.1, 0.01});
  c.target.output = 2;
  c.target.inputs = {0, 1};
  c.target.references = {1, 3};
  c.target.downstream = 3;
  c.orders = {{2, 2}, {2, 2}};
  c.N = 200;
  c.n = 75;
  c.methods = {"two_stage", "smpe", "neb", "nebx"};
  c.runs = 30;
  c.master_seed = 1;
  return c;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

Index node_from_json(const nlohmann::json& j) {
  const auto k = j.get<long long>();
  if (k < 1) throw InvalidArgument("config: node indices are 1-based");
  return static_cast<Index>(k - 1);
}

std::vector<Index> nodes_from_json(const nlohmann::json& j) {
  std::vector<Index> out;
  for (const auto& x : j) out.push_back(node_from_json(x));
  return out;
}

std::vector<long long> nodes_to_json(const std::vector<Index>& v) {
  std::vector<long long> out;
  for (Index k : v) out.push_back(static_cast<long long>(k + 1));
  return out;
}

}  // namespace

std::vector<std::string> preset_names() { return {"closed_loop", "closed_loop_alt", "example_network"}; }

ExperimentConfig preset(const std::string& name) {
  if (name == "closed_loop") return closed_loop(vec({0.2, 0.3, 0.4, 0.5}), name);
  if (name == "closed_loop_alt") return closed_loop(vec({0.4, 0.5, -0.4, 0.3}), name);
  if (name == "example_network") return example_network();
  throw InvalidArgument("unknown preset '" + name + "'");
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : c.edges)
    edges.push_back({{"to", e.to + 1},
                     {"from", e.from + 1},
                     {"num", to_std(e.tf.num)},
                     {"den", to_std(e.tf.den)},
                     {"feedthrough", e.tf.feedthrough}});
  j["network"] = {{"nodes", c.nodes},
                  {"edges", edges},
                  {"references", nodes_to_json(c.references)},
                  {"noise_ratio", to_std(c.noise_ratio)}};
  j["target"] = {{"output", c.target.output + 1},
                 {"inputs", nodes_to_json(c.target.inputs)},
                 {"references", nodes_to_json(c.target.references)},
                 {"downstream", c.target.downstream ? nlohmann::json(*c.target.downstream + 1) : nlohmann::json()}};
  nlohmann::json orders = nlohmann::json::array();
  for (const auto& [nb, na] : c.orders) orders.push_back({nb, na});
  j["model_orders"] = orders;
  j["N"] = c.N;
  j["n"] = c.n;
  j["methods"] = c.methods;
  j["runs"] = c.runs;
  j["master_seed"] = c.master_seed;
  j["threads"] = c.threads;
  const auto& o = c.options;
  j["options"] = {{"tol", o.tol},
                  {"neb_max_iter", o.neb_max_iter},
                  {"nebx_max_iter", o.nebx_max_iter},
                  {"samples", o.samples},
                  {"burn_in", o.burn_in},
                  {"smpe_max_iter", o.smpe_max_iter},
                  {"restarts", o.restarts},
                  {"objective_samples", o.objective_samples}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& in) {
  try {
    const nlohmann::json& j = in.contains("config") && in["config"].is_object() ? in["config"] : in;
    ExperimentConfig c = j.contains("preset") ? preset(j["preset"].get<std::string>()) : ExperimentConfig{};
    if (j.contains("name")) c.name = j["name"].get<std::string>();
    if (j.contains("network")) {
      const auto& net = j["network"];
      c.nodes = net.at("nodes").get<Index>();
      c.edges.clear();
      for (const auto& e : net.at("edges")) {
        const Eigen::VectorXd num = e.contains("num") ? from_json_vec(e["num"]) : Eigen::VectorXd();
        const Eigen::VectorXd den = e.contains("den") ? from_json_vec(e["den"]) : Eigen::VectorXd();
        const double b0 = e.value("feedthrough", 0.0);
        c.edges.push_back({node_from_json(e.at("to")), node_from_json(e.at("from")), RationalTF(num, den, b0)});
      }
      c.references = nodes_from_json(net.at("references"));
      c.noise_ratio = net.contains("noise_ratio") ? from_json_vec(net["noise_ratio"])
                                                  : Eigen::VectorXd::Zero(c.nodes).eval();
    }
    if (j.contains("target")) {
      const auto& t = j["target"];
      c.target.output = node_from_json(t.at("output"));
      c.target.inputs = nodes_from_json(t.at("inputs"));
      c.target.references = nodes_from_json(t.at("references"));
      c.target.downstream.reset();
      if (t.contains("downstream") && !t["downstream"].is_null()) c.target.downstream = node_from_json(t["downstream"]);
    }
    if (j.contains("model_orders")) {
      c.orders.clear();
      for (const auto& o : j["model_orders"]) c.orders.emplace_back(o.at(0).get<Index>(), o.at(1).get<Index>());
    }
    if (j.contains("N")) c.N = j["N"].get<Index>();
    if (j.contains("n")) c.n = j["n"].get<Index>();
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("runs")) c.runs = j["runs"].get<int>();
    if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("options")) {
      const auto& o = j["options"];
      auto& m = c.options;
      m.tol = o.value("tol", m.tol);
      m.neb_max_iter = o.value("neb_max_iter", m.neb_max_iter);
      m.nebx_max_iter = o.value("nebx_max_iter", m.nebx_max_iter);
      m.samples = o.value("samples", m.samples);
      m.burn_in = o.value("burn_in", m.burn_in);
      m.smpe_max_iter = o.value("smpe_max_iter", m.smpe_max_iter);
      m.restarts = o.value("restarts", m.restarts);
      m.objective_samples = o.value("objective_samples", m.objective_samples);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace nebid
