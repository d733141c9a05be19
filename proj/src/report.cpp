#include "nebid/report.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "nebid/errors.hpp"
#include "nebid/presets.hpp"

namespace nebid {

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& header) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != header) throw InvalidArgument("csv: unexpected header '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(split(line));
  }
  return rows;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

nlohmann::json json_num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

}  // namespace

std::string params_csv(const ResultTable& table) {
  std::ostringstream os;
  os << kParamsHeader << '\n';
  for (const auto& r : table.rows)
    for (std::size_t k = 0; k < r.theta.size(); ++k)
      os << r.run_id << ',' << r.method << ',' << r.module << ',' << r.param_names[k] << ',' << num(r.theta[k])
         << '\n';
  return os.str();
}

std::string fits_csv(const ResultTable& table) {
  std::ostringstream os;
  os << kFitsHeader << '\n';
  for (const auto& r : table.rows)
    os << r.run_id << ',' << r.method << ',' << r.module << ',' << num(r.fit) << ',' << r.iterations << ','
       << (r.converged ? 1 : 0) << ',' << num(r.wall_ms) << '\n';
  return os.str();
}

std::string summary_csv(const SummaryStats& stats) {
  std::ostringstream os;
  os << "method,module,param,truth,count,mean,nvar,count_filtered,mean_filtered,nvar_filtered\n";
  for (const auto& p : stats.params)
    os << p.method << ',' << p.module << ',' << p.param << ',' << num(p.truth) << ',' << p.count << ','
       << num(p.mean) << ',' << num(p.nvar) << ',' << p.count_filtered << ',' << num(p.mean_filtered) << ','
       << num(p.nvar_filtered) << '\n';
  return os.str();
}

std::string fit_summary_csv(const SummaryStats& stats) {
  std::ostringstream os;
  os << "method,module,count,failed,negative,mean,q1,median,q3,count_filtered,mean_filtered\n";
  for (const auto& f : stats.fits)
    os << f.method << ',' << f.module << ',' << f.count << ',' << f.failed << ',' << f.negative << ','
       << num(f.mean) << ',' << num(f.q1) << ',' << num(f.median) << ',' << num(f.q3) << ',' << f.count_filtered
       << ',' << num(f.mean_filtered) << '\n';
  return os.str();
}

ResultTable parse_tables(const std::string& params, const std::string& fits) {
  ResultTable t;
  using Key = std::tuple<int, std::string, std::string>;
  std::map<Key, std::size_t> index;
  for (const auto& c : parse_csv(fits, kFitsHeader)) {
    if (c.size() != 7) throw InvalidArgument("fits csv: expected 7 columns");
    ResultRow r;
    r.run_id = std::stoi(c[0]);
    r.method = c[1];
    r.module = c[2];
    r.fit = parse_double(c[3]);
    r.iterations = std::stoi(c[4]);
    r.converged = c[5] == "1";
    r.wall_ms = parse_double(c[6]);
    index[{r.run_id, r.method, r.module}] = t.rows.size();
    t.rows.push_back(std::move(r));
  }
  for (const auto& c : parse_csv(params, kParamsHeader)) {
    if (c.size() != 5) throw InvalidArgument("params csv: expected 5 columns");
    const auto it = index.find({std::stoi(c[0]), c[1], c[2]});
    if (it == index.end()) throw InvalidArgument("params csv: row without a matching fit row");
    auto& r = t.rows[it->second];
    r.param_names.push_back(c[3]);
    r.theta.push_back(parse_double(c[4]));
  }
  return t;
}

std::vector<std::string> emit(const ResultTable& table, const SummaryStats& stats, const ExperimentConfig& config,
                              const std::string& format, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (format != "csv" && format != "json") throw InvalidArgument("emit: format must be csv or json");
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + out_dir + "': " + ec.message());

  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    files.push_back((dir / name).string());
  };
  if (format == "csv") {
    put("params.csv", params_csv(table));
    put("fits.csv", fits_csv(table));
    put("summary.csv", summary_csv(stats));
    put("fit_summary.csv", fit_summary_csv(stats));
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
      nlohmann::json th = nlohmann::json::object();
      for (std::size_t k = 0; k < r.theta.size(); ++k) th[r.param_names[k]] = json_num(r.theta[k]);
      rows.push_back({{"run_id", r.run_id},
                      {"method", r.method},
                      {"module", r.module},
                      {"theta", th},
                      {"fit", json_num(r.fit)},
                      {"iterations", r.iterations},
                      {"converged", r.converged},
                      {"wall_ms", r.wall_ms}});
    }
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : stats.params)
      params.push_back({{"method", p.method},
                        {"module", p.module},
                        {"param", p.param},
                        {"truth", json_num(p.truth)},
                        {"count", p.count},
                        {"mean", json_num(p.mean)},
                        {"nvar", json_num(p.nvar)},
                        {"count_filtered", p.count_filtered},
                        {"mean_filtered", json_num(p.mean_filtered)},
                        {"nvar_filtered", json_num(p.nvar_filtered)}});
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : stats.fits)
      fits.push_back({{"method", f.method},
                      {"module", f.module},
                      {"count", f.count},
                      {"failed", f.failed},
                      {"negative", f.negative},
                      {"mean", json_num(f.mean)},
                      {"q1", json_num(f.q1)},
                      {"median", json_num(f.median)},
                      {"q3", json_num(f.q3)},
                      {"count_filtered", f.count_filtered},
                      {"mean_filtered", json_num(f.mean_filtered)}});
    put("rows.json", rows.dump(2) + "\n");
    put("summary.json", nlohmann::json{{"params", params}, {"fits", fits}, {"runs_dropped", stats.runs_dropped}}.dump(2) +
                            "\n");
  }
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < config.runs; ++k) seeds.push_back(run_seed(config.master_seed, k));
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(fs::path(f).filename().string());
  const nlohmann::json manifest = {{"tool", "nebid_bench"},
                                   {"version", kVersion},
                                   {"config", config_to_json(config)},
                                   {"master_seed", config.master_seed},
                                   {"run_seeds", seeds},
                                   {"files", names}};
  put("manifest.json", manifest.dump(2) + "\n");
  return files;
}

std::string format_summary(const SummaryStats& stats) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "parameter estimates (mean, N*var; filtered in brackets)\n";
  for (const auto& p : stats.params) {
    os << "  " << std::left << std::setw(10) << p.method << std::setw(6) << p.module << std::setw(4) << p.param
       << " truth " << std::setw(8) << p.truth << " mean " << std::setw(9) << p.mean << " N*var " << std::setw(9)
       << p.nvar << " [" << p.mean_filtered << ", " << p.nvar_filtered << "; " << p.count_filtered << "/" << p.count
       << "]\n";
  }
  os << "impulse-response FIT\n";
  for (const auto& f : stats.fits) {
    os << "  " << std::left << std::setw(10) << f.method << std::setw(6) << f.module << " mean " << std::setw(8)
       << f.mean << " q1 " << std::setw(8) << f.q1 << " median " << std::setw(8) << f.median << " q3 "
       << std::setw(8) << f.q3 << " negative " << f.negative << " failed " << f.failed << "\n";
  }
  os << "runs dropped by the negative-fit filter: " << stats.runs_dropped << "\n";
  return os.str();
}

}  // namespace nebid
