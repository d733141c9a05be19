#pragma once

#include <string>
#include <vector>

#include "nebid/experiment.hpp"

namespace nebid {

// File schemas:
//   params.csv  run_id,method,module,param_name,value
//   fits.csv    run_id,method,module,fit,iterations,converged,wall_ms
//   summary.csv method,module,param,truth,count,mean,nvar,count_filtered,mean_filtered,nvar_filtered
//   fit_summary.csv method,module,count,failed,negative,mean,q1,median,q3,count_filtered,mean_filtered
//   manifest.json   {"tool", "version", "config", "master_seed", "run_seeds", "files"}
// Doubles are written with 17 significant digits so that parsing round-trips.
inline constexpr const char* kParamsHeader = "run_id,method,module,param_name,value";
inline constexpr const char* kFitsHeader = "run_id,method,module,fit,iterations,converged,wall_ms";
inline constexpr const char* kVersion = "1.0.0";

std::string params_csv(const ResultTable& table);
std::string fits_csv(const ResultTable& table);
std::string summary_csv(const SummaryStats& stats);
std::string fit_summary_csv(const SummaryStats& stats);

// Inverse of params_csv / fits_csv.
ResultTable parse_tables(const std::string& params, const std::string& fits);

// Writes the artifacts into `out_dir` (created if needed) and returns the
// file paths. format: "csv" or "json". I/O errors carry the path.
std::vector<std::string> emit(const ResultTable& table, const SummaryStats& stats, const ExperimentConfig& config,
                              const std::string& format, const std::string& out_dir);

// Human-readable summary table.
std::string format_summary(const SummaryStats& stats);

}  // namespace nebid
