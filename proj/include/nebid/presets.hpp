#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "nebid/experiment.hpp"

namespace nebid {

// closed_loop, closed_loop_alt, example_network.
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

// Config schema (nodes 1-based):
// {
//   "name": str,
//   "network": {"nodes": int,
//               "edges": [{"to": int, "from": int, "num": [b1..], "den": [a1..], "feedthrough": b0}],
//               "references": [int], "noise_ratio": [var(e)/var(w) per node]},
//   "target": {"output": int, "inputs": [int], "references": [int], "downstream": int|null},
//   "model_orders": [[nb, na] per input],
//   "N": int, "n": int, "methods": [str], "runs": int, "master_seed": int, "threads": int,
//   "options": {"tol", "neb_max_iter", "nebx_max_iter", "samples", "burn_in",
//               "smpe_max_iter", "restarts", "objective_samples"}
// }
// Missing keys take the ExperimentConfig defaults; "preset": name starts from
// a preset and overrides the keys present. A manifest's "config" member is
// also accepted.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

}  // namespace nebid
