#pragma once

#include "msgr/data_model.hpp"
#include "msgr/error.hpp"
#include "msgr/metrics.hpp"
#include "msgr/simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace msgr {

namespace fs = std::filesystem;

struct RunConfig {
  std::string command;
  // fit inputs
  fs::path expression, coords, regions, pathways;
  // evaluate inputs: paired directories
  std::vector<fs::path> truth_dirs, fit_dirs;
  fs::path metrics;  // defaults to <out>/metrics.csv
  fs::path out = ".";

  Hyperparams hyperparams;
  std::optional<double> rho;  // unset: Moran's I estimate when K >= 3, else hyperparams.rho_decay
  double moran_bandwidth = 1.0;
  CoordinateScaling coordinate_scaling = CoordinateScaling::Global;
  SimConfig sim;
  int replicates = 1;
  int threads = 1;
  bool verbose = false;
  bool surfaces = false;
  std::uint64_t seed = 1;

  /// Throws Error(Config) on out-of-range values.
  void validate() const;
};

/// Overlays the keys of a JSON document onto `config`; unknown keys are rejected.
void apply_json(RunConfig& config, const nlohmann::json& doc);
RunConfig load_config_file(const fs::path& path);
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const Hyperparams& hp);
nlohmann::json to_json(const SimConfig& sim);

/// Writes expression.csv, coords.csv, truth_edges.csv and sim_config.json to
/// <out> (one replicate) or <out>/rep_<r> (seed + r - 1 for replicate r).
void cmd_simulate(const RunConfig& config);

struct FitSummary {
  FitResult fit;
  NetworkEstimate estimate;
  SpatialDataset scaled;
  double rho_decay = 0.0;
  std::string rho_source;
};

/// Full fitting chain; writes edges.csv, pip/, degree.csv, cs.csv, optional
/// surfaces.csv, fit_result.json and manifest.json into <out>.
FitSummary cmd_fit(const RunConfig& config);

/// Scores each (truth, fit) directory pair and appends one row per pair to the metrics file.
std::vector<ConfusionMetrics> cmd_evaluate(const RunConfig& config);

/// simulate -> fit -> evaluate per replicate under <out>/rep_<r>/{data,fit}.
std::vector<ConfusionMetrics> cmd_pipeline(const RunConfig& config);

CoordinateScaling parse_coordinate_scaling(const std::string& name);
const char* coordinate_scaling_name(CoordinateScaling mode);

/// Exit status for an error kind: Config 2, Data 3, Numerical 4.
int exit_code(ErrorKind kind);

}  // namespace msgr
