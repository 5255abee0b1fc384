#pragma once

// Run configuration for the command-line front end: JSON documents, named
// presets and validation with key-level error messages.

#include <string>
#include <vector>

#include <json.hpp>

#include "padr/bench.hpp"
#include "padr/diagnostics.hpp"

namespace padr {

struct DataSection {
  bench::DemandModel model;
  Eigen::Index n = 1000;
  int p = 2;
};

struct DiagnoseSection {
  std::string what = "surrogation";  ///< surrogation | residual | residual_sampled | interpolate | eps_all | probe
  double epsilon = 0.0;
  double rho = 0.6;
  int probes = 1000;
  double radius = 0.0;
  int draws = 100;
  std::uint64_t cap = 10000;
  std::string target = "abs";        ///< abs | sin | maxaffine2
  double grid_eps = 0.25;
  double xbar = 1.0;
  int directions = 64;
};

struct RunConfig {
  std::string command;
  std::string preset;
  std::uint64_t seed = 0;
  int threads = 0;

  std::string data_in;
  std::string model_in;
  std::string test_in;
  std::string out_dir = "out";

  HypothesisConfig hyp;
  bench::CostSetup cost;
  double gamma = 0.0;
  double lambda = 0.0;
  SmmConfig smm;
  int sweep_budget = 20;
  SweepSpace space;
  SweepOptions sweep;
  DataSection data;
  bench::ExperimentConfig bench;
  DiagnoseSection diagnose;
};

inline const std::vector<std::string> kCommands{"gen", "train", "eval", "bench", "diagnose", "sweep"};
std::vector<std::string> preset_names();

/// Preset document; throws ConfigError for an unknown name.
nlohmann::json preset_json(const std::string& name);

/// Recursive object merge; values in `over` replace those in `base`.
void merge_json(nlohmann::json& base, const nlohmann::json& over);

/// Validated configuration. Unknown keys, type mismatches and missing required
/// fields raise ConfigError naming the offending key.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(const std::string& text);

/// Every setting with defaults filled, in the document format parse_config reads.
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

/// Problem for training: the cost setup with the configured penalty.
PenalizedProblem make_problem(const RunConfig& cfg);
bench::TrainSettings make_train_settings(const RunConfig& cfg);

}  // namespace padr
