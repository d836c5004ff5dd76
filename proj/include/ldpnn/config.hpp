#pragma once

#include <optional>
#include <string>

#include "ldpnn/simulator.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

// One experiment: model + inputs + run parameters, loaded from JSON
// (schema 1). Operation-specific matrices are optional payloads.
struct ExperimentConfig {
  int schema = 1;
  NetworkConfig model;
  InputSet inputs;
  WidthSchedule schedule;
  ScalingSpec scaling;
  std::vector<double> thresholds;
  bool auto_thresholds = true;
  double target_p = 2e-3;
  QuadratureSpec quad;
  McSpec mc;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  DerivativePattern pattern;
  bool include_bias_in_upsilon_tilde = false;

  std::optional<Matrix> eta, q, y, z, g;
  double gamma = 1.0;
};

ExperimentConfig load_config(const std::string& path);  // throws ConfigError
ExperimentConfig parse_config(const std::string& json_text);

// FNV-1a over the canonical serialization of the semantic fields (everything
// except the output path). Changes iff a semantic field changes.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace ldpnn
