// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgame/aggregator.hpp"
#include "fedgame/data.hpp"
#include "fedgame/errors.hpp"
#include "fedgame/forecaster.hpp"
#include "fedgame/protocol.hpp"

namespace fedgame {

enum class DataSource { synth, csv };

struct DataConfig {
  DataSource source = DataSource::synth;
  std::string csv_path;
  std::size_t n_clients = 8;
  std::size_t n_clusters = 2;
  std::size_t length = 720;
  double noise_sd = 0.3;
  SplitFractions splits;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "fedgame_out";
  int threads = 0;
  DataConfig data;
  ForecasterConfig forecaster;
  AggregatorConfig aggregator;
  HyperParams protocol;  // `clients` is filled from the data
  double participation = 1.0;
  std::vector<AggregatorKind> baselines{AggregatorKind::game, AggregatorKind::mean, AggregatorKind::single_attention,
                                        AggregatorKind::fedavg, AggregatorKind::local_only};
};

/// Carries every validation problem, each prefixed with its dotted key.
class ConfigValidationError : public ConfigError {
 public:
  explicit ConfigValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Missing keys take defaults; unknown keys, wrong types and out-of-range values
/// are all collected before throwing ConfigValidationError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Range and cross-field checks on an already typed config.
std::vector<std::string> config_problems(const ExperimentConfig& config);

/// Effective config with every field spelled out; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace fedgame
