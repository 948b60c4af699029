// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fedgame/config.hpp"
#include "fedgame/metrics.hpp"
#include "fedgame/protocol.hpp"

namespace fedgame {

/// Loaded, windowed client data plus ground-truth cluster labels (synthetic only).
struct PreparedData {
  std::vector<ClientData> clients;
  std::vector<std::string> client_ids;
  std::vector<int> cluster_labels;  // empty unless every client has a label
  std::vector<std::string> warnings;
};

PreparedData prepare_data(const ExperimentConfig& config);

struct ExperimentResult {
  std::vector<RoundReport> rounds;
  EvalReport eval;
  std::vector<AttentionDiagnostics> diagnostics;
  RoundState final_state;
  std::vector<std::string> warnings;
};

using RoundCallback = std::function<void(const RoundReport&)>;

/// Runs `config.protocol.rounds` rounds of `config.protocol.kind` and evaluates
/// on the test windows. Throws ConfigValidationError before any work if the
/// config is invalid.
ExperimentResult run_experiment(const ExperimentConfig& config, const ExecutionOptions& exec = {},
                                const RoundCallback& on_round = {});
ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                const ExecutionOptions& exec = {}, const RoundCallback& on_round = {});

}  // namespace fedgame
