// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedgame/aggregator.hpp"
#include "fedgame/data.hpp"
#include "fedgame/forecaster.hpp"
#include "fedgame/params.hpp"

namespace fedgame {

enum class AggregatorKind { game, mean, single_attention, fedavg, fedprox_only, local_only };

const char* to_string(AggregatorKind kind);
AggregatorKind parse_aggregator_kind(const std::string& name);
/// Kinds that ship a personalized head delta downstream.
bool is_personalized(AggregatorKind kind);

struct HyperParams {
  double eta = 1.0;    // server consensus step
  double gamma = 1.0;  // client personalization step
  std::size_t rounds = 30;
  std::size_t clients = 1;
  AggregatorKind kind = AggregatorKind::game;

  std::vector<std::string> problems() const;
};

struct ClientData {
  std::string client_id;
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;
  std::optional<int> cluster_label;
};

struct RoundState {
  int round = 0;
  ParameterVector global_params;
  std::vector<ForecasterModel> client_models;
  std::vector<RngStream> client_rngs;
  // Delta computed at the end of the previous round against the updated global model.
  std::vector<std::optional<DeltaUpdate>> pending_deltas;
  // Present for the kinds with a learnable aggregator (game, single_attention).
  std::optional<AggregatorState> aggregator;
};

struct RoundReport {
  int round = 0;
  std::vector<double> train_loss;               // per client, final fine-tune epoch
  double meta_loss = 0.0;                       // mean server meta-loss (learnable kinds only)
  std::vector<std::vector<double>> attention;   // N x N, zero diagonal; empty for kinds without a graph
  std::vector<std::vector<double>> gate_mix;    // N x M
  std::uint64_t upstream_bytes = 0;
  std::uint64_t downstream_bytes = 0;
  double wall_seconds = 0.0;
};

struct ExecutionOptions {
  int threads = 0;                    // 0: OpenMP default
  bool reverse_client_order = false;  // schedule clients last-to-first
};

/// Per-round communication volume in scalars (multiply by 8 for bytes).
struct CommCost {
  std::uint64_t upstream = 0;
  std::uint64_t downstream = 0;
  std::uint64_t baseline = 0;  // 2 N |theta|
  double ratio = 0.0;          // (upstream + downstream) / baseline
  double head_fraction = 0.0;  // r
};

CommCost comm_cost(std::size_t n_clients, std::size_t total_params, std::size_t head_params, AggregatorKind kind);
CommCost comm_cost(std::size_t n_clients, const LayerSpec& spec, AggregatorKind kind);

inline constexpr std::uint64_t kBytesPerScalar = 8;

/// Aggregator configuration used for a kind (single_attention forces one expert, k = 1, no noise).
AggregatorConfig aggregator_config_for(AggregatorKind kind, const AggregatorConfig& base);

/// Every client starts from a copy of the randomly initialized global model.
RoundState init_round_state(const ForecasterConfig& fcfg, const AggregatorConfig& acfg, const HyperParams& hyper,
                            std::uint64_t master_seed);

/// One federated round. The input state is never modified; on any failure the
/// exception carries the round number and nothing is returned.
std::pair<RoundState, RoundReport> run_round(const RoundState& state, const HyperParams& hyper,
                                             const ForecasterConfig& fcfg, const AggregatorConfig& acfg,
                                             std::span<const ClientData> data, const ExecutionOptions& exec = {});

/// Models used for evaluation: the global model for fedavg/fedprox_only, the
/// private models otherwise.
std::vector<ForecasterModel> evaluation_models(const RoundState& state, AggregatorKind kind);

struct AttentionDiagnostics {
  int round = 0;
  double mean_entropy = 0.0;     // mean over rows of -sum w ln w
  double weight_variance = 0.0;  // mean over rows of the variance of w_ij (j != i)
  std::optional<double> intra_cluster_mass;  // mean over rows of the weight on same-cluster peers
  std::optional<double> uniform_baseline;    // same quantity for uniform rows
};

std::vector<AttentionDiagnostics> attention_diagnostics(std::span<const RoundReport> reports,
                                                        std::span<const int> cluster_labels = {});

}  // namespace fedgame
