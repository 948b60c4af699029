// SPDX-License-Identifier: Apache-2.0
#include "fedgame/experiment.hpp"

namespace fedgame {

PreparedData prepare_data(const ExperimentConfig& config) {
  auto problems = config_problems(config);
  if (!problems.empty()) throw ConfigValidationError(std::move(problems));

  std::vector<SeriesShard> shards;
  if (config.data.source == DataSource::synth) {
    shards = synth_generate(config.data.n_clients, config.data.n_clusters, config.data.length, config.data.noise_sd,
                            derive_seed(config.seed, "data"));
  } else {
    shards = load_csv(config.data.csv_path);
  }

  PreparedData out;
  bool all_labeled = true;
  for (const auto& shard : shards) {
    auto split = make_windows(shard, config.forecaster.history_len, config.forecaster.horizon, config.data.splits);
    for (auto& w : split.warnings) out.warnings.push_back(std::move(w));
    if (split.train.empty()) problems.push_back("data: client " + shard.client_id + " has no training windows");
    out.clients.push_back(ClientData{shard.client_id, std::move(split.train), std::move(split.val),
                                     std::move(split.test), shard.cluster_label});
    out.client_ids.push_back(shard.client_id);
    all_labeled = all_labeled && shard.cluster_label.has_value();
  }
  if (shards.empty()) problems.push_back("data: no client series found");
  if (!problems.empty()) throw ConfigValidationError(std::move(problems));
  if (all_labeled) {
    for (const auto& c : out.clients) out.cluster_labels.push_back(*c.cluster_label);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExecutionOptions& exec,
                                const RoundCallback& on_round) {
  return run_experiment(config, prepare_data(config), exec, on_round);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                const ExecutionOptions& exec, const RoundCallback& on_round) {
  auto problems = config_problems(config);
  if (!problems.empty()) throw ConfigValidationError(std::move(problems));

  HyperParams hyper = config.protocol;
  hyper.clients = data.clients.size();

  ExperimentResult result;
  result.warnings = data.warnings;
  RoundState state = init_round_state(config.forecaster, config.aggregator, hyper, config.seed);
  for (std::size_t r = 0; r < hyper.rounds; ++r) {
    auto [next, report] = run_round(state, hyper, config.forecaster, config.aggregator, data.clients, exec);
    state = std::move(next);
    if (on_round) on_round(report);
    result.rounds.push_back(std::move(report));
  }

  std::vector<WindowedDataset> test;
  for (const auto& c : data.clients) test.push_back(c.test);
  const auto models = evaluation_models(state, hyper.kind);
  result.eval = evaluate(models, test, data.client_ids);
  result.diagnostics = attention_diagnostics(result.rounds, data.cluster_labels);
  result.final_state = std::move(state);
  return result;
}

}  // namespace fedgame
