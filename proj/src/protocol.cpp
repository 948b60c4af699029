// SPDX-License-Identifier: Apache-2.0
#include "fedgame/protocol.hpp"

#include <chrono>
#include <cmath>
#include <exception>

#include "fedgame/errors.hpp"
#include "fedgame/kernels.hpp"

namespace fedgame {

const char* to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::game: return "game";
    case AggregatorKind::mean: return "mean";
    case AggregatorKind::single_attention: return "single_attention";
    case AggregatorKind::fedavg: return "fedavg";
    case AggregatorKind::fedprox_only: return "fedprox_only";
    case AggregatorKind::local_only: return "local_only";
  }
  return "unknown";
}

AggregatorKind parse_aggregator_kind(const std::string& name) {
  for (auto k : {AggregatorKind::game, AggregatorKind::mean, AggregatorKind::single_attention, AggregatorKind::fedavg,
                 AggregatorKind::fedprox_only, AggregatorKind::local_only}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown aggregator kind '" + name +
                    "' (expected game, mean, single_attention, fedavg, fedprox_only or local_only)");
}

bool is_personalized(AggregatorKind kind) {
  return kind == AggregatorKind::game || kind == AggregatorKind::mean || kind == AggregatorKind::single_attention;
}

std::vector<std::string> HyperParams::problems() const {
  std::vector<std::string> out;
  if (!(eta >= 0.0) || !std::isfinite(eta)) out.push_back("eta: must be >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) out.push_back("gamma: must be >= 0");
  if (clients < 1) out.push_back("clients: need at least one client");
  return out;
}

// ---------------------------------------------------------------------------

CommCost comm_cost(std::size_t n_clients, std::size_t total_params, std::size_t head_params, AggregatorKind kind) {
  CommCost c;
  const auto n = static_cast<std::uint64_t>(n_clients);
  const auto theta = static_cast<std::uint64_t>(total_params);
  const auto head = static_cast<std::uint64_t>(head_params);
  c.baseline = 2 * n * theta;
  c.head_fraction = total_params == 0 ? 0.0 : static_cast<double>(head) / static_cast<double>(theta);
  if (kind == AggregatorKind::local_only) {
    c.upstream = 0;
    c.downstream = 0;
  } else {
    c.upstream = n * theta;
    c.downstream = n * theta + (is_personalized(kind) ? n * head : 0);
  }
  c.ratio = c.baseline == 0 ? 0.0
                            : static_cast<double>(c.upstream + c.downstream) / static_cast<double>(c.baseline);
  return c;
}

CommCost comm_cost(std::size_t n_clients, const LayerSpec& spec, AggregatorKind kind) {
  return comm_cost(n_clients, spec.total(), spec.head_length(), kind);
}

AggregatorConfig aggregator_config_for(AggregatorKind kind, const AggregatorConfig& base) {
  AggregatorConfig cfg = base;
  if (kind == AggregatorKind::single_attention) {
    cfg.num_experts = 1;
    cfg.top_k = 1;
    cfg.noise_enabled = false;
  }
  return cfg;
}

RoundState init_round_state(const ForecasterConfig& fcfg, const AggregatorConfig& acfg, const HyperParams& hyper,
                            std::uint64_t master_seed) {
  fcfg.validate();
  const auto problems = hyper.problems();
  if (!problems.empty()) throw ConfigError("invalid hyperparameters: " + problems.front());

  RngStream init_rng(master_seed, "init");
  const ForecasterModel initial = init_model(fcfg, init_rng);
  RoundState state;
  state.global_params = initial.params;
  for (std::size_t i = 0; i < hyper.clients; ++i) {
    state.client_models.push_back(initial);
    state.client_rngs.emplace_back(master_seed, "client:" + std::to_string(i));
  }
  state.pending_deltas.assign(hyper.clients, std::nullopt);
  if (hyper.kind == AggregatorKind::game || hyper.kind == AggregatorKind::single_attention) {
    state.aggregator.emplace(aggregator_config_for(hyper.kind, acfg), initial.spec().head_length(), hyper.clients,
                             RngStream(master_seed, "server"));
  }
  return state;
}

namespace {

[[noreturn]] void rethrow_with_context(std::exception_ptr ep, const std::string& where) {
  try {
    std::rethrow_exception(ep);
  } catch (const NumericError& e) {
    throw NumericError(where + ": " + e.what());
  } catch (const StructuralError& e) {
    throw StructuralError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(where + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

// Runs fn(i) for every client, in parallel when OpenMP is available. Results are
// written by index, so the outcome does not depend on the schedule.
template <class Fn>
void for_each_client(std::size_t n, const ExecutionOptions& exec, int round, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
  const int threads = exec.threads > 0 ? exec.threads : kernels::max_threads();
  (void)threads;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::int64_t k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(exec.reverse_client_order ? count - 1 - k : k);
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_with_context(errors[i], "round " + std::to_string(round) + ", client " + std::to_string(i));
  }
}

ForecasterConfig training_config(const ForecasterConfig& fcfg, AggregatorKind kind) {
  ForecasterConfig cfg = fcfg;
  if (kind == AggregatorKind::fedavg || kind == AggregatorKind::local_only) cfg.prox_mu = 0.0;
  return cfg;
}

}  // namespace

std::pair<RoundState, RoundReport> run_round(const RoundState& state, const HyperParams& hyper,
                                             const ForecasterConfig& fcfg, const AggregatorConfig& acfg,
                                             std::span<const ClientData> data, const ExecutionOptions& exec) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = state.client_models.size();
  const int tau = state.round;
  if (data.size() != n) throw UsageError("run_round: " + std::to_string(data.size()) + " datasets for " + std::to_string(n) + " clients");
  if (n == 0) throw UsageError("run_round: no clients");
  for (std::size_t i = 0; i < n; ++i) {
    if (data[i].train.empty()) throw UsageError("run_round: client " + data[i].client_id + " has no training windows");
  }
  const AggregatorKind kind = hyper.kind;
  const ForecasterConfig train_cfg = training_config(fcfg, kind);

  RoundState next = state;
  RoundReport report;
  report.round = tau;
  report.train_loss.assign(n, 0.0);

  // (1) client deltas against the current global model
  std::vector<DeltaUpdate> deltas(n);
  for_each_client(n, exec, tau, [&](std::size_t i) {
    const auto& pending = next.pending_deltas[i];
    if (pending && pending->round == tau) {
      deltas[i] = *pending;
      return;
    }
    auto trained = local_train(next.client_models[i], data[i].train, next.global_params, train_cfg, next.client_rngs[i]);
    next.client_models[i] = std::move(trained.model);
    report.train_loss[i] = trained.mean_loss;
    deltas[i] = compute_delta(next.client_models[i].params, next.global_params, tau, i);
  });

  // (2) server: consensus update, then personalized aggregation
  try {
    if (kind != AggregatorKind::local_only) {
      next.global_params = add_scaled(next.global_params, mean_deltas(deltas).values(), hyper.eta);
    }
  } catch (const NumericError& e) {
    throw NumericError("round " + std::to_string(tau) + ", consensus update: " + e.what());
  }

  AggregationResult agg;
  if (is_personalized(kind)) {
    HeadDeltas heads;
    heads.reserve(n);
    for (const auto& d : deltas) heads.push_back(d.head);
    try {
      if (kind == AggregatorKind::mean) {
        agg = aggregate_mean(heads, acfg.w_self);
      } else {
        AggregatorState& server = *next.aggregator;
        if (n >= 2) {
          const std::size_t steps = server.config().steps_per_round;
          for (std::size_t s = 0; s < steps; ++s) {
            auto step = train_step(server, heads);
            if (s == 0) report.meta_loss = step.loss;
            server = std::move(step.state);
          }
        }
        agg = kind == AggregatorKind::game ? aggregate_game(server, heads) : aggregate_single_attention(server, heads);
      }
    } catch (const NumericError& e) {
      throw NumericError("round " + std::to_string(tau) + ", server aggregation: " + e.what());
    }
    report.attention.assign(n, std::vector<double>(n, 0.0));
    for (const auto& row : agg.rows) {
      for (std::size_t r = 0; r < row.neighbors.size(); ++r) report.attention[row.client_id][row.neighbors[r]] = row.weights[r];
      if (!row.expert_mix.empty()) report.gate_mix.push_back(row.expert_mix);
    }
  }

  // (3) clients apply their personalized delta (or reset to the global model) and fine-tune
  const ParameterVector zero(next.global_params.spec_ptr());
  for_each_client(n, exec, tau, [&](std::size_t i) {
    ParameterVector start;
    if (is_personalized(kind)) {
      start = add_scaled(next.client_models[i].params, scatter_head(zero, agg.personalized[i]).values(), hyper.gamma);
    } else if (kind == AggregatorKind::local_only) {
      start = next.client_models[i].params;
    } else {
      start = next.global_params;
    }
    ForecasterModel model{std::move(start), next.client_models[i].config};
    auto trained = local_train(model, data[i].train, next.global_params, train_cfg, next.client_rngs[i]);
    next.client_models[i] = std::move(trained.model);
    report.train_loss[i] = trained.mean_loss;
    next.pending_deltas[i] = compute_delta(next.client_models[i].params, next.global_params, tau + 1, i);
  });

  const auto cost = comm_cost(n, next.global_params.spec(), kind);
  report.upstream_bytes = cost.upstream * kBytesPerScalar;
  report.downstream_bytes = cost.downstream * kBytesPerScalar;
  next.round = tau + 1;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(next), std::move(report)};
}

std::vector<ForecasterModel> evaluation_models(const RoundState& state, AggregatorKind kind) {
  if (kind == AggregatorKind::fedavg || kind == AggregatorKind::fedprox_only) {
    std::vector<ForecasterModel> out;
    for (const auto& m : state.client_models) out.push_back(ForecasterModel{state.global_params, m.config});
    return out;
  }
  return state.client_models;
}

// ---------------------------------------------------------------------------

std::vector<AttentionDiagnostics> attention_diagnostics(std::span<const RoundReport> reports,
                                                        std::span<const int> cluster_labels) {
  std::vector<AttentionDiagnostics> out;
  for (const auto& rep : reports) {
    const std::size_t n = rep.attention.size();
    if (n < 2) continue;
    if (!cluster_labels.empty() && cluster_labels.size() != n) {
      throw UsageError("attention_diagnostics: one cluster label per client required");
    }
    AttentionDiagnostics d;
    d.round = rep.round;
    double intra = 0.0, uniform = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double entropy = 0.0, mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = rep.attention[i][j];
        if (w > 0.0) entropy -= w * std::log(w);
        mean += w;
      }
      mean /= static_cast<double>(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dw = rep.attention[i][j] - mean;
        var += dw * dw;
      }
      d.mean_entropy += entropy;
      d.weight_variance += var / static_cast<double>(n - 1);
      if (!cluster_labels.empty()) {
        std::size_t peers = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i || cluster_labels[j] != cluster_labels[i]) continue;
          intra += rep.attention[i][j];
          ++peers;
        }
        uniform += static_cast<double>(peers) / static_cast<double>(n - 1);
      }
    }
    d.mean_entropy /= static_cast<double>(n);
    d.weight_variance /= static_cast<double>(n);
    if (!cluster_labels.empty()) {
      d.intra_cluster_mass = intra / static_cast<double>(n);
      d.uniform_baseline = uniform / static_cast<double>(n);
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace fedgame
