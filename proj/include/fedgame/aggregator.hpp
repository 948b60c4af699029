// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedgame/rng.hpp"

// Graph-attention mixture-of-experts aggregation over client head deltas.
//
// Every round the server treats each client's head delta as a node of a fully
// connected graph. A shared linear encoder maps deltas to embeddings e_i; M
// shared linear experts score each ordered pair as s_ijk = E_k([e_j, e_i]);
// a per-client noisy top-k gate mixes the expert scores into one relevance
// v_ij = c_i . s_ij; a temperature softmax over j != i gives the edge weights
// w_ij; and the personalized delta is
//
//   pers_i = w_self * u_i + (1 - w_self) * sum_{j != i} w_ij * u_j.
//
// Encoder, experts and gates are trained on the server by minimizing
// alpha |pers_i - u_i|^2 + beta (1 - cos(pers_i, u_i)) averaged over clients.

namespace fedgame {

struct AggregatorConfig {
  std::size_t embed_dim = 64;
  std::size_t num_experts = 4;
  std::size_t top_k = 2;
  double temperature = 1.0;
  double w_self = 0.6;
  double alpha = 0.5;
  double beta = 0.5;
  double server_lr = 1e-3;
  bool noise_enabled = true;
  std::size_t steps_per_round = 1;

  std::vector<std::string> problems() const;
  void validate() const;
};

using HeadDeltas = std::vector<std::vector<double>>;
using Embeddings = std::vector<std::vector<double>>;

/// Server-side parameters, optimizer moments and the server RNG stream.
///
/// All trainable values live in one flat vector:
///   encoder W (embed x head) | encoder b (embed) | experts W (M x 2*embed) |
///   experts b (M) | per client: gate W (embed x M), noise W (embed x M)
class AggregatorState {
 public:
  AggregatorState(const AggregatorConfig& config, std::size_t head_dim, std::size_t n_clients, RngStream rng);

  const AggregatorConfig& config() const { return config_; }
  std::size_t head_dim() const { return head_dim_; }
  std::size_t embed_dim() const { return config_.embed_dim; }
  std::size_t num_experts() const { return config_.num_experts; }
  std::size_t num_clients() const { return num_clients_; }

  /// Adds a freshly initialized gate pair; returns the new client id.
  std::size_t register_client();

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::span<const double> encoder_weight() const { return view(encoder_weight_offset(), embed_dim() * head_dim_); }
  std::span<const double> encoder_bias() const { return view(encoder_bias_offset(), embed_dim()); }
  /// Length 2*embed: first half scores the neighbor embedding, second half the target.
  std::span<const double> expert_weight(std::size_t k) const {
    return view(expert_weight_offset() + k * 2 * embed_dim(), 2 * embed_dim());
  }
  double expert_bias(std::size_t k) const { return params_[expert_bias_offset() + k]; }
  /// embed x M, row-major.
  std::span<const double> gate_weight(std::size_t client) const;
  std::span<const double> noise_weight(std::size_t client) const;

  std::span<double> encoder_weight() { return mut(encoder_weight_offset(), embed_dim() * head_dim_); }
  std::span<double> encoder_bias() { return mut(encoder_bias_offset(), embed_dim()); }
  std::span<double> expert_weight(std::size_t k) {
    return mut(expert_weight_offset() + k * 2 * embed_dim(), 2 * embed_dim());
  }
  double& expert_bias(std::size_t k) { return params_[expert_bias_offset() + k]; }
  std::span<double> gate_weight(std::size_t client);
  std::span<double> noise_weight(std::size_t client);

  std::size_t encoder_weight_offset() const { return 0; }
  std::size_t encoder_bias_offset() const { return embed_dim() * head_dim_; }
  std::size_t expert_weight_offset() const { return encoder_bias_offset() + embed_dim(); }
  std::size_t expert_bias_offset() const { return expert_weight_offset() + num_experts() * 2 * embed_dim(); }
  std::size_t gate_offset(std::size_t client) const {
    return expert_bias_offset() + num_experts() + client * 2 * embed_dim() * num_experts();
  }

  RngStream& rng() { return rng_; }
  const RngStream& rng() const { return rng_; }

  // Adam state, same layout as parameters().
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::size_t adam_step = 0;

 private:
  std::span<const double> view(std::size_t off, std::size_t len) const { return {params_.data() + off, len}; }
  std::span<double> mut(std::size_t off, std::size_t len) { return {params_.data() + off, len}; }
  void init_range(std::size_t off, std::size_t len, double fan_in);

  AggregatorConfig config_;
  std::size_t head_dim_ = 0;
  std::size_t num_clients_ = 0;
  std::vector<double> params_;
  RngStream rng_;
};

struct AttentionRow {
  std::size_t client_id = 0;
  std::vector<std::size_t> neighbors;  // j != i, ascending
  std::vector<double> weights;         // w_ij, aligned with neighbors
  std::vector<double> relevance;       // v_ij, aligned with neighbors
  std::vector<double> expert_mix;      // c_i over experts, exactly top_k nonzero
  std::vector<double> logits;          // H_i over experts
};

/// e = W u + b.
std::vector<double> encode(const AggregatorState& state, std::span<const double> head_delta);
Embeddings encode_all(const AggregatorState& state, const HeadDeltas& head_deltas);

/// s_k = E_k([e_j, e_i]) for every expert k.
std::vector<double> expert_scores(const AggregatorState& state, std::span<const double> e_i,
                                  std::span<const double> e_j);

/// H_i = e_i W_g + eps * softplus(e_i W_noise). Noise is drawn from the state's
/// RNG only when `training` is set and the config enables noise.
std::vector<double> gate_logits(AggregatorState& state, std::size_t client, std::span<const double> e_i,
                                bool training);
/// Same with explicit standard-normal draws; an empty `noise` means clean logits.
std::vector<double> gate_logits(const AggregatorState& state, std::size_t client, std::span<const double> e_i,
                                std::span<const double> noise);

/// Indices of the k largest logits; ties go to the lower expert index.
std::vector<char> top_k_mask(std::span<const double> logits, std::size_t k);
/// Softmax over the k largest logits, exact zeros elsewhere.
std::vector<double> gate_weights(std::span<const double> logits, std::size_t k);

double softplus(double z);

/// Attention over all other clients for `client`. With a single client the
/// row is empty.
AttentionRow attention_row(AggregatorState& state, std::size_t client, const Embeddings& embeddings, bool training);
AttentionRow attention_row(const AggregatorState& state, std::size_t client, const Embeddings& embeddings);

/// w_self * u_i + (1 - w_self) * sum_j w_ij u_j; an empty row yields u_i unchanged.
std::vector<double> personalized_delta(double w_self, std::size_t client, const HeadDeltas& head_deltas,
                                       const AttentionRow& row);

/// alpha |pers - u|^2 + beta (1 - cos(pers, u)); cos is 0 when either norm is below 1e-12.
double meta_loss(std::span<const double> delta_pers, std::span<const double> delta_u, double alpha, double beta);

/// Per-client standard-normal draws (num_experts each) and frozen top-k masks for
/// reproducible objective evaluation.
using GateNoise = std::vector<std::vector<double>>;
using GateMasks = std::vector<std::vector<char>>;

struct MetaEvaluation {
  double loss = 0.0;                 // mean over clients
  std::vector<double> client_loss;
  std::vector<double> gradient;      // same layout as AggregatorState::parameters(); empty if not requested
  std::vector<AttentionRow> rows;
  GateMasks masks;
  HeadDeltas personalized;
};

struct MetaOptions {
  const GateNoise* noise = nullptr;  // nullptr: clean logits
  const GateMasks* masks = nullptr;  // nullptr: choose top-k from the logits
  bool with_gradient = true;
};

/// Mean meta-loss over all registered clients and, optionally, its exact gradient
/// w.r.t. encoder, experts and gates (head deltas are constants, the top-k
/// selection is held fixed).
MetaEvaluation evaluate_meta(const AggregatorState& state, const HeadDeltas& head_deltas, const MetaOptions& options = {});

struct TrainStepResult {
  AggregatorState state;
  double loss = 0.0;  // mean meta-loss before the update
};

/// One Adam step on the mean meta-loss. Throws NumericError (with a dump of the
/// gate logits) if the gradient is not finite.
TrainStepResult train_step(const AggregatorState& state, const HeadDeltas& head_deltas);

struct AggregationResult {
  HeadDeltas personalized;
  std::vector<AttentionRow> rows;
};

/// GAME inference: noise off, one row and one personalized delta per client.
AggregationResult aggregate_game(const AggregatorState& state, const HeadDeltas& head_deltas);

/// Fixed uniform neighbor mean, same w_self blending.
AggregationResult aggregate_mean(const HeadDeltas& head_deltas, double w_self);

/// Single shared attention score per pair: v_ij = E_0([e_j, e_i]), no gating.
/// Requires a state built with num_experts == 1.
AggregationResult aggregate_single_attention(const AggregatorState& state, const HeadDeltas& head_deltas);

/// State whose client i carries the gate of client perm[i] in `state`.
AggregatorState permute_clients(const AggregatorState& state, std::span<const std::size_t> perm);

/// Temperature softmax with an order-independent denominator.
std::vector<double> tempered_softmax(std::span<const double> values, double temperature);

}  // namespace fedgame
