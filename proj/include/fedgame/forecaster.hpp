// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedgame/data.hpp"
#include "fedgame/params.hpp"
#include "fedgame/rng.hpp"

namespace fedgame {

enum class Architecture { mlp, lstm };

const char* to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

/// Client model and local-training hyperparameters.
struct ForecasterConfig {
  std::size_t history_len = 36;
  std::size_t horizon = 6;
  std::size_t input_features = 1;
  std::vector<double> quantiles{0.1, 0.5, 0.9};
  // MLP: tanh hidden layer widths (may be empty for a purely linear model).
  // LSTM: stacked LSTM layer widths (at least one).
  std::vector<std::size_t> hidden_sizes{32};
  Architecture arch = Architecture::mlp;
  double local_lr = 0.0005;
  std::size_t local_epochs = 1;
  double prox_mu = 0.2;
  std::size_t batch_size = 32;

  std::size_t input_dim() const { return history_len * input_features; }
  std::size_t output_dim() const { return horizon * quantiles.size(); }

  /// Collects every violated constraint as "field: reason" strings.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing problems().
  void validate() const;
};

/// Layer registry for the configured architecture. The final dense layer
/// (weight then bias) is flagged output-head; its width is horizon * |quantiles|.
SpecPtr make_layer_spec(const ForecasterConfig& config);

struct ForecasterModel {
  ParameterVector params;
  ForecasterConfig config;

  const LayerSpec& spec() const { return params.spec(); }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
ForecasterModel init_model(const ForecasterConfig& config, RngStream& rng);
ForecasterModel zero_model(const ForecasterConfig& config);
/// Wraps existing parameters; throws StructuralError if the layout does not match the config.
ForecasterModel make_model(const ForecasterConfig& config, ParameterVector params);

/// Prediction for one window (history_len x input_features, row-major by time).
/// Result is horizon x |quantiles| row-major: entry [t * |q| + j] is the q_j quantile of step t.
std::vector<double> forward(const ForecasterModel& model, std::span<const double> window);

/// Mean over steps and quantiles of the pinball loss, computed as the mean of the
/// per-quantile scores so it agrees bit-for-bit with quantile_score.
double pinball_loss(std::span<const double> pred, std::span<const double> target, std::span<const double> quantiles);

struct Sample {
  std::span<const double> input;
  std::span<const double> target;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Mean pinball loss over the batch and its gradient w.r.t. every parameter.
/// At y == yhat the q-weighted (y >= yhat) branch is used.
LossGradient task_gradient(const ForecasterModel& model, std::span<const Sample> batch);

struct ProxGradient {
  double task_loss = 0.0;
  std::vector<double> task;
  std::vector<double> proximal;  // mu * (w_A - w_B)
  std::vector<double> total;
};

ProxGradient fedprox_gradient(const ForecasterModel& model, std::span<const Sample> batch,
                              const ParameterVector& global_params, double mu);

/// Task loss plus (mu/2)|w_A - w_B|^2 on a batch.
double fedprox_objective(const ForecasterModel& model, std::span<const Sample> batch,
                         const ParameterVector& global_params, double mu);

struct LocalTrainResult {
  ForecasterModel model;
  double mean_loss = 0.0;  // mean task loss over the batches of the final epoch
  std::size_t steps = 0;
};

/// Mini-batch SGD on the FedProx objective for cfg.local_epochs passes.
/// Batch order is drawn from `rng`. Throws UsageError on an empty dataset and
/// NumericError when the loss stops being finite.
LocalTrainResult local_train(const ForecasterModel& model, const WindowedDataset& data,
                             const ParameterVector& global_params, const ForecasterConfig& cfg, RngStream& rng);

std::vector<Sample> make_batch(const WindowedDataset& data, std::span<const std::size_t> indices);

}  // namespace fedgame
