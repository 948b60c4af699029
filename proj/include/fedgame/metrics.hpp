// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedgame/data.hpp"
#include "fedgame/forecaster.hpp"

namespace fedgame {

/// Pinball loss of one element: (1-q)|y-yhat| when y < yhat, q|y-yhat| otherwise.
inline double pinball(double y, double yhat, double q) {
  const double diff = y - yhat;
  return y < yhat ? (1.0 - q) * -diff : q * diff;
}

/// QS: mean pinball loss of yhat as the q-quantile of y.
double quantile_score(std::span<const double> y, std::span<const double> yhat, double q);
/// ICP: fraction of i with lower_i <= y_i <= upper_i. Crossed intervals are not repaired.
double icp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper);
/// MIL: mean |upper_i - lower_i|.
double mil(std::span<const double> lower, std::span<const double> upper);

struct ClientEval {
  std::string client_id;
  double qs = 0.0;
  double mil = 0.0;
  double icp = 0.0;
  std::size_t n = 0;  // windows x horizon steps
  std::vector<double> qs_per_quantile;
};

struct EvalReport {
  std::vector<double> quantiles;
  std::vector<ClientEval> clients;
  // Macro average: unweighted mean over evaluated clients.
  double qs = 0.0;
  double mil = 0.0;
  double icp = 0.0;
  std::vector<double> qs_per_quantile;
  // Sample-weighted average over clients.
  double weighted_qs = 0.0;
  double weighted_mil = 0.0;
  double weighted_icp = 0.0;
  std::size_t n = 0;
  std::vector<std::string> excluded;  // clients with no test windows
};

/// Normalized-space prediction for one window of one client.
using Predictor = std::function<std::vector<double>(std::size_t client, std::span<const double> window)>;

/// Scores de-normalized predictions against de-normalized targets. QS averages
/// all quantiles, steps and windows; ICP/MIL use the (lowest, highest) quantile pair.
EvalReport evaluate(const Predictor& predict, std::span<const WindowedDataset> test,
                    std::span<const std::string> client_ids, std::span<const double> quantiles);

EvalReport evaluate(std::span<const ForecasterModel> models, std::span<const WindowedDataset> test,
                    std::span<const std::string> client_ids);

}  // namespace fedgame
