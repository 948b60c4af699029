// SPDX-License-Identifier: Apache-2.0
#include "fedgame/metrics.hpp"

#include <cmath>

#include "fedgame/errors.hpp"

namespace fedgame {

namespace {

void require_inputs(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw UsageError(std::string(what) + ": empty input");
  if (a != b) throw StructuralError(std::string(what) + ": length mismatch");
}

}  // namespace

double quantile_score(std::span<const double> y, std::span<const double> yhat, double q) {
  require_inputs(y.size(), yhat.size(), "quantile_score");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += pinball(y[i], yhat[i], q);
  return total / static_cast<double>(y.size());
}

double icp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper) {
  require_inputs(y.size(), lower.size(), "icp");
  require_inputs(y.size(), upper.size(), "icp");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (lower[i] <= y[i] && y[i] <= upper[i]) ++covered;
  return static_cast<double>(covered) / static_cast<double>(y.size());
}

double mil(std::span<const double> lower, std::span<const double> upper) {
  require_inputs(lower.size(), upper.size(), "mil");
  double total = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i) total += std::abs(upper[i] - lower[i]);
  return total / static_cast<double>(lower.size());
}

EvalReport evaluate(const Predictor& predict, std::span<const WindowedDataset> test,
                    std::span<const std::string> client_ids, std::span<const double> quantiles) {
  if (test.size() != client_ids.size()) throw StructuralError("evaluate: one client id per test set required");
  if (quantiles.empty()) throw UsageError("evaluate: no quantiles");
  const std::size_t nq = quantiles.size();

  EvalReport report;
  report.quantiles.assign(quantiles.begin(), quantiles.end());
  for (std::size_t c = 0; c < test.size(); ++c) {
    const auto& ds = test[c];
    if (ds.empty()) {
      report.excluded.push_back(client_ids[c]);
      continue;
    }
    const std::size_t n = ds.size() * ds.horizon;
    std::vector<double> y;
    y.reserve(n);
    std::vector<std::vector<double>> yhat(nq);
    for (auto& col : yhat) col.reserve(n);
    for (std::size_t w = 0; w < ds.size(); ++w) {
      const auto pred = predict(c, ds.input(w));
      if (pred.size() != ds.horizon * nq) throw StructuralError("evaluate: prediction has wrong shape");
      const auto target = ds.target(w);
      for (std::size_t t = 0; t < ds.horizon; ++t) {
        y.push_back(ds.stats.denormalize(target[t]));
        for (std::size_t j = 0; j < nq; ++j) yhat[j].push_back(ds.stats.denormalize(pred[t * nq + j]));
      }
    }
    ClientEval ce;
    ce.client_id = client_ids[c];
    ce.n = n;
    double qs_total = 0.0;
    for (std::size_t j = 0; j < nq; ++j) {
      ce.qs_per_quantile.push_back(quantile_score(y, yhat[j], quantiles[j]));
      qs_total += ce.qs_per_quantile.back();
    }
    ce.qs = qs_total / static_cast<double>(nq);
    ce.icp = icp(y, yhat.front(), yhat.back());
    ce.mil = mil(yhat.front(), yhat.back());
    report.clients.push_back(std::move(ce));
  }
  if (report.clients.empty()) throw UsageError("evaluate: no client has test windows");

  const double count = static_cast<double>(report.clients.size());
  report.qs_per_quantile.assign(nq, 0.0);
  for (const auto& ce : report.clients) {
    report.qs += ce.qs;
    report.mil += ce.mil;
    report.icp += ce.icp;
    for (std::size_t j = 0; j < nq; ++j) report.qs_per_quantile[j] += ce.qs_per_quantile[j];
    report.n += ce.n;
  }
  report.qs /= count;
  report.mil /= count;
  report.icp /= count;
  for (auto& v : report.qs_per_quantile) v /= count;
  const double total_n = static_cast<double>(report.n);
  for (const auto& ce : report.clients) {
    const double w = static_cast<double>(ce.n) / total_n;
    report.weighted_qs += w * ce.qs;
    report.weighted_mil += w * ce.mil;
    report.weighted_icp += w * ce.icp;
  }
  return report;
}

EvalReport evaluate(std::span<const ForecasterModel> models, std::span<const WindowedDataset> test,
                    std::span<const std::string> client_ids) {
  if (models.size() != test.size()) throw StructuralError("evaluate: one model per test set required");
  if (models.empty()) throw UsageError("evaluate: no clients");
  Predictor predict = [&](std::size_t c, std::span<const double> window) { return forward(models[c], window); };
  return evaluate(predict, test, client_ids, models.front().config.quantiles);
}

}  // namespace fedgame
