// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fedgame/data.hpp"
#include "fedgame/params.hpp"
#include "fedgame/rng.hpp"

namespace testutil {

inline std::vector<double> random_vec(fedgame::RngStream& rng, std::size_t n, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

/// body (dense) of `body` scalars followed by a head weight + bias.
inline fedgame::SpecPtr simple_spec(std::size_t body, std::size_t head_w, std::size_t head_b) {
  auto spec = std::make_shared<fedgame::LayerSpec>();
  if (body > 0) spec->add("body", body, fedgame::LayerKind::dense);
  spec->add("head.weight", head_w, fedgame::LayerKind::output_head);
  if (head_b > 0) spec->add("head.bias", head_b, fedgame::LayerKind::output_head);
  return spec;
}

/// Central differences of f around x, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

struct GradCheck {
  double worst = 0.0;  // largest relative error over checked coordinates
  std::size_t checked = 0;
  std::size_t worst_index = 0;
};

/// Relative error |a - n| / max(|a|, |n|) on every coordinate where either exceeds `floor`.
inline GradCheck compare_gradients(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                   double floor = 1e-8) {
  GradCheck r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale <= floor) continue;
    ++r.checked;
    const double rel = std::abs(analytic[i] - numeric[i]) / scale;
    if (rel > r.worst) {
      r.worst = rel;
      r.worst_index = i;
    }
  }
  return r;
}

/// Windows over an explicit series with train-only split.
inline fedgame::WindowedDataset windows_from(const std::vector<double>& series, std::size_t h, std::size_t p) {
  fedgame::SeriesShard shard;
  shard.client_id = "t";
  shard.values = series;
  return fedgame::make_windows(shard, h, p, {1.0, 0.0, 0.0}).train;
}

}  // namespace testutil
