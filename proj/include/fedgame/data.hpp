// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedgame {

/// One station's demand series at a fixed sampling interval.
struct SeriesShard {
  std::string client_id;
  std::vector<double> values;       // demand, kWh per interval
  std::int64_t start_time = 0;      // epoch seconds of values[0]
  std::int64_t interval_seconds = 300;
  std::optional<int> cluster_label;  // synthetic data only
};

/// Z-score statistics fitted on a training split.
struct NormStats {
  double mean = 0.0;
  double std = 1.0;

  double normalize(double x) const { return (x - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
};

inline constexpr double kStdFloor = 1e-8;

NormStats fit_norm_stats(std::span<const double> values);

/// Stride-1 supervised windows over one split, stored normalized.
///
/// Sample i reads inputs [start_index[i], start_index[i] + history_len) and
/// predicts [start_index[i] + history_len, start_index[i] + history_len + horizon)
/// of the original series.
struct WindowedDataset {
  std::size_t history_len = 0;
  std::size_t horizon = 0;
  std::vector<double> inputs;   // size() * history_len
  std::vector<double> targets;  // size() * horizon
  std::vector<std::size_t> start_index;
  NormStats stats;

  std::size_t size() const { return start_index.size(); }
  bool empty() const { return start_index.empty(); }
  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * history_len, history_len}; }
  std::span<const double> target(std::size_t i) const { return {targets.data() + i * horizon, horizon}; }
};

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct SplitWindows {
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;
  std::vector<std::string> warnings;
};

/// Chronological train/val/test split, then windows within each split.
/// Normalization stats come from the train segment only and are shared by all three.
SplitWindows make_windows(const SeriesShard& shard, std::size_t history_len, std::size_t horizon,
                          SplitFractions split = {});

/// Reads `timestamp,station_id,demand_kwh` rows (columns in any order, header required).
/// Timestamps are epoch seconds or `YYYY-MM-DD[ T]HH:MM[:SS]` (UTC). One shard per
/// station in first-appearance order; rows are sorted by time (stable) and interval
/// gaps are filled with zero demand.
std::vector<SeriesShard> load_csv(const std::filesystem::path& path);
std::vector<SeriesShard> load_csv(std::istream& in, const std::string& source_name = "<stream>");

/// Writes shards in the same schema load_csv reads.
void write_csv(std::ostream& out, std::span<const SeriesShard> shards);

/// Non-IID synthetic demand: each cluster gets its own two-sinusoid archetype,
/// clients get per-client amplitude jitter (scaled by noise_sd) plus Gaussian noise,
/// clipped at zero. Clients are assigned to clusters in contiguous blocks.
std::vector<SeriesShard> synth_generate(std::size_t n_clients, std::size_t n_clusters, std::size_t length,
                                        double noise_sd, std::uint64_t seed);

std::string format_timestamp(std::int64_t epoch_seconds);
std::optional<std::int64_t> parse_timestamp(const std::string& text);

}  // namespace fedgame
