// SPDX-License-Identifier: Apache-2.0
#include "fedgame/data.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "fedgame/errors.hpp"
#include "fedgame/format.hpp"
#include "fedgame/rng.hpp"

namespace fedgame {

NormStats fit_norm_stats(std::span<const double> values) {
  NormStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::max(std::sqrt(ss / static_cast<double>(values.size())), kStdFloor);
  return s;
}

namespace {

struct Segment {
  std::size_t begin;
  std::size_t end;
};

WindowedDataset window_segment(std::span<const double> series, Segment seg, std::size_t h, std::size_t p,
                               const NormStats& stats) {
  WindowedDataset ds;
  ds.history_len = h;
  ds.horizon = p;
  ds.stats = stats;
  const std::size_t len = seg.end - seg.begin;
  if (len < h + p) return ds;
  const std::size_t count = len - h - p + 1;
  ds.inputs.reserve(count * h);
  ds.targets.reserve(count * p);
  ds.start_index.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t s = seg.begin + k;
    for (std::size_t t = 0; t < h; ++t) ds.inputs.push_back(stats.normalize(series[s + t]));
    for (std::size_t t = 0; t < p; ++t) ds.targets.push_back(stats.normalize(series[s + h + t]));
    ds.start_index.push_back(s);
  }
  return ds;
}

}  // namespace

SplitWindows make_windows(const SeriesShard& shard, std::size_t history_len, std::size_t horizon,
                          SplitFractions split) {
  if (history_len < 1 || horizon < 1) throw ConfigError("make_windows: history_len and horizon must be >= 1");
  if (split.train < 0 || split.val < 0 || split.test < 0) throw ConfigError("make_windows: negative split fraction");
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ConfigError("make_windows: split fractions must sum to 1");
  }
  const std::size_t n = shard.values.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * split.train + 1e-9));
  const auto n_train_val =
      std::min(n, static_cast<std::size_t>(std::floor(static_cast<double>(n) * (split.train + split.val) + 1e-9)));
  const Segment train{0, n_train};
  const Segment val{n_train, n_train_val};
  const Segment test{n_train_val, n};

  SplitWindows out;
  std::span<const double> series(shard.values);
  NormStats stats;
  if (n_train > 0) {
    stats = fit_norm_stats(series.subspan(0, n_train));
  } else {
    out.warnings.push_back(shard.client_id + ": empty train split, normalization left at identity");
  }
  out.train = window_segment(series, train, history_len, horizon, stats);
  out.val = window_segment(series, val, history_len, horizon, stats);
  out.test = window_segment(series, test, history_len, horizon, stats);

  auto warn_if_short = [&](const char* name, double fraction, const WindowedDataset& ds, Segment seg) {
    if (fraction > 0 && ds.empty()) {
      out.warnings.push_back(shard.client_id + ": " + name + " split has " + std::to_string(seg.end - seg.begin) +
                             " points, too short for one window of " + std::to_string(history_len + horizon));
    }
  };
  warn_if_short("train", split.train, out.train, train);
  warn_if_short("val", split.val, out.val, val);
  warn_if_short("test", split.test, out.test, test);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
  if (text.empty()) return std::nullopt;
  bool numeric = true;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!(std::isdigit(static_cast<unsigned char>(c)) || (i == 0 && c == '-' && text.size() > 1))) {
      numeric = false;
      break;
    }
  }
  if (numeric) {
    try {
      return std::stoll(text);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  char sep = 0;
  int consumed = 0;
  const int fields = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &year, &month, &day, &sep, &hour,
                                 &minute, &second, &consumed);
  if (fields == 7 && static_cast<std::size_t>(consumed) == text.size()) {
    // full form
  } else {
    second = 0;
    consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &year, &month, &day, &sep, &hour, &minute, &consumed) !=
            6 ||
        static_cast<std::size_t>(consumed) != text.size()) {
      return std::nullopt;
    }
  }
  if (sep != ' ' && sep != 'T') return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) return std::nullopt;
  std::tm tm{};
  tm.tm_year = year - 1900;
  tm.tm_mon = month - 1;
  tm.tm_mday = day;
  tm.tm_hour = hour;
  tm.tm_min = minute;
  tm.tm_sec = second;
  const std::time_t t = timegm(&tm);
  if (tm.tm_mday != day) return std::nullopt;  // e.g. Feb 30 rolled over
  return static_cast<std::int64_t>(t);
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  const std::time_t t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", &tm);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

struct Row {
  std::int64_t time;
  double demand;
};

}  // namespace

std::vector<SeriesShard> load_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_row(line);
      break;
    }
  }
  if (header.empty()) throw FormatError(source_name + ": missing header row");

  auto column = [&](const char* name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(source_name + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = column("timestamp");
  const std::size_t id_col = column("station_id");
  const std::size_t demand_col = column("demand_kwh");
  const std::size_t needed = std::max({ts_col, id_col, demand_col}) + 1;

  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (cells.size() < needed) throw FormatError(where + ": expected at least " + std::to_string(needed) + " columns");
    const auto ts = parse_timestamp(cells[ts_col]);
    if (!ts) throw FormatError(where + ": unparseable timestamp '" + cells[ts_col] + "'");
    double demand = 0.0;
    try {
      std::size_t used = 0;
      demand = std::stod(cells[demand_col], &used);
      if (used != cells[demand_col].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw FormatError(where + ": unparseable demand_kwh '" + cells[demand_col] + "'");
    }
    if (!std::isfinite(demand)) throw FormatError(where + ": non-finite demand_kwh");
    const std::string& id = cells[id_col];
    if (id.empty()) throw FormatError(where + ": empty station_id");
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(Row{*ts, demand});
  }

  std::int64_t interval = std::numeric_limits<std::int64_t>::max();
  for (auto& [id, list] : rows) {
    std::stable_sort(list.begin(), list.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      const auto d = list[i].time - list[i - 1].time;
      if (d > 0) interval = std::min(interval, d);
    }
  }
  if (interval == std::numeric_limits<std::int64_t>::max()) interval = 300;

  std::vector<SeriesShard> shards;
  shards.reserve(order.size());
  for (const auto& id : order) {
    const auto& list = rows[id];
    SeriesShard shard;
    shard.client_id = id;
    shard.start_time = list.front().time;
    shard.interval_seconds = interval;
    shard.values.push_back(list.front().demand);
    for (std::size_t i = 1; i < list.size(); ++i) {
      const auto d = list[i].time - list[i - 1].time;
      for (std::int64_t missing = d / interval - 1; missing > 0; --missing) shard.values.push_back(0.0);
      shard.values.push_back(list[i].demand);
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

std::vector<SeriesShard> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open file");
  return load_csv(in, path.string());
}

void write_csv(std::ostream& out, std::span<const SeriesShard> shards) {
  out << "timestamp,station_id,demand_kwh\n";
  for (const auto& shard : shards) {
    for (std::size_t t = 0; t < shard.values.size(); ++t) {
      const auto ts = shard.start_time + static_cast<std::int64_t>(t) * shard.interval_seconds;
      out << format_timestamp(ts) << ',' << shard.client_id << ',' << format_double(shard.values[t]) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic non-IID generator

namespace {

struct Archetype {
  double level;
  double period;
  double amp1, amp2;
  double phase1, phase2;

  double at(double t) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return amp1 * std::sin(two_pi * t / period + phase1) + amp2 * std::sin(two_pi * 2.0 * t / period + phase2);
  }
};

}  // namespace

std::vector<SeriesShard> synth_generate(std::size_t n_clients, std::size_t n_clusters, std::size_t length,
                                        double noise_sd, std::uint64_t seed) {
  if (n_clusters < 1 || n_clusters > n_clients) throw ConfigError("synth_generate: need 1 <= n_clusters <= n_clients");
  if (noise_sd < 0) throw ConfigError("synth_generate: noise_sd must be >= 0");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<Archetype> archetypes;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    RngStream rng(seed, "synth:cluster:" + std::to_string(c));
    Archetype a;
    a.level = rng.uniform(2.0, 4.0);
    // 24, 72, 120, ... steps: the first two clusters differ by a 3:1 period ratio.
    a.period = 24.0 * static_cast<double>(1 + 2 * c);
    a.amp1 = rng.uniform(1.0, 2.0);
    a.amp2 = rng.uniform(0.3, 0.8) * a.amp1;
    a.phase1 = rng.uniform(0.0, two_pi);
    a.phase2 = rng.uniform(0.0, two_pi);
    archetypes.push_back(a);
  }

  std::vector<SeriesShard> shards;
  shards.reserve(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) {
    RngStream rng(seed, "synth:client:" + std::to_string(i));
    const int cluster = static_cast<int>(i * n_clusters / n_clients);
    const Archetype& a = archetypes[static_cast<std::size_t>(cluster)];
    const double jitter = 1.0 + 0.2 * noise_sd * rng.uniform(-1.0, 1.0);
    SeriesShard shard;
    shard.client_id = "client_" + std::to_string(i);
    shard.cluster_label = cluster;
    shard.start_time = 1577836800;  // 2020-01-01 00:00:00 UTC
    shard.interval_seconds = 300;
    shard.values.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
      const double noise = noise_sd > 0 ? rng.normal(0.0, noise_sd) : 0.0;
      shard.values[t] = std::max(0.0, a.level + jitter * a.at(static_cast<double>(t)) + noise);
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace fedgame
