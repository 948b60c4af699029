// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fedgame/data.hpp"
#include "fedgame/errors.hpp"
#include "helpers.hpp"

using namespace fedgame;

#ifndef FEDGAME_FIXTURE_DIR
#define FEDGAME_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("csv: two stations, three rows each, columns in any order") {
  auto shards = load_csv(std::filesystem::path(FEDGAME_FIXTURE_DIR) / "two_stations.csv");
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].client_id == "s1");
  CHECK(shards[0].values == std::vector<double>{1, 2, 3});
  CHECK(shards[1].values == std::vector<double>{10, 20, 30});
  CHECK(shards[0].interval_seconds == 300);
  CHECK(shards[0].start_time == 1577836800);
}

TEST_CASE("csv: a one-interval gap becomes an inserted zero") {
  auto shards = load_csv(std::filesystem::path(FEDGAME_FIXTURE_DIR) / "gap.csv");
  REQUIRE(shards.size() == 1);
  CHECK(shards[0].values == std::vector<double>{1.5, 2.0, 0.0, 3.25, 0.5});
  CHECK(shards[0].interval_seconds == 300);
}

TEST_CASE("csv: out-of-order rows are sorted, ties stay in file order") {
  std::istringstream in(
      "timestamp,station_id,demand_kwh\n"
      "600,a,3\n"
      "0,a,1\n"
      "300,a,2\n"
      "300,a,2.5\n");
  auto shards = load_csv(in);
  REQUIRE(shards.size() == 1);
  CHECK(shards[0].values == std::vector<double>{1, 2, 2.5, 3});
}

TEST_CASE("csv: errors name the column or the line") {
  std::istringstream missing("timestamp,station_id\n0,a\n");
  try {
    load_csv(missing, "m.csv");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("demand_kwh") != std::string::npos);
  }
  std::istringstream bad("timestamp,station_id,demand_kwh\n0,a,1\nnot-a-time,a,2\n");
  try {
    load_csv(bad, "b.csv");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("b.csv:3") != std::string::npos);
  }
}

TEST_CASE("csv round trip of synthetic shards") {
  auto shards = synth_generate(3, 2, 50, 0.2, 9);
  std::stringstream buf;
  write_csv(buf, shards);
  auto back = load_csv(buf);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].client_id == shards[i].client_id);
    CHECK(back[i].values == shards[i].values);
    CHECK(back[i].start_time == shards[i].start_time);
  }
}

TEST_CASE("windows: 1..10, h = 3, p = 2, train only") {
  std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  SeriesShard shard{"x", s, 0, 300, std::nullopt};
  auto w = make_windows(shard, 3, 2, {1.0, 0.0, 0.0}).train;
  REQUIRE(w.size() == 6);
  std::vector<double> in0, out0;
  for (double z : w.input(0)) in0.push_back(w.stats.denormalize(z));
  for (double z : w.target(0)) out0.push_back(w.stats.denormalize(z));
  for (int i = 0; i < 3; ++i) CHECK(in0[i] == doctest::Approx(i + 1.0).epsilon(1e-12));
  CHECK(out0[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(out0[1] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("windows: constant series normalizes to zero") {
  SeriesShard shard{"c", std::vector<double>(40, 7.0), 0, 300, std::nullopt};
  auto w = make_windows(shard, 5, 2).train;
  REQUIRE(!w.empty());
  CHECK(w.stats.std == kStdFloor);
  for (double z : w.inputs) CHECK(z == 0.0);
}

TEST_CASE("windows: short splits come back empty with a warning") {
  SeriesShard shard{"s", std::vector<double>(30, 1.0), 0, 300, std::nullopt};
  auto split = make_windows(shard, 5, 2, {0.7, 0.1, 0.2});
  CHECK(split.val.empty());
  CHECK(split.test.empty());
  CHECK(split.warnings.size() == 2);
  CHECK_THROWS_AS(make_windows(shard, 0, 2), ConfigError);
  CHECK_THROWS_AS(make_windows(shard, 3, 2, {0.5, 0.5, 0.5}), ConfigError);
}

TEST_CASE("windows: no leakage and chronological split boundaries") {
  auto shard = synth_generate(1, 1, 500, 0.3, 4)[0];
  auto split = make_windows(shard, 12, 4);
  for (const auto* ds : {&split.train, &split.val, &split.test}) {
    for (std::size_t i = 0; i < ds->size(); ++i) {
      const auto first_target = ds->start_index[i] + ds->history_len;
      const auto last_input = ds->start_index[i] + ds->history_len - 1;
      CHECK(first_target > last_input);
    }
  }
  const auto end_of = [](const WindowedDataset& d) { return d.start_index.back() + d.history_len + d.horizon - 1; };
  CHECK(end_of(split.train) < split.val.start_index.front());
  CHECK(end_of(split.val) < split.test.start_index.front());
  // stats come from the train segment only
  const auto n_train = static_cast<std::size_t>(std::floor(500 * 0.7 + 1e-9));
  auto stats = fit_norm_stats(std::span<const double>(shard.values).subspan(0, n_train));
  CHECK(split.test.stats.mean == stats.mean);
  CHECK(split.test.stats.std == stats.std);
}

TEST_CASE("normalization round trip") {
  RngStream rng(21, "d");
  NormStats s{3.7, 0.42};
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal(0.0, 100.0);
    CHECK(std::abs(s.denormalize(s.normalize(x)) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("synth: noise 0 and one cluster gives identical clients") {
  auto shards = synth_generate(4, 1, 200, 0.0, 3);
  for (const auto& s : shards) CHECK(s.values == shards[0].values);
}

TEST_CASE("synth: same seed, same output; labels recorded") {
  auto a = synth_generate(5, 2, 100, 0.5, 77);
  auto b = synth_generate(5, 2, 100, 0.5, 77);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a[i].values == b[i].values);
    REQUIRE(a[i].cluster_label.has_value());
    for (double v : a[i].values) CHECK(v >= 0.0);
  }
  CHECK(*a[0].cluster_label == 0);
  CHECK(*a[4].cluster_label == 1);
}

TEST_CASE("synth: within-cluster correlation exceeds across-cluster") {
  auto shards = synth_generate(8, 2, 720, 0.3, 5);
  double within = 0, across = 0;
  int nw = 0, na = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) {
      const double r = pearson(shards[i].values, shards[j].values);
      if (*shards[i].cluster_label == *shards[j].cluster_label) {
        within += r;
        ++nw;
      } else {
        across += r;
        ++na;
      }
    }
  }
  CHECK(within / nw > across / na);
  CHECK(within / nw > 0.5);
}

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("2020-01-01 00:00") == 1577836800);
  CHECK(parse_timestamp("2020-01-01T00:05:00") == 1577837100);
  CHECK(parse_timestamp("1577836800") == 1577836800);
  CHECK_FALSE(parse_timestamp("yesterday").has_value());
  CHECK(parse_timestamp(format_timestamp(1600000000)) == 1600000000);
}

}  // TEST_SUITE
