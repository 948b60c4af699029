// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedgame/errors.hpp"
#include "fedgame/forecaster.hpp"
#include "fedgame/params.hpp"
#include "helpers.hpp"

using namespace fedgame;
using testutil::random_vec;

TEST_SUITE("params") {

TEST_CASE("layer spec rejects gaps and overlaps") {
  CHECK_THROWS_AS(LayerSpec({{"a", 0, 3, LayerKind::dense}, {"b", 4, 2, LayerKind::output_head}}), StructuralError);
  CHECK_THROWS_AS(LayerSpec({{"a", 0, 3, LayerKind::dense}, {"b", 2, 2, LayerKind::output_head}}), StructuralError);
  LayerSpec ok({{"a", 0, 3, LayerKind::dense}, {"b", 3, 2, LayerKind::output_head}});
  CHECK(ok.total() == 5);
  CHECK(ok.head_length() == 2);
}

TEST_CASE("compute_delta of identical vectors is zero") {
  RngStream rng(1, "t");
  auto spec = testutil::simple_spec(7, 3, 1);
  ParameterVector v(spec, random_vec(rng, spec->total()));
  auto d = compute_delta(v, v);
  for (double x : d.full.values()) CHECK(x == 0.0);
  CHECK(d.head == std::vector<double>(4, 0.0));
}

TEST_CASE("compute_delta hand example") {
  auto spec = testutil::simple_spec(2, 1, 0);
  auto d = compute_delta(ParameterVector(spec, {1, 2, 3}), ParameterVector(spec, {0, 1, 1}));
  CHECK(std::vector<double>(d.full.values().begin(), d.full.values().end()) == std::vector<double>{1, 1, 2});
  CHECK(d.head == std::vector<double>{2});
}

TEST_CASE("compute_delta matches elementwise loop on 50-dim vectors") {
  RngStream rng(2, "t");
  auto spec = testutil::simple_spec(40, 8, 2);
  const auto a = random_vec(rng, 50), b = random_vec(rng, 50);
  auto d = compute_delta(ParameterVector(spec, a), ParameterVector(spec, b), 3, 5);
  for (std::size_t i = 0; i < 50; ++i) CHECK(d.full[i] == a[i] - b[i]);
  for (std::size_t i = 0; i < 10; ++i) CHECK(d.head[i] == a[40 + i] - b[40 + i]);
  CHECK(d.round == 3);
  CHECK(d.client_id == 5);
}

TEST_CASE("compute_delta rejects mismatched layouts") {
  auto s1 = testutil::simple_spec(3, 1, 0);
  auto s2 = testutil::simple_spec(2, 2, 0);
  CHECK_THROWS_AS(compute_delta(ParameterVector(s1), ParameterVector(s2)), StructuralError);
}

TEST_CASE("select_head returns tail slice and keeps spec order") {
  auto spec = testutil::simple_spec(6, 4, 0);
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 0.0);
  CHECK(select_head(ParameterVector(spec, v)) == std::vector<double>{6, 7, 8, 9});

  auto two = testutil::simple_spec(3, 2, 1);
  CHECK(select_head(ParameterVector(two, {0, 1, 2, 10, 11, 12})) == std::vector<double>{10, 11, 12});

  // heads that are not contiguous are concatenated in registry order
  auto split = std::make_shared<LayerSpec>();
  split->add("h1", 2, LayerKind::output_head).add("mid", 1, LayerKind::dense).add("h2", 1, LayerKind::output_head);
  CHECK(select_head(ParameterVector(split, {5, 6, 7, 8})) == std::vector<double>{5, 6, 8});
}

TEST_CASE("select_head without a head layer is a configuration error") {
  auto spec = std::make_shared<LayerSpec>();
  spec->add("body", 4, LayerKind::dense);
  CHECK_THROWS_AS(select_head(ParameterVector(spec)), ConfigError);
}

TEST_CASE("six-step LSTM registry has a 2322-scalar head") {
  ForecasterConfig cfg;
  cfg.arch = Architecture::lstm;
  cfg.hidden_sizes = {256, 128};
  cfg.history_len = 36;
  cfg.horizon = 6;
  auto spec = make_layer_spec(cfg);
  CHECK(spec->head_length() == 2322);
  cfg.horizon = 12;
  CHECK(make_layer_spec(cfg)->head_length() == 4644);
}

TEST_CASE("scatter_head round trips") {
  RngStream rng(3, "t");
  auto spec = testutil::simple_spec(9, 5, 2);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterVector t(spec, random_vec(rng, spec->total()));
    const auto h = random_vec(rng, spec->head_length());
    CHECK(select_head(scatter_head(t, h)) == h);
    CHECK(scatter_head(t, select_head(t)) == t);
    const auto s = scatter_head(t, h);
    for (std::size_t i = 0; i < 9; ++i) CHECK(s[i] == t[i]);
  }
  ParameterVector zero(spec);
  auto ind = scatter_head(zero, std::vector<double>(7, 1.0));
  for (std::size_t i = 0; i < spec->total(); ++i) CHECK(ind[i] == (i >= 9 ? 1.0 : 0.0));
  CHECK_THROWS_AS(scatter_head(zero, std::vector<double>(6, 1.0)), StructuralError);
}

TEST_CASE("mean_deltas") {
  auto spec = testutil::simple_spec(1, 1, 0);
  SUBCASE("hand example") {
    std::vector<DeltaUpdate> ds{compute_delta(ParameterVector(spec, {2, 0}), ParameterVector(spec)),
                                compute_delta(ParameterVector(spec, {0, 2}), ParameterVector(spec))};
    auto m = mean_deltas(ds);
    CHECK(m[0] == 1.0);
    CHECK(m[1] == 1.0);
  }
  SUBCASE("identical deltas") {
    ParameterVector p(spec, {0.3, -1.7});
    std::vector<DeltaUpdate> ds(5, compute_delta(p, ParameterVector(spec)));
    auto m = mean_deltas(ds);
    CHECK(m[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(m[1] == doctest::Approx(-1.7).epsilon(1e-15));
  }
  SUBCASE("empty list") { CHECK_THROWS_AS(mean_deltas(std::vector<DeltaUpdate>{}), UsageError); }
}

TEST_CASE("mean_deltas matches averaging loop and is permutation invariant") {
  RngStream rng(4, "t");
  auto spec = testutil::simple_spec(25, 5, 0);
  std::vector<DeltaUpdate> ds;
  for (int i = 0; i < 8; ++i) ds.push_back(compute_delta(ParameterVector(spec, random_vec(rng, 30)), ParameterVector(spec)));
  const auto m = mean_deltas(ds);
  for (std::size_t c = 0; c < 30; ++c) {
    double acc = 0.0;
    for (const auto& d : ds) acc += d.full[c];
    CHECK(std::abs(m[c] - acc / 8.0) < 1e-12);
  }
  for (int trial = 0; trial < 10; ++trial) {
    auto shuffled = ds;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    CHECK(mean_deltas(shuffled) == m);  // bitwise
  }
}

TEST_CASE("weighted_mean_deltas with uniform weights equals the mean") {
  RngStream rng(5, "t");
  auto spec = testutil::simple_spec(6, 2, 0);
  std::vector<DeltaUpdate> ds;
  for (int i = 0; i < 4; ++i) ds.push_back(compute_delta(ParameterVector(spec, random_vec(rng, 8)), ParameterVector(spec)));
  const auto a = mean_deltas(ds);
  const auto b = weighted_mean_deltas(ds, std::vector<double>(4, 0.25));
  for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-15);
}

TEST_CASE("add_scaled") {
  auto spec = testutil::simple_spec(0, 1, 0);
  ParameterVector base(spec, {1.0});
  CHECK(add_scaled(base, std::vector<double>{2.0}, 0.5)[0] == 2.0);
  CHECK(add_scaled(base, std::vector<double>{123.0}, 0.0) == base);
  CHECK_THROWS_AS(add_scaled(base, std::vector<double>{1e308}, 1e10), NumericError);
  CHECK_THROWS_AS(add_scaled(base, std::vector<double>{1.0, 2.0}, 1.0), StructuralError);
}

TEST_CASE("delta then add recovers the private vector bit-exactly") {
  // global + small drift: the subtraction and re-addition are both exact
  RngStream rng(6, "t");
  auto spec = testutil::simple_spec(40, 10, 0);
  for (int trial = 0; trial < 50; ++trial) {
    ParameterVector global(spec, random_vec(rng, 50));
    auto priv_v = std::vector<double>(global.values().begin(), global.values().end());
    for (auto& x : priv_v) x += rng.normal(0.0, 1e-3) * std::abs(x);
    ParameterVector priv(spec, priv_v);
    CHECK(add_scaled(global, compute_delta(priv, global).full.values(), 1.0) == priv);
  }
}

TEST_CASE("consensus update with eta 1 is the mean of private models") {
  RngStream rng(7, "t");
  auto spec = testutil::simple_spec(20, 4, 0);
  ParameterVector global(spec, random_vec(rng, 24));
  std::vector<ParameterVector> priv;
  std::vector<DeltaUpdate> ds;
  for (int i = 0; i < 6; ++i) {
    priv.emplace_back(spec, random_vec(rng, 24));
    ds.push_back(compute_delta(priv.back(), global));
  }
  const auto updated = add_scaled(global, mean_deltas(ds).values(), 1.0);
  for (std::size_t c = 0; c < 24; ++c) {
    double acc = 0.0;
    for (const auto& p : priv) acc += p[c];
    CHECK(std::abs(updated[c] - acc / 6.0) < 1e-10);
  }
}

TEST_CASE("cosine_similarity") {
  const std::vector<double> a{1, 2, 3};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine_similarity(std::vector<double>{1e-13, 0}, std::vector<double>{1, 1}) == 0.0);

  RngStream rng(8, "t");
  const auto x = random_vec(rng, 100), y = random_vec(rng, 100);
  double dot = 0, nx = 0, ny = 0;
  for (int i = 0; i < 100; ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  CHECK(std::abs(cosine_similarity(x, y) - dot / (std::sqrt(nx) * std::sqrt(ny))) < 1e-12);
}

TEST_CASE("delta head fraction lies strictly between 0 and 1") {
  ForecasterConfig cfg;
  auto spec = make_layer_spec(cfg);
  CHECK(spec->head_fraction() > 0.0);
  CHECK(spec->head_fraction() < 1.0);
  ParameterVector z(spec);
  auto d = compute_delta(z, z);
  CHECK(static_cast<double>(d.head.size()) / static_cast<double>(d.full.size()) == spec->head_fraction());
}

}  // TEST_SUITE
