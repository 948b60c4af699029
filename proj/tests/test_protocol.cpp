// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "fedgame/errors.hpp"
#include "fedgame/experiment.hpp"
#include "fedgame/protocol.hpp"
#include "helpers.hpp"

using namespace fedgame;

namespace {

struct Setup {
  ForecasterConfig fcfg;
  AggregatorConfig acfg;
  HyperParams hyper;
  std::vector<ClientData> data;
};

Setup make_setup(std::size_t n_clients, AggregatorKind kind, std::uint64_t seed = 3) {
  Setup s;
  s.fcfg.history_len = 12;
  s.fcfg.horizon = 3;
  s.fcfg.hidden_sizes = {8};
  s.fcfg.local_lr = 0.02;
  s.acfg.embed_dim = 8;
  s.hyper.kind = kind;
  s.hyper.clients = n_clients;
  s.hyper.gamma = 0.3;
  for (const auto& shard : synth_generate(n_clients, std::min<std::size_t>(2, n_clients), 160, 0.3, seed)) {
    auto split = make_windows(shard, s.fcfg.history_len, s.fcfg.horizon);
    s.data.push_back({shard.client_id, split.train, split.val, split.test, shard.cluster_label});
  }
  return s;
}

RoundState advance(const Setup& s, RoundState state, std::size_t rounds, const ExecutionOptions& exec = {}) {
  for (std::size_t r = 0; r < rounds; ++r) state = run_round(state, s.hyper, s.fcfg, s.acfg, s.data, exec).first;
  return state;
}

bool same_state(const RoundState& a, const RoundState& b) {
  if (a.round != b.round || !(a.global_params == b.global_params)) return false;
  for (std::size_t i = 0; i < a.client_models.size(); ++i) {
    if (!(a.client_models[i].params == b.client_models[i].params)) return false;
    if (!(a.client_rngs[i] == b.client_rngs[i])) return false;
  }
  if (a.aggregator.has_value() != b.aggregator.has_value()) return false;
  if (a.aggregator) {
    const auto pa = a.aggregator->parameters(), pb = b.aggregator->parameters();
    if (!std::equal(pa.begin(), pa.end(), pb.begin(), pb.end())) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("kinds parse and print") {
  for (auto k : {AggregatorKind::game, AggregatorKind::mean, AggregatorKind::single_attention, AggregatorKind::fedavg,
                 AggregatorKind::fedprox_only, AggregatorKind::local_only}) {
    CHECK(parse_aggregator_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_aggregator_kind("gossip"), ConfigError);
  HyperParams h;
  h.eta = -1;
  h.clients = 0;
  CHECK(h.problems().size() == 2);
}

TEST_CASE("fedavg trajectory matches a textbook FedAvg loop") {
  auto s = make_setup(4, AggregatorKind::fedavg);
  s.hyper.eta = 1.0;
  const std::uint64_t seed = 17;
  RoundState state = init_round_state(s.fcfg, s.acfg, s.hyper, seed);

  // reference: every round each client trains from the global model, the server averages
  ForecasterConfig plain = s.fcfg;
  plain.prox_mu = 0.0;
  ParameterVector ref = state.global_params;
  std::vector<RngStream> rngs;
  for (std::size_t i = 0; i < 4; ++i) rngs.emplace_back(seed, "client:" + std::to_string(i));

  for (int r = 0; r < 10; ++r) {
    std::vector<ParameterVector> locals;
    for (std::size_t i = 0; i < 4; ++i) {
      locals.push_back(local_train(ForecasterModel{ref, s.fcfg}, s.data[i].train, ref, plain, rngs[i]).model.params);
    }
    std::vector<double> avg(ref.size(), 0.0);
    for (const auto& l : locals)
      for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += l[c];
    for (auto& v : avg) v /= 4.0;
    ref = ParameterVector(ref.spec_ptr(), avg);

    state = run_round(state, s.hyper, s.fcfg, s.acfg, s.data).first;
    double worst = 0.0;
    for (std::size_t c = 0; c < ref.size(); ++c) worst = std::max(worst, std::abs(ref[c] - state.global_params[c]));
    INFO("round " << r);
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("round bookkeeping: tau, pending deltas against the new global, byte counts") {
  auto s = make_setup(3, AggregatorKind::game);
  auto state = init_round_state(s.fcfg, s.acfg, s.hyper, 5);
  for (int r = 0; r < 3; ++r) {
    auto [next, rep] = run_round(state, s.hyper, s.fcfg, s.acfg, s.data);
    CHECK(next.round == state.round + 1);
    CHECK(rep.round == state.round);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& d = next.pending_deltas[i];
      REQUIRE(d.has_value());
      CHECK(d->round == next.round);
      CHECK(d->full == compute_delta(next.client_models[i].params, next.global_params).full);
    }
    const auto& spec = next.global_params.spec();
    const std::uint64_t n = 3, theta = spec.total(), head = spec.head_length();
    CHECK(rep.upstream_bytes == n * theta * 8);
    CHECK(rep.downstream_bytes == (n * theta + n * head) * 8);
    REQUIRE(rep.attention.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(rep.attention[i][i] == 0.0);
      double sum = 0.0;
      for (double w : rep.attention[i]) sum += w;
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    CHECK(rep.gate_mix.size() == 3);
    state = std::move(next);
  }
}

TEST_CASE("a failed round leaves the state untouched and names the round") {
  auto s = make_setup(3, AggregatorKind::game);
  auto state = advance(s, init_round_state(s.fcfg, s.acfg, s.hyper, 6), 1);
  const RoundState before = state;
  auto bad = s.data;
  bad[2].train.inputs[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    run_round(state, s.hyper, s.fcfg, s.acfg, bad);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("round 1") != std::string::npos);
  }
  CHECK(same_state(state, before));
}

TEST_CASE("gamma 0: the personalized stream has no effect") {
  auto a = make_setup(4, AggregatorKind::game);
  a.hyper.gamma = 0.0;
  auto b = a;
  b.hyper.kind = AggregatorKind::mean;
  const auto sa = advance(a, init_round_state(a.fcfg, a.acfg, a.hyper, 8), 3);
  const auto sb = advance(b, init_round_state(b.fcfg, b.acfg, b.hyper, 8), 3);
  CHECK(sa.global_params == sb.global_params);
  for (std::size_t i = 0; i < 4; ++i) CHECK(sa.client_models[i].params == sb.client_models[i].params);
}

TEST_CASE("one client: consensus takes the whole delta") {
  auto s = make_setup(1, AggregatorKind::game);
  auto state = init_round_state(s.fcfg, s.acfg, s.hyper, 9);
  RngStream rng(9, "client:0");
  const auto trained = local_train(state.client_models[0], s.data[0].train, state.global_params, s.fcfg, rng);
  auto [next, rep] = run_round(state, s.hyper, s.fcfg, s.acfg, s.data);
  for (std::size_t c = 0; c < next.global_params.size(); ++c) {
    CHECK(std::abs(next.global_params[c] - trained.model.params[c]) < 1e-12);
  }
  CHECK(rep.attention.size() == 1);
}

TEST_CASE("consensus update does not depend on the personalized aggregator") {
  auto s = make_setup(4, AggregatorKind::game);
  const auto start = advance(s, init_round_state(s.fcfg, s.acfg, s.hyper, 10), 2);
  const auto a = run_round(start, s.hyper, s.fcfg, s.acfg, s.data).first;
  for (auto kind : {AggregatorKind::mean, AggregatorKind::single_attention}) {
    auto other = s;
    other.hyper.kind = kind;
    // same models and deltas, aggregator state of the other kind
    auto from = init_round_state(other.fcfg, other.acfg, other.hyper, 10);
    from.round = start.round;
    from.global_params = start.global_params;
    from.client_models = start.client_models;
    from.client_rngs = start.client_rngs;
    from.pending_deltas = start.pending_deltas;
    const auto b = run_round(from, other.hyper, other.fcfg, other.acfg, other.data).first;
    CHECK(a.global_params == b.global_params);
  }
}

TEST_CASE("results do not depend on client scheduling or thread count") {
  auto s = make_setup(5, AggregatorKind::game);
  const auto init = init_round_state(s.fcfg, s.acfg, s.hyper, 11);
  const auto a = advance(s, init, 3, {1, false});
  const auto b = advance(s, init, 3, {4, true});
  CHECK(same_state(a, b));
}

TEST_CASE("local_only and fedavg variants") {
  auto s = make_setup(3, AggregatorKind::local_only);
  auto state = init_round_state(s.fcfg, s.acfg, s.hyper, 12);
  const auto global0 = state.global_params;
  auto [next, rep] = run_round(state, s.hyper, s.fcfg, s.acfg, s.data);
  CHECK(next.global_params == global0);
  CHECK(rep.upstream_bytes == 0);
  CHECK(rep.attention.empty());

  auto f = make_setup(3, AggregatorKind::fedprox_only);
  auto fs = run_round(init_round_state(f.fcfg, f.acfg, f.hyper, 12), f.hyper, f.fcfg, f.acfg, f.data).first;
  const auto models = evaluation_models(fs, AggregatorKind::fedprox_only);
  for (const auto& m : models) CHECK(m.params == fs.global_params);
}

TEST_CASE("communication cost closed forms") {
  const auto six = comm_cost(8, 996013, 2322, AggregatorKind::game);
  CHECK(six.upstream == 8ull * 996013);
  CHECK(six.downstream == 8ull * 996013 + 8ull * 2322);
  CHECK(six.ratio - 1.0 == doctest::Approx(2322.0 / (2.0 * 996013.0)).epsilon(1e-12));
  const auto fedavg = comm_cost(8, 996013, 2322, AggregatorKind::fedavg);
  CHECK(fedavg.ratio == 1.0);
  CHECK(comm_cost(8, 996013, 2322, AggregatorKind::local_only).ratio == 0.0);

  ForecasterConfig cfg;
  const auto spec = make_layer_spec(cfg);
  const auto c = comm_cost(4, *spec, AggregatorKind::mean);
  CHECK(c.head_fraction == spec->head_fraction());
}

TEST_CASE("attention diagnostics") {
  RoundReport uniform;
  uniform.attention = {{0, 0.5, 0.5}, {0.5, 0, 0.5}, {0.5, 0.5, 0}};
  RoundReport onehot;
  onehot.round = 1;
  onehot.attention = {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
  const std::vector<RoundReport> reps{uniform, onehot};
  const std::vector<int> labels{0, 0, 1};
  const auto d = attention_diagnostics(reps, labels);
  REQUIRE(d.size() == 2);
  CHECK(d[0].mean_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(d[0].weight_variance == 0.0);
  CHECK(d[1].mean_entropy == 0.0);
  CHECK(*d[0].intra_cluster_mass == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(*d[0].uniform_baseline == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // rows 0 -> 1 (same cluster), 1 -> 2 (other), 2 -> 0 (other)
  CHECK(*d[1].intra_cluster_mass == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(attention_diagnostics(reps)[0].intra_cluster_mass.has_value());
}

TEST_CASE("experiments: zero rounds and determinism") {
  ExperimentConfig cfg;
  cfg.data.n_clients = 4;
  cfg.data.length = 200;
  cfg.forecaster.history_len = 12;
  cfg.forecaster.horizon = 3;
  cfg.forecaster.hidden_sizes = {8};
  cfg.aggregator.embed_dim = 8;
  cfg.protocol.rounds = 0;
  const auto zero = run_experiment(cfg);
  CHECK(zero.rounds.empty());
  CHECK(zero.final_state.round == 0);
  CHECK(zero.eval.clients.size() == 4);

  cfg.protocol.rounds = 3;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg, {3, true});
  CHECK(a.eval.qs == b.eval.qs);
  CHECK(a.rounds.size() == 3);
  CHECK(same_state(a.final_state, b.final_state));

  cfg.aggregator.top_k = 9;
  CHECK_THROWS_AS(run_experiment(cfg), ConfigValidationError);
}

}  // TEST_SUITE
