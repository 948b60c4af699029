// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels, plus a whole federated round at 1 and N threads.
#include <benchmark/benchmark.h>

#include <vector>

#include "fedgame/experiment.hpp"
#include "fedgame/kernels.hpp"
#include "fedgame/rng.hpp"

namespace {

using namespace fedgame;

std::vector<std::vector<double>> random_rows(std::size_t rows, std::size_t cols) {
  RngStream rng(7, "bench");
  std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
  for (auto& r : out)
    for (auto& v : r) v = rng.normal();
  return out;
}

template <bool Parallel>
void BM_ColumnMean(benchmark::State& state) {
  const auto rows = random_rows(8, static_cast<std::size_t>(state.range(0)));
  std::vector<std::span<const double>> views(rows.begin(), rows.end());
  std::vector<double> out(rows[0].size());
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::column_mean(views, out);
    else kernels::serial::column_mean(views, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 8);
}

template <bool Parallel>
void BM_Matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = random_rows(1, n * n)[0];
  const auto x = random_rows(1, n)[0];
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::matvec(w, x, {}, out);
    else kernels::serial::matvec(w, x, {}, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <bool Parallel>
void BM_Axpy(benchmark::State& state) {
  const auto x = random_rows(1, static_cast<std::size_t>(state.range(0)))[0];
  auto y = x;
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::axpy(1e-9, x, y);
    else kernels::serial::axpy(1e-9, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Round(benchmark::State& state) {
  ExperimentConfig config;
  config.data.n_clients = 8;
  config.data.length = 400;
  config.protocol.rounds = 1;
  const auto data = prepare_data(config);
  HyperParams hyper = config.protocol;
  hyper.clients = data.clients.size();
  const RoundState init = init_round_state(config.forecaster, config.aggregator, hyper, config.seed);
  const ExecutionOptions exec{static_cast<int>(state.range(0)), false};
  for (auto _ : state) {
    auto res = run_round(init, hyper, config.forecaster, config.aggregator, data.clients, exec);
    benchmark::DoNotOptimize(res.first.global_params.values().data());
  }
}

BENCHMARK(BM_ColumnMean<false>)->Name("column_mean/serial")->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_ColumnMean<true>)->Name("column_mean/parallel")->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Matvec<false>)->Name("matvec/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Matvec<true>)->Name("matvec/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Axpy<false>)->Name("axpy/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Axpy<true>)->Name("axpy/parallel")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Round)->Name("run_round/threads")->Arg(1)->Arg(kernels::max_threads())->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
