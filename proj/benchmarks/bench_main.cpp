#include <benchmark/benchmark.h>

#include <random>

#include "fixtures.hpp"
#include "intentr/evaluator.hpp"
#include "intentr/model.hpp"
#include "intentr/transform.hpp"

using namespace intentr;

namespace {

struct Setup {
  ModelConfig config;
  ModelParams params;
  Batch batch;
};

Setup make_setup(CellType cell, int layers, int hidden, std::size_t batch_size) {
  Setup s;
  s.config.cell = cell;
  s.config.num_layers = layers;
  s.config.hidden_size = hidden;
  s.config.fields = fixture::widths_summing_to(140);
  const auto rows = fixture::small_rows();
  s.params = init_params(s.config, rows, 1);
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < batch_size; ++i) lengths.push_back(1 + i % 9);
  s.batch = make_batch(fixture::random_sequences(lengths, rows, 2));
  return s;
}

void BM_Forward(benchmark::State& state) {
  const auto s = make_setup(static_cast<CellType>(state.range(0)), 3, static_cast<int>(state.range(1)), 256);
  for (auto _ : state) benchmark::DoNotOptimize(forward(s.config, s.params, s.batch));
  state.SetItemsProcessed(state.iterations() * 256);
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto s = make_setup(static_cast<CellType>(state.range(0)), 3, static_cast<int>(state.range(1)), 256);
  for (auto _ : state) {
    ForwardRecord rec = forward_record(s.config, s.params, s.batch);
    benchmark::DoNotOptimize(backward(rec, s.config, s.params));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = u(rng) < 0.055;
    scores[i] = std::round(u(rng) * 1000.0) / 1000.0 + 0.1 * labels[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_Unroll(benchmark::State& state) {
  std::mt19937_64 rng(4);
  Session s;
  s.id = 1;
  EpochSeconds t = 1396310400;
  for (int i = 0; i < state.range(0); ++i) {
    s.events.push_back({1, t, static_cast<ItemId>(i), "1"});
    t += static_cast<EpochSeconds>(rng() % 900);
  }
  for (auto _ : state) benchmark::DoNotOptimize(unroll(s, 150));
}

}  // namespace

BENCHMARK(BM_Forward)->Args({0, 256})->Args({1, 256})->Args({2, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardBackward)->Args({0, 256})->Args({1, 256})->Args({2, 256})->Args({2, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000)->Arg(1000000);
BENCHMARK(BM_Unroll)->Arg(10)->Arg(200);
BENCHMARK_MAIN();
