#include "goose/experiment.hpp"
#include "goose/theory.hpp"

#include <benchmark/benchmark.h>

using namespace goose;

namespace {

const ShapeTree& mc_tree() {
  static const ShapeTree t = independent_chain_tree({5, {3, 3, 2, 2, 1}, 6, 0});
  return t;
}

void BM_MonteCarloSerial(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::monte_carlo_yield({0.21, 0.033}, mc_tree(), state.range(0), 1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MonteCarloOpenMP(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(monte_carlo_yield({0.21, 0.033}, mc_tree(), state.range(0), 1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_DominanceSerial(benchmark::State& state) {
  const auto grid = default_dominance_grid();
  for (auto _ : state) benchmark::DoNotOptimize(reference::dominance_scan(grid, 6));
}

void BM_DominanceOpenMP(benchmark::State& state) {
  const auto grid = default_dominance_grid();
  for (auto _ : state) benchmark::DoNotOptimize(dominance_scan(grid, 6));
}

struct CorpusFixture {
  CorpusSpec spec;
  SyntheticModel model;
  std::vector<TokenSequence> prompts;

  CorpusFixture()
      : spec([] {
          CorpusSpec c;
          c.model = {SyntheticKind::TemplateRepeater, 7, 256, 0.9};
          c.prompts = 16;
          c.max_tokens = 256;
          return c;
        }()),
        model(spec.model),
        prompts(generate_prompts(spec, model)) {}
};

const CorpusFixture& corpus() {
  static const CorpusFixture f;
  return f;
}

void BM_CorpusSerial(benchmark::State& state) {
  const auto& f = corpus();
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::run_corpus({EngineKind::Goose, 3}, f.model, f.prompts, f.spec.max_tokens, {}));
  }
}

void BM_CorpusOpenMP(benchmark::State& state) {
  const auto& f = corpus();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_corpus({EngineKind::Goose, 3}, f.model, f.prompts, f.spec.max_tokens, {}));
  }
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloOpenMP)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DominanceSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DominanceOpenMP)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorpusSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorpusOpenMP)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
