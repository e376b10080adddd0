#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "wildharvest/evaluation.hpp"
#include "wildharvest/pairing.hpp"
#include "wildharvest/retrieval.hpp"
#include "wildharvest/rng.hpp"
#include "wildharvest/scheduler.hpp"

using namespace wildharvest;

namespace {

double uniform(Rng& rng) { return static_cast<double>(rng.below(1u << 30)) / static_cast<double>(1u << 30); }

std::vector<double> random_vec(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = uniform(rng) * 2.0 - 1.0;
  return v;
}

void BM_Auc(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> pos, neg;
  for (int i = 0; i < state.range(0); ++i) (i % 2 ? pos : neg).push_back(uniform(rng));
  for (auto _ : state) benchmark::DoNotOptimize(auc(pos, neg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_Cosine(benchmark::State& state) {
  Rng rng(2);
  const auto a = random_vec(rng, static_cast<int>(state.range(0)));
  const auto b = random_vec(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity(a, b));
}
BENCHMARK(BM_Cosine)->Arg(16)->Arg(768);

void BM_TopK(benchmark::State& state) {
  Rng rng(3);
  EmbeddingMap reals;
  for (int i = 0; i < state.range(0); ++i) reals["r" + std::to_string(i)] = random_vec(rng, 512);
  const RealPoolIndex idx(reals);
  const auto fake = random_vec(rng, 512);
  for (auto _ : state) benchmark::DoNotOptimize(topk_matches(fake, idx, 500));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(20000);

void BM_AssignPairs(benchmark::State& state) {
  Rng rng(4);
  EmbeddingMap reals, fakes;
  std::vector<std::string> ids;
  for (int i = 0; i < 5000; ++i) reals["r" + std::to_string(i)] = random_vec(rng, 64);
  for (int i = 0; i < state.range(0); ++i) {
    ids.push_back("f" + std::to_string(i));
    fakes[ids.back()] = random_vec(rng, 64);
  }
  const RealPoolIndex idx(reals);
  for (auto _ : state) benchmark::DoNotOptimize(assign_pairs(ids, fakes, idx, PairingConfig{}));
}
// Similarity work runs on worker threads, so only wall time is meaningful.
BENCHMARK(BM_AssignPairs)->Arg(100)->Arg(1000)->UseRealTime();

void BM_Replay(benchmark::State& state) {
  std::vector<DatasetEntry> pool;
  for (int i = 0; i < state.range(0); ++i) {
    DatasetEntry e;
    e.image_id = std::to_string(1000000 + i);
    e.label = i % 3 == 0 ? kLabelReal : kLabelGenerated;
    e.origin = e.label == kLabelReal ? Origin::real_pool : Origin::itw;
    e.round_introduced = 1;
    pool.push_back(e);
  }
  for (auto _ : state) benchmark::DoNotOptimize(sample_replay(pool, 0.05, 7, 2));
}
BENCHMARK(BM_Replay)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
