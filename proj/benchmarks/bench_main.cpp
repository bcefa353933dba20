#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "connkit/extraction.hpp"
#include "connkit/graph_io.hpp"
#include "connkit/pose.hpp"
#include "connkit/sim.hpp"
#include "connkit/strategy.hpp"

using namespace connkit;

namespace {

AssemblyGraph chair() { return load_graph_file(std::filesystem::path(CONNKIT_DATA_DIR) / "graphs/chair.json"); }

MatchedPairs random_pairs(std::mt19937_64& rng, int k) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatchedPairs m;
  for (int i = 0; i < k; ++i) {
    FeaturePair p;
    p.a.position = Vec3(n(rng), n(rng), n(rng)) * 0.1;
    p.a.normal = Vec3(n(rng), n(rng), n(rng)).normalized();
    p.b.position = Vec3(n(rng), n(rng), n(rng)) * 0.1;
    p.b.normal = Vec3(n(rng), n(rng), n(rng)).normalized();
    m.pairs.push_back(p);
  }
  return m;
}

void BM_SolveAlignment(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const MatchedPairs m = random_pairs(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_alignment(m));
}
BENCHMARK(BM_SolveAlignment)->Arg(1)->Arg(3)->Arg(6)->Arg(24);

void BM_SolveGraphPoses(benchmark::State& state) {
  const AssemblyGraph g = chair();
  for (auto _ : state) benchmark::DoNotOptimize(solve_graph_poses(g));
}
BENCHMARK(BM_SolveGraphPoses);

void BM_SimTrial(benchmark::State& state) {
  const AssemblyGraph g = chair();
  const auto poses = solve_graph_poses(g).parts;
  const auto ops = plan_sequence(g);
  const auto cfg = strategy::default_config(static_cast<strategy::Kind>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    sim::World w = sim::init_trial(ops.back(), g, poses, ++seed);
    benchmark::DoNotOptimize(strategy::run_strategy(w, cfg, seed));
  }
}
BENCHMARK(BM_SimTrial)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_ScoreDataset(benchmark::State& state) {
  const ExtractionDataset ds = derive_dataset(chair());
  std::vector<StepPrediction> preds;
  for (const auto& s : ds.steps) preds.push_back(random_baseline(s, 7));
  for (auto _ : state) benchmark::DoNotOptimize(score_dataset(preds, ds));
}
BENCHMARK(BM_ScoreDataset);

void BM_RandomBaseline(benchmark::State& state) {
  const ExtractionDataset ds = derive_dataset(chair());
  std::uint64_t seed = 0;
  for (auto _ : state)
    for (const auto& s : ds.steps) benchmark::DoNotOptimize(random_baseline(s, ++seed));
}
BENCHMARK(BM_RandomBaseline);

}  // namespace
BENCHMARK_MAIN();
