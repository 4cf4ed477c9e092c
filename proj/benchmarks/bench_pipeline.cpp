#include <benchmark/benchmark.h>

#include "commlat/attribution.hpp"
#include "commlat/causality.hpp"
#include "commlat/clustering.hpp"
#include "commlat/correlation.hpp"
#include "commlat/criteria.hpp"
#include "commlat/pipeline.hpp"
#include "commlat/synth.hpp"

using namespace commlat;

namespace {

ScenarioSpec spec_for(std::size_t processes) {
  ScenarioSpec s;
  s.seed = 7;
  s.processes = processes;
  s.region_sizes.assign(processes / 16, 16);
  s.nodes = processes / 8;
  s.cores_per_node = 8;
  return s;
}

Trace paired(const Scenario& sc) {
  Trace t;
  t.events = sc.events;
  for (const auto& e : t.events) {
    t.ranks.insert(e.source);
    t.ranks.insert(e.destination);
  }
  attach_node_map(t, sc.node_map);
  return pair_messages(std::move(t));
}

const Trace& trace_for(std::size_t processes) {
  static std::map<std::size_t, Trace> cache;
  auto it = cache.find(processes);
  if (it == cache.end()) it = cache.emplace(processes, paired(generate(spec_for(processes)))).first;
  return it->second;
}

}  // namespace

static void BM_Generate(benchmark::State& state) {
  const auto spec = spec_for(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(generate(spec));
}
BENCHMARK(BM_Generate)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Pairing(benchmark::State& state) {
  const auto sc = generate(spec_for(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(paired(sc));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * sc.events.size()));
}
BENCHMARK(BM_Pairing)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Criteria(benchmark::State& state) {
  const auto& t = trace_for(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_criteria(t));
}
BENCHMARK(BM_Criteria)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_DistanceMatrix(benchmark::State& state) {
  const auto g = CommGraph::from_trace(trace_for(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(distance_matrix(g));
}
BENCHMARK(BM_DistanceMatrix)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_Cluster(benchmark::State& state) {
  const auto g = CommGraph::from_trace(trace_for(static_cast<std::size_t>(state.range(0))));
  const auto d = distance_matrix(g);
  for (auto _ : state) benchmark::DoNotOptimize(cluster(d, {8.0, &g}));
}
BENCHMARK(BM_Cluster)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_WindowDag(benchmark::State& state) {
  const auto& t = trace_for(64);
  const auto lat = score_messages(t, build_criteria(t));
  const Micros span = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(analyze_window(t, lat, 0, span));
}
BENCHMARK(BM_WindowDag)->Arg(10000)->Arg(40000)->Unit(benchmark::kMillisecond);

static void BM_Remap(benchmark::State& state) {
  auto spec = spec_for(static_cast<std::size_t>(state.range(0)));
  spec.placement = Placement::Bad;
  const auto sc = generate(spec);
  const auto g = CommGraph::from_trace(paired(sc));
  for (auto _ : state) benchmark::DoNotOptimize(recommend_remap(g, sc.node_map, 8));
}
BENCHMARK(BM_Remap)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Attribution(benchmark::State& state) {
  const auto config = config_from_json({{"clustering", {{"threshold", 8.0}}}, {"attribution", {{"durations", 8}}}});
  const Analysis a(trace_for(64), config);
  for (auto _ : state) benchmark::DoNotOptimize(a.attribution(0, 0, 80000));
}
BENCHMARK(BM_Attribution)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
