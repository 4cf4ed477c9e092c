// Acceptance report: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "commlat/attribution.hpp"
#include "commlat/causality.hpp"
#include "commlat/clustering.hpp"
#include "commlat/criteria.hpp"
#include "commlat/pipeline.hpp"
#include "commlat/service.hpp"
#include "commlat/synth.hpp"
#include "commlat/temporal.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace commlat;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kTable1Seconds = 1.0;
constexpr double kLinkageTol = 1e-9;
constexpr double kTriangleTol = 1e-9;
constexpr double kPartitionTol = 1e-6;
constexpr int kWalkLength = 30;
constexpr double kExactTol = 1e-12;
constexpr double kRecoveryRate = 0.90;
constexpr double kRecoverySeconds = 300.0;
constexpr int kRecoveryScenarios = 50;
constexpr double kBoundaryBuckets = 1.0;

const std::string kFixtures = COMMLAT_FIXTURES;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome table1_clustering() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = parse_distance_csv(read_file(kFixtures + "/table1.csv"));
  const auto m = cluster(d, {2.0});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::vector<std::vector<Rank>> regions = {{1, 2, 3, 4}, {5, 6, 7, 8}};
  struct Step {
    std::vector<Rank> a, b;
    double linkage;
  };
  const std::vector<Step> expected = {
      {{7}, {8}, 1.15},
      {{1}, {2}, 1.18},
      {{5}, {6}, 1.22},
      {{1, 2}, {3}, (1.44 + 1.30) / 2},
      {{1, 2, 3}, {4}, (1.33 + 2.58 + 1.45) / 3},
      {{5, 6}, {7, 8}, (1.45 + 2.43 + 1.32 + 2.30) / 4},
  };
  bool seq = m.dendrogram.size() == expected.size();
  for (std::size_t i = 0; seq && i < expected.size(); ++i) {
    auto a = m.dendrogram[i].a, b = m.dendrogram[i].b;
    if (a.front() > b.front()) std::swap(a, b);
    seq = a == expected[i].a && b == expected[i].b &&
          std::abs(m.dendrogram[i].linkage - expected[i].linkage) <= kLinkageTol;
  }
  const bool stop = m.stop_reason == StopReason::Threshold && m.stop_linkage >= 2.0;
  const bool ok = m.regions == regions && seq && stop && secs < kTable1Seconds;
  return {ok, fmt("regions=%zu merges=%zu sequence=%s stop@%.4f time=%.4fs", m.regions.size(),
                  m.dendrogram.size(), seq ? "match" : "MISMATCH", m.stop_linkage, secs)};
}

Outcome metric_axioms() {
  std::mt19937_64 rng(20240601);
  std::size_t bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 19);
    const auto d = distance_matrix(oracle::random_comm_graph(rng, n));
    if (!oracle::check_metric(d.values, kTriangleTol).ok()) ++bad;
  }
  const auto t1 = parse_distance_csv(read_file(kFixtures + "/table1.csv"));
  const auto r = oracle::check_metric(t1.values, kTriangleTol);
  return {bad == 0 && r.ok(),
          fmt("random graphs violating=%zu/200; table1 zero_diag=%d symmetric=%d nonneg=%d "
              "triangle_violations=%zu worst_excess=%.2f",
              bad, r.zero_diagonal, r.symmetric, r.non_negative, r.triangle_violations, r.worst_excess)};
}

Outcome partition_oracle() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  std::size_t decomposition_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 5);
    const auto k = oracle::random_killed_digraph(rng, n, 1.0);
    const auto z = partition_matrix(k);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q < n; ++q) {
        worst = std::max(worst, std::abs(z(p, q) - oracle::walk_sum_partition(k, p, q, kWalkLength)));
        for (std::size_t m = 0; m < n; ++m) {
          if (z(p, q) < z(p, m) * z(m, q) - kExactTol) ++decomposition_bad;
        }
      }
    }
  }
  return {worst <= kPartitionTol && decomposition_bad == 0,
          fmt("max |Z - walk sum| = %.3e, decomposition violations=%zu", worst, decomposition_bad)};
}

Outcome causality_oracle() {
  std::mt19937_64 rng(7);
  std::size_t order_mismatch = 0, cyclic = 0, dag_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int ranks = 2 + trial % 7;
    const int messages = 5 + trial % 46;  // up to 100 events
    const auto t = testing::make_trace(testing::random_events(rng, ranks, messages, 400));
    const auto w = full_window(t);
    const auto c = vector_clocks(t, w);
    const auto reach = oracle::causal_closure(t, w);
    for (std::size_t i = 0; i < w.events.size(); ++i) {
      for (std::size_t j = 0; j < w.events.size(); ++j) {
        if (i == j) continue;
        const bool before = happened_before(c.clocks[i], c.clocks[j]) == CausalOrder::Before;
        if (before != static_cast<bool>(reach[i][j])) ++order_mismatch;
      }
    }
    const auto order = logical_order(t, w, c);
    const auto dag = build_dag(t, order);
    if (!dag.is_acyclic()) ++cyclic;
    const auto replay = oracle::replay_dag(t, order);
    std::set<std::tuple<int, int, std::size_t>> edges;
    for (const auto& e : dag.edges) edges.insert({e.from, e.to, e.message});
    if (edges != replay.edges || dag.nodes.size() != replay.node_pid.size()) ++dag_mismatch;
  }
  return {order_mismatch == 0 && cyclic == 0 && dag_mismatch == 0,
          fmt("pair mismatches=%zu cyclic=%zu dag mismatches=%zu over 100 traces", order_mismatch, cyclic,
              dag_mismatch)};
}

Outcome fig8() {
  const auto t = load_trace(kFixtures + "/fig8.csv", kFixtures + "/fig8-nodemap.csv");
  const auto w = full_window(t);
  const auto c = vector_clocks(t, w);
  auto at = [&](Micros ts) {
    for (std::size_t k = 0; k < w.events.size(); ++k) {
      if (t.events[w.events[k]].timestamp == ts) return c.clocks[k];
    }
    throw InternalError("missing event");
  };
  const VectorClock a = at(10), b = at(20), cc = at(50), d = at(60);
  const bool ok = a.vec == std::vector<std::int64_t>{0, 0, 1} && b.vec == std::vector<std::int64_t>{0, 1, 1} &&
                  happened_before(a, b) == CausalOrder::Before && cc.vec[1] == 3 && cc.vec[2] == 2 &&
                  d.vec[1] == 4 && d.vec[2] == 1 && happened_before(cc, d) == CausalOrder::Concurrent;
  auto show = [](const VectorClock& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.vec.size(); ++i) s += (i ? "," : "") + std::to_string(v.vec[i]);
    return s + ")";
  };
  return {ok, "Va=" + show(a) + " Vb=" + show(b) + " Vc=" + show(cc) + " Vd=" + show(d) + " c,d " +
                  std::string(to_string(happened_before(cc, d)))};
}

Outcome criteria_properties() {
  std::mt19937_64 rng(8);
  std::size_t median_bad = 0, scale_bad = 0, rl_bad = 0, buckets = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::map<Rank, NodeId> nodes;
    for (Rank r = 0; r < 8; ++r) nodes[r] = r / 4;
    auto events = testing::random_events(rng, 8, 400, 20000);
    const auto t = testing::make_trace(events, nodes);
    const auto crit = build_criteria(t);
    const auto scored = score_messages(t, crit);
    std::map<std::pair<int, std::size_t>, std::pair<std::size_t, std::size_t>> per_bucket;
    for (const auto& ml : scored) {
      const auto& m = t.messages[ml.message];
      if (m.skewed) continue;
      auto& cell = per_bucket[{static_cast<int>(m.locality), crit.bucket_of(m.size)}];
      cell.first += ml.ratio <= 1.0 ? 1 : 0;
      cell.second += 1;
    }
    for (const auto& [key, cell] : per_bucket) {
      ++buckets;
      if (2 * cell.first < cell.second) ++median_bad;
    }
    for (auto& e : events) e.timestamp *= 3;
    const auto t3 = testing::make_trace(events, nodes);
    const auto s3 = score_messages(t3, build_criteria(t3));
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (std::abs(scored[i].ratio - s3[i].ratio) > kExactTol) ++scale_bad;
    }
    double sum = 0.0;
    for (const auto& ml : scored) sum += ml.ratio;
    if (std::abs(region_latency(scored).rl - sum / static_cast<double>(scored.size())) > kExactTol) ++rl_bad;
  }
  return {median_bad == 0 && scale_bad == 0 && rl_bad == 0,
          fmt("buckets below half=%zu/%zu, scale mismatches=%zu, RL mismatches=%zu", median_bad, buckets,
              scale_bad, rl_bad)};
}

Outcome load_balance_check() {
  std::mt19937_64 rng(9);
  double worst = 0.0, worst_mean = 0.0;
  bool balanced_zero = true;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    std::vector<Rank> ranks(n);
    std::iota(ranks.begin(), ranks.end(), 0);
    std::vector<double> mc(n);
    for (auto& v : mc) v = static_cast<double>(rng() % 1000);
    const auto lb = load_balance(ranks, mc);
    const double avg = std::accumulate(mc.begin(), mc.end(), 0.0) / static_cast<double>(n);
    double ad = 0.0;
    for (double v : mc) ad += std::abs(v - avg);
    ad /= static_cast<double>(n);
    worst = std::max(worst, std::abs(lb.ad - ad));
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(lb.lb[i] - (ad == 0.0 ? 0.0 : std::abs(mc[i] - avg) / ad)));
    }
    if (lb.ad > 0.0) worst_mean = std::max(worst_mean, std::abs(lb.mean_lb() - 1.0));
    std::vector<double> flat(n, static_cast<double>(rng() % 50));
    for (double v : load_balance(ranks, flat).lb) balanced_zero = balanced_zero && v == 0.0;
  }
  return {worst <= kExactTol && worst_mean <= kExactTol && balanced_zero,
          fmt("max formula error=%.2e, max |mean LB - 1|=%.2e, balanced all zero=%s", worst, worst_mean,
              balanced_zero ? "yes" : "no")};
}

ScenarioSpec recovery_spec(int index) {
  ScenarioSpec s;
  s.seed = 1000 + static_cast<std::uint64_t>(index);
  const std::size_t processes = 64 * (1 + static_cast<std::size_t>(index % 8));
  s.processes = processes;
  s.region_sizes.assign(processes / 16, 16);
  s.degree = 4;
  s.nodes = processes / 8;
  s.cores_per_node = 8;
  s.periods = 4;
  s.period_us = 80000;
  s.durations_per_period = 8;
  switch (index % 3) {
    case 0:
      s.placement = Placement::Bad;
      break;
    case 1:
      s.imbalance.push_back({static_cast<std::size_t>(1 + index % 2), 1, 8.0});
      s.imbalance.push_back({3, 1, 8.0});
      break;
    default:
      s.traffic.push_back({static_cast<std::size_t>(index % 2), {1, 1, 3, 1, 1, 3, 1, 1}});
      s.traffic.push_back({2, {1, 3, 1, 1, 3, 1, 1, 1}});
      break;
  }
  return s;
}

Outcome planted_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const json config = {{"clustering", {{"threshold", 8.0}}}, {"attribution", {{"durations", 8}}}};
  std::size_t correct = 0, total = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_cause;
  for (int i = 0; i < kRecoveryScenarios; ++i) {
    const auto spec = recovery_spec(i);
    const auto sc = generate(spec);
    const auto a = testing::analyze_scenario(sc, config);
    for (const auto& p : sc.truth.periods) {
      if (p.cause == "none") continue;
      for (std::size_t r = 0; r < a.regions().regions.size(); ++r) {
        const auto res = a.attribution(static_cast<int>(r), p.start, p.end);
        const bool hit = to_string(res.verdict.dominant) == p.cause;
        correct += hit ? 1 : 0;
        ++total;
        auto& cell = by_cause[p.cause];
        cell.first += hit ? 1 : 0;
        cell.second += 1;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rate = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  std::string detail = fmt("%zu/%zu region-periods (%.1f%%) over %d scenarios, %.1fs;", correct, total,
                           100.0 * rate, kRecoveryScenarios, secs);
  for (const auto& [cause, cell] : by_cause) detail += fmt(" %s %zu/%zu", cause.c_str(), cell.first, cell.second);
  return {rate >= kRecoveryRate && secs < kRecoverySeconds, detail};
}

Outcome remap_check() {
  std::mt19937_64 rng(10);
  std::size_t degraded = 0, suboptimal = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = oracle::random_comm_graph(rng, 16);
    std::vector<NodeId> slots;
    for (NodeId node = 0; node < 4; ++node) slots.insert(slots.end(), 4, node);
    std::shuffle(slots.begin(), slots.end(), rng);
    NodeMap start;
    for (Rank r = 0; r < 16; ++r) start.assign(r, slots[static_cast<std::size_t>(r)]);
    const auto res = recommend_remap(g, start, 4);
    if (res.after > res.before) ++degraded;
  }
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(trial % 5);
    const int cores = trial % 2 ? 2 : 4;
    const auto nodes = (n + static_cast<std::size_t>(cores) - 1) / static_cast<std::size_t>(cores);
    const auto g = oracle::random_comm_graph(rng, n);
    NodeMap start;
    for (std::size_t r = 0; r < n; ++r) start.assign(static_cast<Rank>(r), static_cast<NodeId>(r % nodes));
    const auto res = recommend_remap(g, start, cores);
    if (res.after > res.before) ++degraded;
    if (res.after != oracle::exhaustive_min_cut(g, nodes, static_cast<std::size_t>(cores))) ++suboptimal;
  }
  auto spec = recovery_spec(0);
  const auto sc = generate(spec);
  const auto a = testing::analyze_scenario(sc, {{"clustering", {{"threshold", 8.0}}}});
  const auto bad = a.remap(8);
  return {degraded == 0 && suboptimal == 0 && bad.after < bad.before,
          fmt("degraded=%zu/100, not optimal=%zu/40, bad placement %lld -> %lld inter-node messages", degraded,
              suboptimal, static_cast<long long>(bad.before), static_cast<long long>(bad.after))};
}

Outcome temporal_check() {
  std::mt19937_64 rng(11);
  std::size_t bad = 0, runs = 0, redrawn = 0;
  const double slope_frac = PeriodOptions{}.slope_min_fraction;
  while (runs < 30) {
    const std::size_t low = 10 + rng() % 20, ramp = 6 + rng() % 10, high = 10 + rng() % 20;
    const double base = 0.5 + static_cast<double>(rng() % 100) / 50.0;
    const double top = base * (2.0 + static_cast<double>(rng() % 100) / 50.0);
    std::vector<double> v(low, base);
    for (std::size_t k = 0; k < ramp; ++k) {
      v.push_back(base + (top - base) * static_cast<double>(k + 1) / static_cast<double>(ramp));
    }
    v.insert(v.end(), high, top);
    // A ramp rising slower than the growth threshold is not a growth trend.
    const double ave = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if ((top - base) / static_cast<double>(ramp) < slope_frac * ave) {
      ++redrawn;
      continue;
    }
    const auto ta = detect_periods(series_from_means(v));
    ++runs;
    const bool shape = ta.periods.size() == 3 && ta.periods[0].tag == PeriodTag::Compressed &&
                       ta.periods[1].tag == PeriodTag::GrowthTrend &&
                       ta.periods[2].tag == PeriodTag::SteadyTrend;
    const bool bounds =
        shape &&
        std::abs(static_cast<double>(ta.periods[1].first_bucket) - static_cast<double>(low)) <= kBoundaryBuckets &&
        std::abs(static_cast<double>(ta.periods[2].first_bucket) - static_cast<double>(low + ramp)) <=
            kBoundaryBuckets;
    const auto& c = ta.periods.front();
    const bool stamps = c.start < c.mid && c.mid < c.end;
    if (!(shape && bounds && stamps)) ++bad;
  }
  return {bad == 0,
          fmt("%zu/%zu series off (tags compressed/growth/steady, boundaries within +-%.0f bucket), %zu "
              "sub-threshold ramps redrawn",
              bad, runs, kBoundaryBuckets, redrawn)};
}

std::string run_cli(const std::string& args, const fs::path& out) {
#ifndef COMMLAT_CLI
  (void)args;
  (void)out;
  throw InternalError("commlat executable not built");
#else
  const std::string cmd = std::string(COMMLAT_CLI) + " " + args + " --out " + out.string() + " 2>/dev/null";
  if (std::system(cmd.c_str()) != 0) throw InternalError("cli failed: " + cmd);
  return read_file(out);
#endif
}

Outcome determinism() {
  const fs::path work = fs::temp_directory_path() / "commlat-acceptance-determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  const auto spec = scenario_from_json(json::parse(read_file(kFixtures + "/two-regions.json")));
  const auto files = write_scenario(spec, generate(spec), work / "fixture");
  const std::string inputs = files.trace.string() + " " + files.node_map.string() + " --config " + files.config.string();

  ServiceOptions opts;
  opts.data_dir = work / "data";
  Service service(opts);
  const json req = {{"trace", files.trace.string()},
                    {"node_map", files.node_map.string()},
                    {"config", json::parse(read_file(files.config))}};
  const auto created = service.handle("POST", "/sessions", {}, req.dump());
  if (created.status != 201) return {false, "session create failed: " + created.body};
  const std::string base = "/sessions/" + json::parse(created.body)["session_id"].get<std::string>();

  struct Pair {
    std::string name, cli_args, route;
    std::map<std::string, std::string> query;
  };
  const std::vector<Pair> pairs = {
      {"regions", "cluster " + inputs, base + "/regions", {}},
      {"evolution", "evolve " + inputs + " --region 1", base + "/regions/1/evolution", {}},
      {"dag", "dag " + inputs + " --region 0 --start 10000 --end 30000", base + "/regions/0/dag",
       {{"start", "10000"}, {"end", "30000"}}},
      {"attribution", "attribute " + inputs + " --region 0", base + "/regions/0/attribution", {}},
  };
  std::size_t same = 0;
  std::string mismatched;
  for (const auto& p : pairs) {
    const auto first = run_cli(p.cli_args, work / (p.name + ".1.json"));
    const auto second = run_cli(p.cli_args, work / (p.name + ".2.json"));
    const auto svc = service.handle("GET", p.route, p.query, "");
    const auto svc2 = service.handle("GET", p.route, p.query, "");
    if (first == second && svc.status == 200 && svc.body == first && svc2.body == first) {
      ++same;
    } else {
      mismatched += " " + p.name;
    }
  }
  const auto remap_cli = run_cli("remap " + inputs + " --cores-per-node 4", work / "remap.json");
  const auto remap_svc = service.handle("POST", base + "/remap", {}, R"({"cores_per_node": 4})");
  if (remap_cli == remap_svc.body) {
    ++same;
  } else {
    mismatched += " remap";
  }
  return {same == pairs.size() + 1,
          fmt("%zu/%zu artifacts byte-identical across repeated CLI runs and service", same, pairs.size() + 1) +
              (mismatched.empty() ? "" : "; differ:" + mismatched)};
}

}  // namespace

int main() {
  report("table1-clustering", table1_clustering);
  report("metric-axioms", metric_axioms);
  report("partition-oracle", partition_oracle);
  report("causality-oracle", causality_oracle);
  report("fig8-clocks", fig8);
  report("criteria-properties", criteria_properties);
  report("load-balance", load_balance_check);
  report("planted-recovery", planted_recovery);
  report("remap", remap_check);
  report("temporal-abstraction", temporal_check);
  report("determinism", determinism);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
