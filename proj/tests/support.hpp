#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "commlat/pipeline.hpp"
#include "commlat/synth.hpp"
#include "commlat/trace.hpp"

namespace commlat::testing {

// Paired trace from raw events; every rank on its own node unless `nodes`
// is given.
inline Trace make_trace(std::vector<CommEvent> events, std::map<Rank, NodeId> nodes = {}) {
  Trace t;
  std::stable_sort(events.begin(), events.end(), event_order_less);
  t.events = std::move(events);
  for (const auto& e : t.events) {
    t.ranks.insert(e.source);
    t.ranks.insert(e.destination);
  }
  NodeMap map;
  for (Rank r : t.ranks) map.assign(r, nodes.count(r) ? nodes.at(r) : r);
  attach_node_map(t, map);
  return pair_messages(std::move(t));
}

inline CommEvent send(Rank src, Rank dst, Micros ts, std::int64_t size = 8) {
  return {src, EventKind::Send, ts, src, dst, size};
}

inline CommEvent recv(Rank src, Rank dst, Micros ts, std::int64_t size = 8) {
  return {dst, EventKind::Receive, ts, src, dst, size};
}

// Random point-to-point trace with `messages` messages among `ranks`
// processes; per-channel FIFO holds so pairing recovers every message.
inline std::vector<CommEvent> random_events(std::mt19937_64& rng, int ranks, int messages,
                                            Micros span = 1000) {
  std::uniform_int_distribution<int> pick(0, ranks - 1);
  std::uniform_int_distribution<Micros> when(0, span);
  std::uniform_int_distribution<Micros> delay(1, 50);
  std::uniform_int_distribution<std::int64_t> size(0, 400);
  std::map<std::pair<Rank, Rank>, Micros> last_recv;
  std::vector<std::tuple<Micros, Rank, Rank, std::int64_t>> sends;
  for (int i = 0; i < messages; ++i) {
    Rank a = pick(rng), b = pick(rng);
    while (b == a) b = pick(rng);
    sends.emplace_back(when(rng), a, b, size(rng));
  }
  std::sort(sends.begin(), sends.end());
  std::vector<CommEvent> out;
  for (auto [ts, a, b, sz] : sends) {
    Micros r = ts + delay(rng);
    auto& last = last_recv[{a, b}];
    r = std::max(r, last + 1);
    last = r;
    out.push_back(send(a, b, ts, sz));
    out.push_back(recv(a, b, r, sz));
  }
  return out;
}

// Pairs a generated scenario and runs the analysis with `config`.
inline Analysis analyze_scenario(const Scenario& sc, const nlohmann::json& config) {
  Trace t;
  t.events = sc.events;
  for (const auto& e : t.events) {
    t.ranks.insert(e.source);
    t.ranks.insert(e.destination);
  }
  const auto c = config_from_json(config);
  attach_node_map(t, sc.node_map);
  return Analysis(pair_messages(std::move(t), c.pairing), c);
}

}  // namespace commlat::testing
