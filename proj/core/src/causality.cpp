#include "commlat/causality.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <tuple>

namespace commlat {

std::string_view to_string(CausalOrder order) {
  switch (order) {
    case CausalOrder::Before: return "before";
    case CausalOrder::After: return "after";
    case CausalOrder::Concurrent: return "concurrent";
    case CausalOrder::Equal: return "equal";
  }
  return "concurrent";
}

CausalOrder happened_before(const VectorClock& a, const VectorClock& b) {
  if (a.vec.size() != b.vec.size()) {
    throw ValidationError("vector clock length mismatch (" + std::to_string(a.vec.size()) + " vs " +
                          std::to_string(b.vec.size()) + ")");
  }
  bool less = false, greater = false;
  for (std::size_t i = 0; i < a.vec.size(); ++i) {
    less = less || a.vec[i] < b.vec[i];
    greater = greater || a.vec[i] > b.vec[i];
  }
  if (less && greater) return CausalOrder::Concurrent;
  if (less) return CausalOrder::Before;
  if (greater) return CausalOrder::After;
  return CausalOrder::Equal;
}

EventWindow select_window(const Trace& trace, Micros start, Micros end,
                          std::span<const Rank> processes) {
  if (start > end) throw ValidationError("window start after end");
  std::vector<Rank> members(processes.begin(), processes.end());
  std::sort(members.begin(), members.end());
  auto allowed = [&](Rank r) {
    return members.empty() || std::binary_search(members.begin(), members.end(), r);
  };
  EventWindow w;
  w.start = start;
  w.end = end;
  std::vector<Rank> ranks;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& ev = trace.events[i];
    if (ev.timestamp < start || ev.timestamp >= end) continue;
    if (!allowed(ev.source) || !allowed(ev.destination)) continue;
    w.events.push_back(i);
    ranks.push_back(ev.source);
    ranks.push_back(ev.destination);
  }
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
  w.ranks = std::move(ranks);
  return w;
}

EventWindow full_window(const Trace& trace) {
  Micros end = 0;
  for (const auto& ev : trace.events) end = std::max(end, ev.timestamp + 1);
  return select_window(trace, 0, end);
}

namespace {

std::vector<long> window_positions(const Trace& trace, const EventWindow& window) {
  std::vector<long> pos(trace.events.size(), -1);
  for (std::size_t k = 0; k < window.events.size(); ++k) pos[window.events[k]] = static_cast<long>(k);
  return pos;
}

// Window position of the send matched to the receive at `k`, if usable.
std::optional<std::size_t> in_window_send(const Trace& trace, const EventWindow& window,
                                          const std::vector<long>& pos, std::size_t k) {
  const auto& mi = trace.message_of_event[window.events[k]];
  if (!mi) return std::nullopt;
  const long s = pos[trace.messages[*mi].send_event];
  if (s < 0 || static_cast<std::size_t>(s) >= k) return std::nullopt;
  return static_cast<std::size_t>(s);
}

}  // namespace

ClockAssignment vector_clocks(const Trace& trace, const EventWindow& window) {
  ClockAssignment out;
  out.ranks = window.ranks;
  const std::size_t dims = window.ranks.size();
  std::map<Rank, std::size_t> comp;
  for (std::size_t i = 0; i < dims; ++i) comp[window.ranks[i]] = i;

  std::vector<VectorClock> current(dims, VectorClock{std::vector<std::int64_t>(dims, 0)});
  out.clocks.resize(window.events.size());
  out.window_entry.assign(window.events.size(), 0);
  const auto pos = window_positions(trace, window);

  for (std::size_t k = 0; k < window.events.size(); ++k) {
    const auto& ev = trace.events[window.events[k]];
    const std::size_t i = comp.at(ev.rank);
    auto& clock = current[i];
    clock.vec[i] += 1;
    if (ev.kind == EventKind::Receive) {
      if (auto s = in_window_send(trace, window, pos, k)) {
        const auto& sent = out.clocks[*s].vec;
        for (std::size_t p = 0; p < dims; ++p) clock.vec[p] = std::max(clock.vec[p], sent[p]);
      } else {
        out.window_entry[k] = 1;
      }
    }
    out.clocks[k] = clock;
  }
  return out;
}

std::vector<std::size_t> logical_order(const Trace& trace, const EventWindow& window,
                                       const ClockAssignment& clocks) {
  const std::size_t m = window.events.size();
  std::vector<std::vector<std::size_t>> succ(m);
  std::vector<std::size_t> indegree(m, 0);
  const auto pos = window_positions(trace, window);
  std::map<Rank, std::size_t> last_of_rank;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& ev = trace.events[window.events[k]];
    if (auto it = last_of_rank.find(ev.rank); it != last_of_rank.end()) {
      succ[it->second].push_back(k);
      ++indegree[k];
    }
    last_of_rank[ev.rank] = k;
    if (ev.kind == EventKind::Receive && !clocks.window_entry[k]) {
      if (auto s = in_window_send(trace, window, pos, k)) {
        succ[*s].push_back(k);
        ++indegree[k];
      }
    }
  }
  using Key = std::tuple<Micros, Rank, std::size_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
  auto key_of = [&](std::size_t k) {
    const auto& ev = trace.events[window.events[k]];
    return Key{ev.timestamp, ev.rank, k};
  };
  for (std::size_t k = 0; k < m; ++k) {
    if (indegree[k] == 0) ready.push(key_of(k));
  }
  std::vector<std::size_t> order;
  order.reserve(m);
  while (!ready.empty()) {
    const std::size_t k = std::get<2>(ready.top());
    ready.pop();
    order.push_back(window.events[k]);
    for (std::size_t nx : succ[k]) {
      if (--indegree[nx] == 0) ready.push(key_of(nx));
    }
  }
  if (order.size() != m) throw InternalError("happened-before relation has a cycle");
  return order;
}

bool DagNode::has_send(const Trace& trace) const {
  return std::any_of(events.begin(), events.end(),
                     [&](std::size_t e) { return trace.events[e].kind == EventKind::Send; });
}

namespace {

// Kahn order of node ids, or nullopt on a cycle.
std::optional<std::vector<int>> topological_nodes(const CommDag& dag) {
  const std::size_t n = dag.nodes.size();
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indegree(n, 0);
  for (const auto& e : dag.edges) {
    succ[e.from].push_back(e.to);
    ++indegree[e.to];
  }
  std::queue<int> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(static_cast<int>(i));
  }
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop();
    order.push_back(v);
    for (int nx : succ[v]) {
      if (--indegree[nx] == 0) ready.push(nx);
    }
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

}  // namespace

bool CommDag::is_acyclic() const { return topological_nodes(*this).has_value(); }

CommDag build_dag(const Trace& trace, std::span<const std::size_t> ordered_events) {
  CommDag dag;
  std::map<Rank, std::vector<int>> nodes_of_pid;  // creation order
  std::map<std::size_t, int> node_of_event;
  std::vector<char> holds_send;

  auto create = [&](Rank pid) {
    DagNode node;
    node.id = static_cast<int>(dag.nodes.size());
    node.pid = pid;
    dag.nodes.push_back(std::move(node));
    holds_send.push_back(0);
    nodes_of_pid[pid].push_back(dag.nodes.back().id);
    return dag.nodes.back().id;
  };

  for (std::size_t e : ordered_events) {
    const auto& ev = trace.events.at(e);
    auto& candidates = nodes_of_pid[ev.rank];
    int target = -1;
    if (ev.kind == EventKind::Send) {
      target = candidates.empty() ? create(ev.rank) : candidates.back();
      holds_send[target] = 1;
    } else {
      for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        if (!holds_send[*it]) {
          target = *it;
          break;
        }
      }
      if (target < 0) target = create(ev.rank);
    }
    dag.nodes[target].events.push_back(e);
    node_of_event[e] = target;

    if (ev.kind == EventKind::Receive) {
      if (const auto& mi = trace.message_of_event[e]) {
        auto it = node_of_event.find(trace.messages[*mi].send_event);
        if (it != node_of_event.end()) dag.edges.push_back({it->second, target, *mi});
      }
    }
  }

  auto order = topological_nodes(dag);
  if (!order) throw InternalError("communication DAG has a cycle; event order is inconsistent");
  std::vector<std::vector<int>> succ(dag.nodes.size());
  for (const auto& e : dag.edges) succ[e.from].push_back(e.to);
  for (int v : *order) {
    for (int nx : succ[v]) dag.nodes[nx].layer = std::max(dag.nodes[nx].layer, dag.nodes[v].layer + 1);
  }
  return dag;
}

std::optional<double> LoadBalance::lb_of(Rank rank) const {
  auto it = std::lower_bound(ranks.begin(), ranks.end(), rank);
  if (it == ranks.end() || *it != rank) return std::nullopt;
  return lb[static_cast<std::size_t>(it - ranks.begin())];
}

double LoadBalance::mean_lb() const {
  if (lb.empty()) return 0.0;
  double s = 0.0;
  for (double v : lb) s += v;
  return s / static_cast<double>(lb.size());
}

double LoadBalance::relative_deviation() const { return mc_avg > 0.0 ? ad / mc_avg : 0.0; }

LoadBalance load_balance(std::span<const Rank> ranks, std::span<const double> message_counts) {
  if (ranks.size() != message_counts.size()) throw ValidationError("load balance: size mismatch");
  if (ranks.empty()) throw ValidationError("load balance needs at least one process");
  LoadBalance out;
  std::vector<std::size_t> idx(ranks.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return ranks[a] < ranks[b]; });
  for (auto i : idx) {
    out.ranks.push_back(ranks[i]);
    out.mc.push_back(message_counts[i]);
  }
  const double n = static_cast<double>(out.mc.size());
  double sum = 0.0;
  for (double v : out.mc) sum += v;
  out.mc_avg = sum / n;
  double dev = 0.0;
  for (double v : out.mc) dev += std::abs(v - out.mc_avg);
  out.ad = dev / n;
  for (double v : out.mc) out.lb.push_back(out.ad > 0.0 ? std::abs(v - out.mc_avg) / out.ad : 0.0);
  return out;
}

LoadBalance load_balance(const Trace& trace, std::span<const std::size_t> events,
                         std::span<const Rank> processes) {
  std::map<Rank, double> counts;
  for (Rank r : processes) counts[r] = 0.0;
  for (std::size_t e : events) {
    auto it = counts.find(trace.events[e].rank);
    if (it != counts.end()) it->second += 1.0;
  }
  std::vector<Rank> ranks;
  std::vector<double> mc;
  for (const auto& [r, c] : counts) {
    ranks.push_back(r);
    mc.push_back(c);
  }
  return load_balance(ranks, mc);
}

WindowDag analyze_window(const Trace& trace, std::span<const MessageLatency> latencies,
                         Micros start, Micros end, std::span<const Rank> processes) {
  WindowDag out;
  out.window = select_window(trace, start, end, processes);
  if (out.window.events.empty()) throw ValidationError("no events in the selected window");
  out.clocks = vector_clocks(trace, out.window);
  out.order = logical_order(trace, out.window, out.clocks);
  out.dag = build_dag(trace, out.order);
  out.balance = load_balance(trace, out.window.events, out.window.ranks);

  std::vector<double> ratio(trace.messages.size(), -1.0);
  for (const auto& ml : latencies) {
    if (ml.message < ratio.size()) ratio[ml.message] = ml.ratio;
  }
  for (auto& node : out.dag.nodes) {
    node.lb = out.balance.lb_of(node.pid).value_or(0.0);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t e : node.events) {
      const auto& mi = trace.message_of_event[e];
      if (mi && ratio[*mi] >= 0.0) {
        sum += ratio[*mi];
        ++n;
      }
    }
    node.node_latency = n ? sum / static_cast<double>(n) : 0.0;
  }
  return out;
}

}  // namespace commlat
