#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "commlat/criteria.hpp"
#include "commlat/trace.hpp"

namespace commlat {

struct VectorClock {
  std::vector<std::int64_t> vec;

  bool operator==(const VectorClock&) const = default;
};

enum class CausalOrder { Before, After, Concurrent, Equal };
std::string_view to_string(CausalOrder order);

// Before iff a <= b componentwise and a != b. Throws ValidationError on a
// length mismatch.
CausalOrder happened_before(const VectorClock& a, const VectorClock& b);

// A user-selected slice of the trace: events with timestamp in [start, end)
// and, when a process set is given, both endpoints inside it.
struct EventWindow {
  Micros start = 0;
  Micros end = 0;
  std::vector<std::size_t> events;  // indices into Trace::events, trace order
  std::vector<Rank> ranks;          // sorted; clock component order
};

EventWindow select_window(const Trace& trace, Micros start, Micros end,
                          std::span<const Rank> processes = {});
// Whole trace as one window.
EventWindow full_window(const Trace& trace);

struct ClockAssignment {
  std::vector<Rank> ranks;
  std::vector<VectorClock> clocks;  // parallel to EventWindow::events
  // Receives whose send is not in the window (or not yet seen); they only
  // advance the receiver's own component.
  std::vector<char> window_entry;
};

ClockAssignment vector_clocks(const Trace& trace, const EventWindow& window);

// Linear extension of happened-before (program order plus in-window message
// order), ties broken by (timestamp, rank). Returns trace event indices.
std::vector<std::size_t> logical_order(const Trace& trace, const EventWindow& window,
                                       const ClockAssignment& clocks);

struct DagNode {
  int id = 0;
  Rank pid = 0;
  std::vector<std::size_t> events;  // trace event indices, in insertion order
  int layer = 0;
  double lb = 0.0;
  double node_latency = 0.0;

  bool has_send(const Trace& trace) const;
};

struct DagEdge {
  int from = 0;
  int to = 0;
  std::size_t message = 0;  // index into Trace::messages
};

struct CommDag {
  std::vector<DagNode> nodes;
  std::vector<DagEdge> edges;

  bool is_acyclic() const;
};

// Node/edge construction over logically ordered events. Sends join the
// newest node of their process; receives join a node of their process that
// holds no sends, otherwise open a new node. Each receive whose send sits in
// an earlier node adds an edge from that node. Throws InternalError if the
// result has a cycle. Layers are longest-path depths from the sources.
CommDag build_dag(const Trace& trace, std::span<const std::size_t> ordered_events);

struct LoadBalance {
  std::vector<Rank> ranks;
  std::vector<double> mc;
  double mc_avg = 0.0;
  double ad = 0.0;
  std::vector<double> lb;

  std::optional<double> lb_of(Rank rank) const;
  double mean_lb() const;
  // AD / mc_avg; 0 when idle.
  double relative_deviation() const;
};

LoadBalance load_balance(std::span<const Rank> ranks, std::span<const double> message_counts);
// mc_p = sends + receives by p among `events`.
LoadBalance load_balance(const Trace& trace, std::span<const std::size_t> events,
                         std::span<const Rank> processes);

// Window DAG with lb and node latency attached.
struct WindowDag {
  EventWindow window;
  ClockAssignment clocks;
  std::vector<std::size_t> order;
  CommDag dag;
  LoadBalance balance;
};

WindowDag analyze_window(const Trace& trace, std::span<const MessageLatency> latencies,
                         Micros start, Micros end, std::span<const Rank> processes = {});

}  // namespace commlat
