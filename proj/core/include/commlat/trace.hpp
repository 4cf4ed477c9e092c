#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "commlat/error.hpp"

namespace commlat {

using Rank = std::int32_t;
using NodeId = std::int32_t;
using Micros = std::int64_t;

enum class EventKind : std::uint8_t { Send, Receive };
enum class Locality : std::uint8_t { IntraNode, InterNode };
enum class TraceFormat { CSV, JSONL };

std::string_view to_string(EventKind kind);
std::string_view to_string(Locality locality);

// One point-to-point record from the trace. For sends `rank == source`,
// for receives `rank == destination`.
struct CommEvent {
  Rank rank = 0;
  EventKind kind = EventKind::Send;
  Micros timestamp = 0;
  Rank source = 0;
  Rank destination = 0;
  std::int64_t size = 0;

  bool operator==(const CommEvent&) const = default;
};

// Sort order used everywhere: (timestamp, rank, Send before Receive).
bool event_order_less(const CommEvent& a, const CommEvent& b);

class NodeMap {
 public:
  NodeMap() = default;
  explicit NodeMap(std::map<Rank, NodeId> mapping) : mapping_(std::move(mapping)) {}

  // Throws UnknownRankError.
  NodeId node_of(Rank rank) const;
  bool contains(Rank rank) const { return mapping_.count(rank) != 0; }
  void assign(Rank rank, NodeId node) { mapping_[rank] = node; }

  const std::map<Rank, NodeId>& mapping() const { return mapping_; }
  std::set<NodeId> nodes() const;
  bool empty() const { return mapping_.empty(); }

  bool operator==(const NodeMap&) const = default;

 private:
  std::map<Rank, NodeId> mapping_;
};

class UnknownRankError : public ValidationError {
 public:
  explicit UnknownRankError(Rank rank);
  Rank rank() const { return rank_; }

 private:
  Rank rank_;
};

struct Message {
  Rank source = 0;
  Rank destination = 0;
  std::int64_t size = 0;
  Micros send_ts = 0;
  Micros recv_ts = 0;
  Micros transmission_time = 0;
  Locality locality = Locality::IntraNode;
  // Negative transmission time after pairing. Excluded from criteria
  // sampling, kept for topology.
  bool skewed = false;
  // Indices into Trace::events.
  std::size_t send_event = 0;
  std::size_t recv_event = 0;
};

struct ParseIssue {
  std::size_t line = 0;
  std::string reason;
};

struct Trace {
  std::vector<CommEvent> events;
  std::vector<Message> messages;
  std::set<Rank> ranks;
  NodeMap node_map;
  std::vector<std::size_t> unmatched_sends;
  std::vector<std::size_t> unmatched_receives;
  // Lines skipped under lenient parsing.
  std::vector<ParseIssue> issues;
  // For every event, the index of its message, if paired.
  std::vector<std::optional<std::size_t>> message_of_event;
};

class TraceParseError : public ValidationError {
 public:
  explicit TraceParseError(std::vector<ParseIssue> issues);
  const std::vector<ParseIssue>& issues() const { return issues_; }

 private:
  std::vector<ParseIssue> issues_;
};

struct ParseOptions {
  // Skip malformed lines instead of failing; they stay in Trace::issues.
  bool lenient = false;
};

Trace parse_trace_text(std::string_view text, TraceFormat format,
                       const ParseOptions& options = {});
Trace parse_trace(const std::filesystem::path& path, TraceFormat format,
                  const ParseOptions& options = {});
// Picks JSONL for *.jsonl / *.ndjson, CSV otherwise.
TraceFormat format_from_path(const std::filesystem::path& path);

// CSV serialization with the standard header; events are written in order.
std::string write_trace_csv(const std::vector<CommEvent>& events);

NodeMap parse_node_map_text(std::string_view text);
NodeMap read_node_map(const std::filesystem::path& path);
std::string write_node_map_csv(const NodeMap& map);

// Attaches the node map; every rank of the trace must be present.
void attach_node_map(Trace& trace, NodeMap map);

struct PairingOptions {
  // A receive may consume a pending send stamped up to this many
  // microseconds after it. Zero means strict timestamp order; larger values
  // tolerate skewed clocks and yield flagged negative transmission times.
  Micros skew_tolerance = 0;
};

// FIFO matching per ordered (source, destination) channel. Requires the
// node map to be attached.
Trace pair_messages(Trace trace, const PairingOptions& options = {});

Locality locality_of(const Message& msg, const NodeMap& node_map);

// parse + node map + pairing in one step.
Trace load_trace(const std::filesystem::path& trace_path,
                 const std::filesystem::path& node_map_path,
                 const ParseOptions& parse = {}, const PairingOptions& pairing = {});

std::string read_file(const std::filesystem::path& path);

}  // namespace commlat
