#include "commlat/trace.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace commlat {

namespace {

constexpr std::string_view kTraceHeader = "rank,kind,timestamp,src,dst,size";
constexpr std::string_view kNodeMapHeader = "rank,node";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::optional<EventKind> parse_kind(std::string_view s) {
  if (s == "send") return EventKind::Send;
  if (s == "recv" || s == "receive") return EventKind::Receive;
  return std::nullopt;
}

// Empty string on success, otherwise the violated rule.
std::string validate(const CommEvent& ev) {
  if (ev.rank < 0 || ev.source < 0 || ev.destination < 0) return "negative process id";
  if (ev.timestamp < 0) return "negative timestamp";
  if (ev.size < 0) return "negative size";
  if (ev.source == ev.destination) return "self-message (src == dst)";
  if (ev.kind == EventKind::Send && ev.rank != ev.source) return "send rank must equal src";
  if (ev.kind == EventKind::Receive && ev.rank != ev.destination)
    return "receive rank must equal dst";
  return {};
}

std::string parse_csv_line(std::string_view line, CommEvent& ev) {
  auto fields = split(line, ',');
  if (fields.size() != 6) return "expected 6 fields, got " + std::to_string(fields.size());
  auto kind = parse_kind(fields[1]);
  if (!kind) return "unknown kind '" + std::string(fields[1]) + "'";
  ev.kind = *kind;
  if (!parse_int(fields[0], ev.rank)) return "bad rank";
  if (!parse_int(fields[2], ev.timestamp)) return "bad timestamp";
  if (!parse_int(fields[3], ev.source)) return "bad src";
  if (!parse_int(fields[4], ev.destination)) return "bad dst";
  if (!parse_int(fields[5], ev.size)) return "bad size";
  return validate(ev);
}

std::string parse_jsonl_line(std::string_view line, CommEvent& ev) {
  auto obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return "not a JSON object";
  for (const char* key : {"rank", "kind", "timestamp", "src", "dst", "size"}) {
    if (!obj.contains(key)) return std::string("missing field '") + key + "'";
  }
  if (!obj["kind"].is_string()) return "kind must be a string";
  auto kind = parse_kind(obj["kind"].get<std::string>());
  if (!kind) return "unknown kind";
  ev.kind = *kind;
  for (const char* key : {"rank", "timestamp", "src", "dst", "size"}) {
    if (!obj[key].is_number_integer()) return std::string("field '") + key + "' must be an integer";
  }
  ev.rank = obj["rank"].get<Rank>();
  ev.timestamp = obj["timestamp"].get<Micros>();
  ev.source = obj["src"].get<Rank>();
  ev.destination = obj["dst"].get<Rank>();
  ev.size = obj["size"].get<std::int64_t>();
  return validate(ev);
}

}  // namespace

std::string_view to_string(EventKind kind) {
  return kind == EventKind::Send ? "send" : "recv";
}

std::string_view to_string(Locality locality) {
  return locality == Locality::IntraNode ? "intra" : "inter";
}

bool event_order_less(const CommEvent& a, const CommEvent& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.kind == EventKind::Send && b.kind == EventKind::Receive;
}

NodeId NodeMap::node_of(Rank rank) const {
  auto it = mapping_.find(rank);
  if (it == mapping_.end()) throw UnknownRankError(rank);
  return it->second;
}

std::set<NodeId> NodeMap::nodes() const {
  std::set<NodeId> out;
  for (const auto& [rank, node] : mapping_) out.insert(node);
  return out;
}

UnknownRankError::UnknownRankError(Rank rank)
    : ValidationError("unknown rank " + std::to_string(rank) + " (not in node map)"),
      rank_(rank) {}

namespace {
std::string describe(const std::vector<ParseIssue>& issues) {
  std::ostringstream os;
  os << issues.size() << " malformed line(s)";
  for (std::size_t i = 0; i < issues.size() && i < 5; ++i) {
    os << (i == 0 ? ": " : "; ") << "line " << issues[i].line << ": " << issues[i].reason;
  }
  return os.str();
}
}  // namespace

TraceParseError::TraceParseError(std::vector<ParseIssue> issues)
    : ValidationError(describe(issues)), issues_(std::move(issues)) {}

Trace parse_trace_text(std::string_view text, TraceFormat format, const ParseOptions& options) {
  Trace trace;
  std::vector<ParseIssue> issues;
  std::size_t line_no = 0;
  bool seen_content = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!seen_content) {
      seen_content = true;
      if (format == TraceFormat::CSV && line == kTraceHeader) continue;
    }
    CommEvent ev;
    std::string err = format == TraceFormat::CSV ? parse_csv_line(line, ev) : parse_jsonl_line(line, ev);
    if (!err.empty()) {
      issues.push_back({line_no, std::move(err)});
      continue;
    }
    trace.events.push_back(ev);
  }
  if (!issues.empty() && !options.lenient) throw TraceParseError(std::move(issues));
  if (trace.events.empty()) throw ValidationError("empty trace");
  std::stable_sort(trace.events.begin(), trace.events.end(), event_order_less);
  for (const auto& ev : trace.events) {
    trace.ranks.insert(ev.source);
    trace.ranks.insert(ev.destination);
  }
  trace.issues = std::move(issues);
  trace.message_of_event.assign(trace.events.size(), std::nullopt);
  return trace;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw ValidationError("read failure on " + path.string());
  return ss.str();
}

Trace parse_trace(const std::filesystem::path& path, TraceFormat format, const ParseOptions& options) {
  return parse_trace_text(read_file(path), format, options);
}

TraceFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".ndjson") ? TraceFormat::JSONL : TraceFormat::CSV;
}

std::string write_trace_csv(const std::vector<CommEvent>& events) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& ev : events) {
    out += std::to_string(ev.rank);
    out += ',';
    out += to_string(ev.kind);
    out += ',';
    out += std::to_string(ev.timestamp);
    out += ',';
    out += std::to_string(ev.source);
    out += ',';
    out += std::to_string(ev.destination);
    out += ',';
    out += std::to_string(ev.size);
    out += '\n';
  }
  return out;
}

NodeMap parse_node_map_text(std::string_view text) {
  NodeMap map;
  std::vector<ParseIssue> issues;
  std::size_t line_no = 0;
  bool seen_content = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!seen_content) {
      seen_content = true;
      if (line == kNodeMapHeader) continue;
    }
    auto fields = split(line, ',');
    Rank rank = 0;
    NodeId node = 0;
    if (fields.size() != 2 || !parse_int(fields[0], rank) || !parse_int(fields[1], node) ||
        rank < 0 || node < 0) {
      issues.push_back({line_no, "expected 'rank,node' with non-negative integers"});
      continue;
    }
    if (map.contains(rank)) {
      issues.push_back({line_no, "duplicate rank " + std::to_string(rank)});
      continue;
    }
    map.assign(rank, node);
  }
  if (!issues.empty()) throw TraceParseError(std::move(issues));
  if (map.empty()) throw ValidationError("empty node map");
  return map;
}

NodeMap read_node_map(const std::filesystem::path& path) {
  return parse_node_map_text(read_file(path));
}

std::string write_node_map_csv(const NodeMap& map) {
  std::string out(kNodeMapHeader);
  out += '\n';
  for (const auto& [rank, node] : map.mapping()) {
    out += std::to_string(rank) + ',' + std::to_string(node) + '\n';
  }
  return out;
}

void attach_node_map(Trace& trace, NodeMap map) {
  for (Rank r : trace.ranks) {
    if (!map.contains(r)) throw UnknownRankError(r);
  }
  trace.node_map = std::move(map);
}

Locality locality_of(const Message& msg, const NodeMap& node_map) {
  return node_map.node_of(msg.source) == node_map.node_of(msg.destination) ? Locality::IntraNode
                                                                           : Locality::InterNode;
}

Trace pair_messages(Trace trace, const PairingOptions& options) {
  if (trace.node_map.empty()) throw ValidationError("pair_messages: node map not attached");
  trace.messages.clear();
  trace.unmatched_sends.clear();
  trace.unmatched_receives.clear();
  trace.message_of_event.assign(trace.events.size(), std::nullopt);

  // Per channel, sends and receives in trace order (already timestamp order).
  struct Channel {
    std::vector<std::size_t> sends;
    std::vector<std::size_t> receives;
  };
  std::map<std::pair<Rank, Rank>, Channel> channels;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& ev = trace.events[i];
    auto& ch = channels[{ev.source, ev.destination}];
    (ev.kind == EventKind::Send ? ch.sends : ch.receives).push_back(i);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto& [key, ch] : channels) {
    std::size_t next_send = 0;
    for (std::size_t r : ch.receives) {
      const Micros recv_ts = trace.events[r].timestamp;
      if (next_send < ch.sends.size() &&
          trace.events[ch.sends[next_send]].timestamp <= recv_ts + options.skew_tolerance) {
        pairs.emplace_back(ch.sends[next_send], r);
        ++next_send;
      } else {
        trace.unmatched_receives.push_back(r);
      }
    }
    for (; next_send < ch.sends.size(); ++next_send) trace.unmatched_sends.push_back(ch.sends[next_send]);
  }
  // Messages ordered by send event position for stable output.
  std::sort(pairs.begin(), pairs.end());
  std::sort(trace.unmatched_sends.begin(), trace.unmatched_sends.end());
  std::sort(trace.unmatched_receives.begin(), trace.unmatched_receives.end());

  trace.messages.reserve(pairs.size());
  for (auto [s, r] : pairs) {
    const auto& send = trace.events[s];
    const auto& recv = trace.events[r];
    Message m;
    m.source = send.source;
    m.destination = send.destination;
    m.size = send.size;
    m.send_ts = send.timestamp;
    m.recv_ts = recv.timestamp;
    m.transmission_time = recv.timestamp - send.timestamp;
    m.skewed = m.transmission_time < 0;
    m.locality = locality_of(m, trace.node_map);
    m.send_event = s;
    m.recv_event = r;
    trace.message_of_event[s] = trace.messages.size();
    trace.message_of_event[r] = trace.messages.size();
    trace.messages.push_back(m);
  }
  return trace;
}

Trace load_trace(const std::filesystem::path& trace_path,
                 const std::filesystem::path& node_map_path, const ParseOptions& parse,
                 const PairingOptions& pairing) {
  Trace trace = parse_trace(trace_path, format_from_path(trace_path), parse);
  attach_node_map(trace, read_node_map(node_map_path));
  return pair_messages(std::move(trace), pairing);
}

}  // namespace commlat
