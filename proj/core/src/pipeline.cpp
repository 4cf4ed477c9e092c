#include "commlat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace commlat {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("config key '" + where + "." + key + "': " + e.what());
  }
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json window_json(Micros start, Micros end) { return {{"start", start}, {"end", end}}; }

}  // namespace

AnalysisConfig config_from_json(const json& j) {
  AnalysisConfig c;
  if (j.is_null()) return c;
  reject_unknown(j, {"ingest", "criteria", "distance", "clustering", "temporal", "attribution"}, "config");
  if (j.contains("ingest")) {
    const auto& s = j["ingest"];
    reject_unknown(s, {"lenient", "skew_tolerance_us"}, "ingest");
    read(s, "lenient", c.parse.lenient, "ingest");
    read(s, "skew_tolerance_us", c.pairing.skew_tolerance, "ingest");
  }
  if (j.contains("criteria")) {
    const auto& s = j["criteria"];
    reject_unknown(s, {"bucket_width", "max_samples", "seed"}, "criteria");
    read(s, "bucket_width", c.criteria.bucket_width, "criteria");
    read(s, "max_samples", c.criteria.max_samples_per_bucket, "criteria");
    read(s, "seed", c.criteria.seed, "criteria");
  }
  if (j.contains("distance")) {
    const auto& s = j["distance"];
    reject_unknown(s, {"beta", "max_depth"}, "distance");
    read(s, "beta", c.distance.beta, "distance");
    read(s, "max_depth", c.distance.max_depth, "distance");
  }
  if (j.contains("clustering")) {
    const auto& s = j["clustering"];
    reject_unknown(s, {"threshold", "single_message_stop"}, "clustering");
    read(s, "threshold", c.threshold, "clustering");
    read(s, "single_message_stop", c.single_message_stop, "clustering");
  }
  if (j.contains("temporal")) {
    const auto& s = j["temporal"];
    reject_unknown(s, {"bucket_us", "window", "slope_min", "slope_min_fraction", "cv_max", "steady_margin"},
                   "temporal");
    read(s, "bucket_us", c.bucket_us, "temporal");
    read(s, "window", c.periods.window, "temporal");
    if (s.contains("slope_min") && !s["slope_min"].is_null()) {
      double v = 0.0;
      read(s, "slope_min", v, "temporal");
      c.periods.slope_min = v;
    }
    read(s, "slope_min_fraction", c.periods.slope_min_fraction, "temporal");
    read(s, "cv_max", c.periods.cv_max, "temporal");
    read(s, "steady_margin", c.periods.steady_margin, "temporal");
  }
  if (j.contains("attribution")) {
    const auto& s = j["attribution"];
    reject_unknown(s, {"inter_ratio_flag", "imbalance_peak", "imbalance_ceiling", "cv_ceiling", "durations",
                       "fallback_durations"},
                   "attribution");
    read(s, "inter_ratio_flag", c.attribution.inter_ratio_flag, "attribution");
    read(s, "imbalance_peak", c.attribution.imbalance_peak, "attribution");
    read(s, "imbalance_ceiling", c.attribution.imbalance_ceiling, "attribution");
    read(s, "cv_ceiling", c.attribution.cv_ceiling, "attribution");
    if (s.contains("durations") && !(s["durations"].is_string() && s["durations"] == "periods")) {
      read(s, "durations", c.attribution_durations, "attribution");
    }
    read(s, "fallback_durations", c.fallback_durations, "attribution");
  }
  if (c.criteria.bucket_width <= 0) throw ValidationError("criteria.bucket_width must be positive");
  if (!(c.distance.beta > 0.0)) throw ValidationError("distance.beta must be positive");
  if (c.distance.max_depth < 1) throw ValidationError("distance.max_depth must be at least 1");
  if (c.periods.window == 0) throw ValidationError("temporal.window must be positive");
  if (c.bucket_us < 0) throw ValidationError("temporal.bucket_us must be non-negative");
  if (c.pairing.skew_tolerance < 0) throw ValidationError("ingest.skew_tolerance_us must be non-negative");
  if (!(c.attribution.imbalance_ceiling > 0.0) || !(c.attribution.cv_ceiling > 0.0)) {
    throw ValidationError("attribution ceilings must be positive");
  }
  if (c.fallback_durations == 0) throw ValidationError("attribution.fallback_durations must be positive");
  return c;
}

json to_json(const AnalysisConfig& c) {
  json j;
  j["ingest"] = {{"lenient", c.parse.lenient}, {"skew_tolerance_us", c.pairing.skew_tolerance}};
  j["criteria"] = {{"bucket_width", c.criteria.bucket_width},
                   {"max_samples", c.criteria.max_samples_per_bucket},
                   {"seed", c.criteria.seed}};
  j["distance"] = {{"beta", c.distance.beta}, {"max_depth", c.distance.max_depth}};
  j["clustering"] = {{"threshold", c.threshold}, {"single_message_stop", c.single_message_stop}};
  j["temporal"] = {{"bucket_us", c.bucket_us},
                   {"window", c.periods.window},
                   {"slope_min", c.periods.slope_min ? json(*c.periods.slope_min) : json(nullptr)},
                   {"slope_min_fraction", c.periods.slope_min_fraction},
                   {"cv_max", c.periods.cv_max},
                   {"steady_margin", c.periods.steady_margin}};
  j["attribution"] = {{"inter_ratio_flag", c.attribution.inter_ratio_flag},
                      {"imbalance_peak", c.attribution.imbalance_peak},
                      {"imbalance_ceiling", c.attribution.imbalance_ceiling},
                      {"cv_ceiling", c.attribution.cv_ceiling},
                      {"durations", c.attribution_durations == 0 ? json("periods")
                                                                 : json(c.attribution_durations)},
                      {"fallback_durations", c.fallback_durations}};
  return j;
}

AnalysisConfig read_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string dump_artifact(const json& j) { return j.dump(2) + "\n"; }

json regions_model_json(const RegionModel& model) {
  json j;
  j["threshold"] = num_or_null(model.threshold);
  j["stop_reason"] = std::string(to_string(model.stop_reason));
  j["stop_linkage"] = num_or_null(model.stop_linkage);
  j["dendrogram"] = json::array();
  for (const auto& m : model.dendrogram) {
    j["dendrogram"].push_back({{"a", m.a}, {"b", m.b}, {"linkage", num_or_null(m.linkage)}});
  }
  j["regions"] = json::array();
  for (std::size_t i = 0; i < model.regions.size(); ++i) {
    j["regions"].push_back({{"id", i}, {"members", model.regions[i]}});
  }
  return j;
}

RegionModel regions_from_json(const json& j) {
  RegionModel model;
  try {
    for (const auto& r : j.at("regions")) {
      auto members = r.at("members").get<std::vector<Rank>>();
      std::sort(members.begin(), members.end());
      model.regions.push_back(std::move(members));
    }
    if (j.contains("threshold") && j["threshold"].is_number()) model.threshold = j["threshold"].get<double>();
    if (j.contains("dendrogram")) {
      for (const auto& m : j["dendrogram"]) {
        Merge merge;
        merge.a = m.at("a").get<std::vector<Rank>>();
        merge.b = m.at("b").get<std::vector<Rank>>();
        merge.linkage = m.at("linkage").is_number() ? m["linkage"].get<double>() : kInfiniteDistance;
        model.dendrogram.push_back(std::move(merge));
      }
    }
    if (j.contains("stop_reason")) {
      const auto s = j["stop_reason"].get<std::string>();
      for (auto r : {StopReason::SingleCluster, StopReason::Threshold, StopReason::SingleMessage,
                     StopReason::Unreachable}) {
        if (to_string(r) == s) model.stop_reason = r;
      }
    }
    if (j.contains("stop_linkage")) {
      model.stop_linkage = j["stop_linkage"].is_number() ? j["stop_linkage"].get<double>() : kInfiniteDistance;
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("regions file: ") + e.what());
  }
  std::sort(model.regions.begin(), model.regions.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  std::set<Rank> seen;
  for (const auto& r : model.regions) {
    if (r.empty()) throw ValidationError("regions file: empty region");
    for (Rank p : r) {
      if (!seen.insert(p).second) throw ValidationError("regions file: rank in two regions");
    }
  }
  return model;
}

Trace Analysis::load(const std::filesystem::path& trace_path, const std::filesystem::path& node_map_path,
                     const AnalysisConfig& config) {
  return load_trace(trace_path, node_map_path, config.parse, config.pairing);
}

Analysis::Analysis(Trace trace, AnalysisConfig config, std::optional<LatencyCriteria> criteria,
                   std::optional<RegionModel> regions)
    : trace_(std::move(trace)), config_(std::move(config)) {
  criteria_ = criteria ? std::move(*criteria) : build_criteria(trace_, config_.criteria);
  latencies_ = score_messages(trace_, criteria_);
  {
    const CommGraph matched = CommGraph::from_trace(trace_);
    CommGraph full(std::vector<Rank>(trace_.ranks.begin(), trace_.ranks.end()));
    for (const auto& [key, w] : matched.edges()) {
      full.add_messages(matched.vertices()[key.first], matched.vertices()[key.second], w);
    }
    graph_ = std::move(full);
  }
  if (regions) {
    regions_ = std::move(*regions);
    std::set<Rank> covered;
    for (const auto& r : regions_.regions) covered.insert(r.begin(), r.end());
    for (Rank r : trace_.ranks) {
      if (!covered.count(r)) throw ValidationError("regions file does not cover rank " + std::to_string(r));
    }
  } else {
    ClusterOptions opts;
    opts.threshold = config_.threshold;
    opts.graph = config_.single_message_stop ? &graph_ : nullptr;
    regions_ = cluster(distance_matrix(graph_, config_.distance), opts);
  }
}

const std::vector<Rank>& Analysis::region(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= regions_.regions.size()) {
    throw NotFoundError("unknown region " + std::to_string(id));
  }
  return regions_.regions[static_cast<std::size_t>(id)];
}

std::pair<Micros, Micros> Analysis::resolve_window(std::optional<Micros> start, std::optional<Micros> end) const {
  const Micros lo = trace_.events.front().timestamp;
  const Micros hi = trace_.events.back().timestamp + 1;
  const Micros s = start.value_or(lo);
  const Micros e = end.value_or(hi);
  if (s > e) throw ValidationError("window start " + std::to_string(s) + " is after end " + std::to_string(e));
  return {s, e};
}

std::vector<std::size_t> Analysis::region_messages(int id) const {
  const auto& members = region(id);
  auto in = [&](Rank r) { return std::binary_search(members.begin(), members.end(), r); };
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trace_.messages.size(); ++i) {
    const auto& m = trace_.messages[i];
    if (in(m.source) && in(m.destination)) out.push_back(i);
  }
  return out;
}

TemporalAbstraction Analysis::evolution(int id) const {
  const auto& members = region(id);
  if (region_messages(id).empty()) {
    TemporalAbstraction empty;
    empty.region = id;
    return empty;
  }
  const auto series = bucketize(trace_, latencies_, members, config_.bucket_us, id);
  auto out = detect_periods(series, config_.periods);
  out.region = id;
  return out;
}

WindowDag Analysis::dag(int id, Micros start, Micros end) const {
  if (start > end) throw ValidationError("window start is after end");
  return analyze_window(trace_, latencies_, start, end, region(id));
}

AttributionResult Analysis::attribution(int id, Micros start, Micros end) const {
  if (start >= end) throw ValidationError("attribution window must be non-empty");
  const auto& members = region(id);
  AttributionResult out;
  out.start = start;
  out.end = end;
  if (config_.attribution_durations > 0) {
    out.durations = split_window(start, end, config_.attribution_durations);
  } else {
    for (const auto& p : evolution(id).periods) {
      const Micros s = std::max(start, p.start);
      const Micros e = std::min(end, p.end);
      if (s < e) out.durations.push_back({s, e});
    }
    if (out.durations.size() < 2) out.durations = split_window(start, end, config_.fallback_durations);
  }

  std::vector<Message> msgs;
  for (std::size_t i : region_messages(id)) {
    const auto& m = trace_.messages[i];
    if (m.send_ts >= start && m.send_ts < end) msgs.push_back(m);
  }
  const auto window = select_window(trace_, start, end, members);
  out.mapping = mapping_signal(msgs, trace_.node_map, out.durations);
  out.pattern = pattern_signal(trace_, window.events, out.durations, config_.attribution.imbalance_peak);
  out.traffic = traffic_signal(msgs, criteria_, out.durations);
  out.verdict = attribute(out.mapping, out.pattern, out.traffic, config_.attribution);
  return out;
}

int Analysis::inferred_cores_per_node() const {
  std::map<NodeId, int> load;
  int most = 0;
  for (const auto& [rank, node] : trace_.node_map.mapping()) most = std::max(most, ++load[node]);
  return most;
}

RemapResult Analysis::remap(int cores_per_node) const {
  return recommend_remap(graph_, trace_.node_map, cores_per_node);
}

json Analysis::ingest_json() const {
  json j;
  j["events"] = trace_.events.size();
  j["ranks"] = trace_.ranks;
  j["messages"] = trace_.messages.size();
  std::size_t skewed = 0, inter = 0;
  for (const auto& m : trace_.messages) {
    skewed += m.skewed ? 1 : 0;
    inter += m.locality == Locality::InterNode ? 1 : 0;
  }
  j["skewed_messages"] = skewed;
  j["inter_node_messages"] = inter;
  j["intra_node_messages"] = trace_.messages.size() - inter;
  j["unmatched_sends"] = trace_.unmatched_sends.size();
  j["unmatched_receives"] = trace_.unmatched_receives.size();
  j["span"] = window_json(trace_.events.front().timestamp, trace_.events.back().timestamp + 1);
  j["issues"] = json::array();
  for (const auto& issue : trace_.issues) j["issues"].push_back({{"line", issue.line}, {"reason", issue.reason}});
  return j;
}

json Analysis::regions_json() const {
  json j = regions_model_json(regions_);
  j["beta"] = config_.distance.beta;

  std::map<Rank, int> region_of;
  for (std::size_t i = 0; i < regions_.regions.size(); ++i) {
    for (Rank r : regions_.regions[i]) region_of[r] = static_cast<int>(i);
  }
  const std::size_t nr = regions_.regions.size();
  std::vector<double> sum(nr, 0.0);
  std::vector<std::size_t> count(nr, 0), delayed(nr, 0);
  std::map<std::pair<int, int>, std::pair<std::size_t, double>> between;
  for (const auto& ml : latencies_) {
    const auto& m = trace_.messages[ml.message];
    const int a = region_of.at(m.source);
    const int b = region_of.at(m.destination);
    if (a == b) {
      sum[a] += ml.ratio;
      ++count[a];
      delayed[a] += ml.delayed ? 1 : 0;
    } else {
      auto& e = between[{std::min(a, b), std::max(a, b)}];
      ++e.first;
      e.second += ml.ratio;
    }
  }
  for (std::size_t i = 0; i < nr; ++i) {
    auto& r = j["regions"][i];
    r["messages"] = count[i];
    r["delayed"] = delayed[i];
    r["RL"] = count[i] ? json(sum[i] / static_cast<double>(count[i])) : json(nullptr);
  }
  j["edges"] = json::array();
  for (const auto& [key, e] : between) {
    j["edges"].push_back({{"a", key.first},
                          {"b", key.second},
                          {"messages", e.first},
                          {"mean_l", e.second / static_cast<double>(e.first)}});
  }
  j["processes"] = json::array();
  for (Rank r : trace_.ranks) {
    j["processes"].push_back({{"rank", r}, {"node", trace_.node_map.node_of(r)}, {"region", region_of.at(r)}});
  }
  return j;
}

json Analysis::evolution_json(int id) const {
  const auto abstraction = evolution(id);
  json j;
  j["region"] = id;
  j["ave_region"] = abstraction.periods.empty() ? json(nullptr) : json(abstraction.ave_region);
  j["periods"] = json::array();
  for (const auto& p : abstraction.periods) {
    j["periods"].push_back({{"tag", std::string(to_string(p.tag))},
                            {"start", p.start},
                            {"mid", p.mid},
                            {"end", p.end},
                            {"mean_l", p.mean_l},
                            {"delayed", p.delayed},
                            {"messages", p.count},
                            {"first_bucket", p.first_bucket},
                            {"last_bucket", p.last_bucket}});
  }
  return j;
}

json Analysis::dag_json(int id, Micros start, Micros end) const {
  const auto wd = dag(id, start, end);
  std::vector<char> entry(trace_.events.size(), 0);
  for (std::size_t i = 0; i < wd.window.events.size(); ++i) {
    if (wd.clocks.window_entry[i]) entry[wd.window.events[i]] = 1;
  }
  std::vector<std::size_t> position(trace_.events.size(), 0);
  for (std::size_t i = 0; i < wd.window.events.size(); ++i) position[wd.window.events[i]] = i;

  auto message_json = [&](std::size_t mi) {
    const auto& m = trace_.messages[mi];
    return json{{"src", m.source},
                {"dst", m.destination},
                {"size", m.size},
                {"send_ts", m.send_ts},
                {"recv_ts", m.recv_ts},
                {"t", m.transmission_time},
                {"L", latencies_[mi].ratio},
                {"delayed", latencies_[mi].delayed},
                {"locality", std::string(to_string(m.locality))}};
  };

  json j;
  j["region"] = id;
  j["window"] = window_json(start, end);
  j["ranks"] = wd.window.ranks;
  j["load_balance"] = {{"mc", wd.balance.mc},
                       {"mc_avg", wd.balance.mc_avg},
                       {"ad", wd.balance.ad},
                       {"relative_deviation", wd.balance.relative_deviation()}};
  std::size_t flagged = 0;
  for (char c : wd.clocks.window_entry) flagged += c ? 1 : 0;
  j["window_entry_receives"] = flagged;
  j["nodes"] = json::array();
  int layers = 0;
  for (const auto& node : wd.dag.nodes) {
    layers = std::max(layers, node.layer + 1);
    json events = json::array();
    json sent = json::array(), recv = json::array();
    for (std::size_t e : node.events) {
      const auto& ev = trace_.events[e];
      json je{{"kind", std::string(to_string(ev.kind))},
              {"ts", ev.timestamp},
              {"peer", ev.kind == EventKind::Send ? ev.destination : ev.source},
              {"size", ev.size},
              {"clock", wd.clocks.clocks[position[e]].vec},
              {"window_entry", entry[e] != 0}};
      const auto& mi = trace_.message_of_event[e];
      je["t"] = mi ? json(trace_.messages[*mi].transmission_time) : json(nullptr);
      je["L"] = mi ? json(latencies_[*mi].ratio) : json(nullptr);
      if (mi) {
        json bar{{"peer", je["peer"]},
                 {"size", ev.size},
                 {"t", trace_.messages[*mi].transmission_time},
                 {"L", latencies_[*mi].ratio}};
        (ev.kind == EventKind::Send ? sent : recv).push_back(std::move(bar));
      }
      events.push_back(std::move(je));
    }
    j["nodes"].push_back({{"id", node.id},
                          {"pid", node.pid},
                          {"layer", node.layer},
                          {"lb", node.lb},
                          {"node_latency", node.node_latency},
                          {"events", std::move(events)},
                          {"sent", std::move(sent)},
                          {"recv", std::move(recv)}});
  }
  j["layers"] = layers;
  j["edges"] = json::array();
  for (const auto& e : wd.dag.edges) {
    const auto& m = trace_.messages[e.message];
    j["edges"].push_back({{"from", e.from},
                          {"to", e.to},
                          {"size", m.size},
                          {"t", m.transmission_time},
                          {"L", latencies_[e.message].ratio},
                          {"message", message_json(e.message)}});
  }
  return j;
}

json Analysis::attribution_json(int id, Micros start, Micros end) const {
  const auto a = attribution(id, start, end);
  json j;
  j["region"] = id;
  j["period"] = window_json(a.start, a.end);
  j["durations"] = json::array();
  for (const auto& d : a.durations) j["durations"].push_back(window_json(d.start, d.end));

  json mapping;
  mapping["series"] = json::array();
  for (const auto& p : a.mapping.series) {
    mapping["series"].push_back({{"start", p.duration.start}, {"end", p.duration.end}, {"intra", p.intra}, {"inter", p.inter}});
  }
  mapping["totals"] = {{"intra", a.mapping.intra_total},
                       {"inter", a.mapping.inter_total},
                       {"inter_ratio", a.mapping.inter_ratio()}};

  json pattern;
  pattern["series"] = json::array();
  for (const auto& p : a.pattern.series) {
    pattern["series"].push_back({{"start", p.duration.start},
                                 {"end", p.duration.end},
                                 {"active", p.active},
                                 {"mean_lb", p.mean_lb},
                                 {"max_lb", p.max_lb},
                                 {"imbalance", p.imbalance}});
  }
  pattern["peaks"] = a.pattern.peaks;
  pattern["peak_threshold"] = a.pattern.peak_threshold;

  json traffic;
  traffic["series_by_bucket"] = json::array();
  traffic["cv_by_bucket"] = json::array();
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& b : a.traffic.buckets) {
    json mean = json::array(), norm = json::array();
    for (const auto& v : b.mean_t) mean.push_back(opt(v));
    for (const auto& v : b.normalized) norm.push_back(opt(v));
    traffic["series_by_bucket"].push_back(
        {{"bucket_start", b.bucket_start}, {"mean_t", mean}, {"normalized", norm}, {"samples", b.samples}});
    traffic["cv_by_bucket"].push_back({{"bucket_start", b.bucket_start}, {"cv", opt(b.cv)}});
  }
  traffic["score"] = a.traffic.score;
  traffic["least_fluctuating"] =
      a.traffic.least_fluctuating ? json(*a.traffic.least_fluctuating) : json(nullptr);

  j["signals"] = {{"mapping", mapping}, {"pattern", pattern}, {"traffic", traffic}};
  j["verdict"] = {{"scores",
                   {{"poor_mapping", a.verdict.scores[0]},
                    {"poor_pattern", a.verdict.scores[1]},
                    {"background_traffic", a.verdict.scores[2]}}},
                  {"dominant", std::string(to_string(a.verdict.dominant))},
                  {"mapping_flagged", a.verdict.mapping_flagged}};
  j["recommendation"] = {{"code", std::string(to_string(a.verdict.recommendation))},
                         {"text", std::string(describe(a.verdict.recommendation))}};
  if (a.verdict.dominant == Cause::PoorMapping) {
    try {
      j["remap"] = remap_json(inferred_cores_per_node());
    } catch (const InfeasibleError&) {
      j["remap"] = nullptr;
    }
  }
  return j;
}

json Analysis::remap_json(int cores_per_node) const {
  const auto r = remap(cores_per_node);
  json j;
  j["cores_per_node"] = cores_per_node;
  j["before"] = r.before;
  j["after"] = r.after;
  j["improved"] = r.improved;
  j["node_map"] = json::array();
  j["moved"] = json::array();
  for (const auto& [rank, node] : r.mapping.mapping()) {
    j["node_map"].push_back({{"rank", rank}, {"node", node}});
    if (trace_.node_map.node_of(rank) != node) j["moved"].push_back(rank);
  }
  return j;
}

}  // namespace commlat
