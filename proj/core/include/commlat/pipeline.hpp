#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commlat/attribution.hpp"
#include "commlat/causality.hpp"
#include "commlat/clustering.hpp"
#include "commlat/correlation.hpp"
#include "commlat/criteria.hpp"
#include "commlat/temporal.hpp"
#include "commlat/trace.hpp"

namespace commlat {

struct AnalysisConfig {
  ParseOptions parse;
  PairingOptions pairing;
  CriteriaOptions criteria;
  DistanceOptions distance;
  double threshold = 2.0;
  bool single_message_stop = true;
  Micros bucket_us = 0;  // 0: default_bucket over the trace span
  PeriodOptions periods;
  AttributionThresholds attribution;
  // 0: attribution durations follow the region's temporal periods.
  std::size_t attribution_durations = 0;
  std::size_t fallback_durations = 8;
};

// Missing keys keep their defaults; unknown keys are rejected.
AnalysisConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnalysisConfig& config);
AnalysisConfig read_config(const std::filesystem::path& path);

// Canonical artifact serialization shared by every front end.
std::string dump_artifact(const nlohmann::json& j);

nlohmann::json regions_model_json(const RegionModel& model);
RegionModel regions_from_json(const nlohmann::json& j);

struct AttributionResult {
  Micros start = 0;
  Micros end = 0;
  std::vector<Duration> durations;
  MappingSignal mapping;
  PatternSignal pattern;
  TrafficSignal traffic;
  AttributionVerdict verdict;
};

// Immutable analysis of one (trace, config) pair. Criteria and regions are
// computed on construction unless supplied from earlier stage outputs.
class Analysis {
 public:
  Analysis(Trace trace, AnalysisConfig config, std::optional<LatencyCriteria> criteria = std::nullopt,
           std::optional<RegionModel> regions = std::nullopt);

  static Trace load(const std::filesystem::path& trace_path,
                    const std::filesystem::path& node_map_path, const AnalysisConfig& config);

  const Trace& trace() const { return trace_; }
  const AnalysisConfig& config() const { return config_; }
  const LatencyCriteria& criteria() const { return criteria_; }
  const std::vector<MessageLatency>& latencies() const { return latencies_; }
  const CommGraph& graph() const { return graph_; }
  const RegionModel& regions() const { return regions_; }
  const std::vector<Rank>& region(int id) const;  // throws NotFoundError

  // Defaults to the trace span when unset. Throws ValidationError when
  // start > end.
  std::pair<Micros, Micros> resolve_window(std::optional<Micros> start, std::optional<Micros> end) const;

  std::vector<std::size_t> region_messages(int id) const;
  TemporalAbstraction evolution(int id) const;
  WindowDag dag(int id, Micros start, Micros end) const;
  AttributionResult attribution(int id, Micros start, Micros end) const;
  RemapResult remap(int cores_per_node) const;
  int inferred_cores_per_node() const;

  nlohmann::json ingest_json() const;
  nlohmann::json regions_json() const;
  nlohmann::json evolution_json(int id) const;
  nlohmann::json dag_json(int id, Micros start, Micros end) const;
  nlohmann::json attribution_json(int id, Micros start, Micros end) const;
  nlohmann::json remap_json(int cores_per_node) const;

 private:
  Trace trace_;
  AnalysisConfig config_;
  LatencyCriteria criteria_;
  std::vector<MessageLatency> latencies_;
  CommGraph graph_;
  RegionModel regions_;
};

}  // namespace commlat
