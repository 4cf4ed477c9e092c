#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "commlat/causality.hpp"
#include "commlat/correlation.hpp"
#include "commlat/criteria.hpp"
#include "commlat/trace.hpp"

namespace commlat {

// Half-open [start, end).
struct Duration {
  Micros start = 0;
  Micros end = 0;

  bool contains(Micros t) const { return t >= start && t < end; }
  bool operator==(const Duration&) const = default;
};

// `parts` equal slices of [start, end); the last absorbs the remainder.
std::vector<Duration> split_window(Micros start, Micros end, std::size_t parts);

// Index of the duration holding t, if any.
std::optional<std::size_t> duration_index(std::span<const Duration> durations, Micros t);

struct MappingSignal {
  struct Point {
    Duration duration;
    std::size_t intra = 0;
    std::size_t inter = 0;
  };
  std::vector<Point> series;
  std::size_t intra_total = 0;
  std::size_t inter_total = 0;

  double inter_ratio() const;
};

// Messages are assigned to durations by send timestamp.
MappingSignal mapping_signal(std::span<const Message> messages, const NodeMap& node_map,
                             std::span<const Duration> durations);

struct PatternSignal {
  struct Point {
    Duration duration;
    std::size_t active = 0;
    double mean_lb = 0.0;    // mean of LB_p over active processes
    double max_lb = 0.0;
    double imbalance = 0.0;  // AD / mc_avg
  };
  std::vector<Point> series;
  double peak_threshold = 0.0;
  std::size_t peaks = 0;  // durations with imbalance above the threshold

  double max_imbalance() const;
};

PatternSignal pattern_signal(const Trace& trace, std::span<const std::size_t> events,
                             std::span<const Duration> durations, double peak_threshold);

struct TrafficSignal {
  struct BucketSeries {
    std::int64_t bucket_start = 0;
    std::vector<std::optional<double>> mean_t;      // per duration
    std::vector<std::optional<double>> normalized;  // mean_t / max(mean_t)
    std::optional<double> cv;                       // needs >= 2 durations
    std::size_t samples = 0;
  };
  std::vector<Duration> durations;
  std::vector<BucketSeries> buckets;
  double score = 0.0;  // largest per-bucket coefficient of variation
  std::optional<std::int64_t> least_fluctuating;
};

// Inter-node, non-skewed messages only.
TrafficSignal traffic_signal(std::span<const Message> messages, const LatencyCriteria& criteria,
                             std::span<const Duration> durations);

enum class Cause { PoorMapping, PoorPattern, BackgroundTraffic };
enum class Recommendation { Remap, ReviseCommunication, RerunLater };
std::string_view to_string(Cause cause);
std::string_view to_string(Recommendation rec);
std::string_view describe(Recommendation rec);
Recommendation recommendation_for(Cause cause);

struct AttributionThresholds {
  double inter_ratio_flag = 0.5;
  double imbalance_peak = 0.35;
  double imbalance_ceiling = 1.0;
  double cv_ceiling = 1.0;
};

struct AttributionVerdict {
  // Indexed by Cause.
  std::array<double, 3> scores{};
  Cause dominant = Cause::PoorMapping;
  Recommendation recommendation = Recommendation::Remap;
  bool mapping_flagged = false;

  bool operator==(const AttributionVerdict&) const = default;
};

// Scores in [0, 1]: inter-node ratio, peak imbalance over its ceiling, and
// traffic CV over its ceiling. Ties resolve mapping > pattern > traffic.
AttributionVerdict attribute(const MappingSignal& mapping, const PatternSignal& pattern,
                             const TrafficSignal& traffic, const AttributionThresholds& thresholds = {});

// Messages exchanged across nodes under `node_map`.
std::int64_t inter_node_messages(const CommGraph& graph, const NodeMap& node_map);

struct RemapResult {
  NodeMap mapping;
  std::int64_t before = 0;
  std::int64_t after = 0;
  bool improved = false;
};

// Capacity-constrained min-cut placement: greedy growth from several seeds
// plus the input mapping, each refined by improving moves and pairwise swaps.
// Never returns a mapping with more inter-node messages than the input.
// Throws InfeasibleError when nodes * cores_per_node < processes.
RemapResult recommend_remap(const CommGraph& graph, const NodeMap& node_map, int cores_per_node);

}  // namespace commlat
