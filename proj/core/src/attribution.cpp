#include "commlat/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace commlat {

std::vector<Duration> split_window(Micros start, Micros end, std::size_t parts) {
  if (end <= start) throw ValidationError("empty window");
  if (parts == 0) throw ValidationError("need at least one duration");
  const Micros span = end - start;
  parts = std::min<std::size_t>(parts, static_cast<std::size_t>(span));
  std::vector<Duration> out;
  const Micros step = span / static_cast<Micros>(parts);
  for (std::size_t i = 0; i < parts; ++i) {
    const Micros s = start + static_cast<Micros>(i) * step;
    out.push_back({s, i + 1 == parts ? end : s + step});
  }
  return out;
}

std::optional<std::size_t> duration_index(std::span<const Duration> durations, Micros t) {
  auto it = std::upper_bound(durations.begin(), durations.end(), t,
                             [](Micros v, const Duration& d) { return v < d.start; });
  if (it == durations.begin()) return std::nullopt;
  --it;
  if (!it->contains(t)) return std::nullopt;
  return static_cast<std::size_t>(it - durations.begin());
}

double MappingSignal::inter_ratio() const {
  const std::size_t total = intra_total + inter_total;
  return total == 0 ? 0.0 : static_cast<double>(inter_total) / static_cast<double>(total);
}

MappingSignal mapping_signal(std::span<const Message> messages, const NodeMap& node_map,
                             std::span<const Duration> durations) {
  MappingSignal out;
  for (const auto& d : durations) out.series.push_back({d, 0, 0});
  for (const auto& m : messages) {
    auto idx = duration_index(durations, m.send_ts);
    if (!idx) continue;
    if (locality_of(m, node_map) == Locality::IntraNode) {
      ++out.series[*idx].intra;
      ++out.intra_total;
    } else {
      ++out.series[*idx].inter;
      ++out.inter_total;
    }
  }
  return out;
}

double PatternSignal::max_imbalance() const {
  double best = 0.0;
  for (const auto& p : series) best = std::max(best, p.imbalance);
  return best;
}

PatternSignal pattern_signal(const Trace& trace, std::span<const std::size_t> events,
                             std::span<const Duration> durations, double peak_threshold) {
  PatternSignal out;
  out.peak_threshold = peak_threshold;
  std::vector<std::map<Rank, double>> counts(durations.size());
  for (std::size_t e : events) {
    const auto& ev = trace.events[e];
    if (auto idx = duration_index(durations, ev.timestamp)) counts[*idx][ev.rank] += 1.0;
  }
  for (std::size_t i = 0; i < durations.size(); ++i) {
    PatternSignal::Point p;
    p.duration = durations[i];
    p.active = counts[i].size();
    if (p.active > 0) {
      std::vector<Rank> ranks;
      std::vector<double> mc;
      for (const auto& [r, c] : counts[i]) {
        ranks.push_back(r);
        mc.push_back(c);
      }
      auto lb = load_balance(ranks, mc);
      p.mean_lb = lb.mean_lb();
      p.max_lb = *std::max_element(lb.lb.begin(), lb.lb.end());
      p.imbalance = lb.relative_deviation();
    }
    if (p.imbalance > peak_threshold) ++out.peaks;
    out.series.push_back(p);
  }
  return out;
}

TrafficSignal traffic_signal(std::span<const Message> messages, const LatencyCriteria& criteria,
                             std::span<const Duration> durations) {
  TrafficSignal out;
  out.durations.assign(durations.begin(), durations.end());
  const std::size_t nd = durations.size();
  struct Acc {
    std::vector<double> sum;
    std::vector<std::size_t> count;
  };
  std::map<std::size_t, Acc> acc;
  for (const auto& m : messages) {
    if (m.locality != Locality::InterNode || m.skewed) continue;
    auto idx = duration_index(durations, m.send_ts);
    if (!idx) continue;
    auto& a = acc[criteria.bucket_of(m.size)];
    if (a.sum.empty()) {
      a.sum.assign(nd, 0.0);
      a.count.assign(nd, 0);
    }
    a.sum[*idx] += static_cast<double>(m.transmission_time);
    a.count[*idx] += 1;
  }

  double least_cv = HUGE_VAL;
  for (const auto& [bucket, a] : acc) {
    TrafficSignal::BucketSeries s;
    s.bucket_start = static_cast<std::int64_t>(bucket) * criteria.bucket_width();
    double peak = 0.0;
    std::vector<double> present;
    for (std::size_t i = 0; i < nd; ++i) {
      s.samples += a.count[i];
      if (a.count[i] == 0) {
        s.mean_t.push_back(std::nullopt);
        continue;
      }
      const double mean = a.sum[i] / static_cast<double>(a.count[i]);
      s.mean_t.push_back(mean);
      present.push_back(mean);
      peak = std::max(peak, mean);
    }
    for (const auto& v : s.mean_t) {
      s.normalized.push_back(v && peak > 0.0 ? std::optional<double>(*v / peak) : v);
    }
    if (present.size() >= 2) {
      double mean = 0.0;
      for (double v : present) mean += v;
      mean /= static_cast<double>(present.size());
      double var = 0.0;
      for (double v : present) var += (v - mean) * (v - mean);
      var /= static_cast<double>(present.size());
      s.cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
      out.score = std::max(out.score, *s.cv);
      if (*s.cv < least_cv) {
        least_cv = *s.cv;
        out.least_fluctuating = s.bucket_start;
      }
    }
    out.buckets.push_back(std::move(s));
  }
  return out;
}

std::string_view to_string(Cause cause) {
  switch (cause) {
    case Cause::PoorMapping: return "poor_mapping";
    case Cause::PoorPattern: return "poor_pattern";
    case Cause::BackgroundTraffic: return "background_traffic";
  }
  return "poor_mapping";
}

std::string_view to_string(Recommendation rec) {
  switch (rec) {
    case Recommendation::Remap: return "remap";
    case Recommendation::ReviseCommunication: return "revise_communication";
    case Recommendation::RerunLater: return "rerun_later";
  }
  return "remap";
}

std::string_view describe(Recommendation rec) {
  switch (rec) {
    case Recommendation::Remap:
      return "Place processes that exchange many messages on the same compute node; see the remap "
             "recommendation.";
    case Recommendation::ReviseCommunication:
      return "Rebalance the communication algorithm, e.g. replace hot point-to-point exchanges "
             "with collective operations.";
    case Recommendation::RerunLater:
      return "Latency tracks shared-network load; rerun when the interconnect is less busy.";
  }
  return "";
}

Recommendation recommendation_for(Cause cause) {
  switch (cause) {
    case Cause::PoorMapping: return Recommendation::Remap;
    case Cause::PoorPattern: return Recommendation::ReviseCommunication;
    case Cause::BackgroundTraffic: return Recommendation::RerunLater;
  }
  return Recommendation::Remap;
}

AttributionVerdict attribute(const MappingSignal& mapping, const PatternSignal& pattern,
                             const TrafficSignal& traffic, const AttributionThresholds& thresholds) {
  auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
  AttributionVerdict v;
  v.scores[0] = clip(mapping.inter_ratio());
  v.scores[1] = clip(pattern.max_imbalance() / thresholds.imbalance_ceiling);
  v.scores[2] = clip(traffic.score / thresholds.cv_ceiling);
  v.mapping_flagged = mapping.inter_ratio() > thresholds.inter_ratio_flag;
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (v.scores[i] > v.scores[best]) best = i;
  }
  v.dominant = static_cast<Cause>(best);
  v.recommendation = recommendation_for(v.dominant);
  return v;
}

}  // namespace commlat
