#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "commlat/criteria.hpp"
#include "commlat/trace.hpp"

namespace commlat {

struct Segment {
  Micros start_ts = 0;
  Micros end_ts = 0;  // exclusive
  double mean_l = 0.0;
  std::size_t delayed = 0;
  std::size_t count = 0;
};

struct LatencySeries {
  int region = 0;
  Micros bucket = 0;
  std::vector<Segment> segments;

  // Message-weighted mean L over the whole series (Ave_region).
  double ave_region() const;
};

// Default bucket: span / 200, at least 1 ms.
Micros default_bucket(Micros span);

// Messages with both endpoints in `region`, bucketed by send timestamp.
// `bucket` <= 0 picks the default. Throws ValidationError if the region has
// no messages.
LatencySeries bucketize(const Trace& trace, std::span<const MessageLatency> latencies,
                        const std::vector<Rank>& region, Micros bucket = 0, int region_id = 0);

// Series from precomputed bucket means (one message per bucket), for
// synthetic inputs.
LatencySeries series_from_means(std::span<const double> means, Micros bucket = 1000,
                                Micros origin = 0);

enum class PeriodTag { GrowthTrend, SteadyTrend, Compressed };
std::string_view to_string(PeriodTag tag);

struct Period {
  PeriodTag tag = PeriodTag::Compressed;
  Micros start = 0;
  Micros mid = 0;
  Micros end = 0;
  double mean_l = 0.0;
  std::size_t delayed = 0;
  std::size_t count = 0;
  std::size_t first_bucket = 0;
  std::size_t last_bucket = 0;  // inclusive
};

struct TemporalAbstraction {
  int region = 0;
  double ave_region = 0.0;
  std::vector<Period> periods;
};

struct PeriodOptions {
  std::size_t window = 5;
  // Growth threshold on the least-squares slope, per bucket. Unset means
  // slope_min_fraction * Ave_region.
  std::optional<double> slope_min;
  double slope_min_fraction = 0.05;
  double cv_max = 0.15;
  // A steady window must sit at least this fraction above Ave_region.
  double steady_margin = 0.1;
  // Overrides the series average, e.g. when the series is a slice of a
  // longer region history.
  std::optional<double> ave_region;
};

// Each bucket takes the label of the window centered on it (clamped at the
// series ends): growth if that window's slope reaches slope_min, steady if
// its mean is high and its coefficient of variation low, compressed
// otherwise. Growth edges are then moved to the buckets where the
// bucket-to-bucket rise starts and stops. Runs of equal labels become periods.
TemporalAbstraction detect_periods(const LatencySeries& series, const PeriodOptions& options = {});

}  // namespace commlat
