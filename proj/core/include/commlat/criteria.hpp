#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "commlat/trace.hpp"

namespace commlat {

// Statistical transmission-time baseline per (locality, size bucket).
// Bucket b covers sizes [b * bucket_width, (b + 1) * bucket_width).
class LatencyCriteria {
 public:
  struct Bucket {
    double criterion_us = 0.0;
    std::size_t samples = 0;  // 0 for interpolated buckets

    bool operator==(const Bucket&) const = default;
  };

  LatencyCriteria() = default;
  LatencyCriteria(std::int64_t bucket_width, std::vector<Bucket> intra, std::vector<Bucket> inter);

  std::int64_t bucket_width() const { return bucket_width_; }
  std::size_t bucket_of(std::int64_t size) const;
  const std::vector<Bucket>& table(Locality locality) const {
    return locality == Locality::IntraNode ? intra_ : inter_;
  }

  // C for a message of this size; sizes past the last calibrated bucket are
  // extrapolated with the slope of the last two buckets, floored at the last
  // criterion.
  double criterion(std::int64_t size, Locality locality) const;

  bool operator==(const LatencyCriteria&) const = default;

 private:
  std::int64_t bucket_width_ = 50;
  std::vector<Bucket> intra_;
  std::vector<Bucket> inter_;
};

struct CriteriaOptions {
  std::int64_t bucket_width = 50;
  std::size_t max_samples_per_bucket = 10000;
  std::uint64_t seed = 0x5eed;
};

// Median of the samples (mean of the two middle values for even counts).
double median(std::vector<double> samples);

// Smallest criterion we allow; transmission times are integer microseconds,
// so a zero median would make every ratio infinite.
inline constexpr double kMinCriterionUs = 1.0;

LatencyCriteria build_criteria(const Trace& trace, const CriteriaOptions& options = {});

// Lower-level entry: raw samples per bucket index, one vector per locality.
// Empty buckets are interpolated.
LatencyCriteria criteria_from_samples(std::int64_t bucket_width,
                                      const std::vector<std::vector<double>>& intra,
                                      const std::vector<std::vector<double>>& inter);

struct MessageLatency {
  std::size_t message = 0;  // index into Trace::messages
  double ratio = 0.0;       // L = t / C
  bool delayed = false;     // L > 1
};

MessageLatency score_message(const Message& msg, const LatencyCriteria& criteria,
                             std::size_t index = 0);
std::vector<MessageLatency> score_messages(const Trace& trace, const LatencyCriteria& criteria);

struct RegionLatency {
  int region = 0;
  double rl = 0.0;
  std::size_t count = 0;
};

// Arithmetic mean of the ratios. Throws ValidationError on an empty list.
RegionLatency region_latency(std::span<const MessageLatency> messages, int region = 0);

// CSV `locality,bucket_start,criterion_us,samples`.
std::string write_criteria_csv(const LatencyCriteria& criteria);
LatencyCriteria parse_criteria_csv(std::string_view text);
LatencyCriteria read_criteria(const std::filesystem::path& path);

}  // namespace commlat
