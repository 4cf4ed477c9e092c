#include "commlat/criteria.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>

namespace commlat {

LatencyCriteria::LatencyCriteria(std::int64_t bucket_width, std::vector<Bucket> intra,
                                 std::vector<Bucket> inter)
    : bucket_width_(bucket_width), intra_(std::move(intra)), inter_(std::move(inter)) {
  if (bucket_width_ <= 0) throw ValidationError("bucket width must be positive");
}

std::size_t LatencyCriteria::bucket_of(std::int64_t size) const {
  return static_cast<std::size_t>(std::max<std::int64_t>(size, 0) / bucket_width_);
}

double LatencyCriteria::criterion(std::int64_t size, Locality locality) const {
  const auto& t = table(locality);
  if (t.empty()) {
    throw ValidationError(std::string("no latency criteria for ") +
                          std::string(to_string(locality)) + "-node messages");
  }
  const std::size_t b = bucket_of(size);
  if (b < t.size()) return t[b].criterion_us;
  const double last = t.back().criterion_us;
  if (t.size() < 2) return last;
  const double slope = last - t[t.size() - 2].criterion_us;
  const double extrapolated = last + slope * static_cast<double>(b - (t.size() - 1));
  return std::max(extrapolated, last);
}

double median(std::vector<double> samples) {
  if (samples.empty()) throw ValidationError("median of empty sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  if (n % 2 == 1) return samples[n / 2];
  return 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

namespace {

// Medians for the non-empty buckets, linear interpolation across gaps and
// flat extension before the first calibrated bucket.
std::vector<LatencyCriteria::Bucket> fill_table(const std::vector<std::vector<double>>& samples) {
  std::vector<LatencyCriteria::Bucket> out(samples.size());
  std::vector<std::size_t> known;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b].empty()) continue;
    out[b].criterion_us = std::max(median(samples[b]), kMinCriterionUs);
    out[b].samples = samples[b].size();
    known.push_back(b);
  }
  if (known.empty()) return {};
  out.resize(known.back() + 1);
  for (std::size_t b = 0; b < known.front(); ++b) out[b].criterion_us = out[known.front()].criterion_us;
  for (std::size_t k = 0; k + 1 < known.size(); ++k) {
    const std::size_t lo = known[k], hi = known[k + 1];
    const double c0 = out[lo].criterion_us, c1 = out[hi].criterion_us;
    for (std::size_t b = lo + 1; b < hi; ++b) {
      const double frac = static_cast<double>(b - lo) / static_cast<double>(hi - lo);
      out[b].criterion_us = c0 + (c1 - c0) * frac;
    }
  }
  return out;
}

}  // namespace

LatencyCriteria criteria_from_samples(std::int64_t bucket_width,
                                      const std::vector<std::vector<double>>& intra,
                                      const std::vector<std::vector<double>>& inter) {
  return LatencyCriteria(bucket_width, fill_table(intra), fill_table(inter));
}

LatencyCriteria build_criteria(const Trace& trace, const CriteriaOptions& options) {
  if (options.bucket_width <= 0) throw ValidationError("bucket width must be positive");
  if (options.max_samples_per_bucket == 0) throw ValidationError("max samples must be positive");

  struct Reservoir {
    std::vector<double> kept;
    std::size_t seen = 0;
  };
  std::vector<Reservoir> by_locality[2];
  std::mt19937_64 rng(options.seed);

  for (const auto& msg : trace.messages) {
    if (msg.skewed) continue;
    auto& table = by_locality[msg.locality == Locality::IntraNode ? 0 : 1];
    const auto b = static_cast<std::size_t>(msg.size / options.bucket_width);
    if (table.size() <= b) table.resize(b + 1);
    auto& res = table[b];
    ++res.seen;
    const double t = static_cast<double>(msg.transmission_time);
    if (res.kept.size() < options.max_samples_per_bucket) {
      res.kept.push_back(t);
    } else {
      // Algorithm R.
      std::uint64_t j = rng() % res.seen;
      if (j < options.max_samples_per_bucket) res.kept[j] = t;
    }
  }

  std::vector<std::vector<double>> samples[2];
  for (int l = 0; l < 2; ++l) {
    for (auto& res : by_locality[l]) samples[l].push_back(std::move(res.kept));
  }
  auto criteria = criteria_from_samples(options.bucket_width, samples[0], samples[1]);
  for (Locality loc : {Locality::IntraNode, Locality::InterNode}) {
    if (criteria.table(loc).empty()) {
      throw ValidationError("cannot calibrate " + std::string(to_string(loc)) +
                            "-node criteria: no " + std::string(to_string(loc)) +
                            "-node messages in trace");
    }
  }
  return criteria;
}

MessageLatency score_message(const Message& msg, const LatencyCriteria& criteria,
                             std::size_t index) {
  const double c = criteria.criterion(msg.size, msg.locality);
  MessageLatency out;
  out.message = index;
  out.ratio = std::max(0.0, static_cast<double>(msg.transmission_time)) / c;
  out.delayed = out.ratio > 1.0;
  return out;
}

std::vector<MessageLatency> score_messages(const Trace& trace, const LatencyCriteria& criteria) {
  std::vector<MessageLatency> out;
  out.reserve(trace.messages.size());
  for (std::size_t i = 0; i < trace.messages.size(); ++i) {
    out.push_back(score_message(trace.messages[i], criteria, i));
  }
  return out;
}

RegionLatency region_latency(std::span<const MessageLatency> messages, int region) {
  if (messages.empty()) throw ValidationError("region latency of an empty region");
  double sum = 0.0;
  for (const auto& m : messages) sum += m.ratio;
  return {region, sum / static_cast<double>(messages.size()), messages.size()};
}

std::string write_criteria_csv(const LatencyCriteria& criteria) {
  std::string out = "# bucket_width=" + std::to_string(criteria.bucket_width()) + "\n";
  out += "locality,bucket_start,criterion_us,samples\n";
  char buf[64];
  for (Locality loc : {Locality::IntraNode, Locality::InterNode}) {
    const auto& t = criteria.table(loc);
    for (std::size_t b = 0; b < t.size(); ++b) {
      std::snprintf(buf, sizeof buf, "%.17g", t[b].criterion_us);
      out += std::string(to_string(loc)) + ',' +
             std::to_string(static_cast<std::int64_t>(b) * criteria.bucket_width()) + ',' + buf +
             ',' + std::to_string(t[b].samples) + '\n';
    }
  }
  return out;
}

LatencyCriteria parse_criteria_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::pair<std::int64_t, LatencyCriteria::Bucket>> rows[2];
  std::size_t line_no = 0;
  std::int64_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# bucket_width=", 0) == 0) {
      width = std::atoll(line.c_str() + 15);
      continue;
    }
    if (line.empty() || line.front() == '#' || line.rfind("locality,", 0) == 0) continue;
    std::istringstream fields(line);
    std::string loc, start, crit, samples;
    if (!std::getline(fields, loc, ',') || !std::getline(fields, start, ',') ||
        !std::getline(fields, crit, ',') || !std::getline(fields, samples, ',')) {
      throw ValidationError("criteria line " + std::to_string(line_no) + ": expected 4 fields");
    }
    int l = loc == "intra" ? 0 : loc == "inter" ? 1 : -1;
    if (l < 0) throw ValidationError("criteria line " + std::to_string(line_no) + ": bad locality");
    LatencyCriteria::Bucket bucket;
    std::int64_t bucket_start = 0;
    try {
      bucket_start = std::stoll(start);
      bucket.criterion_us = std::stod(crit);
      bucket.samples = std::stoull(samples);
    } catch (const std::exception&) {
      throw ValidationError("criteria line " + std::to_string(line_no) + ": bad number");
    }
    if (!(bucket.criterion_us > 0.0))
      throw ValidationError("criteria line " + std::to_string(line_no) + ": criterion must be > 0");
    rows[l].emplace_back(bucket_start, bucket);
  }
  // Without the width comment, infer it from consecutive bucket starts.
  for (auto& r : rows) {
    if (width <= 0 && r.size() >= 2) width = r[1].first - r[0].first;
  }
  if (width <= 0) width = 50;
  std::vector<LatencyCriteria::Bucket> tables[2];
  for (int l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < rows[l].size(); ++i) {
      if (rows[l][i].first != static_cast<std::int64_t>(i) * width)
        throw ValidationError("criteria buckets must be contiguous from 0");
      tables[l].push_back(rows[l][i].second);
    }
  }
  return LatencyCriteria(width, std::move(tables[0]), std::move(tables[1]));
}

LatencyCriteria read_criteria(const std::filesystem::path& path) {
  return parse_criteria_csv(read_file(path));
}

}  // namespace commlat
