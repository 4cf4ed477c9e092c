#include "commlat/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace commlat {

double LatencySeries::ave_region() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : segments) {
    sum += s.mean_l * static_cast<double>(s.count);
    count += s.count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Micros default_bucket(Micros span) { return std::max<Micros>(span / 200, 1000); }

LatencySeries bucketize(const Trace& trace, std::span<const MessageLatency> latencies,
                        const std::vector<Rank>& region, Micros bucket, int region_id) {
  std::vector<Rank> members = region;
  std::sort(members.begin(), members.end());
  auto in_region = [&](Rank r) { return std::binary_search(members.begin(), members.end(), r); };

  std::vector<const MessageLatency*> selected;
  Micros lo = 0, hi = 0;
  for (const auto& ml : latencies) {
    const auto& m = trace.messages.at(ml.message);
    if (!in_region(m.source) || !in_region(m.destination)) continue;
    if (selected.empty()) {
      lo = hi = m.send_ts;
    } else {
      lo = std::min(lo, m.send_ts);
      hi = std::max(hi, m.send_ts);
    }
    selected.push_back(&ml);
  }
  if (selected.empty()) throw ValidationError("region " + std::to_string(region_id) + " has no messages");
  if (bucket <= 0) bucket = default_bucket(hi - lo);

  LatencySeries series;
  series.region = region_id;
  series.bucket = bucket;
  const auto n = static_cast<std::size_t>((hi - lo) / bucket + 1);
  series.segments.resize(n);
  std::vector<double> sums(n, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    series.segments[b].start_ts = lo + static_cast<Micros>(b) * bucket;
    series.segments[b].end_ts = series.segments[b].start_ts + bucket;
  }
  for (const auto* ml : selected) {
    const auto b = static_cast<std::size_t>((trace.messages[ml->message].send_ts - lo) / bucket);
    sums[b] += ml->ratio;
    series.segments[b].count += 1;
    series.segments[b].delayed += ml->delayed ? 1 : 0;
  }
  for (std::size_t b = 0; b < n; ++b) {
    auto& s = series.segments[b];
    s.mean_l = s.count ? sums[b] / static_cast<double>(s.count) : 0.0;
  }
  return series;
}

LatencySeries series_from_means(std::span<const double> means, Micros bucket, Micros origin) {
  LatencySeries series;
  series.bucket = bucket;
  for (std::size_t b = 0; b < means.size(); ++b) {
    Segment s;
    s.start_ts = origin + static_cast<Micros>(b) * bucket;
    s.end_ts = s.start_ts + bucket;
    s.mean_l = means[b];
    s.count = 1;
    s.delayed = means[b] > 1.0 ? 1 : 0;
    series.segments.push_back(s);
  }
  return series;
}

std::string_view to_string(PeriodTag tag) {
  switch (tag) {
    case PeriodTag::GrowthTrend: return "growth";
    case PeriodTag::SteadyTrend: return "steady";
    case PeriodTag::Compressed: return "compressed";
  }
  return "compressed";
}

namespace {

Period make_period(const LatencySeries& series, PeriodTag tag, std::size_t first, std::size_t last) {
  Period p;
  p.tag = tag;
  p.first_bucket = first;
  p.last_bucket = last;
  p.start = series.segments[first].start_ts;
  p.end = series.segments[last].end_ts;
  p.mid = p.start + (p.end - p.start) / 2;
  double sum = 0.0;
  for (std::size_t b = first; b <= last; ++b) {
    const auto& s = series.segments[b];
    sum += s.mean_l * static_cast<double>(s.count);
    p.count += s.count;
    p.delayed += s.delayed;
  }
  p.mean_l = p.count ? sum / static_cast<double>(p.count) : 0.0;
  return p;
}

}  // namespace

TemporalAbstraction detect_periods(const LatencySeries& series, const PeriodOptions& options) {
  if (options.window < 3) throw ValidationError("sliding window must span at least 3 buckets");
  TemporalAbstraction out;
  out.region = series.region;
  out.ave_region = options.ave_region.value_or(series.ave_region());
  const std::size_t n = series.segments.size();
  if (n == 0) return out;
  if (n < options.window) {
    out.periods.push_back(make_period(series, PeriodTag::Compressed, 0, n - 1));
    return out;
  }

  const double ave = out.ave_region;
  const double slope_min = options.slope_min.value_or(options.slope_min_fraction * ave);
  const std::size_t w = options.window;
  const double xbar = static_cast<double>(w - 1) / 2.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < w; ++k) sxx += (k - xbar) * (k - xbar);

  const std::size_t windows = n - w + 1;
  std::vector<PeriodTag> window_tag(windows, PeriodTag::Compressed);
  // Label each window would get without the growth rule.
  std::vector<PeriodTag> level_tag(windows, PeriodTag::Compressed);
  for (std::size_t i = 0; i < windows; ++i) {
    bool complete = true;
    double mean = 0.0;
    for (std::size_t k = 0; k < w; ++k) {
      complete = complete && series.segments[i + k].count > 0;
      mean += series.segments[i + k].mean_l;
    }
    if (!complete) continue;
    mean /= static_cast<double>(w);
    double sxy = 0.0, var = 0.0;
    for (std::size_t k = 0; k < w; ++k) {
      const double y = series.segments[i + k].mean_l;
      sxy += (k - xbar) * (y - mean);
      var += (y - mean) * (y - mean);
    }
    const double slope = sxy / sxx;
    const double cv = mean > 0.0 ? std::sqrt(var / static_cast<double>(w)) / mean : HUGE_VAL;
    if (mean >= (1.0 + options.steady_margin) * ave && mean > 0.0 && cv <= options.cv_max) {
      level_tag[i] = PeriodTag::SteadyTrend;
    }
    window_tag[i] = slope > 0.0 && slope >= slope_min ? PeriodTag::GrowthTrend : level_tag[i];
  }

  const std::size_t half = w / 2;
  std::vector<PeriodTag> label(n), level(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = std::min(b >= half ? b - half : 0, windows - 1);
    label[b] = window_tag[i];
    level[b] = level_tag[i];
  }

  // Window labels blur growth edges by up to half a window. Move each edge
  // to where the bucket-to-bucket rise starts and stops.
  auto rises = [&](std::size_t b) {
    if (n < 2) return false;
    const std::size_t hi = b == 0 ? 1 : b;
    if (series.segments[hi].count == 0 || series.segments[hi - 1].count == 0) return false;
    const double step = series.segments[hi].mean_l - series.segments[hi - 1].mean_l;
    return step > 0.0 && step >= slope_min;
  };
  for (std::size_t f = 0; f < n;) {
    if (label[f] != PeriodTag::GrowthTrend) {
      ++f;
      continue;
    }
    std::size_t l = f;
    while (l + 1 < n && label[l + 1] == PeriodTag::GrowthTrend) ++l;
    std::size_t nf = f, nl = l;
    while (nf < nl && !rises(nf)) ++nf;
    while (nl > nf && !rises(nl)) --nl;
    while (nf > 0 && rises(nf - 1)) --nf;
    while (nl + 1 < n && rises(nl + 1)) ++nl;
    for (std::size_t b = f; b <= l; ++b) {
      if (b < nf || b > nl) label[b] = level[b];
    }
    for (std::size_t b = nf; b <= nl; ++b) label[b] = PeriodTag::GrowthTrend;
    f = nl + 1;
  }
  std::size_t start = 0;
  for (std::size_t b = 1; b <= n; ++b) {
    if (b == n || label[b] != label[start]) {
      out.periods.push_back(make_period(series, label[start], start, b - 1));
      start = b;
    }
  }
  return out;
}

}  // namespace commlat
