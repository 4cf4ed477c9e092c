#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "commlat/attribution.hpp"
#include "support.hpp"

using namespace commlat;
using namespace commlat::testing;

namespace {

std::vector<std::size_t> all_events(const Trace& t) {
  std::vector<std::size_t> e(t.events.size());
  std::iota(e.begin(), e.end(), 0);
  return e;
}

MappingSignal mapping_of(std::size_t intra, std::size_t inter) {
  MappingSignal m;
  m.intra_total = intra;
  m.inter_total = inter;
  return m;
}

PatternSignal pattern_of(double imbalance) {
  PatternSignal p;
  p.series.push_back({{0, 1}, 4, 0.0, 0.0, imbalance});
  return p;
}

TrafficSignal traffic_of(double score) {
  TrafficSignal t;
  t.score = score;
  return t;
}

// Inter-node messages of one size whose transmission times per duration are
// given; durations are [1000 d, 1000 (d + 1)).
std::vector<Message> inter_messages(const std::vector<Micros>& times, std::int64_t size = 64) {
  std::vector<Message> out;
  for (std::size_t d = 0; d < times.size(); ++d) {
    Message m;
    m.source = 0;
    m.destination = 1;
    m.size = size;
    m.send_ts = static_cast<Micros>(d) * 1000 + 10;
    m.transmission_time = times[d];
    m.recv_ts = m.send_ts + times[d];
    m.locality = Locality::InterNode;
    out.push_back(m);
  }
  return out;
}

LatencyCriteria flat_criteria() {
  return criteria_from_samples(50, {{5.0}}, {{20.0}});
}

double population_cv(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size())) / mean;
}

}  // namespace

TEST(Durations, SplitAndLookup) {
  auto d = split_window(0, 10, 3);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0], (Duration{0, 3}));
  EXPECT_EQ(d[1], (Duration{3, 6}));
  EXPECT_EQ(d[2], (Duration{6, 10}));
  EXPECT_EQ(duration_index(d, 0), 0u);
  EXPECT_EQ(duration_index(d, 6), 2u);
  EXPECT_FALSE(duration_index(d, 10).has_value());
  EXPECT_FALSE(duration_index(d, -1).has_value());
}

TEST(MappingSignalTest, AllIntraIsZero) {
  auto t = make_trace({send(1, 2, 0), recv(1, 2, 5), send(2, 1, 10), recv(2, 1, 15)},
                      {{1, 0}, {2, 0}});
  auto d = split_window(0, 20, 2);
  auto m = mapping_signal(t.messages, t.node_map, d);
  EXPECT_EQ(m.intra_total, 2u);
  EXPECT_EQ(m.inter_total, 0u);
  EXPECT_EQ(m.inter_ratio(), 0.0);
  EXPECT_EQ(m.series[0].intra, 1u);
  EXPECT_EQ(m.series[1].intra, 1u);
}

TEST(MappingSignalTest, ReportedCountsAreFlagged) {
  auto m = mapping_of(252545, 281753);
  EXPECT_NEAR(m.inter_ratio(), 281753.0 / (252545.0 + 281753.0), 1e-12);
  EXPECT_NEAR(m.inter_ratio(), 0.527, 5e-4);
  auto v = attribute(m, pattern_of(0.0), traffic_of(0.0));
  EXPECT_TRUE(v.mapping_flagged);
  EXPECT_EQ(v.dominant, Cause::PoorMapping);
}

TEST(MappingSignalTest, MatchesDirectEnumeration) {
  std::mt19937_64 rng(51);
  auto events = random_events(rng, 8, 300, 5000);
  std::map<Rank, NodeId> nodes;
  for (Rank r = 0; r < 8; ++r) nodes[r] = r % 2;
  auto t = make_trace(events, nodes);
  auto d = split_window(0, 5100, 5);
  auto m = mapping_signal(t.messages, t.node_map, d);
  std::vector<std::size_t> intra(5, 0), inter(5, 0);
  for (const auto& msg : t.messages) {
    const auto i = static_cast<std::size_t>(std::min<Micros>(msg.send_ts / 1020, 4));
    if (msg.source % 2 == msg.destination % 2) {
      ++intra[i];
    } else {
      ++inter[i];
    }
  }
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(m.series[i].intra, intra[i]);
    EXPECT_EQ(m.series[i].inter, inter[i]);
  }
  EXPECT_EQ(m.intra_total + m.inter_total, t.messages.size());
}

TEST(MappingSignalTest, SizeDoesNotMatter) {
  auto a = make_trace({send(1, 2, 0, 8), recv(1, 2, 5, 8)}, {{1, 0}, {2, 1}});
  auto b = make_trace({send(1, 2, 0, 8000), recv(1, 2, 5, 8000)}, {{1, 0}, {2, 1}});
  auto d = split_window(0, 10, 1);
  EXPECT_EQ(mapping_signal(a.messages, a.node_map, d).inter_ratio(),
            mapping_signal(b.messages, b.node_map, d).inter_ratio());
}

TEST(PatternSignalTest, BalancedDurationIsZero) {
  // Ring 0->1->2->3->0.
  std::vector<CommEvent> ev;
  for (Rank r = 0; r < 4; ++r) {
    ev.push_back(send(r, (r + 1) % 4, 10));
    ev.push_back(recv(r, (r + 1) % 4, 20));
  }
  auto t = make_trace(ev);
  auto d = split_window(0, 100, 1);
  auto p = pattern_signal(t, all_events(t), d, 0.35);
  ASSERT_EQ(p.series.size(), 1u);
  EXPECT_EQ(p.series[0].active, 4u);
  EXPECT_EQ(p.series[0].mean_lb, 0.0);
  EXPECT_EQ(p.series[0].imbalance, 0.0);
  EXPECT_EQ(p.peaks, 0u);
}

TEST(PatternSignalTest, OneHotProcess) {
  // mc = {10, 1, 1, 1}: rank 0 has 10 events, the others 1 each.
  std::vector<CommEvent> ev;
  for (Rank r = 1; r <= 3; ++r) {
    ev.push_back(send(0, r, 10));
    ev.push_back(recv(0, r, 20));
  }
  for (int k = 0; k < 7; ++k) ev.push_back(send(0, 9, 30 + k));
  auto t = make_trace(ev);
  auto d = split_window(0, 100, 1);
  auto p = pattern_signal(t, all_events(t), d, 0.35);
  const auto& pt = p.series[0];
  EXPECT_EQ(pt.active, 4u);
  EXPECT_DOUBLE_EQ(pt.mean_lb, 1.0);
  EXPECT_DOUBLE_EQ(pt.max_lb, 2.0);
  EXPECT_NEAR(pt.imbalance, 3.375 / 3.25, 1e-12);
}

TEST(PatternSignalTest, PeakCountEqualsImbalancedDurations) {
  std::vector<CommEvent> ev;
  const int durations = 8;
  int imbalanced = 0;
  for (int d = 0; d < durations; ++d) {
    const Micros base = d * 1000;
    if (d % 3 == 1) {
      ++imbalanced;
      for (Rank r = 1; r <= 3; ++r) {
        for (int k = 0; k < 3; ++k) {
          ev.push_back(send(0, r, base + 10 + k));
          ev.push_back(recv(0, r, base + 100 + k));
        }
      }
    } else {
      for (Rank r = 0; r < 4; ++r) {
        ev.push_back(send(r, (r + 1) % 4, base + 10));
        ev.push_back(recv(r, (r + 1) % 4, base + 100));
      }
    }
  }
  auto t = make_trace(ev);
  auto d = split_window(0, durations * 1000, durations);
  auto p = pattern_signal(t, all_events(t), d, 0.35);
  EXPECT_EQ(p.peaks, static_cast<std::size_t>(imbalanced));
  EXPECT_NEAR(p.max_imbalance(), 0.5, 1e-12);
}

TEST(TrafficSignalTest, ConstantTimesHaveZeroFluctuation) {
  auto msgs = inter_messages({12, 12, 12, 12});
  auto s = traffic_signal(msgs, flat_criteria(), split_window(0, 4000, 4));
  ASSERT_EQ(s.buckets.size(), 1u);
  ASSERT_TRUE(s.buckets[0].cv.has_value());
  EXPECT_EQ(*s.buckets[0].cv, 0.0);
  EXPECT_EQ(s.score, 0.0);
  EXPECT_EQ(s.least_fluctuating, 50);
  for (const auto& n : s.buckets[0].normalized) EXPECT_DOUBLE_EQ(*n, 1.0);
}

TEST(TrafficSignalTest, SpikeCv) {
  auto msgs = inter_messages({10, 10, 40, 10});
  auto s = traffic_signal(msgs, flat_criteria(), split_window(0, 4000, 4));
  const double expected = population_cv({10, 10, 40, 10});
  EXPECT_NEAR(expected, 0.742, 1e-3);
  EXPECT_NEAR(s.score, expected, 1e-12);
  EXPECT_DOUBLE_EQ(*s.buckets[0].normalized[2], 1.0);
  EXPECT_DOUBLE_EQ(*s.buckets[0].normalized[0], 0.25);
}

TEST(TrafficSignalTest, ScaleInvariant) {
  auto a = traffic_signal(inter_messages({10, 13, 40, 7}), flat_criteria(), split_window(0, 4000, 4));
  auto b = traffic_signal(inter_messages({30, 39, 120, 21}), flat_criteria(), split_window(0, 4000, 4));
  EXPECT_NEAR(a.score, b.score, 1e-12);
}

TEST(TrafficSignalTest, IgnoresIntraSkewedAndSparseBuckets) {
  auto msgs = inter_messages({10, 20, 30, 40});
  msgs[1].locality = Locality::IntraNode;
  msgs[2].skewed = true;
  auto lone = inter_messages({99}, 300);
  msgs.insert(msgs.end(), lone.begin(), lone.end());
  auto s = traffic_signal(msgs, flat_criteria(), split_window(0, 4000, 4));
  ASSERT_EQ(s.buckets.size(), 2u);
  EXPECT_EQ(s.buckets[0].samples, 2u);
  EXPECT_NEAR(*s.buckets[0].cv, population_cv({10, 40}), 1e-12);
  EXPECT_FALSE(s.buckets[1].cv.has_value());
  EXPECT_NEAR(s.score, population_cv({10, 40}), 1e-12);
}

TEST(TrafficSignalTest, NoInterNodeMessagesScoresZero) {
  auto msgs = inter_messages({10, 20});
  for (auto& m : msgs) m.locality = Locality::IntraNode;
  auto s = traffic_signal(msgs, flat_criteria(), split_window(0, 2000, 2));
  EXPECT_TRUE(s.buckets.empty());
  EXPECT_EQ(s.score, 0.0);
  EXPECT_FALSE(s.least_fluctuating.has_value());
}

TEST(Verdict, MappingDominant) {
  auto v = attribute(mapping_of(20, 80), pattern_of(0.1), traffic_of(0.05));
  EXPECT_EQ(v.dominant, Cause::PoorMapping);
  EXPECT_EQ(v.recommendation, Recommendation::Remap);
  EXPECT_DOUBLE_EQ(v.scores[0], 0.8);
}

TEST(Verdict, PatternDominant) {
  auto v = attribute(mapping_of(90, 10), pattern_of(0.6), traffic_of(0.05));
  EXPECT_EQ(v.dominant, Cause::PoorPattern);
  EXPECT_EQ(v.recommendation, Recommendation::ReviseCommunication);
  EXPECT_FALSE(v.mapping_flagged);
}

TEST(Verdict, TrafficDominant) {
  auto v = attribute(mapping_of(90, 10), pattern_of(0.05), traffic_of(0.7));
  EXPECT_EQ(v.dominant, Cause::BackgroundTraffic);
  EXPECT_EQ(v.recommendation, Recommendation::RerunLater);
}

TEST(Verdict, ScoresClipAndTiesPreferMapping) {
  auto v = attribute(mapping_of(0, 10), pattern_of(5.0), traffic_of(9.0));
  EXPECT_EQ(v.scores, (std::array<double, 3>{1.0, 1.0, 1.0}));
  EXPECT_EQ(v.dominant, Cause::PoorMapping);
  auto w = attribute(mapping_of(1, 0), pattern_of(0.3), traffic_of(0.3));
  EXPECT_EQ(w.dominant, Cause::PoorPattern);
}

TEST(Verdict, CeilingsRescale) {
  AttributionThresholds th;
  th.imbalance_ceiling = 2.0;
  auto v = attribute(mapping_of(70, 30), pattern_of(0.8), traffic_of(0.0), th);
  EXPECT_DOUBLE_EQ(v.scores[1], 0.4);
  EXPECT_EQ(v.dominant, Cause::PoorPattern);
  th.imbalance_ceiling = 4.0;
  EXPECT_EQ(attribute(mapping_of(70, 30), pattern_of(0.8), traffic_of(0.0), th).dominant,
            Cause::PoorMapping);
}

TEST(Verdict, Deterministic) {
  auto a = attribute(mapping_of(3, 7), pattern_of(0.4), traffic_of(0.2));
  auto b = attribute(mapping_of(3, 7), pattern_of(0.4), traffic_of(0.2));
  EXPECT_EQ(a, b);
}

TEST(Verdict, Names) {
  EXPECT_EQ(to_string(Cause::PoorMapping), "poor_mapping");
  EXPECT_EQ(to_string(Cause::PoorPattern), "poor_pattern");
  EXPECT_EQ(to_string(Cause::BackgroundTraffic), "background_traffic");
  EXPECT_EQ(to_string(Recommendation::Remap), "remap");
  EXPECT_EQ(to_string(Recommendation::ReviseCommunication), "revise_communication");
  EXPECT_EQ(to_string(Recommendation::RerunLater), "rerun_later");
  EXPECT_EQ(recommendation_for(Cause::BackgroundTraffic), Recommendation::RerunLater);
  EXPECT_FALSE(describe(Recommendation::Remap).empty());
}
