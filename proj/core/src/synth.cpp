#include "commlat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

namespace commlat {

using nlohmann::json;

std::string_view to_string(Placement placement) {
  switch (placement) {
    case Placement::Good: return "good";
    case Placement::Bad: return "bad";
    case Placement::Random: return "random";
  }
  return "good";
}

namespace {

Placement placement_from(const std::string& s) {
  if (s == "good") return Placement::Good;
  if (s == "bad") return Placement::Bad;
  if (s == "random") return Placement::Random;
  throw ValidationError("unknown placement '" + s + "'");
}

// Raw mt19937_64 output only, so fixtures are reproducible outside C++.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  // 53-bit uniform in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario field '") + key + "': " + e.what());
  }
}

}  // namespace

void validate(const ScenarioSpec& s) {
  if (s.region_sizes.empty()) throw ValidationError("scenario needs at least one region");
  std::size_t total = 0;
  for (std::size_t size : s.region_sizes) {
    if (size < 2) throw ValidationError("regions need at least two processes");
    total += size;
  }
  if (total != s.processes) {
    throw ValidationError("region sizes sum to " + std::to_string(total) + ", expected " +
                          std::to_string(s.processes) + " processes");
  }
  if (s.degree == 0) throw ValidationError("degree must be positive");
  if (s.intra_rate == 0) throw ValidationError("intra_rate must be positive");
  if (s.nodes == 0 || s.cores_per_node == 0) throw ValidationError("node layout must be non-empty");
  if (s.nodes * s.cores_per_node < s.processes) {
    throw InfeasibleError("processes exceed node capacity");
  }
  const std::size_t pairs = (s.processes + 1) / 2;
  if (s.placement == Placement::Bad && 2 * ((pairs + s.nodes - 1) / s.nodes) > s.cores_per_node) {
    throw InfeasibleError("bad placement overflows a node");
  }
  if (s.periods == 0 || s.durations_per_period == 0) throw ValidationError("empty timeline");
  if (s.period_us < static_cast<Micros>(s.durations_per_period)) {
    throw ValidationError("period shorter than its durations");
  }
  if (s.sizes.empty()) throw ValidationError("need at least one message size");
  for (auto size : s.sizes) {
    if (size < 0) throw ValidationError("message sizes must be non-negative");
  }
  if (!(s.noise >= 0.0 && s.noise < 1.0)) throw ValidationError("noise must be in [0, 1)");
  std::map<std::size_t, int> planted;
  for (const auto& p : s.imbalance) {
    if (p.period >= s.periods) throw ValidationError("imbalance period out of range");
    if (!(p.factor > 0.0)) throw ValidationError("multipliers must be positive");
    if (p.hot_per_region == 0) throw ValidationError("hot_per_region must be positive");
    for (std::size_t size : s.region_sizes) {
      if (p.hot_per_region > size) throw ValidationError("more hot processes than region members");
    }
    if (planted[p.period]++) throw ValidationError("period planted twice");
  }
  for (const auto& p : s.traffic) {
    if (p.period >= s.periods) throw ValidationError("traffic period out of range");
    if (p.multipliers.size() != s.durations_per_period) {
      throw ValidationError("traffic plan needs one multiplier per duration");
    }
    for (double m : p.multipliers) {
      if (!(m > 0.0)) throw ValidationError("multipliers must be positive");
    }
    if (planted[p.period]++) throw ValidationError("period planted twice");
  }
}

ScenarioSpec scenario_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("scenario must be a JSON object");
  ScenarioSpec s;
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  const json regions = j.value("regions", json::object());
  s.region_sizes = get_or<std::vector<std::size_t>>(regions, "sizes", {});
  s.degree = get_or(regions, "degree", s.degree);
  s.intra_rate = get_or(regions, "intra_rate", s.intra_rate);
  s.bridge_messages = get_or(regions, "bridge_messages", s.bridge_messages);
  std::size_t total = 0;
  for (auto size : s.region_sizes) total += size;
  s.processes = get_or<std::size_t>(j, "processes", total);

  const json nodes = j.value("nodes", json::object());
  s.nodes = get_or(nodes, "count", s.nodes);
  s.cores_per_node = get_or(nodes, "cores_per_node", s.cores_per_node);
  s.placement = placement_from(get_or<std::string>(nodes, "placement", "good"));

  const json timeline = j.value("timeline", json::object());
  s.periods = get_or(timeline, "periods", s.periods);
  s.period_us = get_or(timeline, "period_us", s.period_us);
  s.durations_per_period = get_or(timeline, "durations_per_period", s.durations_per_period);

  for (const auto& p : j.value("imbalance", json::array())) {
    ImbalancePlan plan;
    plan.period = get_or(p, "period", plan.period);
    plan.hot_per_region = get_or(p, "hot_per_region", plan.hot_per_region);
    plan.factor = get_or(p, "factor", plan.factor);
    s.imbalance.push_back(plan);
  }
  for (const auto& p : j.value("traffic", json::array())) {
    TrafficPlan plan;
    plan.period = get_or(p, "period", plan.period);
    plan.multipliers = get_or<std::vector<double>>(p, "multipliers", {});
    s.traffic.push_back(plan);
  }

  const json msgs = j.value("messages", json::object());
  s.sizes = get_or(msgs, "sizes", s.sizes);
  s.noise = get_or(msgs, "noise", s.noise);
  s.intra_base_us = get_or(msgs, "intra_base_us", s.intra_base_us);
  s.intra_per_byte_us = get_or(msgs, "intra_per_byte_us", s.intra_per_byte_us);
  s.inter_base_us = get_or(msgs, "inter_base_us", s.inter_base_us);
  s.inter_per_byte_us = get_or(msgs, "inter_per_byte_us", s.inter_per_byte_us);
  s.analysis = j.value("analysis", json::object());
  validate(s);
  return s;
}

json to_json(const ScenarioSpec& s) {
  json j;
  j["seed"] = s.seed;
  j["processes"] = s.processes;
  j["regions"] = {{"sizes", s.region_sizes},
                  {"degree", s.degree},
                  {"intra_rate", s.intra_rate},
                  {"bridge_messages", s.bridge_messages}};
  j["nodes"] = {{"count", s.nodes},
                {"cores_per_node", s.cores_per_node},
                {"placement", std::string(to_string(s.placement))}};
  j["timeline"] = {{"periods", s.periods},
                   {"period_us", s.period_us},
                   {"durations_per_period", s.durations_per_period}};
  j["imbalance"] = json::array();
  for (const auto& p : s.imbalance) {
    j["imbalance"].push_back(
        {{"period", p.period}, {"hot_per_region", p.hot_per_region}, {"factor", p.factor}});
  }
  j["traffic"] = json::array();
  for (const auto& p : s.traffic) {
    j["traffic"].push_back({{"period", p.period}, {"multipliers", p.multipliers}});
  }
  j["messages"] = {{"sizes", s.sizes},
                   {"noise", s.noise},
                   {"intra_base_us", s.intra_base_us},
                   {"intra_per_byte_us", s.intra_per_byte_us},
                   {"inter_base_us", s.inter_base_us},
                   {"inter_per_byte_us", s.inter_per_byte_us}};
  j["analysis"] = s.analysis;
  return j;
}

json GroundTruth::to_json() const {
  json j;
  j["rng"] = "mt19937_64";
  j["seed"] = seed;
  j["placement"] = std::string(commlat::to_string(placement));
  j["duration_us"] = duration_us;
  j["regions"] = regions;
  j["periods"] = json::array();
  for (const auto& p : periods) {
    j["periods"].push_back({{"start", p.start}, {"end", p.end}, {"cause", p.cause}, {"hot", p.hot}});
  }
  return j;
}

std::string generator_header(const ScenarioSpec& spec) {
  return "# generator=commlat-synth rng=mt19937_64 seed=" + std::to_string(spec.seed);
}

Scenario generate(const ScenarioSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  Scenario out;
  out.truth.seed = spec.seed;
  out.truth.placement = spec.placement;

  const std::size_t n = spec.processes;
  std::vector<NodeId> node_of(n);
  if (spec.placement == Placement::Random) {
    std::vector<std::size_t> slots(spec.nodes * spec.cores_per_node);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[rng.below(i)]);
    for (std::size_t r = 0; r < n; ++r) node_of[r] = static_cast<NodeId>(slots[r] / spec.cores_per_node);
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      node_of[r] = static_cast<NodeId>(spec.placement == Placement::Good ? r / spec.cores_per_node
                                                                          : (r / 2) % spec.nodes);
    }
  }
  for (std::size_t r = 0; r < n; ++r) out.node_map.assign(static_cast<Rank>(r), node_of[r]);

  std::vector<std::vector<Rank>> neighbors(n);
  std::size_t base = 0;
  for (std::size_t size : spec.region_sizes) {
    std::vector<Rank> members;
    for (std::size_t i = 0; i < size; ++i) members.push_back(static_cast<Rank>(base + i));
    out.truth.regions.push_back(members);
    const std::size_t half = std::min(spec.degree / 2 == 0 ? 1 : spec.degree / 2, (size - 1) / 2);
    for (std::size_t i = 0; i < size; ++i) {
      auto& nb = neighbors[base + i];
      if (size - 1 <= spec.degree) {
        for (std::size_t j = 0; j < size; ++j) {
          if (j != i) nb.push_back(static_cast<Rank>(base + j));
        }
        continue;
      }
      for (std::size_t d = 1; d <= half; ++d) {
        nb.push_back(static_cast<Rank>(base + (i + d) % size));
        nb.push_back(static_cast<Rank>(base + (i + size - d) % size));
      }
    }
    base += size;
  }

  const Micros dlen = spec.period_us / static_cast<Micros>(spec.durations_per_period);
  const Micros total = spec.period_us * static_cast<Micros>(spec.periods);
  out.truth.duration_us = total;

  struct Draft {
    Rank src, dst;
    std::int64_t size;
    Micros send, recv;
  };
  std::vector<Draft> drafts;
  auto transmit = [&](Rank src, Rank dst, std::int64_t size, double multiplier) {
    const bool inter = node_of[src] != node_of[dst];
    const double b = inter ? spec.inter_base_us + spec.inter_per_byte_us * static_cast<double>(size)
                           : spec.intra_base_us + spec.intra_per_byte_us * static_cast<double>(size);
    const double noisy = b * (1.0 + spec.noise * (2.0 * rng.unit() - 1.0)) * (inter ? multiplier : 1.0);
    return std::max<Micros>(1, std::llround(noisy));
  };

  std::vector<std::size_t> cursor(n, 0);
  for (std::size_t p = 0; p < spec.periods; ++p) {
    PlantedPeriod planted;
    planted.start = static_cast<Micros>(p) * spec.period_us;
    planted.end = planted.start + spec.period_us;
    planted.cause = spec.placement == Placement::Bad ? "poor_mapping" : "none";

    std::vector<double> rate(n, 1.0);
    for (const auto& plan : spec.imbalance) {
      if (plan.period != p) continue;
      planted.cause = "poor_pattern";
      for (const auto& members : out.truth.regions) {
        std::vector<Rank> pool = members;
        for (std::size_t h = 0; h < plan.hot_per_region; ++h) {
          const std::size_t pick = h + rng.below(pool.size() - h);
          std::swap(pool[h], pool[pick]);
          rate[pool[h]] = plan.factor;
          planted.hot.push_back(pool[h]);
        }
      }
      std::sort(planted.hot.begin(), planted.hot.end());
    }
    const TrafficPlan* spike = nullptr;
    for (const auto& plan : spec.traffic) {
      if (plan.period == p) spike = &plan;
    }
    if (spike) planted.cause = "background_traffic";

    for (std::size_t d = 0; d < spec.durations_per_period; ++d) {
      const Micros start = planted.start + static_cast<Micros>(d) * dlen;
      const double mult = spike ? spike->multipliers[d] : 1.0;
      for (std::size_t r = 0; r < n; ++r) {
        const auto count = static_cast<std::size_t>(
            std::llround(static_cast<double>(spec.intra_rate) * rate[r]));
        for (std::size_t k = 0; k < count; ++k) {
          const Rank dst = neighbors[r][cursor[r]++ % neighbors[r].size()];
          const std::int64_t size = spec.sizes[rng.below(spec.sizes.size())];
          const Micros send = start + static_cast<Micros>(rng.below(static_cast<std::uint64_t>(dlen)));
          const Micros t = transmit(static_cast<Rank>(r), dst, size, mult);
          drafts.push_back({static_cast<Rank>(r), dst, size, send, send + t});
        }
      }
    }
    out.truth.periods.push_back(std::move(planted));
  }

  for (std::size_t r = 0; r + 1 < out.truth.regions.size(); ++r) {
    const Rank a = out.truth.regions[r].back();
    const Rank b = out.truth.regions[r + 1].front();
    for (std::size_t k = 0; k < spec.bridge_messages; ++k) {
      const std::int64_t size = spec.sizes[rng.below(spec.sizes.size())];
      const Micros send = static_cast<Micros>(rng.below(static_cast<std::uint64_t>(total)));
      const Micros t = transmit(a, b, size, 1.0);
      drafts.push_back({a, b, size, send, send + t});
    }
  }

  // Channels are FIFO: a later send never arrives before an earlier one.
  std::stable_sort(drafts.begin(), drafts.end(), [](const Draft& x, const Draft& y) {
    return std::tie(x.src, x.dst, x.send) < std::tie(y.src, y.dst, y.send);
  });
  for (std::size_t i = 1; i < drafts.size(); ++i) {
    auto& cur = drafts[i];
    const auto& prev = drafts[i - 1];
    if (cur.src == prev.src && cur.dst == prev.dst && cur.recv <= prev.recv) cur.recv = prev.recv + 1;
  }

  out.events.reserve(drafts.size() * 2);
  for (const auto& m : drafts) {
    out.events.push_back({m.src, EventKind::Send, m.send, m.src, m.dst, m.size});
    out.events.push_back({m.dst, EventKind::Receive, m.recv, m.src, m.dst, m.size});
  }
  std::stable_sort(out.events.begin(), out.events.end(), event_order_less);
  return out;
}

ScenarioFiles write_scenario(const ScenarioSpec& spec, const Scenario& scenario,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ScenarioFiles files{dir / "trace.csv", dir / "nodemap.csv", dir / "truth.json", dir / "config.json"};
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path.string());
    f << text;
  };
  write(files.trace, generator_header(spec) + "\n" + write_trace_csv(scenario.events));
  write(files.node_map, write_node_map_csv(scenario.node_map));
  write(files.truth, scenario.truth.to_json().dump(2) + "\n");
  write(files.config, spec.analysis.dump(2) + "\n");
  return files;
}

}  // namespace commlat
