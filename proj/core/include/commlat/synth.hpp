#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commlat/trace.hpp"

namespace commlat {

// Good: consecutive ranks fill a node. Bad: rank pairs dealt round-robin
// over the nodes. Random: shuffled core slots.
enum class Placement { Good, Bad, Random };
std::string_view to_string(Placement placement);

struct ImbalancePlan {
  std::size_t period = 0;
  std::size_t hot_per_region = 1;
  double factor = 8.0;  // message-rate multiplier of hot processes
};

struct TrafficPlan {
  std::size_t period = 0;
  // One multiplier per duration of the period, applied to inter-node times.
  std::vector<double> multipliers;
};

struct ScenarioSpec {
  std::uint64_t seed = 1;
  std::size_t processes = 0;
  std::vector<std::size_t> region_sizes;
  // Ring lattice inside each region: every process talks to `degree`
  // neighbours (degree / 2 on each side).
  std::size_t degree = 4;
  // Messages sent by each process per duration.
  std::size_t intra_rate = 8;
  // Messages between consecutive regions over the whole run.
  std::size_t bridge_messages = 1;

  std::size_t nodes = 1;
  std::size_t cores_per_node = 1;
  Placement placement = Placement::Good;

  std::size_t periods = 4;
  Micros period_us = 80000;
  std::size_t durations_per_period = 8;

  std::vector<ImbalancePlan> imbalance;
  std::vector<TrafficPlan> traffic;

  std::vector<std::int64_t> sizes{64, 256, 1024};
  // Uniform relative noise on transmission times, in [0, 1).
  double noise = 0.1;
  double intra_base_us = 5.0;
  double intra_per_byte_us = 0.01;
  double inter_base_us = 20.0;
  double inter_per_byte_us = 0.05;

  // Analysis settings to ship alongside the fixture; copied verbatim.
  nlohmann::json analysis = nlohmann::json::object();
};

// Throws ValidationError on malformed or infeasible specs.
ScenarioSpec scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioSpec& spec);
void validate(const ScenarioSpec& spec);

struct PlantedPeriod {
  Micros start = 0;
  Micros end = 0;
  std::string cause;  // "none", "poor_mapping", "poor_pattern", "background_traffic"
  std::vector<Rank> hot;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  std::vector<std::vector<Rank>> regions;
  std::vector<PlantedPeriod> periods;
  Placement placement = Placement::Good;
  Micros duration_us = 0;

  nlohmann::json to_json() const;
};

struct Scenario {
  std::vector<CommEvent> events;  // sorted
  NodeMap node_map;
  GroundTruth truth;
};

Scenario generate(const ScenarioSpec& spec);

// First line of every generated trace.
std::string generator_header(const ScenarioSpec& spec);

struct ScenarioFiles {
  std::filesystem::path trace;
  std::filesystem::path node_map;
  std::filesystem::path truth;
  std::filesystem::path config;
};

// Writes trace.csv, nodemap.csv, truth.json and config.json into `dir`.
ScenarioFiles write_scenario(const ScenarioSpec& spec, const Scenario& scenario,
                             const std::filesystem::path& dir);

}  // namespace commlat
