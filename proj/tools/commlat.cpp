#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "commlat/pipeline.hpp"
#include "commlat/service.hpp"
#include "commlat/synth.hpp"

using namespace commlat;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
};

struct Overrides {
  std::optional<std::int64_t> bucket_width;
  std::optional<std::size_t> max_samples;
  std::optional<double> beta;
  std::optional<int> max_depth;
  std::optional<Micros> bucket;
  std::optional<std::size_t> window;
  std::optional<double> slope_min;
  std::optional<double> cv_max;
  std::string criteria_out;
};

struct StageInputs {
  std::string trace;
  std::string node_map;
  std::string criteria;
  std::string regions;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Analysis config JSON");
  cmd->add_option("--out", c.out, "Output file (default: stdout)");
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--bucket-width", o.bucket_width, "Criteria size bucket width (bytes)");
  cmd->add_option("--max-samples", o.max_samples, "Criteria samples kept per bucket");
  cmd->add_option("--criteria-out", o.criteria_out, "Also write the criteria CSV used");
  cmd->add_option("--beta", o.beta, "Killed-walk exponent");
  cmd->add_option("--max-depth", o.max_depth, "Correlation tree depth cap");
  cmd->add_option("--bucket", o.bucket, "Evolution bucket width (us)");
  cmd->add_option("--window", o.window, "Evolution sliding window (buckets)");
  cmd->add_option("--slope-min", o.slope_min, "Growth slope threshold per bucket");
  cmd->add_option("--cv-max", o.cv_max, "Steady coefficient-of-variation ceiling");
}

void add_inputs(CLI::App* cmd, StageInputs& in, bool stage_files) {
  cmd->add_option("trace", in.trace, "Trace file (.csv or .jsonl)")->required();
  cmd->add_option("nodemap", in.node_map, "Node map CSV (rank,node)")->required();
  if (stage_files) {
    cmd->add_option("--criteria,--criteria-in", in.criteria, "Criteria CSV from an earlier `criteria` run");
    cmd->add_option("--regions", in.regions, "Regions JSON from an earlier `cluster` run");
  }
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + out);
  f << text;
}

Overrides g_overrides;

AnalysisConfig load_config(const Common& c) {
  AnalysisConfig config = c.config.empty() ? AnalysisConfig{} : read_config(c.config);
  const auto& o = g_overrides;
  if (o.bucket_width) config.criteria.bucket_width = *o.bucket_width;
  if (o.max_samples) config.criteria.max_samples_per_bucket = *o.max_samples;
  if (o.beta) config.distance.beta = *o.beta;
  if (o.max_depth) config.distance.max_depth = *o.max_depth;
  if (o.bucket) config.bucket_us = *o.bucket;
  if (o.window) config.periods.window = *o.window;
  if (o.slope_min) config.periods.slope_min = *o.slope_min;
  if (o.cv_max) config.periods.cv_max = *o.cv_max;
  // Re-validate after overrides.
  return config_from_json(to_json(config));
}

Analysis make_analysis(const StageInputs& in, const AnalysisConfig& config) {
  std::optional<LatencyCriteria> criteria;
  if (!in.criteria.empty()) criteria = read_criteria(in.criteria);
  std::optional<RegionModel> regions;
  if (!in.regions.empty()) {
    try {
      regions = regions_from_json(json::parse(read_file(in.regions)));
    } catch (const json::parse_error& e) {
      throw ValidationError(in.regions + ": " + e.what());
    }
  }
  Analysis a(Analysis::load(in.trace, in.node_map, config), config, std::move(criteria), std::move(regions));
  if (!g_overrides.criteria_out.empty()) emit(g_overrides.criteria_out, write_criteria_csv(a.criteria()));
  return a;
}

std::atomic<Service*> g_service{nullptr};

void on_signal(int) {
  if (auto* s = g_service.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Process communication latency analysis for MPI traces", "commlat"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  StageInputs in;

  auto* ingest = app.add_subcommand("ingest", "Validate a trace, pair messages, and report");
  add_common(ingest, common);
  add_overrides(ingest, g_overrides);
  add_inputs(ingest, in, false);
  std::string normalized;
  ingest->add_option("--trace-out", normalized, "Write the normalized trace CSV here");

  auto* criteria = app.add_subcommand("criteria", "Calibrate latency criteria (CSV)");
  add_common(criteria, common);
  add_overrides(criteria, g_overrides);
  add_inputs(criteria, in, false);

  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster processes into communication regions");
  add_common(cluster_cmd, common);
  add_overrides(cluster_cmd, g_overrides);
  cluster_cmd->add_option("trace", in.trace, "Trace file");
  cluster_cmd->add_option("nodemap", in.node_map, "Node map CSV");
  cluster_cmd->add_option("--criteria,--criteria-in", in.criteria, "Criteria CSV from an earlier `criteria` run");
  std::optional<double> threshold;
  std::string distance_csv;
  cluster_cmd->add_option("--threshold", threshold, "Linkage threshold (overrides config)");
  cluster_cmd->add_option("--distance-matrix", distance_csv, "Cluster a labelled distance matrix CSV instead");

  int region = 0;
  std::optional<Micros> start, end;
  auto* evolve = app.add_subcommand("evolve", "Temporal abstraction of one region's latency");
  add_common(evolve, common);
  add_overrides(evolve, g_overrides);
  add_inputs(evolve, in, true);
  evolve->add_option("--region", region, "Region id")->capture_default_str();

  auto* dag = app.add_subcommand("dag", "Communication-dependency DAG for a window");
  add_common(dag, common);
  add_overrides(dag, g_overrides);
  add_inputs(dag, in, true);
  dag->add_option("--region", region, "Region id")->capture_default_str();
  dag->add_option("--start", start, "Window start (us, inclusive)");
  dag->add_option("--end", end, "Window end (us, exclusive)");

  auto* attribute_cmd = app.add_subcommand("attribute", "Attribute latency in a window to a cause");
  add_common(attribute_cmd, common);
  add_overrides(attribute_cmd, g_overrides);
  add_inputs(attribute_cmd, in, true);
  attribute_cmd->add_option("--region", region, "Region id")->capture_default_str();
  attribute_cmd->add_option("--start", start, "Window start (us, inclusive)");
  attribute_cmd->add_option("--end", end, "Window end (us, exclusive)");

  auto* remap = app.add_subcommand("remap", "Recommend a process-to-node mapping");
  add_common(remap, common);
  add_overrides(remap, g_overrides);
  add_inputs(remap, in, true);
  std::optional<int> cores;
  remap->add_option("--cores-per-node", cores, "Node capacity (default: largest node in the map)");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scenario fixture set");
  add_common(gen, common);
  std::string scenario;
  gen->add_option("scenario", scenario, "Scenario JSON")->required();

  auto* serve = app.add_subcommand("serve", "Run the HTTP analysis service");
  add_common(serve, common);
  std::string listen, data_dir;
  int workers = 0;
  serve->add_option("--listen", listen, "host:port (env COMMLAT_LISTEN)");
  serve->add_option("--data-dir", data_dir, "Artifact directory (env COMMLAT_DATA_DIR)");
  serve->add_option("--workers", workers, "Worker threads (env COMMLAT_WORKERS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return 1;
  }

  try {
    if (*ingest) {
      const auto config = load_config(common);
      Analysis a(Analysis::load(in.trace, in.node_map, config), config);
      if (!normalized.empty()) emit(normalized, write_trace_csv(a.trace().events));
      emit(common.out, dump_artifact(a.ingest_json()));
    } else if (*criteria) {
      const auto config = load_config(common);
      emit(common.out, write_criteria_csv(build_criteria(Analysis::load(in.trace, in.node_map, config),
                                                         config.criteria)));
    } else if (*cluster_cmd) {
      auto config = load_config(common);
      if (threshold) config.threshold = *threshold;
      if (!distance_csv.empty()) {
        ClusterOptions opts;
        opts.threshold = config.threshold;
        emit(common.out, dump_artifact(regions_model_json(cluster(parse_distance_csv(read_file(distance_csv)), opts))));
      } else {
        if (in.trace.empty() || in.node_map.empty()) {
          throw ValidationError("cluster needs <trace> <nodemap> or --distance-matrix");
        }
        emit(common.out, dump_artifact(make_analysis(in, config).regions_json()));
      }
    } else if (*evolve) {
      emit(common.out, dump_artifact(make_analysis(in, load_config(common)).evolution_json(region)));
    } else if (*dag) {
      const auto a = make_analysis(in, load_config(common));
      const auto [s, e] = a.resolve_window(start, end);
      emit(common.out, dump_artifact(a.dag_json(region, s, e)));
    } else if (*attribute_cmd) {
      const auto a = make_analysis(in, load_config(common));
      const auto [s, e] = a.resolve_window(start, end);
      emit(common.out, dump_artifact(a.attribution_json(region, s, e)));
    } else if (*remap) {
      const auto a = make_analysis(in, load_config(common));
      emit(common.out, dump_artifact(a.remap_json(cores.value_or(a.inferred_cores_per_node()))));
    } else if (*gen) {
      json j;
      try {
        j = json::parse(read_file(scenario));
      } catch (const json::parse_error& e) {
        throw ValidationError(scenario + ": " + e.what());
      }
      auto spec = scenario_from_json(j);
      if (!common.config.empty()) spec.analysis = to_json(read_config(common.config));
      const auto files = write_scenario(spec, generate(spec), common.out.empty() ? "." : common.out);
      std::cout << dump_artifact(json{{"trace", files.trace.string()},
                                      {"node_map", files.node_map.string()},
                                      {"truth", files.truth.string()},
                                      {"config", files.config.string()}});
    } else if (*serve) {
      auto options = service_options_from_env();
      if (!common.config.empty()) {
        const auto j = json::parse(read_file(common.config));
        options.host = j.value("host", options.host);
        options.port = j.value("port", options.port);
        options.data_dir = j.value("data_dir", options.data_dir.string());
        options.workers = j.value("workers", options.workers);
      }
      if (!listen.empty()) {
        const auto colon = listen.rfind(':');
        if (colon == std::string::npos) throw ValidationError("--listen must be host:port");
        options.host = listen.substr(0, colon);
        options.port = std::stoi(listen.substr(colon + 1));
      }
      if (!data_dir.empty()) options.data_dir = data_dir;
      if (workers > 0) options.workers = workers;
      options.log = &std::cerr;
      Service service(options);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << json{{"event", "listening"}, {"host", options.host}, {"port", options.port},
                        {"data_dir", options.data_dir.string()}}.dump()
                << '\n';
      service.run();
      g_service = nullptr;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
