#include "commlat/service.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <future>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "commlat/pipeline.hpp"

namespace commlat {

using nlohmann::json;

namespace {

class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw InternalError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

ServiceResponse error_response(int status, const std::string& message) {
  return {status, dump_artifact(json{{"error", message}})};
}

template <typename F>
ServiceResponse guarded(F&& f) {
  try {
    return f();
  } catch (const ConflictError& e) {
    return error_response(409, e.what());
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const InfeasibleError& e) {
    return error_response(422, e.what());
  } catch (const ValidationError& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw InternalError("cannot write " + tmp);
    f << text;
  }
  std::filesystem::rename(tmp, path);
}

std::optional<Micros> query_int(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  Micros v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("query parameter '" + key + "' is not an integer");
  }
  return v;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

// Input given inline ({"text": ...}) or by path (string or {"path": ...}).
std::pair<std::string, std::filesystem::path> resolve_input(const json& j, const char* what) {
  if (j.is_string()) return {read_file(j.get<std::string>()), j.get<std::string>()};
  if (j.is_object() && j.contains("path")) {
    const auto p = j["path"].get<std::string>();
    return {read_file(p), p};
  }
  if (j.is_object() && j.contains("text")) {
    const auto format = j.value("format", std::string("csv"));
    return {j["text"].get<std::string>(), format == "jsonl" ? "inline.jsonl" : "inline.csv"};
  }
  throw ValidationError(std::string("missing ") + what);
}

}  // namespace

ServiceOptions service_options_from_env() {
  ServiceOptions o;
  if (const char* listen = std::getenv("COMMLAT_LISTEN")) {
    const std::string s = listen;
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw ValidationError("COMMLAT_LISTEN must be host:port");
    o.host = s.substr(0, colon);
    o.port = std::stoi(s.substr(colon + 1));
  }
  if (const char* dir = std::getenv("COMMLAT_DATA_DIR")) o.data_dir = dir;
  if (const char* workers = std::getenv("COMMLAT_WORKERS")) o.workers = std::max(1, std::atoi(workers));
  return o;
}

struct Session {
  enum class State { Loading, Ready, Failed };

  std::string id;
  std::filesystem::path dir;
  std::mutex mu;
  std::condition_variable cv;
  State state = State::Loading;
  ServiceResponse failure;
  std::shared_ptr<const Analysis> analysis;
  std::map<std::string, std::shared_future<ServiceResponse>> artifacts;
  std::thread loader;

  ~Session() {
    if (loader.joinable()) loader.join();
  }

  std::shared_ptr<const Analysis> ready() {
    std::lock_guard lock(mu);
    if (state == State::Loading) throw ConflictError("session " + id + " is still loading");
    if (state == State::Failed) throw ValidationError(json::parse(failure.body).value("error", "load failed"));
    return analysis;
  }
};

struct Service::Impl {
  ServiceOptions options;
  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::mutex log_mu;
  httplib::Server server;
  std::thread server_thread;

  std::filesystem::path session_dir(const std::string& id) const { return options.data_dir / "sessions" / id; }

  static std::shared_ptr<const Analysis> build(const std::filesystem::path& dir) {
    const auto config = config_from_json(json::parse(read_file(dir / "config.json")));
    const bool jsonl = std::filesystem::exists(dir / "trace.jsonl");
    const auto trace_path = dir / (jsonl ? "trace.jsonl" : "trace.csv");
    Trace trace = parse_trace_text(read_file(trace_path), jsonl ? TraceFormat::JSONL : TraceFormat::CSV,
                                   config.parse);
    attach_node_map(trace, parse_node_map_text(read_file(dir / "nodemap.csv")));
    trace = pair_messages(std::move(trace), config.pairing);
    return std::make_shared<const Analysis>(std::move(trace), config);
  }

  static void load_into(Session& s) {
    ServiceResponse result = guarded([&] {
      auto a = build(s.dir);
      std::lock_guard lock(s.mu);
      s.analysis = std::move(a);
      return ServiceResponse{200, ""};
    });
    std::lock_guard lock(s.mu);
    if (result.status == 200) {
      s.state = Session::State::Ready;
    } else {
      s.state = Session::State::Failed;
      s.failure = result;
    }
    s.cv.notify_all();
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    if (auto it = sessions.find(id); it != sessions.end()) return it->second;
    // Sessions persisted by an earlier run are reloaded on first use.
    const auto dir = session_dir(id);
    if (id.find_first_not_of("0123456789abcdef") != std::string::npos || !std::filesystem::exists(dir / "config.json")) {
      throw NotFoundError("unknown session " + id);
    }
    auto s = std::make_shared<Session>();
    s->id = id;
    s->dir = dir;
    load_into(*s);
    sessions[id] = s;
    return s;
  }

  ServiceResponse create(const std::string& body) {
    json req;
    try {
      req = body.empty() ? json::object() : json::parse(body);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("request body: ") + e.what());
    }
    if (!req.is_object()) throw ValidationError("request body must be a JSON object");
    auto [trace_text, trace_path] = resolve_input(req.value("trace", json()), "trace");
    auto [map_text, map_path] = resolve_input(req.value("node_map", json()), "node_map");
    const auto config = config_from_json(req.value("config", json::object()));
    const bool jsonl = format_from_path(trace_path) == TraceFormat::JSONL;
    const std::string config_text = dump_artifact(to_json(config));
    std::string key = trace_text;
    key += '\0';
    key += jsonl ? "jsonl" : "csv";
    key += '\0';
    key += map_text;
    key += '\0';
    key += config_text;
    const std::string id = sha256_hex(key).substr(0, 32);

    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(sessions_mu);
      if (auto it = sessions.find(id); it != sessions.end()) {
        std::lock_guard slock(it->second->mu);
        if (it->second->state != Session::State::Failed) {
          return {200, dump_artifact(json{{"session_id", id}})};
        }
      }
      s = std::make_shared<Session>();
      s->id = id;
      s->dir = session_dir(id);
      std::filesystem::create_directories(s->dir / "objects");
      std::filesystem::create_directories(s->dir / "refs");
      write_atomic(s->dir / (jsonl ? "trace.jsonl" : "trace.csv"), trace_text);
      write_atomic(s->dir / "nodemap.csv", map_text);
      write_atomic(s->dir / "config.json", config_text);
      sessions[id] = s;
    }
    if (req.value("async", false)) {
      s->loader = std::thread([s] { load_into(*s); });
      return {202, dump_artifact(json{{"session_id", id}, {"status", "loading"}})};
    }
    load_into(*s);
    std::lock_guard lock(s->mu);
    if (s->state == Session::State::Failed) {
      std::lock_guard glock(sessions_mu);
      sessions.erase(id);
      return s->failure;
    }
    return {201, dump_artifact(json{{"session_id", id}})};
  }

  // Each artifact is computed once per session, published whole, and also
  // stored as a content-addressed blob with a ref named after the request.
  template <typename F>
  ServiceResponse artifact(Session& s, const std::string& key, F&& compute) {
    std::shared_future<ServiceResponse> fut;
    std::promise<ServiceResponse> promise;
    bool owner = false;
    {
      std::lock_guard lock(s.mu);
      auto it = s.artifacts.find(key);
      if (it == s.artifacts.end()) {
        fut = promise.get_future().share();
        s.artifacts.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      promise.set_value(guarded([&] {
        const auto ref = s.dir / "refs" / (key + ".ref");
        if (std::filesystem::exists(ref)) {
          const auto blob = s.dir / "objects" / (read_file(ref) + ".json");
          if (std::filesystem::exists(blob)) return ServiceResponse{200, read_file(blob)};
        }
        std::string body = dump_artifact(compute());
        const std::string digest = sha256_hex(body);
        std::filesystem::create_directories(s.dir / "objects");
        std::filesystem::create_directories(s.dir / "refs");
        write_atomic(s.dir / "objects" / (digest + ".json"), body);
        write_atomic(ref, digest);
        return ServiceResponse{200, std::move(body)};
      }));
    }
    return fut.get();
  }

  ServiceResponse dispatch(const std::string& method, const std::string& path,
                           const std::map<std::string, std::string>& query, const std::string& body) {
    const auto parts = split_path(path);
    auto method_is = [&](const char* m) {
      if (method != m) throw std::invalid_argument("method");
    };
    try {
      if (parts.size() == 1 && parts[0] == "health") {
        method_is("GET");
        return {200, dump_artifact(json{{"status", "ok"}})};
      }
      if (parts.empty() || parts[0] != "sessions") throw NotFoundError("no route for " + path);
      if (parts.size() == 1) {
        method_is("POST");
        return create(body);
      }
      auto s = find(parts[1]);
      if (parts.size() == 2) {
        method_is("GET");
        std::lock_guard lock(s->mu);
        const char* state = s->state == Session::State::Loading ? "loading"
                            : s->state == Session::State::Ready ? "ready"
                                                                : "failed";
        return {200, dump_artifact(json{{"session_id", s->id}, {"status", state}})};
      }
      if (parts.size() == 3 && parts[2] == "regions") {
        method_is("GET");
        auto a = s->ready();
        return artifact(*s, "regions", [&] { return a->regions_json(); });
      }
      if (parts.size() == 3 && parts[2] == "remap") {
        method_is("POST");
        auto a = s->ready();
        int cores = a->inferred_cores_per_node();
        if (!body.empty()) {
          json req;
          try {
            req = json::parse(body);
            if (req.contains("cores_per_node")) cores = req["cores_per_node"].get<int>();
          } catch (const json::exception& e) {
            throw ValidationError(std::string("request body: ") + e.what());
          }
        }
        return artifact(*s, "remap-c" + std::to_string(cores), [&] { return a->remap_json(cores); });
      }
      if (parts.size() == 5 && parts[2] == "regions") {
        int rid = 0;
        const auto& r = parts[3];
        auto [ptr, ec] = std::from_chars(r.data(), r.data() + r.size(), rid);
        if (ec != std::errc() || ptr != r.data() + r.size()) throw NotFoundError("unknown region " + r);
        method_is("GET");
        auto a = s->ready();
        a->region(rid);
        const std::string prefix = "r" + std::to_string(rid);
        if (parts[4] == "evolution") {
          return artifact(*s, "evolution-" + prefix, [&] { return a->evolution_json(rid); });
        }
        if (parts[4] == "dag" || parts[4] == "attribution") {
          const auto [start, end] = a->resolve_window(query_int(query, "start"), query_int(query, "end"));
          const std::string key = parts[4] + "-" + prefix + "-" + std::to_string(start) + "-" + std::to_string(end);
          if (parts[4] == "dag") return artifact(*s, key, [&] { return a->dag_json(rid, start, end); });
          return artifact(*s, key, [&] { return a->attribution_json(rid, start, end); });
        }
      }
      throw NotFoundError("no route for " + path);
    } catch (const std::invalid_argument&) {
      return error_response(405, "method " + method + " not allowed on " + path);
    }
  }

  void log_request(const std::string& method, const std::string& path, int status, double ms) {
    if (!options.log) return;
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    json line{{"ts_ms", now}, {"method", method}, {"path", path}, {"status", status}, {"duration_ms", ms}};
    std::lock_guard lock(log_mu);
    *options.log << line.dump() << '\n';
    options.log->flush();
  }

  void install_routes(Service& self) {
    auto handler = [&self, this](const httplib::Request& req, httplib::Response& res) {
      const auto t0 = std::chrono::steady_clock::now();
      std::map<std::string, std::string> query;
      for (const auto& [k, v] : req.params) query.emplace(k, v);
      const auto r = self.handle(req.method, req.path, query, req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
      res.set_header("Access-Control-Allow-Origin", "*");
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      log_request(req.method, req.path, r.status, ms);
    };
    server.Get(".*", handler);
    server.Post(".*", handler);
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    const int workers = options.workers;
    server.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<size_t>(workers)); };
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  std::filesystem::create_directories(impl_->options.data_dir / "sessions");
  impl_->install_routes(*this);
}

Service::~Service() { stop(); }

ServiceResponse Service::handle(const std::string& method, const std::string& path,
                                const std::map<std::string, std::string>& query, const std::string& body) {
  return guarded([&] { return impl_->dispatch(method, path, query, body); });
}

int Service::start() {
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) throw ValidationError("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::run() {
  if (!impl_->server.listen(impl_->options.host, impl_->options.port)) {
    throw ValidationError("cannot listen on " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
}

void Service::wait_ready(const std::string& session_id) {
  auto s = impl_->find(session_id);
  std::unique_lock lock(s->mu);
  s->cv.wait(lock, [&] { return s->state != Session::State::Loading; });
}

}  // namespace commlat
