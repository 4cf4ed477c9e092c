#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>

namespace commlat {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "commlat-data";
  int workers = 4;
  std::ostream* log = nullptr;  // one JSON object per request
};

// COMMLAT_LISTEN (host:port), COMMLAT_DATA_DIR, COMMLAT_WORKERS.
ServiceOptions service_options_from_env();

struct ServiceResponse {
  int status = 200;
  std::string body;
};

class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Transport-independent dispatch; the HTTP layer is a thin wrapper.
  ServiceResponse handle(const std::string& method, const std::string& path,
                         const std::map<std::string, std::string>& query, const std::string& body);

  // Binds and serves on a background thread; returns the bound port
  // (options.port 0 picks a free one).
  int start();
  void stop();
  // Blocks until stop() is called from another thread or a signal.
  void run();

  // Blocks until an async session finishes loading.
  void wait_ready(const std::string& session_id);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace commlat
