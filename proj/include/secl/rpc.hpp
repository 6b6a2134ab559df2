/**
 * rpc.hpp - HTTP transport for the backend protocol.
 *
 * RemoteBackend is the client the engine uses against a model server.
 * RpcServer exposes any Backend over the same protocol; the tests and the
 * `serve` command use it with the synthetic backend.
 */
#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "secl/backend.hpp"
#include "secl/protocol.hpp"

namespace httplib {
class Server;
}

namespace secl {

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{100}; // doubled after every attempt
  std::chrono::seconds timeout{120};
};

class RemoteBackend final : public Backend {
public:
  // `url` like "http://127.0.0.1:8080".
  explicit RemoteBackend(std::string url, RetryPolicy policy = {});
  ~RemoteBackend() override;

  BackendInfo info() override;
  GenerationResult generate(const std::string& prompt, bool want_confidence) override;
  double p_true(const std::string& prompt, const std::string& candidate, bool adapters) override;
  std::vector<std::string> distractors(const std::string& prompt, int k) override;
  std::vector<std::string> sample(const std::string& prompt, int n, double temperature) override;
  TrainReport train(const std::string& prompt, double target, int epochs, double learning_rate) override;
  void set_adapters(bool active) override;
  void reset_adapters() override;

  const std::string& url() const noexcept { return url_; }
  int attempts() const noexcept { return attempts_; } // HTTP requests sent so far

  // Replaces the sleep between retries (tests use a no-op).
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

private:
  protocol::ResponseBody call(protocol::RequestBody body);

  std::string url_;
  RetryPolicy policy_;
  std::uint64_t next_id_ = 0;
  int attempts_ = 0;
  std::function<void(std::chrono::milliseconds)> sleeper_;
};

// Serves one Backend over HTTP. Requests are handled one at a time.
class RpcServer {
public:
  explicit RpcServer(Backend& backend);
  ~RpcServer();

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  // Hook run before dispatch; returning false sends HTTP 503 instead.
  void set_gate(std::function<bool(const protocol::json&)> gate) { gate_ = std::move(gate); }

private:
  void install_routes();

  Backend& backend_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex mutex_;
  std::function<bool(const protocol::json&)> gate_;
  std::unique_ptr<std::thread> thread_;
};

} // namespace secl
