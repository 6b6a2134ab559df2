#include "secl/rpc.hpp"

#include "httplib.h"
#include "secl/errors.hpp"

namespace secl {

using protocol::json;

RemoteBackend::RemoteBackend(std::string url, RetryPolicy policy)
    : url_(std::move(url)), policy_(policy), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (url_.empty()) throw ConfigError("remote backend needs a URL");
}

RemoteBackend::~RemoteBackend() = default;

protocol::ResponseBody RemoteBackend::call(protocol::RequestBody body) {
  protocol::Request request{"req-" + std::to_string(++next_id_), std::move(body)};
  const std::string op(protocol::op_name(request.body));
  const std::string payload = protocol::to_json(request).dump();
  // training mutates adapter state, so a retry could apply it twice
  const bool may_retry = op != "train";

  std::string last_failure;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) sleeper_(policy_.base_delay * (1 << (attempt - 1)));
    ++attempts_;

    httplib::Client client(url_);
    const auto secs = static_cast<time_t>(policy_.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    auto res = client.Post(protocol::kRpcPath, payload, "application/json");

    bool retryable = false;
    if (!res) {
      last_failure = "transport failure: " + httplib::to_string(res.error());
      retryable = true;
    } else if (res->status >= 500) {
      last_failure = "server returned HTTP " + std::to_string(res->status);
      retryable = true;
    } else if (res->status != 200) {
      throw ProtocolError(op + ": server returned HTTP " + std::to_string(res->status));
    } else {
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(op + ": response is not JSON: " + e.what());
      }
      auto response = protocol::response_from_json(parsed);
      if (response.request_id != request.request_id) {
        throw ProtocolError(op + ": response request_id '" + response.request_id + "' does not match '" +
                            request.request_id + "'");
      }
      if (response.op != op) throw ProtocolError(op + ": response carries op '" + response.op + "'");
      if (auto* err = std::get_if<protocol::ErrorResponse>(&response.body)) {
        if (!(err->retryable && may_retry && attempt < policy_.max_retries)) protocol::raise(*err);
        last_failure = err->code + ": " + err->message;
        continue;
      }
      return response.body;
    }

    if (!may_retry) throw BackendError("transport", op + ": " + last_failure + " (not retried)", retryable);
    if (attempt >= policy_.max_retries) {
      throw BackendError("transport",
                         op + ": " + last_failure + " after " + std::to_string(attempt + 1) + " attempts", true);
    }
  }
}

BackendInfo RemoteBackend::info() { return std::get<BackendInfo>(call(protocol::InfoRequest{})); }

GenerationResult RemoteBackend::generate(const std::string& prompt, bool want_confidence) {
  return std::get<GenerationResult>(call(protocol::GenerateRequest{prompt, want_confidence}));
}

double RemoteBackend::p_true(const std::string& prompt, const std::string& candidate, bool adapters) {
  return std::get<protocol::PTrueResponse>(call(protocol::PTrueRequest{prompt, candidate, adapters})).p_true;
}

std::vector<std::string> RemoteBackend::distractors(const std::string& prompt, int k) {
  return std::get<protocol::TextsResponse>(call(protocol::DistractorsRequest{prompt, k})).texts;
}

std::vector<std::string> RemoteBackend::sample(const std::string& prompt, int n, double temperature) {
  return std::get<protocol::TextsResponse>(call(protocol::SampleRequest{prompt, n, temperature})).texts;
}

TrainReport RemoteBackend::train(const std::string& prompt, double target, int epochs, double learning_rate) {
  return std::get<TrainReport>(call(protocol::TrainRequest{prompt, target, epochs, learning_rate}));
}

void RemoteBackend::set_adapters(bool active) { call(protocol::SetAdaptersRequest{active}); }

void RemoteBackend::reset_adapters() { call(protocol::ResetAdaptersRequest{}); }

RpcServer::RpcServer(Backend& backend) : backend_(backend), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

RpcServer::~RpcServer() { stop(); }

void RpcServer::install_routes() {
  server_->Post(protocol::kRpcPath, [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mutex_);
    json request;
    try {
      request = json::parse(req.body);
    } catch (const json::parse_error&) {
      request = nullptr; // dispatch turns this into a protocol error
    }
    if (gate_ && !gate_(request)) {
      res.status = 503;
      res.set_content("{}", "application/json");
      return;
    }
    res.set_content(protocol::dispatch(backend_, request).dump(), "application/json");
  });
  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
}

int RpcServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw BackendError("transport", "cannot bind " + host + ":" + std::to_string(port), false);
  thread_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void RpcServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    throw BackendError("transport", "cannot listen on " + host + ":" + std::to_string(port), false);
  }
}

void RpcServer::stop() {
  if (server_) server_->stop();
  if (thread_ && thread_->joinable()) thread_->join();
  thread_.reset();
}

} // namespace secl
