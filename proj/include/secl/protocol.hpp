/**
 * protocol.hpp - JSON wire forms for the backend contract.
 *
 * Requests carry "op" and "request_id"; responses echo both. Errors travel as
 * {"request_id", "op", "error": {"code", "message", "retryable"}}.
 * Messages are POSTed to kRpcPath, one request in flight per connection.
 */
#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "secl/backend.hpp"

namespace secl::protocol {

using json = nlohmann::json;

inline constexpr const char* kRpcPath = "/rpc";

struct InfoRequest {
  bool operator==(const InfoRequest&) const = default;
};
struct GenerateRequest {
  std::string prompt;
  bool want_confidence = true;
  bool operator==(const GenerateRequest&) const = default;
};
struct PTrueRequest {
  std::string prompt;
  std::string candidate;
  bool adapters = false;
  bool operator==(const PTrueRequest&) const = default;
};
struct DistractorsRequest {
  std::string prompt;
  int k = 4;
  bool operator==(const DistractorsRequest&) const = default;
};
struct SampleRequest {
  std::string prompt;
  int n = 1;
  double temperature = 1.0;
  bool operator==(const SampleRequest&) const = default;
};
struct TrainRequest {
  std::string prompt;
  double target = 0.0;
  int epochs = 3;
  double lr = 5e-5;
  bool operator==(const TrainRequest&) const = default;
};
struct SetAdaptersRequest {
  bool active = true;
  bool operator==(const SetAdaptersRequest&) const = default;
};
struct ResetAdaptersRequest {
  bool operator==(const ResetAdaptersRequest&) const = default;
};

using RequestBody = std::variant<InfoRequest, GenerateRequest, PTrueRequest, DistractorsRequest, SampleRequest,
                                 TrainRequest, SetAdaptersRequest, ResetAdaptersRequest>;

struct Request {
  std::string request_id;
  RequestBody body;
  bool operator==(const Request&) const = default;
};

struct PTrueResponse {
  double p_true = 0.0;
  bool operator==(const PTrueResponse&) const = default;
};
struct TextsResponse { // distractors and sample
  std::vector<std::string> texts;
  bool operator==(const TextsResponse&) const = default;
};
struct AckResponse {
  bool operator==(const AckResponse&) const = default;
};
struct ErrorResponse {
  std::string code;
  std::string message;
  bool retryable = false;
  bool operator==(const ErrorResponse&) const = default;
};

using ResponseBody =
    std::variant<BackendInfo, GenerationResult, PTrueResponse, TextsResponse, TrainReport, AckResponse, ErrorResponse>;

struct Response {
  std::string request_id;
  std::string op;
  ResponseBody body;
  bool operator==(const Response&) const = default;
};

std::string_view op_name(const RequestBody& body);

json to_json(const Request& request);
json to_json(const Response& response);

// Both throw ProtocolError on malformed input.
Request request_from_json(const json& j);
Response response_from_json(const json& j);

// Server side: decode, run against the backend, encode. Never throws; every
// failure becomes an error response.
json dispatch(Backend& backend, const json& request);

// Raises the typed exception matching an error response.
[[noreturn]] void raise(const ErrorResponse& error);

} // namespace secl::protocol
