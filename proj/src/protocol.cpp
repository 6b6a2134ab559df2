#include "secl/protocol.hpp"

#include <cmath>

#include "secl/errors.hpp"

namespace secl::protocol {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) throw ProtocolError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_boolean()) throw ProtocolError(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

double get_number(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ProtocolError(std::string("field '") + key + "' is not finite");
  return d;
}

int get_int(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer()) throw ProtocolError(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

double get_probability(const json& j, const char* key) {
  const double p = get_number(j, key);
  if (p < 0.0 || p > 1.0) throw ProtocolError(std::string("field '") + key + "' outside [0, 1]");
  return p;
}

std::vector<std::string> get_strings(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_array()) throw ProtocolError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) throw ProtocolError(std::string("field '") + key + "' must hold strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

} // namespace

std::string_view op_name(const RequestBody& body) {
  return std::visit(overloaded{
                        [](const InfoRequest&) { return std::string_view("info"); },
                        [](const GenerateRequest&) { return std::string_view("generate"); },
                        [](const PTrueRequest&) { return std::string_view("p_true"); },
                        [](const DistractorsRequest&) { return std::string_view("distractors"); },
                        [](const SampleRequest&) { return std::string_view("sample"); },
                        [](const TrainRequest&) { return std::string_view("train"); },
                        [](const SetAdaptersRequest&) { return std::string_view("set_adapters"); },
                        [](const ResetAdaptersRequest&) { return std::string_view("reset_adapters"); },
                    },
                    body);
}

json to_json(const Request& request) {
  json j;
  j["request_id"] = request.request_id;
  j["op"] = std::string(op_name(request.body));
  std::visit(overloaded{
                 [](const InfoRequest&) {},
                 [&](const GenerateRequest& r) {
                   j["prompt"] = r.prompt;
                   j["want_confidence"] = r.want_confidence;
                 },
                 [&](const PTrueRequest& r) {
                   j["prompt"] = r.prompt;
                   j["candidate"] = r.candidate;
                   j["adapters"] = r.adapters;
                 },
                 [&](const DistractorsRequest& r) {
                   j["prompt"] = r.prompt;
                   j["k"] = r.k;
                 },
                 [&](const SampleRequest& r) {
                   j["prompt"] = r.prompt;
                   j["n"] = r.n;
                   j["temperature"] = r.temperature;
                 },
                 [&](const TrainRequest& r) {
                   j["prompt"] = r.prompt;
                   j["target"] = r.target;
                   j["epochs"] = r.epochs;
                   j["lr"] = r.lr;
                 },
                 [&](const SetAdaptersRequest& r) { j["active"] = r.active; },
                 [](const ResetAdaptersRequest&) {},
             },
             request.body);
  return j;
}

Request request_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("request must be a JSON object");
  Request r;
  r.request_id = get_string(j, "request_id");
  const std::string op = get_string(j, "op");
  if (op == "info") {
    r.body = InfoRequest{};
  } else if (op == "generate") {
    r.body = GenerateRequest{get_string(j, "prompt"), get_bool(j, "want_confidence")};
  } else if (op == "p_true") {
    r.body = PTrueRequest{get_string(j, "prompt"), get_string(j, "candidate"), get_bool(j, "adapters")};
  } else if (op == "distractors") {
    r.body = DistractorsRequest{get_string(j, "prompt"), get_int(j, "k")};
  } else if (op == "sample") {
    r.body = SampleRequest{get_string(j, "prompt"), get_int(j, "n"), get_number(j, "temperature")};
  } else if (op == "train") {
    r.body = TrainRequest{get_string(j, "prompt"), get_number(j, "target"), get_int(j, "epochs"),
                          get_number(j, "lr")};
  } else if (op == "set_adapters") {
    r.body = SetAdaptersRequest{get_bool(j, "active")};
  } else if (op == "reset_adapters") {
    r.body = ResetAdaptersRequest{};
  } else {
    throw ProtocolError("unknown op '" + op + "'");
  }
  return r;
}

json to_json(const Response& response) {
  json j;
  j["request_id"] = response.request_id;
  j["op"] = response.op;
  std::visit(overloaded{
                 [&](const BackendInfo& info) {
                   j["model_name"] = info.model_name;
                   j["supports"] = info.supports;
                   j["lora"] = {{"rank", info.lora.rank}, {"alpha", info.lora.alpha}, {"layers", info.lora.layers}};
                 },
                 [&](const GenerationResult& g) {
                   j["answer_text"] = g.answer_text;
                   j["digit_probs"] = g.digit_probs;
                   j["mean_token_entropy"] = g.mean_token_entropy;
                   j["adapters_active"] = g.adapters_active;
                 },
                 [&](const PTrueResponse& p) { j["p_true"] = p.p_true; },
                 [&](const TextsResponse& t) { j["texts"] = t.texts; },
                 [&](const TrainReport& t) {
                   j["initial_loss"] = t.initial_loss;
                   j["final_loss"] = t.final_loss;
                 },
                 [&](const AckResponse&) { j["ok"] = true; },
                 [&](const ErrorResponse& e) {
                   j["error"] = {{"code", e.code}, {"message", e.message}, {"retryable", e.retryable}};
                 },
             },
             response.body);
  return j;
}

Response response_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("response must be a JSON object");
  Response r;
  r.request_id = get_string(j, "request_id");
  r.op = get_string(j, "op");
  if (auto it = j.find("error"); it != j.end()) {
    if (!it->is_object()) throw ProtocolError("field 'error' must be an object");
    r.body = ErrorResponse{get_string(*it, "code"), get_string(*it, "message"), get_bool(*it, "retryable")};
    return r;
  }
  const std::string& op = r.op;
  if (op == "info") {
    BackendInfo info;
    info.model_name = get_string(j, "model_name");
    info.supports = get_strings(j, "supports");
    const auto& lora = field(j, "lora");
    info.lora.rank = get_int(lora, "rank");
    info.lora.alpha = get_number(lora, "alpha");
    info.lora.layers = get_strings(lora, "layers");
    r.body = info;
  } else if (op == "generate") {
    GenerationResult g;
    g.answer_text = get_string(j, "answer_text");
    const auto& probs = field(j, "digit_probs");
    if (!probs.is_array() || probs.size() != kNumBins) throw ProtocolError("digit_probs must hold 10 numbers");
    for (std::size_t i = 0; i < kNumBins; ++i) {
      if (!probs[i].is_number()) throw ProtocolError("digit_probs must hold 10 numbers");
      g.digit_probs[i] = probs[i].get<double>();
      if (!(g.digit_probs[i] >= 0.0 && g.digit_probs[i] <= 1.0)) throw ProtocolError("digit_probs entry outside [0, 1]");
    }
    g.mean_token_entropy = get_number(j, "mean_token_entropy");
    if (g.mean_token_entropy < 0.0) throw ProtocolError("mean_token_entropy must be >= 0");
    g.adapters_active = get_bool(j, "adapters_active");
    r.body = g;
  } else if (op == "p_true") {
    r.body = PTrueResponse{get_probability(j, "p_true")};
  } else if (op == "distractors" || op == "sample") {
    r.body = TextsResponse{get_strings(j, "texts")};
  } else if (op == "train") {
    r.body = TrainReport{get_number(j, "initial_loss"), get_number(j, "final_loss")};
  } else if (op == "set_adapters" || op == "reset_adapters") {
    if (!get_bool(j, "ok")) throw ProtocolError("acknowledgement with ok=false");
    r.body = AckResponse{};
  } else {
    throw ProtocolError("unknown op '" + op + "'");
  }
  return r;
}

json dispatch(Backend& backend, const json& request) {
  Response response;
  if (request.is_object()) {
    if (auto it = request.find("request_id"); it != request.end() && it->is_string()) {
      response.request_id = it->get<std::string>();
    }
    if (auto it = request.find("op"); it != request.end() && it->is_string()) response.op = it->get<std::string>();
  }
  try {
    const Request req = request_from_json(request);
    response.body = std::visit(
        overloaded{
            [&](const InfoRequest&) -> ResponseBody { return backend.info(); },
            [&](const GenerateRequest& r) -> ResponseBody { return backend.generate(r.prompt, r.want_confidence); },
            [&](const PTrueRequest& r) -> ResponseBody {
              return PTrueResponse{backend.p_true(r.prompt, r.candidate, r.adapters)};
            },
            [&](const DistractorsRequest& r) -> ResponseBody {
              return TextsResponse{backend.distractors(r.prompt, r.k)};
            },
            [&](const SampleRequest& r) -> ResponseBody {
              return TextsResponse{backend.sample(r.prompt, r.n, r.temperature)};
            },
            [&](const TrainRequest& r) -> ResponseBody {
              return backend.train(r.prompt, r.target, r.epochs, r.lr);
            },
            [&](const SetAdaptersRequest& r) -> ResponseBody {
              backend.set_adapters(r.active);
              return AckResponse{};
            },
            [&](const ResetAdaptersRequest&) -> ResponseBody {
              backend.reset_adapters();
              return AckResponse{};
            },
        },
        req.body);
  } catch (const CapabilityError& e) {
    response.body = ErrorResponse{"capability", e.what(), false};
  } catch (const ProtocolError& e) {
    response.body = ErrorResponse{"protocol", e.what(), false};
  } catch (const BackendError& e) {
    response.body = ErrorResponse{e.code(), e.what(), e.retryable()};
  } catch (const std::exception& e) {
    response.body = ErrorResponse{"internal", e.what(), false};
  }
  return to_json(response);
}

void raise(const ErrorResponse& error) {
  if (error.code == "capability") throw CapabilityError(error.message);
  if (error.code == "protocol") throw ProtocolError(error.message);
  throw BackendError(error.code, error.message, error.retryable);
}

} // namespace secl::protocol
