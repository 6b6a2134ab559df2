// Run configuration and stream loading.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "secl/harness.hpp"

namespace secl {

using nlohmann::json;

std::string_view to_string(Method method) {
  switch (method) {
  case Method::Verbalized: return "verbalized";
  case Method::PTrueNorm: return "p_true_norm";
  case Method::Secl: return "secl";
  }
  return "secl";
}

Method method_from_string(std::string_view name) {
  if (name == "verbalized") return Method::Verbalized;
  if (name == "p_true_norm") return Method::PTrueNorm;
  if (name == "secl") return Method::Secl;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected verbalized, p_true_norm or secl)");
}

void RunConfig::validate() const {
  world.validate();
  gate.validate();
  signal.validate();
  adapt.validate();
  if (bins < 1) throw ConfigError("metrics.bins must be >= 1");
  if (posthoc.folds < 2) throw ConfigError("posthoc.folds must be >= 2");
  if (probe.subsample < 0) throw ConfigError("probe.subsample must be >= 0");
  if (backend.kind != "synthetic" && backend.kind != "remote") {
    throw ConfigError("backend.kind must be synthetic or remote");
  }
  if (backend.kind == "remote" && backend.url.empty()) throw ConfigError("backend.url required for a remote backend");
  if (backend.kind == "remote" && stream_path.empty()) throw ConfigError("a remote backend needs stream.path");
  if (backend.max_retries < 0 || backend.timeout_s < 1) throw ConfigError("backend retry settings out of range");
  if (!stream_path.empty() && !std::filesystem::exists(stream_path)) {
    throw ConfigError("stream file not found: " + stream_path);
  }
}

RunConfig synthetic_run_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.world = world_preset("default", seed);
  cfg.signal.tau = 0.27;
  return cfg;
}

namespace {

// Reads one JSON object section, rejecting keys it does not know.
class Section {
public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }

  void allow(std::initializer_list<const char*> keys) {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [key, value] : j_.items()) {
      if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + name_);
    }
  }

  template <typename T>
  void read(const char* key, T& out) const {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(name_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

private:
  const json& j_;
  std::string name_;
};

void read_world(const json& j, WorldConfig& world) {
  Section s(j, "world");
  s.allow({"preset", "questions_per_domain", "num_options", "generation_noise", "discrimination_noise",
           "entropy_drift_sd", "entropy_drift_rho", "entropy_novelty", "entropy_novelty_decay", "w0", "w1", "lr_scale", "sc_bias", "domains"});
  std::string preset = world.preset;
  s.read("preset", preset);
  world = world_preset(preset, world.seed);
  s.read("questions_per_domain", world.questions_per_domain);
  s.read("num_options", world.num_options);
  s.read("generation_noise", world.generation_noise);
  s.read("discrimination_noise", world.discrimination_noise);
  s.read("entropy_drift_sd", world.entropy_drift_sd);
  s.read("entropy_drift_rho", world.entropy_drift_rho);
  s.read("entropy_novelty", world.entropy_novelty);
  s.read("entropy_novelty_decay", world.entropy_novelty_decay);
  s.read("w0", world.w0);
  s.read("w1", world.w1);
  s.read("lr_scale", world.lr_scale);
  s.read("sc_bias", world.sc_bias);
  if (const json* domains = s.child("domains")) {
    if (!domains->is_array() || domains->empty()) throw ConfigError("world.domains must be a non-empty array");
    world.domains.clear();
    for (const auto& d : *domains) {
      Section ds(d, "world.domains[]");
      ds.allow({"name", "skill", "gain", "difficulty_mean", "difficulty_sd", "entropy_mean", "entropy_sd"});
      DomainParams p;
      ds.read("name", p.name);
      ds.read("skill", p.skill);
      ds.read("gain", p.gain);
      ds.read("difficulty_mean", p.difficulty_mean);
      ds.read("difficulty_sd", p.difficulty_sd);
      ds.read("entropy_mean", p.entropy_mean);
      ds.read("entropy_sd", p.entropy_sd);
      world.domains.push_back(p);
    }
  }
}

} // namespace

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  Section top(j, "config");
  top.allow({"method", "seed", "stream", "domain_order", "world", "backend", "gate", "signal", "adapt", "metrics",
             "posthoc", "probe", "output_dir"});
  RunConfig cfg = synthetic_run_config(0);

  std::string method = "secl";
  top.read("method", method);
  cfg.method = method_from_string(method);
  top.read("seed", cfg.seed);
  cfg.world.seed = cfg.seed;

  if (const json* stream = top.child("stream")) {
    Section s(*stream, "stream");
    s.allow({"path"});
    s.read("path", cfg.stream_path);
    if (!cfg.stream_path.empty() && std::filesystem::path(cfg.stream_path).is_relative() && !base_dir.empty()) {
      cfg.stream_path = (base_dir / cfg.stream_path).lexically_normal().string();
    }
  }
  if (const json* order = top.child("domain_order")) {
    if (!order->is_array()) throw ConfigError("domain_order must be an array of names");
    for (const auto& name : *order) {
      if (!name.is_string()) throw ConfigError("domain_order must be an array of names");
      cfg.domain_order.push_back(name.get<std::string>());
    }
  }
  if (const json* world = top.child("world")) read_world(*world, cfg.world);
  cfg.world.seed = cfg.seed;

  if (const json* backend = top.child("backend")) {
    Section s(*backend, "backend");
    s.allow({"kind", "url", "max_retries", "timeout_s"});
    s.read("kind", cfg.backend.kind);
    s.read("url", cfg.backend.url);
    s.read("max_retries", cfg.backend.max_retries);
    s.read("timeout_s", cfg.backend.timeout_s);
  }
  if (const char* url = std::getenv("SECL_BACKEND_URL"); url && *url && cfg.backend.kind == "remote") {
    cfg.backend.url = url;
  }

  if (const json* gate = top.child("gate")) {
    Section s(*gate, "gate");
    s.allow({"mode", "alpha_ema", "epsilon", "lambda", "warmup", "burst_size", "bin_gate_threshold", "two_sided"});
    std::string mode(to_string(cfg.gate.mode));
    s.read("mode", mode);
    cfg.gate.mode = gate_mode_from_string(mode);
    s.read("alpha_ema", cfg.gate.alpha_ema);
    s.read("epsilon", cfg.gate.epsilon);
    s.read("lambda", cfg.gate.lambda);
    s.read("warmup", cfg.gate.warmup);
    s.read("burst_size", cfg.gate.burst_size);
    s.read("bin_gate_threshold", cfg.gate.bin_gate_threshold);
    s.read("two_sided", cfg.gate.two_sided);
  }
  if (const json* signal = top.child("signal")) {
    Section s(*signal, "signal");
    s.allow({"target", "tau", "k_distractors", "sc_samples", "sc_temperature"});
    std::string target(to_string(cfg.signal.target_kind));
    s.read("target", target);
    cfg.signal.target_kind = target_kind_from_string(target);
    s.read("tau", cfg.signal.tau);
    s.read("k_distractors", cfg.signal.k_distractors);
    s.read("sc_samples", cfg.signal.sc_samples);
    s.read("sc_temperature", cfg.signal.sc_temperature);
  }
  if (const json* adapt = top.child("adapt")) {
    Section s(*adapt, "adapt");
    s.allow({"alpha_step", "delta", "learning_rate", "epochs", "accumulate"});
    s.read("alpha_step", cfg.adapt.alpha_step);
    s.read("delta", cfg.adapt.delta);
    s.read("learning_rate", cfg.adapt.learning_rate);
    s.read("epochs", cfg.adapt.epochs);
    s.read("accumulate", cfg.adapt.accumulate);
  }
  if (const json* metrics = top.child("metrics")) {
    Section s(*metrics, "metrics");
    s.allow({"bins"});
    s.read("bins", cfg.bins);
  }
  if (const json* posthoc = top.child("posthoc")) {
    Section s(*posthoc, "posthoc");
    s.allow({"enabled", "folds"});
    s.read("enabled", cfg.posthoc.enabled);
    s.read("folds", cfg.posthoc.folds);
  }
  if (const json* probe = top.child("probe")) {
    Section s(*probe, "probe");
    s.allow({"subsample", "margin"});
    s.read("subsample", cfg.probe.subsample);
    s.read("margin", cfg.probe.margin);
  }
  top.read("output_dir", cfg.output_dir);
  if (!cfg.output_dir.empty() && std::filesystem::path(cfg.output_dir).is_relative() && !base_dir.empty()) {
    cfg.output_dir = (base_dir / cfg.output_dir).lexically_normal().string();
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

ojson config_to_json(const RunConfig& cfg) {
  ojson j;
  j["method"] = std::string(to_string(cfg.method));
  j["seed"] = cfg.seed;
  j["stream"] = cfg.stream_path.empty() ? ojson{{"source", "synthetic"}} : ojson{{"path", cfg.stream_path}};
  j["domain_order"] = cfg.domain_order;

  const auto& w = cfg.world;
  ojson world;
  world["preset"] = w.preset;
  world["questions_per_domain"] = w.questions_per_domain;
  world["num_options"] = w.num_options;
  world["generation_noise"] = w.generation_noise;
  world["discrimination_noise"] = w.discrimination_noise;
  world["entropy_drift_sd"] = w.entropy_drift_sd;
  world["entropy_drift_rho"] = w.entropy_drift_rho;
  world["entropy_novelty"] = w.entropy_novelty;
  world["entropy_novelty_decay"] = w.entropy_novelty_decay;
  world["w0"] = w.w0;
  world["w1"] = w.w1;
  world["lr_scale"] = w.lr_scale;
  world["sc_bias"] = w.sc_bias;
  world["domains"] = ojson::array();
  for (const auto& d : w.domains) {
    world["domains"].push_back({{"name", d.name},
                                {"skill", d.skill},
                                {"gain", d.gain},
                                {"difficulty_mean", d.difficulty_mean},
                                {"difficulty_sd", d.difficulty_sd},
                                {"entropy_mean", d.entropy_mean},
                                {"entropy_sd", d.entropy_sd}});
  }
  j["world"] = world;

  j["backend"] = {{"kind", cfg.backend.kind},
                  {"url", cfg.backend.url},
                  {"max_retries", cfg.backend.max_retries},
                  {"timeout_s", cfg.backend.timeout_s}};
  j["gate"] = {{"mode", std::string(to_string(cfg.gate.mode))},
               {"alpha_ema", cfg.gate.alpha_ema},
               {"epsilon", cfg.gate.epsilon},
               {"lambda", cfg.gate.lambda},
               {"warmup", cfg.gate.warmup},
               {"burst_size", cfg.gate.burst_size},
               {"bin_gate_threshold", cfg.gate.bin_gate_threshold},
               {"two_sided", cfg.gate.two_sided}};
  j["signal"] = {{"target", std::string(to_string(cfg.signal.target_kind))},
                 {"tau", cfg.signal.tau},
                 {"k_distractors", cfg.signal.k_distractors},
                 {"sc_samples", cfg.signal.sc_samples},
                 {"sc_temperature", cfg.signal.sc_temperature}};
  j["adapt"] = {{"alpha_step", cfg.adapt.alpha_step},
                {"delta", cfg.adapt.delta},
                {"learning_rate", cfg.adapt.learning_rate},
                {"epochs", cfg.adapt.epochs},
                {"accumulate", cfg.adapt.accumulate}};
  j["metrics"] = {{"bins", cfg.bins}};
  j["posthoc"] = {{"enabled", cfg.posthoc.enabled}, {"folds", cfg.posthoc.folds}};
  j["probe"] = {{"subsample", cfg.probe.subsample}, {"margin", cfg.probe.margin}};
  return j;
}

std::vector<QuestionRecord> parse_stream_jsonl(std::istream& in) {
  std::vector<QuestionRecord> records;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error&) {
      throw DataError(where + "not valid JSON");
    }
    if (!row.is_object()) throw DataError(where + "row must be a JSON object");

    auto text = [&](const char* key, bool required) -> std::string {
      auto it = row.find(key);
      if (it == row.end() || it->is_null()) {
        if (required) throw DataError(where + "missing '" + key + "'");
        return {};
      }
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number()) return it->dump(); // numeric gold answers
      throw DataError(where + "'" + key + "' must be a string");
    };

    QuestionRecord rec;
    rec.id = text("id", true);
    rec.domain = text("domain", true);
    rec.prompt = text("prompt", true);
    rec.gold = text("gold", true);
    if (rec.id.empty() || rec.domain.empty() || rec.prompt.empty()) {
      throw DataError(where + "id, domain and prompt must be non-empty");
    }
    try {
      rec.judge = judge_from_string(text("judge", true));
    } catch (const std::invalid_argument& e) {
      throw DataError(where + e.what());
    }
    if (auto it = row.find("options"); it != row.end() && !it->is_null()) {
      if (!it->is_array()) throw DataError(where + "'options' must be an array of strings");
      for (const auto& o : *it) {
        if (!o.is_string()) throw DataError(where + "'options' must be an array of strings");
        rec.options.push_back(o.get<std::string>());
      }
    }
    if (rec.judge == Judge::OptionIndex && rec.options.empty()) {
      throw DataError(where + "option_index judge needs options");
    }
    if (!ids.insert(rec.id).second) throw DataError(where + "duplicate id '" + rec.id + "'");
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError("stream is empty");
  return records;
}

std::vector<QuestionRecord> load_stream_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stream " + path.string());
  try {
    return parse_stream_jsonl(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<QuestionRecord> order_stream(const std::vector<QuestionRecord>& records,
                                         const std::vector<std::string>& order) {
  std::vector<std::string> domains;
  std::map<std::string, std::vector<const QuestionRecord*>> blocks;
  for (const auto& r : records) {
    if (!blocks.count(r.domain)) domains.push_back(r.domain);
    blocks[r.domain].push_back(&r);
  }
  if (!order.empty()) {
    std::set<std::string> seen;
    for (const auto& name : order) {
      if (!blocks.count(name)) throw DataError("domain order names '" + name + "', which is not in the stream");
      if (!seen.insert(name).second) throw DataError("domain order repeats '" + name + "'");
    }
    domains = order;
  }
  std::vector<QuestionRecord> out;
  for (const auto& name : domains) {
    for (const auto* r : blocks[name]) out.push_back(*r);
  }
  return out;
}

std::vector<std::string> reversed(std::vector<std::string> order) {
  std::reverse(order.begin(), order.end());
  return order;
}

} // namespace secl
