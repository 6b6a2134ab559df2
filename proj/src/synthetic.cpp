#include "secl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "secl/errors.hpp"
#include "secl/util.hpp"

namespace secl {

void WorldConfig::validate() const {
  if (domains.empty()) throw ConfigError("world: at least one domain required");
  if (questions_per_domain < 1) throw ConfigError("world.questions_per_domain must be >= 1");
  if (num_options < 2) throw ConfigError("world.num_options must be >= 2");
  if (generation_noise < 0.0 || discrimination_noise < 0.0 || entropy_drift_sd < 0.0) {
    throw ConfigError("world: noise scales must be >= 0");
  }
  if (!(entropy_drift_rho >= 0.0 && entropy_drift_rho < 1.0)) {
    throw ConfigError("world.entropy_drift_rho must be in [0, 1)");
  }
  if (entropy_novelty < 0.0 || !(entropy_novelty_decay > 0.0)) {
    throw ConfigError("world: entropy_novelty must be >= 0 and its decay > 0");
  }
  if (!(lr_scale > 0.0)) throw ConfigError("world.lr_scale must be > 0");
  for (const auto& d : domains) {
    if (d.name.empty()) throw ConfigError("world: domain without a name");
    if (!(d.gain > 0.0) || d.difficulty_sd < 0.0 || d.entropy_sd < 0.0 || d.entropy_mean < 0.0) {
      throw ConfigError("world: bad parameters for domain " + d.name);
    }
  }
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t j = i + 1; j < domains.size(); ++j) {
      if (domains[i].name == domains[j].name) throw ConfigError("world: duplicate domain " + domains[i].name);
    }
  }
}

WorldConfig world_preset(const std::string& name, std::uint64_t seed) {
  WorldConfig cfg;
  cfg.preset = name;
  cfg.seed = seed;
  // Entropy levels rise along the default domain order, so each boundary is
  // an upward shift; the reversed order only has downward ones.
  cfg.domains = {
      {"gsm8k", 0.5, 1.0, 0.0, 1.0, 1.1, 0.25},
      {"mmlu", 0.2, 1.0, 0.0, 1.0, 1.5, 0.25},
      {"arc", 0.7, 1.0, 0.0, 1.0, 1.9, 0.25},
      {"truthfulqa", 0.0, 1.0, 0.0, 1.0, 2.3, 0.25},
  };
  cfg.entropy_drift_sd = 0.3;
  if (name == "default") return cfg;
  if (name == "no_gap") {
    cfg.discrimination_noise = 0.4;
    return cfg;
  }
  throw ConfigError("unknown world preset '" + name + "' (expected default or no_gap)");
}

SyntheticQuestion synth_question(const DomainParams& domain, const WorldConfig& cfg, int index,
                                 double entropy_level, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticQuestion q;
  auto& lat = q.latent;
  const double x = domain.difficulty_mean + domain.difficulty_sd * normal(rng);
  lat.p_star = sigmoid(domain.gain * (domain.skill - x));
  lat.p_hat = sigmoid(logit(std::clamp(lat.p_star, 1e-12, 1.0 - 1e-12)) + cfg.generation_noise * normal(rng));
  lat.entropy = std::max(0.0, entropy_level + domain.entropy_sd * normal(rng));

  const auto n_opt = static_cast<std::size_t>(cfg.num_options);
  lat.gold_index = std::uniform_int_distribution<std::size_t>(0, n_opt - 1)(rng);
  const bool correct = unit(rng) < lat.p_star;
  if (correct) {
    lat.answer_index = lat.gold_index;
  } else {
    const auto wrong = std::uniform_int_distribution<std::size_t>(0, n_opt - 2)(rng);
    lat.answer_index = wrong < lat.gold_index ? wrong : wrong + 1;
  }
  for (std::size_t j = 0; j < n_opt; ++j) lat.p_true_noise.push_back(cfg.discrimination_noise * normal(rng));

  auto& rec = q.record;
  char id[64];
  std::snprintf(id, sizeof(id), "%s-%04d", domain.name.c_str(), index + 1);
  rec.id = id;
  rec.domain = domain.name;
  const int base = std::uniform_int_distribution<int>(10, 900)(rng);
  const int stride = std::uniform_int_distribution<int>(3, 17)(rng);
  rec.prompt = "[" + rec.id + "] Which value is correct?";
  for (std::size_t j = 0; j < n_opt; ++j) {
    rec.options.push_back(std::to_string(base + stride * static_cast<int>(j)));
    rec.prompt += std::string(" ") + static_cast<char>('A' + j) + ") " + rec.options.back();
  }
  rec.gold = std::string(1, static_cast<char>('A' + lat.gold_index));
  rec.judge = Judge::OptionIndex;
  return q;
}

SyntheticWorld::SyntheticWorld(WorldConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (const auto& domain : cfg_.domains) {
    // each domain has its own stream so the content does not depend on domain order
    std::mt19937_64 rng(derive_seed(cfg_.seed, domain.name, "domain"));
    std::normal_distribution<double> normal(0.0, 1.0);
    double drift = 0.0;
    for (int i = 0; i < cfg_.questions_per_domain; ++i) {
      drift = cfg_.entropy_drift_rho * drift + cfg_.entropy_drift_sd * normal(rng);
      const double novelty = cfg_.entropy_novelty * std::exp(-i / cfg_.entropy_novelty_decay);
      questions_.push_back(synth_question(domain, cfg_, i, domain.entropy_mean + novelty + drift, rng));
    }
  }
  for (std::size_t i = 0; i < questions_.size(); ++i) by_prompt_.emplace(questions_[i].record.prompt, i);
}

std::vector<std::string> SyntheticWorld::domain_names() const {
  std::vector<std::string> names;
  for (const auto& d : cfg_.domains) names.push_back(d.name);
  return names;
}

std::vector<QuestionRecord> SyntheticWorld::records() const {
  std::vector<QuestionRecord> out;
  out.reserve(questions_.size());
  for (const auto& q : questions_) out.push_back(q.record);
  return out;
}

const SyntheticQuestion& SyntheticWorld::lookup(const std::string& prompt) const {
  auto it = by_prompt_.find(prompt);
  if (it == by_prompt_.end()) {
    throw BackendError("unknown_prompt", "synthetic world has no question with this prompt", false);
  }
  return questions_[it->second];
}

double head_confidence(const HeadParams& w, double feature) { return sigmoid(w.w1 * feature + w.w0); }

std::pair<double, double> head_loss_gradient(const HeadParams& w, double feature, double target) {
  const double c = head_confidence(w, feature);
  const double dz = 2.0 * (c - target) * c * (1.0 - c);
  return {dz, dz * feature};
}

std::array<double, kNumBins> digit_distribution(double c) {
  std::array<double, kNumBins> probs{};
  const double pos = std::clamp(c, 0.05, 0.95) * 10.0 - 0.5; // in [0, 9]
  const auto k = std::min(static_cast<std::size_t>(std::floor(pos)), kNumBins - 1);
  const double frac = pos - static_cast<double>(k);
  probs[k] = 1.0 - frac;
  if (k + 1 < kNumBins) probs[k + 1] = frac;
  return probs;
}

SyntheticBackend::SyntheticBackend(std::shared_ptr<const SyntheticWorld> world) : world_(std::move(world)) {}

BackendInfo SyntheticBackend::info() {
  BackendInfo info;
  info.model_name = "synthetic-" + world_->config().preset;
  info.supports = {"generate", "p_true", "distractors", "sample", "train", "adapters"};
  info.lora = {2, 1.0, {"confidence_head.w0", "confidence_head.w1"}};
  return info;
}

HeadParams SyntheticBackend::effective() const noexcept {
  const HeadParams b = base();
  if (!adapters_active_) return b;
  return {b.w0 + delta_.w0, b.w1 + delta_.w1};
}

double SyntheticBackend::confidence(const std::string& prompt) const {
  const auto& q = world_->lookup(prompt);
  return head_confidence(effective(), logit(q.latent.p_hat));
}

GenerationResult SyntheticBackend::generate(const std::string& prompt, bool want_confidence) {
  const auto& q = world_->lookup(prompt);
  GenerationResult out;
  out.answer_text = q.record.options[q.latent.answer_index];
  out.mean_token_entropy = q.latent.entropy;
  out.adapters_active = adapters_active_;
  if (want_confidence) out.digit_probs = digit_distribution(confidence(prompt));
  return out;
}

double SyntheticBackend::p_true(const std::string& prompt, const std::string& candidate, bool /*adapters*/) {
  const auto& q = world_->lookup(prompt);
  const auto idx = resolve_option(q.record, candidate);
  if (!idx || normalize_answer(q.record.options[*idx]) != normalize_answer(candidate)) {
    throw BackendError("unknown_candidate", "candidate is not one of the question's options", false);
  }
  const auto& lat = q.latent;
  const double k = static_cast<double>(q.record.options.size() - 1);
  const double base = *idx == lat.answer_index ? lat.p_star : (1.0 - lat.p_star) / k;
  return std::clamp(base + lat.p_true_noise[*idx], 0.01, 0.99);
}

std::vector<std::string> SyntheticBackend::distractors(const std::string& prompt, int k) {
  const auto& q = world_->lookup(prompt);
  std::vector<std::string> out;
  for (std::size_t j = 0; j < q.record.options.size() && static_cast<int>(out.size()) < k; ++j) {
    if (j != q.latent.answer_index) out.push_back(q.record.options[j]);
  }
  return out;
}

std::vector<std::string> SyntheticBackend::sample(const std::string& prompt, int n, double temperature) {
  if (n < 1) throw BackendError("invalid_request", "sample needs n >= 1", false);
  if (!(temperature >= 0.0)) throw BackendError("invalid_request", "sample needs temperature >= 0", false);
  const auto& q = world_->lookup(prompt);
  const auto& cfg = world_->config();
  const double agree = std::clamp(q.latent.p_star + cfg.sc_bias, 0.0, 1.0);
  const double p_same = 1.0 - (1.0 - agree) * std::min(1.0, temperature);

  std::uint64_t t_bits = 0;
  std::memcpy(&t_bits, &temperature, sizeof(t_bits));
  std::mt19937_64 rng(derive_seed(cfg.seed, prompt, "sample/" + std::to_string(n) + "/" + hex64(t_bits)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_opt = q.record.options.size();
  std::uniform_int_distribution<std::size_t> other(0, n_opt - 2);

  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    if (unit(rng) < p_same) {
      out.push_back(q.record.options[q.latent.answer_index]);
    } else {
      const auto j = other(rng);
      out.push_back(q.record.options[j < q.latent.answer_index ? j : j + 1]);
    }
  }
  return out;
}

TrainReport SyntheticBackend::train(const std::string& prompt, double target, int epochs, double learning_rate) {
  if (!adapters_active_) throw BackendError("adapters_inactive", "train requires active adapters", false);
  if (!(target >= 0.0 && target <= 1.0)) throw BackendError("invalid_request", "train target outside [0, 1]", false);
  if (epochs < 1 || !(learning_rate > 0.0)) {
    throw BackendError("invalid_request", "train needs epochs >= 1 and learning_rate > 0", false);
  }
  const auto& q = world_->lookup(prompt);
  const double f = logit(q.latent.p_hat);
  const HeadParams b = base();
  auto loss_at = [&](const HeadParams& d) {
    const double c = head_confidence({b.w0 + d.w0, b.w1 + d.w1}, f);
    return (c - target) * (c - target);
  };

  TrainReport report;
  report.initial_loss = loss_at(delta_);
  double loss = report.initial_loss;
  for (int e = 0; e < epochs; ++e) {
    const auto [g0, g1] = head_loss_gradient({b.w0 + delta_.w0, b.w1 + delta_.w1}, f, target);
    if (g0 == 0.0 && g1 == 0.0) break;
    // halve the step until the loss does not increase
    double step = learning_rate * world_->config().lr_scale;
    for (int halvings = 0; halvings < 60; ++halvings, step /= 2.0) {
      const HeadParams cand{delta_.w0 - step * g0, delta_.w1 - step * g1};
      const double cand_loss = loss_at(cand);
      if (cand_loss <= loss) {
        delta_ = cand;
        loss = cand_loss;
        break;
      }
    }
  }
  report.final_loss = loss;
  return report;
}

std::string dump_stream_jsonl(const SyntheticWorld& world) {
  std::string out;
  for (const auto& q : world.questions()) {
    nlohmann::ordered_json row;
    row["id"] = q.record.id;
    row["domain"] = q.record.domain;
    row["prompt"] = q.record.prompt;
    row["options"] = q.record.options;
    row["gold"] = q.record.gold;
    row["judge"] = std::string(to_string(q.record.judge));
    out += row.dump();
    out += '\n';
  }
  return out;
}

} // namespace secl
