/**
 * synthetic.hpp - a seeded, miscalibrated agent behind the backend contract.
 *
 * Each question carries a latent correctness probability p* = sigma(g (s - x))
 * for domain skill s and difficulty x. The agent answers correctly with
 * probability p*. Its verbalized confidence comes from a two-parameter head
 *
 *   c = sigma(w1 * logit(p_hat) + w0),   p_hat = sigma(logit(p*) + noise)
 *
 * which starts overconfident; training moves an adapter delta on (w0, w1).
 * The P(True) channel reads p* through small noise and never sees the
 * adapter, so a generation-discrimination gap exists by construction.
 */
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "secl/backend.hpp"
#include "secl/readout.hpp"

namespace secl {

struct DomainParams {
  std::string name;
  double skill = 0.0;
  double gain = 1.0;
  double difficulty_mean = 0.0;
  double difficulty_sd = 1.0;
  double entropy_mean = 1.0;
  double entropy_sd = 0.25;
};

struct WorldConfig {
  std::string preset = "default";
  std::uint64_t seed = 0;
  std::vector<DomainParams> domains;
  int questions_per_domain = 500;
  int num_options = 5;
  double generation_noise = 1.0;     // sd of the logit noise in p_hat
  double discrimination_noise = 0.05; // sd of the P(True) noise
  double entropy_drift_sd = 0.1;     // AR(1) wander of the entropy level within a domain
  double entropy_drift_rho = 0.95;
  double entropy_novelty = 0.0;        // extra entropy on entering a domain
  double entropy_novelty_decay = 80.0; // questions for the extra entropy to fall by 1/e
  double w0 = 0.9;
  double w1 = 0.2;
  double lr_scale = 4e4; // head step = lr_scale * learning_rate
  double sc_bias = 0.3;  // sampled answers agree with the greedy one w.p. clip(p* + sc_bias)

  void validate() const;
};

// Presets: "default" (gap present) and "no_gap" (noisy discriminative channel).
WorldConfig world_preset(const std::string& name, std::uint64_t seed);

struct QuestionLatent {
  double p_star = 0.5;
  double p_hat = 0.5;
  double entropy = 0.0;
  std::size_t gold_index = 0;
  std::size_t answer_index = 0;
  std::vector<double> p_true_noise; // one draw per option
};

struct SyntheticQuestion {
  QuestionRecord record;
  QuestionLatent latent;
};

// One question of `domain`; `entropy_level` is the domain's current drifted entropy mean.
SyntheticQuestion synth_question(const DomainParams& domain, const WorldConfig& cfg, int index,
                                 double entropy_level, std::mt19937_64& rng);

class SyntheticWorld {
public:
  explicit SyntheticWorld(WorldConfig cfg);

  const WorldConfig& config() const noexcept { return cfg_; }
  // Questions grouped by domain in configuration order.
  const std::vector<SyntheticQuestion>& questions() const noexcept { return questions_; }
  std::vector<std::string> domain_names() const;
  std::vector<QuestionRecord> records() const;

  // Throws BackendError("unknown_prompt") for prompts outside the world.
  const SyntheticQuestion& lookup(const std::string& prompt) const;

private:
  WorldConfig cfg_;
  std::vector<SyntheticQuestion> questions_;
  std::unordered_map<std::string, std::size_t> by_prompt_;
};

struct HeadParams {
  double w0 = 0.0;
  double w1 = 0.0;
  bool operator==(const HeadParams&) const = default;
};

// c = sigma(w1 * f + w0) for feature f = logit(p_hat).
double head_confidence(const HeadParams& w, double feature);
// Gradient of (c - target)^2 with respect to (w0, w1).
std::pair<double, double> head_loss_gradient(const HeadParams& w, double feature, double target);

// Digit distribution whose soft readout equals clamp(c, 0.05, 0.95): the mass
// is split between the two nearest bin midpoints, so bin_of(c) holds the peak.
std::array<double, kNumBins> digit_distribution(double c);

class SyntheticBackend final : public Backend {
public:
  explicit SyntheticBackend(std::shared_ptr<const SyntheticWorld> world);

  BackendInfo info() override;
  GenerationResult generate(const std::string& prompt, bool want_confidence) override;
  double p_true(const std::string& prompt, const std::string& candidate, bool adapters) override;
  std::vector<std::string> distractors(const std::string& prompt, int k) override;
  std::vector<std::string> sample(const std::string& prompt, int n, double temperature) override;
  TrainReport train(const std::string& prompt, double target, int epochs, double learning_rate) override;
  void set_adapters(bool active) override { adapters_active_ = active; }
  void reset_adapters() override { delta_ = {}; }

  std::unique_ptr<SyntheticBackend> clone() const { return std::make_unique<SyntheticBackend>(*this); }

  const SyntheticWorld& world() const noexcept { return *world_; }
  HeadParams base() const noexcept { return {world_->config().w0, world_->config().w1}; }
  HeadParams delta() const noexcept { return delta_; }
  HeadParams effective() const noexcept;
  bool adapters_active() const noexcept { return adapters_active_; }

  // Current verbalized confidence for a prompt, before the readout clamp.
  double confidence(const std::string& prompt) const;

private:
  std::shared_ptr<const SyntheticWorld> world_;
  HeadParams delta_;
  bool adapters_active_ = true;
};

// Rows {id, domain, prompt, options, gold, judge}, one per line.
std::string dump_stream_jsonl(const SyntheticWorld& world);

} // namespace secl
