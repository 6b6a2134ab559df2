/**
 * backend.hpp - the model backend contract and cost accounting.
 *
 * Every engine-side call goes through MeteredBackend, which tracks adapter
 * state, appends to the call log and charges the cost ledger in
 * forward-pass equivalents (FWD-eq, a backward pass counts as two).
 */
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "secl/readout.hpp"

namespace secl {

struct GenerationResult {
  std::string answer_text;
  std::array<double, kNumBins> digit_probs{};
  double mean_token_entropy = 0.0;
  bool adapters_active = true;

  bool operator==(const GenerationResult&) const = default;
};

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;

  bool operator==(const TrainReport&) const = default;
};

struct LoraInfo {
  int rank = 0;
  double alpha = 0.0;
  std::vector<std::string> layers;

  bool operator==(const LoraInfo&) const = default;
};

struct BackendInfo {
  std::string model_name;
  std::vector<std::string> supports; // generate, p_true, distractors, sample, train, adapters
  LoraInfo lora;

  bool has(std::string_view capability) const;
  bool operator==(const BackendInfo&) const = default;
};

class Backend {
public:
  virtual ~Backend() = default;

  virtual BackendInfo info() = 0;
  virtual GenerationResult generate(const std::string& prompt, bool want_confidence) = 0;
  // P(True) normalized over {True, False}; `adapters` applies to this call only.
  virtual double p_true(const std::string& prompt, const std::string& candidate, bool adapters) = 0;
  virtual std::vector<std::string> distractors(const std::string& prompt, int k) = 0;
  virtual std::vector<std::string> sample(const std::string& prompt, int n, double temperature) = 0;
  virtual TrainReport train(const std::string& prompt, double target, int epochs,
                            double learning_rate) = 0;
  virtual void set_adapters(bool active) = 0;
  virtual void reset_adapters() = 0;
};

namespace cost {
inline constexpr double kGenerate = 1.0;
inline constexpr double kPTrue = 1.0;
inline constexpr double kSample = 1.0;        // per sample
inline constexpr double kTrainPerEpoch = 3.0; // one forward plus a backward
inline constexpr double kDistractors = 0.0;   // not priced by the FWD-eq model
} // namespace cost

// Total cost when only trained questions pay for signal and training:
// skipped + trained * (1 generation + (k+1) P(True) + 3 * epochs).
std::int64_t trained_question_pricing(std::int64_t trained, std::int64_t skipped, int k_distractors = 4,
                                      int epochs = 3);

struct CallLogEntry {
  std::uint64_t seq = 0; // logical timestamp, strictly increasing
  std::string op;
  std::string question_id;
  bool adapters_active = false; // effective adapter state for this call
  double fwd_eq = 0.0;
  bool ok = true;
};

struct CostLedger {
  double fwd_eq_total = 0.0;
  std::map<std::string, std::int64_t> calls; // op -> successful call count
  std::int64_t trained_count = 0;
  std::int64_t skipped_count = 0;
  std::int64_t bin_gated_count = 0; // subset of skipped that paid for the signal

  void charge(const std::string& op, double fwd_eq);
};

// Recomputes a ledger's call totals from a call log.
CostLedger replay_ledger(const std::vector<CallLogEntry>& log);

// Decorates a backend with adapter-state tracking, a call log and a ledger.
// Single-owner: one instance per stream.
class MeteredBackend final : public Backend {
public:
  explicit MeteredBackend(Backend& inner) : inner_(inner) {}

  BackendInfo info() override;
  GenerationResult generate(const std::string& prompt, bool want_confidence) override;
  double p_true(const std::string& prompt, const std::string& candidate, bool adapters) override;
  std::vector<std::string> distractors(const std::string& prompt, int k) override;
  std::vector<std::string> sample(const std::string& prompt, int n, double temperature) override;
  TrainReport train(const std::string& prompt, double target, int epochs,
                    double learning_rate) override;
  void set_adapters(bool active) override;
  void reset_adapters() override;

  void set_question(std::string id) { question_id_ = std::move(id); }
  bool adapters_active() const noexcept { return adapters_active_; }
  const std::vector<CallLogEntry>& log() const noexcept { return log_; }
  CostLedger& ledger() noexcept { return ledger_; }
  const CostLedger& ledger() const noexcept { return ledger_; }

  // FWD-eq charged since the given log position.
  double cost_since(std::size_t log_position) const;

private:
  template <typename F>
  auto metered(const char* op, bool adapters, double fwd_eq, F&& call);

  Backend& inner_;
  bool adapters_active_ = true;
  std::uint64_t next_seq_ = 0;
  std::string question_id_;
  std::vector<CallLogEntry> log_;
  CostLedger ledger_;
};

// Disables adapters for its lifetime and re-enables them on exit.
class AdapterFreeScope {
public:
  explicit AdapterFreeScope(Backend& backend) : backend_(backend) { backend_.set_adapters(false); }
  ~AdapterFreeScope() {
    try {
      backend_.set_adapters(true);
    } catch (...) {
    }
  }
  AdapterFreeScope(const AdapterFreeScope&) = delete;
  AdapterFreeScope& operator=(const AdapterFreeScope&) = delete;

private:
  Backend& backend_;
};

} // namespace secl
