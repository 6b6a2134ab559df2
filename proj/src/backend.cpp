#include "secl/backend.hpp"

#include <algorithm>

#include "secl/errors.hpp"

namespace secl {

bool BackendInfo::has(std::string_view capability) const {
  return std::find(supports.begin(), supports.end(), capability) != supports.end();
}

std::int64_t trained_question_pricing(std::int64_t trained, std::int64_t skipped, int k_distractors,
                                      int epochs) {
  const std::int64_t per_trained = 1 + (k_distractors + 1) + 3 * static_cast<std::int64_t>(epochs);
  return skipped + trained * per_trained;
}

void CostLedger::charge(const std::string& op, double fwd_eq) {
  fwd_eq_total += fwd_eq;
  ++calls[op];
}

CostLedger replay_ledger(const std::vector<CallLogEntry>& log) {
  CostLedger ledger;
  for (const auto& entry : log) {
    if (entry.ok) ledger.charge(entry.op, entry.fwd_eq);
  }
  return ledger;
}

template <typename F>
auto MeteredBackend::metered(const char* op, bool adapters, double fwd_eq, F&& call) {
  CallLogEntry entry{next_seq_++, op, question_id_, adapters, fwd_eq, true};
  try {
    auto result = call();
    log_.push_back(entry);
    ledger_.charge(entry.op, fwd_eq);
    return result;
  } catch (...) {
    entry.ok = false;
    entry.fwd_eq = 0.0;
    log_.push_back(entry);
    throw;
  }
}

BackendInfo MeteredBackend::info() {
  return metered("info", adapters_active_, 0.0, [&] { return inner_.info(); });
}

GenerationResult MeteredBackend::generate(const std::string& prompt, bool want_confidence) {
  return metered("generate", adapters_active_, cost::kGenerate, [&] {
    auto result = inner_.generate(prompt, want_confidence);
    if (want_confidence) {
      // validates non-negativity and non-zero mass
      try {
        (void)soft_confidence(result.digit_probs);
      } catch (const std::invalid_argument& err) {
        throw ProtocolError(std::string("malformed digit distribution: ") + err.what());
      }
    }
    return result;
  });
}

double MeteredBackend::p_true(const std::string& prompt, const std::string& candidate, bool adapters) {
  return metered("p_true", adapters, cost::kPTrue, [&] {
    const double p = inner_.p_true(prompt, candidate, adapters);
    if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError("p_true outside [0, 1]");
    return p;
  });
}

std::vector<std::string> MeteredBackend::distractors(const std::string& prompt, int k) {
  return metered("distractors", adapters_active_, cost::kDistractors,
                 [&] { return inner_.distractors(prompt, k); });
}

std::vector<std::string> MeteredBackend::sample(const std::string& prompt, int n, double temperature) {
  return metered("sample", adapters_active_, cost::kSample * n,
                 [&] { return inner_.sample(prompt, n, temperature); });
}

TrainReport MeteredBackend::train(const std::string& prompt, double target, int epochs,
                                  double learning_rate) {
  return metered("train", adapters_active_, cost::kTrainPerEpoch * epochs,
                 [&] { return inner_.train(prompt, target, epochs, learning_rate); });
}

void MeteredBackend::set_adapters(bool active) {
  metered("set_adapters", active, 0.0, [&] {
    inner_.set_adapters(active);
    return 0;
  });
  adapters_active_ = active;
}

void MeteredBackend::reset_adapters() {
  metered("reset_adapters", adapters_active_, 0.0, [&] {
    inner_.reset_adapters();
    return 0;
  });
}

double MeteredBackend::cost_since(std::size_t log_position) const {
  double total = 0.0;
  for (std::size_t i = log_position; i < log_.size(); ++i) total += log_[i].fwd_eq;
  return total;
}

} // namespace secl
