#include "secl/signal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "secl/errors.hpp"
#include "secl/util.hpp"

namespace secl {

std::string_view to_string(TargetKind kind) {
  switch (kind) {
  case TargetKind::NormPTrue: return "norm_p_true";
  case TargetKind::RawPTrue: return "raw_p_true";
  case TargetKind::SelfConsistency: return "self_consistency";
  }
  return "norm_p_true";
}

TargetKind target_kind_from_string(std::string_view name) {
  if (name == "norm_p_true") return TargetKind::NormPTrue;
  if (name == "raw_p_true") return TargetKind::RawPTrue;
  if (name == "self_consistency") return TargetKind::SelfConsistency;
  throw ConfigError("unknown target kind '" + std::string(name) + "'");
}

void SignalConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("signal.tau must be positive");
  if (k_distractors < 1) throw ConfigError("signal.k_distractors must be >= 1");
  if (sc_samples < 2) throw ConfigError("signal.sc_samples must be >= 2");
  if (!(sc_temperature > 0.0)) throw ConfigError("signal.sc_temperature must be positive");
}

double norm_p_true(double p_answer, std::span<const double> p_distractors, double tau) {
  if (p_distractors.empty()) throw std::invalid_argument("normalization requires distractors");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  // softmax with the largest logit subtracted
  double top = p_answer;
  for (double p : p_distractors) top = std::max(top, p);
  const double e_answer = std::exp((p_answer - top) / tau);
  double denom = e_answer;
  for (double p : p_distractors) denom += std::exp((p - top) / tau);
  return e_answer / denom;
}

namespace {

std::vector<std::string> dedup_against(const std::vector<std::string>& texts, const std::string& answer) {
  std::vector<std::string> out;
  std::vector<std::string> seen{normalize_answer(answer)};
  for (const auto& t : texts) {
    auto norm = normalize_answer(t);
    if (norm.empty() || std::find(seen.begin(), seen.end(), norm) != seen.end()) continue;
    seen.push_back(std::move(norm));
    out.push_back(t);
  }
  return out;
}

} // namespace

CandidateSet build_candidates(const QuestionRecord& record, const std::string& answer_text,
                              Backend& backend, int k_distractors) {
  CandidateSet set;
  set.answer = answer_text;
  if (!record.options.empty()) {
    set.source = CandidateSource::McOptions;
    auto pool = dedup_against(record.options, answer_text);
    if (pool.size() > static_cast<std::size_t>(k_distractors)) {
      std::mt19937_64 rng(derive_seed(0x5eed, record.id, "distractors"));
      std::vector<std::size_t> idx(pool.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(k_distractors));
      std::sort(idx.begin(), idx.end()); // keep option order
      std::vector<std::string> chosen;
      for (auto i : idx) chosen.push_back(pool[i]);
      pool = std::move(chosen);
    }
    set.distractors = std::move(pool);
  } else {
    set.source = CandidateSource::Generated;
    std::vector<std::string> generated;
    try {
      generated = backend.distractors(record.prompt, k_distractors + 1);
    } catch (const CapabilityError&) {
      throw CapabilityError("backend cannot generate distractors");
    }
    auto pool = dedup_against(generated, answer_text);
    if (pool.size() > static_cast<std::size_t>(k_distractors)) pool.resize(static_cast<std::size_t>(k_distractors));
    set.distractors = std::move(pool);
  }
  if (set.distractors.empty()) {
    throw DataError("question " + record.id + ": no distractors available");
  }
  return set;
}

double self_consistency(std::span<const std::string> samples) {
  if (samples.empty()) throw std::invalid_argument("self-consistency needs samples");
  std::map<std::string, int> counts;
  int best = 0;
  for (const auto& s : samples) best = std::max(best, ++counts[normalize_answer(s)]);
  return static_cast<double>(best) / static_cast<double>(samples.size());
}

double discriminative_target(const QuestionRecord& record, const std::string& answer_text,
                             Backend& backend, const SignalConfig& cfg) {
  try {
    AdapterFreeScope base_model(backend);
    switch (cfg.target_kind) {
    case TargetKind::RawPTrue:
      return backend.p_true(record.prompt, answer_text, false);
    case TargetKind::SelfConsistency: {
      auto samples = backend.sample(record.prompt, cfg.sc_samples, cfg.sc_temperature);
      return self_consistency(samples);
    }
    case TargetKind::NormPTrue: {
      auto candidates = build_candidates(record, answer_text, backend, cfg.k_distractors);
      const double p_answer = backend.p_true(record.prompt, candidates.answer, false);
      std::vector<double> p_distractors;
      p_distractors.reserve(candidates.distractors.size());
      for (const auto& d : candidates.distractors) {
        p_distractors.push_back(backend.p_true(record.prompt, d, false));
      }
      return norm_p_true(p_answer, p_distractors, cfg.tau);
    }
    }
  } catch (const CapabilityError&) {
    throw;
  } catch (const BackendError& err) {
    throw BackendError(err.code(), "question " + record.id + ": " + err.what(), err.retryable());
  }
  return 0.0;
}

} // namespace secl
