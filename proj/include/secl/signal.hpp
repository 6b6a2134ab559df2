/**
 * signal.hpp - discriminative self-supervision.
 *
 * The target is computed from the base model only: every P(True) and
 * sampling call issued here runs with adapters disabled.
 */
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "secl/backend.hpp"
#include "secl/readout.hpp"

namespace secl {

enum class TargetKind { NormPTrue, RawPTrue, SelfConsistency };

std::string_view to_string(TargetKind kind);
TargetKind target_kind_from_string(std::string_view name);

struct SignalConfig {
  double tau = 0.7;
  int k_distractors = 4;
  TargetKind target_kind = TargetKind::NormPTrue;
  int sc_samples = 10;
  double sc_temperature = 1.0;

  void validate() const;
};

enum class CandidateSource { McOptions, Generated };

struct CandidateSet {
  std::string answer;
  std::vector<std::string> distractors;
  CandidateSource source = CandidateSource::McOptions;
};

// e_a / (e_a + sum_k e_dk) with e_x = exp(P_True(x) / tau).
double norm_p_true(double p_answer, std::span<const double> p_distractors, double tau);

// Multiple choice: the non-chosen options, subsampled to K without
// replacement (seeded by the question id) when more are available.
// Open-ended: K backend-generated alternatives, deduplicated against the answer.
CandidateSet build_candidates(const QuestionRecord& record, const std::string& answer_text,
                              Backend& backend, int k_distractors);

// Fraction of samples that agree (after answer normalization) with the modal sample.
double self_consistency(std::span<const std::string> samples);

double discriminative_target(const QuestionRecord& record, const std::string& answer_text,
                             Backend& backend, const SignalConfig& cfg);

} // namespace secl
