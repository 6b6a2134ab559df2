/**
 * adapt.hpp - bounded directional updates.
 *
 * The training target never jumps to the discriminative signal; it moves
 * the current confidence at most alpha_step * delta toward it:
 *
 *   target = c + alpha_step * clip(c* - c, -delta, delta),   loss = (c - target)^2
 */
#pragma once

#include <optional>
#include <string>

#include "secl/backend.hpp"
#include "secl/readout.hpp"
#include "secl/signal.hpp"

namespace secl {

struct AdaptConfig {
  double alpha_step = 0.5;
  double delta = 0.15;
  double learning_rate = 5e-5;
  int epochs = 3;
  bool accumulate = true;

  void validate() const;
  double max_step() const noexcept { return alpha_step * delta; }
};

struct TrainDirective {
  std::string question_id;
  double current_confidence = 0.0;
  double target_signal = 0.0;
  double directional_target = 0.0;
  double loss = 0.0;
  int epochs = 0;
  double learning_rate = 0.0;
  double final_loss = 0.0; // reported by the backend after training
};

double directional_target(double c, double c_star, double alpha_step, double delta);
double mse_loss(double c, double target);

TrainDirective make_directive(const std::string& question_id, double c, double c_star,
                              const AdaptConfig& cfg);

enum class SkipReason { BinGate };

struct StepOutcome {
  double signal = 0.0;
  bool trained = false;
  std::optional<TrainDirective> directive;
  std::optional<SkipReason> skip;
};

// Signal from the adapter-free base model, then (unless the bin gate skips
// it) one training request toward the directional target. With
// accumulate = false the adapters are reset after the update.
// `bin_gate_threshold` < 0 bypasses the bin gate.
StepOutcome calibration_step(const QuestionRecord& record, const std::string& answer_text,
                             double current_confidence, Backend& backend, const SignalConfig& signal_cfg,
                             const AdaptConfig& adapt_cfg, int bin_gate_threshold);

} // namespace secl
