#include "secl/adapt.hpp"

#include <algorithm>

#include "secl/errors.hpp"
#include "secl/gate.hpp"

namespace secl {

void AdaptConfig::validate() const {
  if (!(alpha_step > 0.0 && alpha_step <= 1.0)) throw ConfigError("adapt.alpha_step must be in (0, 1]");
  if (!(delta > 0.0)) throw ConfigError("adapt.delta must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("adapt.learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("adapt.epochs must be >= 1");
}

double directional_target(double c, double c_star, double alpha_step, double delta) {
  return c + alpha_step * std::clamp(c_star - c, -delta, delta);
}

double mse_loss(double c, double target) {
  const double diff = c - target;
  return diff * diff;
}

TrainDirective make_directive(const std::string& question_id, double c, double c_star,
                              const AdaptConfig& cfg) {
  TrainDirective d;
  d.question_id = question_id;
  d.current_confidence = c;
  d.target_signal = c_star;
  d.directional_target = directional_target(c, c_star, cfg.alpha_step, cfg.delta);
  d.loss = mse_loss(c, d.directional_target);
  d.epochs = cfg.epochs;
  d.learning_rate = cfg.learning_rate;
  return d;
}

StepOutcome calibration_step(const QuestionRecord& record, const std::string& answer_text,
                             double current_confidence, Backend& backend, const SignalConfig& signal_cfg,
                             const AdaptConfig& adapt_cfg, int bin_gate_threshold) {
  StepOutcome out;
  // adapters are back on once this returns
  out.signal = discriminative_target(record, answer_text, backend, signal_cfg);

  if (bin_gate_threshold >= 0 && !bin_gate(current_confidence, out.signal, bin_gate_threshold)) {
    out.skip = SkipReason::BinGate;
    return out;
  }

  auto directive = make_directive(record.id, current_confidence, out.signal, adapt_cfg);
  const auto report =
      backend.train(record.prompt, directive.directional_target, adapt_cfg.epochs, adapt_cfg.learning_rate);
  directive.final_loss = report.final_loss;
  if (!adapt_cfg.accumulate) backend.reset_adapters();
  out.trained = true;
  out.directive = directive;
  return out;
}

} // namespace secl
