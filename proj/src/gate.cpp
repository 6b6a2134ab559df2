#include "secl/gate.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "secl/errors.hpp"
#include "secl/readout.hpp"

namespace secl {

std::string_view to_string(GateMode mode) {
  switch (mode) {
  case GateMode::EntropyGated: return "entropy_gated";
  case GateMode::AlwaysOn: return "always_on";
  case GateMode::BinGateOnly: return "bin_gate_only";
  case GateMode::Off: return "off";
  }
  return "off";
}

GateMode gate_mode_from_string(std::string_view name) {
  if (name == "entropy_gated") return GateMode::EntropyGated;
  if (name == "always_on") return GateMode::AlwaysOn;
  if (name == "bin_gate_only") return GateMode::BinGateOnly;
  if (name == "off") return GateMode::Off;
  throw ConfigError("unknown gate mode '" + std::string(name) + "'");
}

std::string_view to_string(GateReason reason) {
  switch (reason) {
  case GateReason::InBurst: return "in_burst";
  case GateReason::Trigger: return "trigger";
  case GateReason::Warmup: return "warmup";
  case GateReason::Steady: return "steady";
  case GateReason::AlwaysOn: return "always_on";
  }
  return "steady";
}

void GateConfig::validate() const {
  if (!(alpha_ema > 0.0 && alpha_ema <= 1.0)) throw ConfigError("gate.alpha_ema must be in (0, 1]");
  if (!(epsilon >= 0.0)) throw ConfigError("gate.epsilon must be >= 0");
  if (!(lambda > 0.0)) throw ConfigError("gate.lambda must be > 0");
  if (warmup < 0) throw ConfigError("gate.warmup must be >= 0");
  if (burst_size < 1) throw ConfigError("gate.burst_size must be >= 1");
  if (bin_gate_threshold < 0) throw ConfigError("gate.bin_gate_threshold must be >= 0");
}

GateState GateState::initial(const GateConfig& cfg) {
  GateState s;
  s.warmup_remaining = cfg.warmup;
  return s;
}

GateState ema_update(GateState state, double entropy, double alpha_ema) {
  if (!std::isfinite(entropy) || entropy < 0.0) throw std::invalid_argument("invalid entropy");
  if (!state.has_ema) {
    state.ema_entropy = entropy;
    state.has_ema = true;
  } else {
    state.ema_entropy = (1.0 - alpha_ema) * state.ema_entropy + alpha_ema * entropy;
  }
  return state;
}

PhResult ph_update(GateState state, double smoothed_entropy, const GateConfig& cfg) {
  if (!std::isfinite(smoothed_entropy)) throw std::invalid_argument("invalid entropy");
  const bool first = state.count == 0;
  ++state.count;
  state.running_mean += (smoothed_entropy - state.running_mean) / static_cast<double>(state.count);
  const double deviation = smoothed_entropy - state.running_mean;
  state.cum_sum += deviation - cfg.epsilon;
  state.min_cum = first ? state.cum_sum : std::min(state.min_cum, state.cum_sum);
  bool alarmed = state.cum_sum - state.min_cum > cfg.lambda;
  if (cfg.two_sided) {
    state.cum_sum_down += -deviation - cfg.epsilon;
    state.min_cum_down = first ? state.cum_sum_down : std::min(state.min_cum_down, state.cum_sum_down);
    alarmed = alarmed || state.cum_sum_down - state.min_cum_down > cfg.lambda;
  }
  return {state, alarmed};
}

GateState reset(GateState state, const GateConfig& cfg) {
  state.running_mean = 0.0;
  state.cum_sum = 0.0;
  state.min_cum = 0.0;
  state.cum_sum_down = 0.0;
  state.min_cum_down = 0.0;
  state.count = 0;
  state.burst_remaining = cfg.burst_size;
  state.warmup_remaining = cfg.warmup;
  ++state.triggers;
  return state;
}

DecideResult decide(GateState state, const GateConfig& cfg, double entropy) {
  switch (cfg.mode) {
  case GateMode::Off:
    return {state, {false, GateReason::Steady, std::nullopt}};
  case GateMode::AlwaysOn:
  case GateMode::BinGateOnly:
    return {state, {true, GateReason::AlwaysOn, std::nullopt}};
  case GateMode::EntropyGated:
    break;
  }

  state = ema_update(state, entropy, cfg.alpha_ema);
  if (state.burst_remaining > 0) {
    --state.burst_remaining;
    return {state, {true, GateReason::InBurst, std::nullopt}};
  }
  auto [next, alarmed] = ph_update(state, state.ema_entropy, cfg);
  state = next;
  if (state.warmup_remaining > 0) {
    --state.warmup_remaining;
    return {state, {false, GateReason::Warmup, std::nullopt}};
  }
  if (alarmed) {
    // the triggering question opens the burst
    state = reset(state, cfg);
    --state.burst_remaining;
    return {state, {true, GateReason::Trigger, std::nullopt}};
  }
  return {state, {false, GateReason::Steady, std::nullopt}};
}

bool bin_gate(double confidence, double target, int threshold) {
  return std::abs(bin_of(confidence) - bin_of(target)) > threshold;
}

} // namespace secl
