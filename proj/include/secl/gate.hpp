/**
 * gate.hpp - deciding when to adapt.
 *
 * Per question the gate smooths the output entropy with an EMA and feeds
 * the smoothed series into a Page-Hinkley detector:
 *
 *   m_t = sum_{s<=t} (H_s - mean_s - eps),   alarm when m_t - min_{s<=t} m_s > lambda
 *
 * where mean_s is the running mean of the smoothed series since the last
 * reset. An alarm resets the detector and opens a burst of B questions in
 * which every question is sent to calibration. PH statistics are frozen
 * during a burst and alarms are suppressed for `warmup` questions after
 * the stream start and after every reset. The EMA keeps tracking the
 * stream throughout.
 */
#pragma once

#include <optional>
#include <string_view>

namespace secl {

enum class GateMode { EntropyGated, AlwaysOn, BinGateOnly, Off };

std::string_view to_string(GateMode mode);
GateMode gate_mode_from_string(std::string_view name);

struct GateConfig {
  double alpha_ema = 0.05;
  double epsilon = 0.05;
  double lambda = 3.0;
  int warmup = 30;
  int burst_size = 50;
  int bin_gate_threshold = 1;
  GateMode mode = GateMode::EntropyGated;
  bool two_sided = false; // also alarm on entropy decreases

  void validate() const;
  // Always-on trains every question it sees; the other modes consult the bin gate.
  bool uses_bin_gate() const noexcept { return mode != GateMode::AlwaysOn; }
};

struct GateState {
  bool has_ema = false;
  double ema_entropy = 0.0;
  double running_mean = 0.0;
  double cum_sum = 0.0; // m_t
  double min_cum = 0.0; // M_t
  double cum_sum_down = 0.0; // mirrored statistic (two-sided only)
  double min_cum_down = 0.0;
  long count = 0;
  int warmup_remaining = 0;
  int burst_remaining = 0;
  int triggers = 0;

  static GateState initial(const GateConfig& cfg);
};

enum class GateReason { InBurst, Trigger, Warmup, Steady, AlwaysOn };

std::string_view to_string(GateReason reason);

struct GateDecision {
  bool calibrate_now = false;
  GateReason reason = GateReason::Steady;
  std::optional<bool> bin_gate_pass; // filled in after the signal is known
};

// Throws std::invalid_argument("invalid entropy") for negative or non-finite input.
GateState ema_update(GateState state, double entropy, double alpha_ema);

struct PhResult {
  GateState state;
  bool alarmed = false;
};

PhResult ph_update(GateState state, double smoothed_entropy, const GateConfig& cfg);

GateState reset(GateState state, const GateConfig& cfg);

struct DecideResult {
  GateState state;
  GateDecision decision;
};

DecideResult decide(GateState state, const GateConfig& cfg, double entropy);

// True when the question should be trained: |bin(c) - bin(target)| > threshold.
bool bin_gate(double confidence, double target, int threshold);

} // namespace secl
