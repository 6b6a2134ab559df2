#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "secl/errors.hpp"
#include "secl/gate.hpp"

using namespace secl;

namespace {

// Index of the first alarm when feeding `xs` straight into ph_update.
long first_ph_alarm(const std::vector<double>& xs, const GateConfig& cfg) {
  GateState s = GateState::initial(cfg);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto r = ph_update(s, xs[i], cfg);
    s = r.state;
    if (r.alarmed) return static_cast<long>(i);
  }
  return -1;
}

struct GateRun {
  std::vector<GateDecision> decisions;
  GateState final;
};

GateRun drive(const std::vector<double>& entropies, const GateConfig& cfg) {
  GateRun run{{}, GateState::initial(cfg)};
  for (double h : entropies) {
    auto r = decide(run.final, cfg, h);
    run.final = r.state;
    run.decisions.push_back(r.decision);
  }
  return run;
}

std::vector<double> noisy(std::size_t n, double level, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> xs(n);
  for (auto& x : xs) x = std::max(0.0, level + g(rng));
  return xs;
}

} // namespace

TEST_CASE("EMA recursion") {
  GateState s;
  s = ema_update(s, 2.0, 0.05);
  CHECK(s.ema_entropy == 2.0);
  CHECK(ema_update(s, 2.0, 0.7).ema_entropy == doctest::Approx(2.0));
  CHECK(ema_update(s, 3.0, 0.05).ema_entropy == doctest::Approx(2.05).epsilon(1e-12));
  CHECK_THROWS_WITH_AS(ema_update(s, -1.0, 0.05), "invalid entropy", std::invalid_argument);
  CHECK_THROWS_AS(ema_update(s, std::numeric_limits<double>::infinity(), 0.05), std::invalid_argument);
}

TEST_CASE("EMA matches the closed-form oracle") {
  const auto raw = noisy(500, 1.5, 0.4, 3);
  const auto want = oracle::ema_series(raw, 0.05);
  GateState s;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    s = ema_update(s, raw[i], 0.05);
    CHECK(std::fabs(s.ema_entropy - want[i]) < 1e-12);
  }
}

TEST_CASE("Page-Hinkley stays silent on a constant stream") {
  GateConfig cfg;
  GateState s = GateState::initial(cfg);
  for (int t = 1; t <= 5000; ++t) {
    auto r = ph_update(s, 1.7, cfg);
    s = r.state;
    REQUIRE_FALSE(r.alarmed);
    CHECK(s.cum_sum == doctest::Approx(-cfg.epsilon * t));
    CHECK(s.cum_sum - s.min_cum == doctest::Approx(0.0));
  }
}

TEST_CASE("Page-Hinkley detects a unit step quickly") {
  GateConfig cfg;
  std::vector<double> xs(100, 1.0);
  xs.resize(200, 2.0);
  const long alarm = first_ph_alarm(xs, cfg);
  REQUIRE(alarm >= 100);
  CHECK(alarm < 110);
  CHECK(alarm == oracle::ph_first_alarm(xs, cfg.epsilon, cfg.lambda, 0));
}

TEST_CASE("Page-Hinkley agrees with the brute-force recursion on random series") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> level(0.5, 2.5), shift(-1.0, 1.5), sd(0.01, 0.6);
  std::uniform_int_distribution<int> at(10, 300);
  GateConfig cfg;
  int alarms = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto xs = noisy(400, level(rng), sd(rng), rng());
    const int pos = at(rng);
    const double dh = shift(rng);
    for (std::size_t i = static_cast<std::size_t>(pos); i < xs.size(); ++i) xs[i] += dh;
    const auto smoothed = oracle::ema_series(xs, cfg.alpha_ema);
    const long got = first_ph_alarm(smoothed, cfg);
    CHECK(got == oracle::ph_first_alarm(smoothed, cfg.epsilon, cfg.lambda, 0));
    if (got >= 0) ++alarms;
  }
  CHECK(alarms > 50);
}

TEST_CASE("a larger lambda never alarms earlier") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    auto xs = noisy(600, 1.2, 0.3, rng());
    for (std::size_t i = 250; i < xs.size(); ++i) xs[i] += 0.1 * (trial % 8);
    const auto smoothed = oracle::ema_series(xs, 0.05);
    long previous = -1;
    bool silent = false;
    for (double lambda : {0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 1e9}) {
      GateConfig cfg;
      cfg.lambda = lambda;
      const long alarm = first_ph_alarm(smoothed, cfg);
      if (silent) {
        CHECK(alarm == -1);
      } else if (alarm == -1) {
        silent = true;
      } else {
        CHECK(alarm >= previous);
        previous = alarm;
      }
    }
    GateConfig never;
    never.lambda = 1e9;
    CHECK(first_ph_alarm(smoothed, never) == -1);
  }
}

TEST_CASE("reset opens a burst and re-arms warmup") {
  GateConfig cfg;
  GateState s = GateState::initial(cfg);
  s.count = 40;
  s.cum_sum = 5.0;
  s.running_mean = 1.3;
  s.warmup_remaining = 0;
  s = reset(s, cfg);
  CHECK(s.burst_remaining == 50);
  CHECK(s.triggers == 1);
  CHECK(s.warmup_remaining == 30);
  CHECK(s.count == 0);
  CHECK(s.cum_sum == 0.0);
  s = reset(s, cfg);
  CHECK(s.triggers == 2);
}

TEST_CASE("burst countdown") {
  GateConfig cfg;
  GateState s = GateState::initial(cfg);
  s.burst_remaining = 3;
  const auto r = decide(s, cfg, 1.0);
  CHECK(r.decision.calibrate_now);
  CHECK(r.decision.reason == GateReason::InBurst);
  CHECK(r.state.burst_remaining == 2);
  CHECK(r.state.count == 0); // statistics are frozen inside the burst
}

TEST_CASE("warmup suppresses calibration at stream start") {
  GateConfig cfg;
  const auto run = drive(std::vector<double>(40, 1.0), cfg);
  for (int i = 0; i < 30; ++i) {
    CHECK_FALSE(run.decisions[i].calibrate_now);
    CHECK(run.decisions[i].reason == GateReason::Warmup);
  }
  for (int i = 30; i < 40; ++i) CHECK(run.decisions[i].reason == GateReason::Steady);
}

TEST_CASE("warmup hides a shift that happens inside it") {
  GateConfig cfg;
  std::vector<double> xs(10, 1.0);
  xs.resize(25, 4.0);
  const auto run = drive(xs, cfg);
  for (const auto& d : run.decisions) CHECK_FALSE(d.calibrate_now);
}

TEST_CASE("after a burst the re-armed warmup holds alarms back") {
  GateConfig cfg;
  std::vector<double> xs(200, 1.0);
  xs.resize(600, 2.0);
  const auto run = drive(xs, cfg);
  long trigger = -1;
  for (std::size_t i = 0; i < run.decisions.size(); ++i) {
    if (run.decisions[i].reason == GateReason::Trigger) {
      trigger = static_cast<long>(i);
      break;
    }
  }
  REQUIRE(trigger >= 200);
  CHECK(trigger < 230);
  for (long i = trigger + 1; i < trigger + 50; ++i) CHECK(run.decisions[i].reason == GateReason::InBurst);
  for (long i = trigger + 50; i < trigger + 80; ++i) CHECK(run.decisions[i].reason == GateReason::Warmup);
}

TEST_CASE("trigger count equals the number of trigger decisions") {
  GateConfig cfg;
  cfg.burst_size = 10;
  cfg.warmup = 5;
  std::vector<double> xs;
  for (int block = 0; block < 8; ++block) xs.resize(xs.size() + 120, 1.0 + 0.6 * block);
  const auto run = drive(xs, cfg);
  int triggers = 0;
  for (const auto& d : run.decisions) triggers += d.reason == GateReason::Trigger ? 1 : 0;
  CHECK(triggers >= 7);
  CHECK(run.final.triggers == triggers);
}

TEST_CASE("change detection on a half-unit shift with default settings") {
  GateConfig cfg;
  auto xs = noisy(400, 1.0, 0.02, 1);
  for (std::size_t i = 200; i < xs.size(); ++i) xs[i] += 0.5;
  const auto run = drive(xs, cfg);
  long first = -1;
  for (std::size_t i = 0; i < run.decisions.size(); ++i) {
    if (run.decisions[i].reason == GateReason::Trigger) {
      first = static_cast<long>(i);
      break;
    }
  }
  CHECK(first >= 200);
  CHECK(first <= 230);
}

TEST_CASE("long constant noisy stream raises no alarm") {
  GateConfig cfg;
  const auto run = drive(noisy(10000, 1.0, 0.02, 2), cfg);
  CHECK(run.final.triggers == 0);
}

TEST_CASE("one-sided test ignores drops, two-sided catches them") {
  std::vector<double> xs(300, 2.0);
  xs.resize(700, 1.0);
  GateConfig one;
  CHECK(drive(xs, one).final.triggers == 0);
  GateConfig two;
  two.two_sided = true;
  CHECK(drive(xs, two).final.triggers >= 1);
}

TEST_CASE("always-on and bin-gate-only calibrate every question, off none") {
  GateConfig cfg;
  cfg.mode = GateMode::AlwaysOn;
  for (const auto& d : drive(noisy(300, 1.0, 0.5, 4), cfg).decisions) {
    CHECK(d.calibrate_now);
    CHECK(d.reason == GateReason::AlwaysOn);
  }
  cfg.mode = GateMode::BinGateOnly;
  for (const auto& d : drive(noisy(50, 1.0, 0.5, 4), cfg).decisions) CHECK(d.calibrate_now);
  cfg.mode = GateMode::Off;
  for (const auto& d : drive(noisy(50, 1.0, 0.5, 4), cfg).decisions) CHECK_FALSE(d.calibrate_now);
  CHECK(cfg.uses_bin_gate());
  cfg.mode = GateMode::AlwaysOn;
  CHECK_FALSE(cfg.uses_bin_gate());
}

TEST_CASE("bin gate") {
  CHECK_FALSE(bin_gate(0.75, 0.65, 1));
  CHECK(bin_gate(0.95, 0.35, 1));
  CHECK_FALSE(bin_gate(0.75, 0.55, 2));
  CHECK(bin_gate(0.75, 0.55, 1));
  CHECK(bin_gate(0.75, 0.65, 0));
  CHECK_FALSE(bin_gate(0.71, 0.79, 0));
}

TEST_CASE("gate config validation and names") {
  GateConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.alpha_ema = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.burst_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.warmup = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  for (auto m : {GateMode::EntropyGated, GateMode::AlwaysOn, GateMode::BinGateOnly, GateMode::Off}) {
    CHECK(gate_mode_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(gate_mode_from_string("sometimes"), ConfigError);
}
