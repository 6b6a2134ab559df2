#include <random>

#include "doctest.h"
#include "fake_backend.hpp"
#include "oracles.hpp"
#include "secl/signal.hpp"
#include "secl/synthetic.hpp"
#include "support.hpp"

using namespace secl;

TEST_CASE("NormP_True hand values") {
  const std::vector<double> same(4, 0.6);
  CHECK(norm_p_true(0.6, same, 0.7) == doctest::Approx(0.2).epsilon(1e-12));
  const std::vector<double> half(4, 0.5);
  CHECK(norm_p_true(0.9, half, 0.7) == doctest::Approx(0.3069).epsilon(1e-3));
  const std::vector<double> spread{0.1, 0.3, 0.8, 0.95};
  CHECK(norm_p_true(0.2, spread, 1e6) == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("NormP_True matches the literal softmax oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> t(0.05, 2.0);
  std::uniform_int_distribution<int> kd(1, 8);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> d(static_cast<std::size_t>(kd(rng)));
    for (auto& v : d) v = u(rng);
    const double pa = u(rng);
    const double tau = t(rng);
    const double got = norm_p_true(pa, d, tau);
    CHECK(std::fabs(got - oracle::norm_p_true(pa, d, tau)) < 1e-9);
    CHECK(got > 0.0);
    CHECK(got < 1.0);
  }
}

TEST_CASE("NormP_True argument checks") {
  CHECK_THROWS_AS(norm_p_true(0.5, std::vector<double>{}, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(norm_p_true(0.5, std::vector<double>{0.4}, 0.0), std::invalid_argument);
}

TEST_CASE("multiple-choice candidates are the other options") {
  FakeBackend fake;
  QuestionRecord q{"q", "d", "p", {"A1", "B1", "C1", "D1"}, "B", Judge::OptionIndex};
  const auto set = build_candidates(q, "B1", fake, 4);
  CHECK(set.source == CandidateSource::McOptions);
  CHECK(set.distractors == std::vector<std::string>{"A1", "C1", "D1"});

  QuestionRecord two{"q2", "d", "p", {"yes", "no"}, "A", Judge::OptionIndex};
  CHECK(build_candidates(two, "yes", fake, 4).distractors == std::vector<std::string>{"no"});
}

TEST_CASE("multiple-choice subsampling is seeded by the question id") {
  FakeBackend fake;
  QuestionRecord q{"q-sub", "d", "p", {"a", "b", "c", "d", "e", "f", "g"}, "A", Judge::OptionIndex};
  const auto first = build_candidates(q, "a", fake, 3);
  CHECK(first.distractors.size() == 3);
  CHECK(build_candidates(q, "a", fake, 3).distractors == first.distractors);
  for (const auto& d : first.distractors) CHECK(d != "a");
}

TEST_CASE("open-ended candidates come from the backend, deduplicated") {
  FakeBackend fake;
  QuestionRecord q{"q", "d", "p", {}, "Paris", Judge::ExactMatch};
  const auto set = build_candidates(q, "Paris", fake, 4);
  CHECK(set.source == CandidateSource::Generated);
  CHECK(set.distractors == std::vector<std::string>{"Lyon", "Nice", "Lille"});
  fake.generated = {"Lyon", "Nice", "Lille", "Metz", "Brest", "Caen"};
  CHECK(build_candidates(q, "Paris", fake, 4).distractors.size() == 4);
  fake.generated = {"PARIS", " paris"};
  CHECK_THROWS_AS(build_candidates(q, "Paris", fake, 4), DataError);
  fake.can_distract = false;
  CHECK_THROWS_AS(build_candidates(q, "Paris", fake, 4), CapabilityError);
}

TEST_CASE("self-consistency counts the modal answer") {
  CHECK(self_consistency(std::vector<std::string>(10, "x")) == 1.0);
  std::vector<std::string> s(7, "A");
  s.insert(s.end(), {"B", "b ", "C"});
  CHECK(self_consistency(s) == doctest::Approx(0.7));
  CHECK_THROWS_AS(self_consistency(std::vector<std::string>{}), std::invalid_argument);
}

TEST_CASE("discriminative target with equal P(True) is 1/(K+1)") {
  FakeBackend fake;
  fake.p_answer = 0.5;
  QuestionRecord q{"q", "d", "p", {"Paris", "B", "C", "D", "E"}, "A", Judge::OptionIndex};
  SignalConfig cfg;
  CHECK(discriminative_target(q, "Paris", fake, cfg) == doctest::Approx(0.2));
}

TEST_CASE("the target is computed with adapters off and restores them") {
  auto world = testsupport::small_world();
  SyntheticBackend synth(world);
  MeteredBackend metered(synth);
  const auto& rec = world->questions()[3].record;
  const auto gen = metered.generate(rec.prompt, true);
  const std::size_t before = metered.log().size();

  SignalConfig cfg;
  cfg.tau = 0.27;
  const double target = discriminative_target(rec, gen.answer_text, metered, cfg);
  CHECK(target > 0.0);
  CHECK(target < 1.0);
  int p_true_calls = 0;
  for (std::size_t i = before; i < metered.log().size(); ++i) {
    const auto& e = metered.log()[i];
    if (e.op == "p_true") {
      ++p_true_calls;
      CHECK_FALSE(e.adapters_active);
    }
  }
  CHECK(p_true_calls == 5);
  CHECK(metered.ledger().calls.at("p_true") == 5);
  CHECK(metered.adapters_active());
  CHECK(synth.adapters_active());
}

TEST_CASE("self-consistency target goes through the sample op") {
  auto world = testsupport::small_world();
  SyntheticBackend synth(world);
  MeteredBackend metered(synth);
  const auto& rec = world->questions()[0].record;
  const auto gen = metered.generate(rec.prompt, true);
  SignalConfig cfg;
  cfg.target_kind = TargetKind::SelfConsistency;
  const double before = metered.ledger().fwd_eq_total;
  const double sc = discriminative_target(rec, gen.answer_text, metered, cfg);
  CHECK(sc > 0.0);
  CHECK(sc <= 1.0);
  CHECK(metered.ledger().fwd_eq_total - before == 10.0);
  CHECK(metered.ledger().calls.at("sample") == 1);
}

TEST_CASE("backend errors name the question") {
  auto world = testsupport::small_world();
  SyntheticBackend synth(world);
  QuestionRecord bogus{"ghost-1", "d", "not in the world", {"1", "2"}, "A", Judge::OptionIndex};
  SignalConfig cfg;
  try {
    discriminative_target(bogus, "1", synth, cfg);
    FAIL("expected a BackendError");
  } catch (const BackendError& e) {
    CHECK(e.code() == "unknown_prompt");
    CHECK(std::string(e.what()).find("ghost-1") != std::string::npos);
  }
  CHECK(synth.adapters_active());
}

TEST_CASE("signal config validation") {
  SignalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.k_distractors = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(target_kind_from_string("vibes"), ConfigError);
  CHECK(target_kind_from_string("self_consistency") == TargetKind::SelfConsistency);
}
