#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fake_backend.hpp"
#include "secl/harness.hpp"
#include "support.hpp"

using namespace secl;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("secl_harness_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<QuestionRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_stream_jsonl(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

RunResult audited(const RunConfig& cfg, const std::string& name) {
  auto r = run(cfg);
  testsupport::audit(r, name);
  return r;
}

std::vector<json> rows(const RunResult& r) {
  std::vector<json> out;
  for (const auto& line : r.trace_lines) out.push_back(json::parse(line));
  return out;
}

} // namespace

TEST_CASE("config parsing applies overrides") {
  const auto cfg = config_from_json(json::parse(R"({
    "method": "p_true_norm", "seed": 9,
    "world": {"preset": "no_gap", "questions_per_domain": 12},
    "gate": {"mode": "always_on", "lambda": 4.5, "two_sided": true},
    "signal": {"target": "self_consistency", "tau": 0.5},
    "adapt": {"accumulate": false, "epochs": 2},
    "metrics": {"bins": 15}, "posthoc": {"folds": 4}, "probe": {"subsample": 100}
  })"));
  CHECK(cfg.method == Method::PTrueNorm);
  CHECK(cfg.seed == 9);
  CHECK(cfg.world.seed == 9);
  CHECK(cfg.world.preset == "no_gap");
  CHECK(cfg.world.questions_per_domain == 12);
  CHECK(cfg.gate.mode == GateMode::AlwaysOn);
  CHECK(cfg.gate.lambda == 4.5);
  CHECK(cfg.gate.two_sided);
  CHECK(cfg.signal.target_kind == TargetKind::SelfConsistency);
  CHECK(cfg.signal.tau == 0.5);
  CHECK_FALSE(cfg.adapt.accumulate);
  CHECK(cfg.adapt.epochs == 2);
  CHECK(cfg.bins == 15);
  CHECK(cfg.posthoc.folds == 4);
  CHECK(cfg.probe.subsample == 100);

  const auto defaults = config_from_json(json::object());
  CHECK(defaults.method == Method::Secl);
  CHECK(defaults.signal.tau == 0.27);
  CHECK(defaults.gate.burst_size == 50);
  CHECK(defaults.gate.warmup == 30);
  CHECK(defaults.adapt.max_step() == doctest::Approx(0.075));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"methd": "secl"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"gate": {"lamda": 3}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"gate": {"lambda": "3"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"gate": {"warmup": 2.5}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"gate": {"lambda": -1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"method": "magic"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"world": {"preset": "huge"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"world": {"domains": []}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"backend": {"kind": "cloud"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"backend": {"kind": "remote", "url": "http://x"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"stream": {"path": "/definitely/missing.jsonl"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"([1, 2])")), ConfigError);
  CHECK_THROWS_AS(load_config("/definitely/missing.json"), ConfigError);

  const auto dir = scratch("bad_config");
  write_file(dir / "c.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir / "c.json"), ConfigError);
}

TEST_CASE("relative paths resolve against the config file and the env var sets the server") {
  const auto dir = scratch("relative");
  write_file(dir / "s.jsonl", R"({"id":"a","domain":"d","prompt":"p","gold":"1","judge":"numeric_match"})" "\n");
  write_file(dir / "c.json", R"({"stream": {"path": "s.jsonl"}, "output_dir": "out",
                                  "backend": {"kind": "remote", "url": "http://from-file:1"}})");
  ::setenv("SECL_BACKEND_URL", "http://from-env:2", 1);
  const auto cfg = load_config(dir / "c.json");
  ::unsetenv("SECL_BACKEND_URL");
  CHECK(std::filesystem::equivalent(cfg.stream_path, dir / "s.jsonl"));
  CHECK(cfg.output_dir == (dir / "out").lexically_normal().string());
  CHECK(cfg.backend.url == "http://from-env:2");
  CHECK(load_config(dir / "c.json").backend.url == "http://from-file:1");
}

TEST_CASE("the shipped default config loads") {
  const auto cfg = load_config(SECL_SOURCE_DIR "/configs/default.json");
  CHECK(cfg.method == Method::Secl);
  CHECK(cfg.world.questions_per_domain == 500);
  CHECK(cfg.domain_order.size() == 4);
}

TEST_CASE("stream parsing") {
  const auto recs = parse(
      R"({"id":"a","domain":"math","prompt":"1+1?","gold":2,"judge":"numeric_match"})" "\n"
      "\n"
      R"({"id":"b","domain":"mc","prompt":"pick","options":["x","y"],"gold":"B","judge":"option_index"})" "\n");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].gold == "2");
  CHECK(recs[1].options.size() == 2);
  CHECK(recs[1].judge == Judge::OptionIndex);

  CHECK(error_of("") == "stream is empty");
  CHECK(error_of("{}\n").find("line 1") != std::string::npos);
  CHECK(error_of(R"({"id":"a","domain":"d","prompt":"p","gold":"1","judge":"exact_match"})" "\n{oops\n")
            .find("line 2: not valid JSON") != std::string::npos);
  CHECK(error_of(R"({"id":"a","domain":"d","prompt":"p","gold":"1","judge":"fuzzy"})").find("unknown judge") !=
        std::string::npos);
  CHECK(error_of(R"({"id":"a","domain":"d","prompt":"p","gold":"A","judge":"option_index"})")
            .find("needs options") != std::string::npos);
  CHECK(error_of(R"({"id":"a","domain":"d","prompt":"p","gold":"1","judge":"exact_match"})" "\n"
                 R"({"id":"a","domain":"d","prompt":"q","gold":"1","judge":"exact_match"})")
            .find("duplicate id") != std::string::npos);
  CHECK(error_of(R"({"id":"a","domain":"d","prompt":"p","gold":"1","judge":"exact_match","options":"x"})")
            .find("options") != std::string::npos);
  CHECK_THROWS_AS(load_stream_jsonl("/definitely/missing.jsonl"), DataError);
}

TEST_CASE("domain ordering") {
  const auto world = SyntheticWorld(world_preset("default", 0));
  const std::vector<std::string> forward = {"gsm8k", "mmlu", "arc", "truthfulqa"};
  const auto fwd = order_stream(world.records(), forward);
  REQUIRE(fwd.size() == 2000);
  int boundaries = 0;
  for (std::size_t i = 1; i < fwd.size(); ++i) boundaries += fwd[i].domain != fwd[i - 1].domain;
  CHECK(boundaries == 3);
  const auto rev = order_stream(world.records(), reversed(forward));
  CHECK(rev.front().domain == "truthfulqa");
  CHECK(rev.back().domain == "gsm8k");
  CHECK(order_stream(world.records(), {"arc"}).size() == 500);
  CHECK_THROWS_AS(order_stream(world.records(), {"gsm8k", "chess"}), DataError);
  CHECK_THROWS_AS(order_stream(world.records(), {"arc", "arc"}), DataError);
  CHECK(order_stream(world.records(), {}).front().domain == "gsm8k");
}

TEST_CASE("verbalized runs never train") {
  const auto r = audited(testsupport::small_config(Method::Verbalized), "verbalized");
  CHECK_FALSE(r.failed);
  CHECK_FALSE(r.ledger.calls.count("train"));
  CHECK_FALSE(r.ledger.calls.count("p_true"));
  CHECK(r.ledger.fwd_eq_total == 240.0);
  for (const auto& row : rows(r)) {
    CHECK(row["gate"].is_null());
    CHECK(row["signal"].is_null());
    CHECK(row["score"] == row["confidence"]);
  }
}

TEST_CASE("p_true_norm costs six forward passes per question") {
  const auto r = audited(testsupport::small_config(Method::PTrueNorm), "p_true_norm");
  CHECK(r.ledger.fwd_eq_total == 6.0 * 240);
  for (const auto& row : rows(r)) {
    CHECK(row["fwd_eq"] == 6.0);
    CHECK(row["score"] == row["signal"]);
  }
}

TEST_CASE("bin-gate-only trains part of the stream") {
  auto cfg = testsupport::small_config(Method::Secl, 500);
  cfg.gate.mode = GateMode::BinGateOnly;
  const auto r = audited(cfg, "bin_gate_only");
  const double frac = r.report["triggers"]["trained_pct"].get<double>() / 100.0;
  CHECK(frac > 0.0);
  CHECK(frac < 1.0);
}

TEST_CASE("trace rows follow the schema and the cost identity holds") {
  for (auto mode : {GateMode::EntropyGated, GateMode::AlwaysOn, GateMode::BinGateOnly, GateMode::Off}) {
    auto cfg = testsupport::small_config(Method::Secl, 150, 4);
    cfg.gate.mode = mode;
    const auto r = audited(cfg, "schema_" + std::string(to_string(mode)));
    REQUIRE_FALSE(r.failed);
    std::int64_t trained = 0, bin_gated = 0, other = 0;
    double fwd = 0.0;
    for (const auto& row : rows(r)) {
      for (const char* key : {"schema_version", "method", "index", "question_id", "domain", "answer_text", "correct",
                              "confidence", "confidence_bin", "bin_probs", "mean_token_entropy",
                              "adapters_active_at_generation", "signal", "score", "trained", "gate", "directive",
                              "fwd_eq"}) {
        REQUIRE_MESSAGE(row.contains(key), key);
      }
      CHECK(row["adapters_active_at_generation"] == true);
      CHECK(row["confidence_bin"] == bin_of(row["confidence"].get<double>()));
      const bool t = row["trained"];
      const bool calibrated = row["gate"]["calibrate_now"];
      if (t) {
        ++trained;
        CHECK(row["fwd_eq"] == 15.0);
        CHECK(row["directive"]["max_step"] == doctest::Approx(0.075));
      } else if (calibrated) {
        ++bin_gated;
        CHECK(row["fwd_eq"] == 6.0);
        CHECK(row["gate"]["bin_gate_pass"] == false);
      } else {
        ++other;
        CHECK(row["fwd_eq"] == 1.0);
      }
      fwd += row["fwd_eq"].get<double>();
    }
    CHECK(r.ledger.fwd_eq_total == fwd);
    CHECK(fwd == static_cast<double>(other + 15 * trained + 6 * bin_gated));
    CHECK(r.ledger.trained_count == trained);
    CHECK(r.ledger.bin_gated_count == bin_gated);
    CHECK(r.report["cost"]["trained_question_pricing"] == trained_question_pricing(trained, bin_gated + other));
    if (mode == GateMode::AlwaysOn) CHECK(trained == 600);
    if (mode == GateMode::Off) CHECK(trained == 0);
  }
}

TEST_CASE("discriminative calls never see the adapters") {
  const auto r = audited(testsupport::small_config(Method::Secl, 200, 2), "isolation");
  int p_true = 0;
  for (const auto& e : r.call_log) {
    if (e.op == "p_true" || e.op == "sample") {
      CHECK_FALSE(e.adapters_active);
      ++p_true;
    }
    if (e.op == "generate" || e.op == "train") CHECK(e.adapters_active);
  }
  CHECK(p_true > 0);
  CHECK(r.call_log.front().op == "reset_adapters");
}

TEST_CASE("the trigger question starts a burst of B calibrated questions") {
  auto cfg = testsupport::small_config(Method::Secl, 500, 0);
  const auto r = audited(cfg, "bursts");
  const auto trace = rows(r);
  int alarms = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i]["gate"]["reason"] != "trigger") continue;
    ++alarms;
    for (std::size_t j = i + 1; j < std::min(trace.size(), i + 50); ++j) CHECK(trace[j]["gate"]["reason"] == "in_burst");
    if (i + 50 < trace.size()) CHECK(trace[i + 50]["gate"]["reason"] == "warmup");
  }
  CHECK(alarms == r.report["triggers"]["alarms"]);
  CHECK(alarms >= 1);
}

TEST_CASE("replay determinism") {
  auto cfg = testsupport::small_config(Method::Secl, 100, 3);
  cfg.posthoc.enabled = true;
  const auto a = audited(cfg, "replay_a");
  const auto b = audited(cfg, "replay_b");
  CHECK(a.trace_lines == b.trace_lines);
  CHECK(a.report.dump() == b.report.dump());
  cfg.seed = 4;
  const auto c = run(cfg);
  CHECK(c.report["run_id"] != a.report["run_id"]);
  CHECK(c.trace_lines != a.trace_lines);
}

TEST_CASE("report carries metrics, triggers, cost and post-hoc fits") {
  auto cfg = testsupport::small_config(Method::Secl, 100);
  cfg.posthoc.enabled = true;
  const auto r = audited(cfg, "report");
  const auto& rep = r.report;
  CHECK(rep["status"] == "ok");
  CHECK(rep["n"] == 400);
  CHECK(rep["overall"]["reliability"].size() == 10);
  CHECK(rep["per_domain"].size() == 4);
  CHECK(rep["posthoc"]["temperature"]["T"].get<double>() > 0.0);
  CHECK(rep["posthoc"]["temperature"]["cv"]["train_sizes"] == json::array({320, 320, 320, 320, 320}));
  CHECK(rep["posthoc"]["platt"].contains("a"));
  CHECK(rep["config"]["gate"]["burst_size"] == 50);
  CHECK(rep["triggers"]["trained"].get<long>() + rep["triggers"]["skipped"].get<long>() == 400);

  const auto dir = scratch("outputs");
  write_outputs(r, cfg, dir);
  CHECK(json::parse(read_file(dir / "report.json")) == json::parse(rep.dump()));
  CHECK(read_file(dir / "trace.jsonl").size() > 0);
  CHECK(std::filesystem::exists(dir / "reliability_secl.csv"));
}

TEST_CASE("a question the judge cannot score fails the run with a data error") {
  const std::vector<QuestionRecord> stream = {{"q1", "d", "p", {}, "Paris", Judge::ExactMatch},
                                              {"q2", "d", "p", {}, "n/a", Judge::NumericMatch},
                                              {"q3", "d", "p", {}, "Paris", Judge::ExactMatch}};
  FakeBackend fake;
  auto cfg = testsupport::small_config(Method::Verbalized);
  const auto r = run(cfg, stream, fake);
  CHECK(r.failed);
  CHECK(r.exit_code == ExitCode::Data);
  CHECK(r.trace_lines.size() == 1);
  CHECK(r.report["failure"]["question_id"] == "q2");
  CHECK(r.report["failure"]["index"] == 1);
}

TEST_CASE("open-ended questions use generated distractors") {
  const std::vector<QuestionRecord> stream = {{"q1", "d", "p", {}, "Paris", Judge::ExactMatch},
                                              {"q2", "d", "p", {}, "Lyon", Judge::ExactMatch}};
  FakeBackend fake;
  auto cfg = testsupport::small_config(Method::PTrueNorm);
  const auto r = run(cfg, stream, fake);
  CHECK_FALSE(r.failed);
  CHECK(r.ledger.calls.at("distractors") == 2);
  CHECK(rows(r)[0]["correct"] == true);
  CHECK(rows(r)[1]["correct"] == false);
}

TEST_CASE("ablation axes") {
  const auto base = testsupport::small_config(Method::Verbalized);
  auto labels = [&](const std::string& axis) {
    std::vector<std::string> out;
    for (const auto& v : ablation_variants(base, axis)) {
      CHECK(v.config.method == Method::Secl);
      out.push_back(v.label);
    }
    return out;
  };
  CHECK(labels("gating_strategy") == std::vector<std::string>{"always_on", "bin_gate<=1", "bin_gate<=2", "entropy_gated"});
  CHECK(labels("accumulation") == std::vector<std::string>{"accumulate", "reset_per_question"});
  CHECK(labels("target_signal") == std::vector<std::string>{"norm_p_true", "self_consistency"});
  CHECK(labels("domain_order") == std::vector<std::string>{"forward", "reversed"});
  CHECK(ablation_variants(base, "domain_order")[1].config.domain_order.front() == "truthfulqa");
  CHECK(labels("alpha_step").size() == 3);
  CHECK(labels("bin_threshold").size() == 3);
  CHECK_THROWS_AS(ablation_variants(base, "vibes"), ConfigError);

  const auto result = ablate(testsupport::small_config(Method::Secl, 40), "accumulation");
  for (std::size_t i = 0; i < result.runs.size(); ++i) testsupport::audit(result.runs[i], "ablate_" + result.labels[i]);
  CHECK(result.table.size() == 2);
  CHECK(render_ablation(result).find("reset_per_question") != std::string::npos);
}

TEST_CASE("trace reports") {
  const auto dir = scratch("traces");
  const auto v = audited(testsupport::small_config(Method::Verbalized, 50), "report_v");
  const auto s = audited(testsupport::small_config(Method::Secl, 50), "report_s");
  write_outputs(v, testsupport::small_config(Method::Verbalized, 50), dir / "v");
  write_outputs(s, testsupport::small_config(Method::Secl, 50), dir / "s");

  const auto single = report_traces({dir / "v" / "trace.jsonl"});
  REQUIRE(single.summary.size() == 1);
  CHECK_FALSE(single.summary[0].contains("triggers"));
  CHECK(single.csv_files.size() == 1);

  const auto both = report_traces({dir / "v" / "trace.jsonl", dir / "s" / "trace.jsonl"}, 12);
  CHECK(both.summary.size() == 2);
  CHECK(both.summary[1].contains("triggers"));
  CHECK(both.text.find("verbalized") != std::string::npos);
  CHECK(both.text.find("per-domain ECE") != std::string::npos);
  for (const auto& [name, csv] : both.csv_files) {
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  }
  CHECK(single.summary[0]["overall"]["ece"].get<double>() ==
        doctest::Approx(v.report["overall"]["ece"].get<double>()));

  const auto dup = report_traces({dir / "s" / "trace.jsonl", dir / "s" / "trace.jsonl"});
  CHECK(dup.csv_files[1].first == "reliability_secl_2.csv");

  auto text = read_file(dir / "v" / "trace.jsonl");
  text.replace(text.find("\"schema_version\":1"), 18, "\"schema_version\":7");
  write_file(dir / "bad.jsonl", text);
  CHECK_THROWS_AS(report_traces({dir / "bad.jsonl"}), DataError);
  write_file(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(report_traces({dir / "empty.jsonl"}), DataError);
  CHECK_THROWS_AS(report_traces({dir / "missing.jsonl"}), DataError);
  CHECK_THROWS_AS(report_traces({}), DataError);
}

TEST_CASE("gap probe") {
  auto cfg = testsupport::small_config(Method::Secl, 250);
  const auto with_gap = probe_gap(cfg);
  CHECK(with_gap.labeled);
  CHECK(with_gap.basis == "labeled");
  CHECK(with_gap.gap_present);
  CHECK(*with_gap.ece_verbalized > *with_gap.ece_norm_p_true);

  cfg.world = world_preset("no_gap", cfg.seed);
  cfg.world.questions_per_domain = 250;
  const auto none = probe_gap(cfg);
  CHECK_FALSE(none.gap_present);

  cfg.probe.subsample = 40;
  CHECK(probe_gap(cfg).n == 40);
  const auto j = to_json(with_gap);
  CHECK(j["basis"] == "labeled");
}
