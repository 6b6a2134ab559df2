#include "secl/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "secl/posthoc.hpp"
#include "secl/rpc.hpp"
#include "secl/util.hpp"

namespace secl {

namespace {

WorldConfig seeded_world(const RunConfig& cfg) {
  WorldConfig w = cfg.world;
  w.seed = cfg.seed;
  return w;
}

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson block_with_reliability(const MetricBlock& block) {
  ojson j = to_json(block);
  ojson bins = ojson::array();
  for (const auto& b : block.reliability.bins) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mean_conf", b.mean_conf}, {"accuracy", b.accuracy}});
  }
  j["reliability"] = bins;
  return j;
}

bool both_classes(const std::vector<ScoredPrediction>& preds) {
  bool pos = false, neg = false;
  for (const auto& p : preds) (p.correct ? pos : neg) = true;
  return pos && neg;
}

ojson posthoc_section(const RunConfig& cfg, const std::vector<ScoredPrediction>& scored) {
  if (!cfg.posthoc.enabled) return nullptr;
  if (scored.size() < static_cast<std::size_t>(cfg.posthoc.folds) || !both_classes(scored)) {
    return {{"skipped", "needs at least `folds` predictions with both outcomes"}};
  }
  ojson out;
  auto cv_block = [&](const Fitter& fitter) -> ojson {
    try {
      const auto cv = kfold_eval(scored, cfg.posthoc.folds, fitter, cfg.seed);
      ojson j = to_json(metric_block(cv.predictions, cfg.bins));
      j["train_sizes"] = cv.train_sizes;
      return j;
    } catch (const std::exception& e) {
      return {{"error", e.what()}};
    }
  };

  const auto temp = fit_temperature(scored);
  out["temperature"] = {{"T", temp.temperature}, {"cv", cv_block(temperature_fitter())}};
  try {
    const auto platt = fit_platt(scored);
    out["platt"] = {{"a", platt.a}, {"b", platt.b}, {"cv", cv_block(platt_fitter())}};
  } catch (const std::exception& e) {
    out["platt"] = {{"error", e.what()}};
  }
  out["folds"] = cfg.posthoc.folds;
  return out;
}

ojson gate_json(const GateDecision& d, const GateState& s) {
  return {{"calibrate_now", d.calibrate_now},
          {"reason", std::string(to_string(d.reason))},
          {"bin_gate_pass", d.bin_gate_pass ? ojson(*d.bin_gate_pass) : ojson(nullptr)},
          {"ema_entropy", s.ema_entropy},
          {"ph_excursion", s.cum_sum - s.min_cum},
          {"warmup_remaining", s.warmup_remaining},
          {"burst_remaining", s.burst_remaining},
          {"triggers", s.triggers}};
}

ojson directive_json(const TrainDirective& d, double max_step) {
  return {{"current_confidence", d.current_confidence},
          {"target_signal", d.target_signal},
          {"directional_target", d.directional_target},
          {"max_step", max_step},
          {"loss", d.loss},
          {"final_loss", d.final_loss},
          {"epochs", d.epochs},
          {"learning_rate", d.learning_rate}};
}

} // namespace

ojson to_json(const MetricBlock& block) {
  return {{"n", block.n},
          {"accuracy", block.accuracy},
          {"ece", block.ece},
          {"ada_ece", optional_number(block.ada_ece)},
          {"brier", block.brier},
          {"auroc", optional_number(block.auroc)},
          {"conf_range", {block.conf_min, block.conf_max}}};
}

std::unique_ptr<Backend> make_backend(const RunConfig& cfg) {
  if (cfg.backend.kind == "remote") {
    RetryPolicy policy;
    policy.max_retries = cfg.backend.max_retries;
    policy.timeout = std::chrono::seconds(cfg.backend.timeout_s);
    return std::make_unique<RemoteBackend>(cfg.backend.url, policy);
  }
  return std::make_unique<SyntheticBackend>(std::make_shared<SyntheticWorld>(seeded_world(cfg)));
}

std::vector<QuestionRecord> load_stream(const RunConfig& cfg) {
  if (!cfg.stream_path.empty()) return order_stream(load_stream_jsonl(cfg.stream_path), cfg.domain_order);
  return order_stream(SyntheticWorld(seeded_world(cfg)).records(), cfg.domain_order);
}

RunResult run(const RunConfig& cfg) {
  cfg.validate();
  const auto stream = load_stream(cfg);
  auto backend = make_backend(cfg);
  return run(cfg, stream, *backend);
}

RunResult run(const RunConfig& cfg, const std::vector<QuestionRecord>& stream, Backend& backend) {
  RunResult result;
  MeteredBackend metered(backend);
  const std::string method(to_string(cfg.method));
  const bool secl = cfg.method == Method::Secl;
  const int bin_threshold = cfg.gate.uses_bin_gate() ? cfg.gate.bin_gate_threshold : -1;
  GateState gate = GateState::initial(cfg.gate);
  ojson failure = nullptr;

  try {
    if (secl) {
      // start from the base model whatever state a server was left in
      metered.reset_adapters();
      metered.set_adapters(true);
    }
  } catch (const Error& e) {
    failure = {{"index", nullptr}, {"question_id", nullptr}, {"code", "setup"}, {"message", e.what()}};
    result.exit_code = e.exit_code();
  }

  for (std::size_t i = 0; i < stream.size() && failure.is_null(); ++i) {
    const auto& rec = stream[i];
    metered.set_question(rec.id);
    const std::size_t log_pos = metered.log().size();
    try {
      const auto gen = metered.generate(rec.prompt, true);
      const auto conf = ConfidenceDistribution::from_digit_probs(gen.digit_probs);

      std::optional<double> signal;
      std::optional<TrainDirective> directive;
      std::optional<GateDecision> decision;
      bool trained = false;

      if (cfg.method == Method::PTrueNorm) {
        signal = discriminative_target(rec, gen.answer_text, metered, cfg.signal);
      } else if (secl) {
        auto decided = decide(gate, cfg.gate, gen.mean_token_entropy);
        gate = decided.state;
        decision = decided.decision;
        if (decision->calibrate_now) {
          const auto outcome = calibration_step(rec, gen.answer_text, conf.soft, metered, cfg.signal, cfg.adapt,
                                                bin_threshold);
          signal = outcome.signal;
          trained = outcome.trained;
          directive = outcome.directive;
          if (bin_threshold >= 0) decision->bin_gate_pass = trained;
          if (!trained) ++metered.ledger().bin_gated_count;
        }
      }
      (trained ? metered.ledger().trained_count : metered.ledger().skipped_count)++;

      bool correct = false;
      try {
        correct = judge_correctness(rec, gen.answer_text);
      } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
      }
      const double score = cfg.method == Method::PTrueNorm ? *signal : conf.soft;
      result.scored.push_back({score, correct, rec.domain});

      ojson row;
      row["schema_version"] = kSchemaVersion;
      row["method"] = method;
      row["index"] = i;
      row["question_id"] = rec.id;
      row["domain"] = rec.domain;
      row["answer_text"] = gen.answer_text;
      row["correct"] = correct;
      row["confidence"] = conf.soft;
      row["confidence_bin"] = bin_of(conf.soft);
      row["bin_probs"] = conf.bin_probs;
      row["mean_token_entropy"] = gen.mean_token_entropy;
      row["adapters_active_at_generation"] = gen.adapters_active;
      row["signal"] = optional_number(signal);
      row["score"] = score;
      row["trained"] = trained;
      row["gate"] = decision ? gate_json(*decision, gate) : ojson(nullptr);
      row["directive"] = directive ? directive_json(*directive, cfg.adapt.max_step()) : ojson(nullptr);
      row["fwd_eq"] = metered.cost_since(log_pos);
      result.trace_lines.push_back(row.dump());
    } catch (const Error& e) {
      failure = {{"index", i}, {"question_id", rec.id}, {"code", "error"}, {"message", e.what()}};
      if (const auto* be = dynamic_cast<const BackendError*>(&e)) failure["code"] = be->code();
      result.exit_code = e.exit_code();
    }
  }

  result.failed = !failure.is_null();
  result.call_log = metered.log();
  result.ledger = metered.ledger();
  const auto& ledger = result.ledger;

  ojson& rep = result.report;
  const ojson config = config_to_json(cfg);
  rep["schema_version"] = kSchemaVersion;
  rep["run_id"] = hex64(fnv1a64(config.dump()));
  rep["status"] = result.failed ? "failed" : "ok";
  if (result.failed) rep["failure"] = failure;
  rep["method"] = method;
  rep["seed"] = cfg.seed;
  rep["n"] = result.scored.size();
  rep["stream_length"] = stream.size();

  if (!result.scored.empty()) {
    const auto summary = summarize(result.scored, cfg.bins);
    rep["overall"] = block_with_reliability(summary.overall);
    ojson per_domain;
    for (const auto& [domain, block] : summary.per_domain) per_domain[domain] = to_json(block);
    rep["per_domain"] = per_domain;
  } else {
    rep["overall"] = nullptr;
    rep["per_domain"] = ojson::object();
  }

  const double n = static_cast<double>(std::max<std::size_t>(result.scored.size(), 1));
  rep["triggers"] = {{"trained", ledger.trained_count},
                     {"skipped", ledger.skipped_count},
                     {"trained_pct", 100.0 * static_cast<double>(ledger.trained_count) / n},
                     {"skipped_pct", 100.0 * static_cast<double>(ledger.skipped_count) / n},
                     {"bin_gated", ledger.bin_gated_count},
                     {"alarms", gate.triggers}};
  ojson calls = ojson::object();
  for (const auto& [op, count] : ledger.calls) calls[op] = count;
  rep["cost"] = {{"fwd_eq_total", ledger.fwd_eq_total},
                 {"fwd_eq_per_question", ledger.fwd_eq_total / n},
                 {"trained_question_pricing",
                  trained_question_pricing(ledger.trained_count, ledger.skipped_count, cfg.signal.k_distractors,
                                           cfg.adapt.epochs)},
                 {"calls", calls}};
  rep["posthoc"] = result.failed ? ojson(nullptr) : posthoc_section(cfg, result.scored);
  rep["config"] = config;
  return result;
}

void write_outputs(const RunResult& result, const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << content;
  };
  write("report.json", result.report.dump(2) + "\n");
  std::string trace;
  for (const auto& line : result.trace_lines) trace += line + "\n";
  write("trace.jsonl", trace);
  if (!result.scored.empty()) {
    write("reliability_" + std::string(to_string(cfg.method)) + ".csv",
          reliability_csv(reliability_bins(result.scored, cfg.bins)));
  }
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::string& axis) {
  RunConfig secl = base;
  secl.method = Method::Secl;
  std::vector<AblationVariant> out;
  auto add = [&](std::string label, auto&& edit) {
    RunConfig c = secl;
    edit(c);
    out.push_back({std::move(label), std::move(c)});
  };

  if (axis == "gating_strategy") {
    add("always_on", [](RunConfig& c) { c.gate.mode = GateMode::AlwaysOn; });
    add("bin_gate<=1", [](RunConfig& c) {
      c.gate.mode = GateMode::BinGateOnly;
      c.gate.bin_gate_threshold = 1;
    });
    add("bin_gate<=2", [](RunConfig& c) {
      c.gate.mode = GateMode::BinGateOnly;
      c.gate.bin_gate_threshold = 2;
    });
    add("entropy_gated", [](RunConfig& c) { c.gate.mode = GateMode::EntropyGated; });
  } else if (axis == "accumulation") {
    add("accumulate", [](RunConfig& c) { c.adapt.accumulate = true; });
    add("reset_per_question", [](RunConfig& c) { c.adapt.accumulate = false; });
  } else if (axis == "target_signal") {
    add("norm_p_true", [](RunConfig& c) { c.signal.target_kind = TargetKind::NormPTrue; });
    add("self_consistency", [](RunConfig& c) { c.signal.target_kind = TargetKind::SelfConsistency; });
  } else if (axis == "domain_order") {
    std::vector<std::string> forward = base.domain_order;
    if (forward.empty()) {
      for (const auto& r : load_stream(base)) {
        if (std::find(forward.begin(), forward.end(), r.domain) == forward.end()) forward.push_back(r.domain);
      }
    }
    add("forward", [&](RunConfig& c) { c.domain_order = forward; });
    add("reversed", [&](RunConfig& c) { c.domain_order = reversed(forward); });
  } else if (axis == "alpha_step") {
    for (double a : {0.2, 0.3, 0.5}) {
      char label[32];
      std::snprintf(label, sizeof(label), "alpha_step=%.1f", a);
      add(label, [a](RunConfig& c) { c.adapt.alpha_step = a; });
    }
  } else if (axis == "delta") {
    for (double d : {0.15, 0.20}) {
      char label[32];
      std::snprintf(label, sizeof(label), "delta=%.2f", d);
      add(label, [d](RunConfig& c) { c.adapt.delta = d; });
    }
  } else if (axis == "burst_size") {
    for (int b : {20, 50}) add("burst_size=" + std::to_string(b), [b](RunConfig& c) { c.gate.burst_size = b; });
  } else if (axis == "bin_threshold") {
    for (int t : {0, 1, 2}) {
      add("bin_threshold=" + std::to_string(t), [t](RunConfig& c) { c.gate.bin_gate_threshold = t; });
    }
  } else {
    std::string known;
    for (const auto& a : kAblationAxes) known += (known.empty() ? "" : ", ") + a;
    throw ConfigError("unknown ablation axis '" + axis + "' (expected one of " + known + ")");
  }
  return out;
}

AblationResult ablate(const RunConfig& base, const std::string& axis) {
  AblationResult result;
  result.axis = axis;
  result.table = ojson::array();
  for (auto& variant : ablation_variants(base, axis)) {
    auto r = run(variant.config);
    ojson row;
    row["variant"] = variant.label;
    row["status"] = r.report["status"];
    row["overall"] = r.report["overall"].is_null() ? ojson(nullptr) : ojson(to_json(metric_block(r.scored, base.bins)));
    row["trained_pct"] = r.report["triggers"]["trained_pct"];
    row["alarms"] = r.report["triggers"]["alarms"];
    row["fwd_eq_total"] = r.report["cost"]["fwd_eq_total"];
    row["run_id"] = r.report["run_id"];
    result.table.push_back(row);
    result.labels.push_back(variant.label);
    result.runs.push_back(std::move(r));
  }
  return result;
}

std::string render_ablation(const AblationResult& result) {
  std::string out = "axis: " + result.axis + "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-20s %7s %7s %7s %7s %7s %9s %9s\n", "variant", "acc", "ece", "adaece", "brier",
                "auroc", "trained%", "fwd_eq");
  out += line;
  for (const auto& row : result.table) {
    const auto& o = row["overall"];
    if (o.is_null()) {
      std::snprintf(line, sizeof(line), "%-20s (failed)\n", row["variant"].get<std::string>().c_str());
    } else {
      std::snprintf(line, sizeof(line), "%-20s %7.3f %7.3f %7.3f %7.3f %7.3f %9.1f %9.0f\n",
                    row["variant"].get<std::string>().c_str(), o["accuracy"].get<double>(), o["ece"].get<double>(),
                    o["ada_ece"].is_null() ? NAN : o["ada_ece"].get<double>(), o["brier"].get<double>(),
                    o["auroc"].is_null() ? NAN : o["auroc"].get<double>(), row["trained_pct"].get<double>(),
                    row["fwd_eq_total"].get<double>());
    }
    out += line;
  }
  return out;
}

GapProbe probe_gap(const RunConfig& cfg) {
  cfg.validate();
  const auto stream = load_stream(cfg);
  auto backend = make_backend(cfg);
  MeteredBackend metered(*backend);
  metered.reset_adapters();
  metered.set_adapters(true);

  std::vector<std::size_t> picks;
  const std::size_t want = cfg.probe.subsample > 0 ? static_cast<std::size_t>(cfg.probe.subsample) : stream.size();
  if (want >= stream.size()) {
    for (std::size_t i = 0; i < stream.size(); ++i) picks.push_back(i);
  } else {
    for (std::size_t j = 0; j < want; ++j) picks.push_back(j * stream.size() / want);
  }

  std::vector<ScoredPrediction> verbalized, normp;
  std::vector<double> soft_labels;
  bool labeled = true;
  std::size_t disagree = 0;
  for (auto i : picks) {
    const auto& rec = stream[i];
    metered.set_question(rec.id);
    const auto gen = metered.generate(rec.prompt, true);
    const double c = soft_confidence(gen.digit_probs);
    const double s = discriminative_target(rec, gen.answer_text, metered, cfg.signal);
    bool correct = false;
    try {
      correct = judge_correctness(rec, gen.answer_text);
    } catch (const std::invalid_argument&) {
      labeled = false;
    }
    verbalized.push_back({c, correct, rec.domain});
    normp.push_back({s, correct, rec.domain});
    soft_labels.push_back(s);
    if (std::abs(bin_of(c) - bin_of(s)) > 1) ++disagree;
  }

  GapProbe probe;
  probe.n = picks.size();
  // ECE of the verbalized confidence with NormP standing in for the labels
  std::vector<double> conf_sum(cfg.bins, 0.0), label_sum(cfg.bins, 0.0);
  std::vector<std::size_t> count(cfg.bins, 0);
  for (std::size_t k = 0; k < verbalized.size(); ++k) {
    const int b = equal_width_bin(verbalized[k].confidence, cfg.bins);
    conf_sum[b] += verbalized[k].confidence;
    label_sum[b] += soft_labels[k];
    ++count[b];
  }
  for (int b = 0; b < cfg.bins; ++b) {
    if (count[b] == 0) continue;
    probe.proxy_ece += std::abs(conf_sum[b] - label_sum[b]) / static_cast<double>(probe.n);
  }
  probe.proxy_would_train = static_cast<double>(disagree) / static_cast<double>(probe.n);

  probe.labeled = labeled && both_classes(verbalized);
  if (probe.labeled) {
    probe.ece_verbalized = ece(verbalized, cfg.bins);
    probe.ece_norm_p_true = ece(normp, cfg.bins);
    probe.gap_present = *probe.ece_verbalized - *probe.ece_norm_p_true > cfg.probe.margin;
    probe.basis = "labeled";
  } else {
    probe.gap_present = probe.proxy_ece > cfg.probe.margin;
    probe.basis = "label_free_proxy";
  }
  return probe;
}

ojson to_json(const GapProbe& probe) {
  return {{"n", probe.n},
          {"gap_present", probe.gap_present},
          {"basis", probe.basis},
          {"labeled", probe.labeled},
          {"ece_verbalized", optional_number(probe.ece_verbalized)},
          {"ece_norm_p_true", optional_number(probe.ece_norm_p_true)},
          {"proxy_ece", probe.proxy_ece},
          {"proxy_would_train", probe.proxy_would_train}};
}

} // namespace secl
