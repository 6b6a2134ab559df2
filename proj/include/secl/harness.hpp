/**
 * harness.hpp - end-to-end runs over a question stream.
 *
 * Per question: generate with adapters on, let the gate decide, run a
 * calibration step when asked, judge, and append a trace row. Metrics are
 * computed from the per-question score: the generation confidence for
 * verbalized and secl, the discriminative signal for p_true_norm.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "secl/adapt.hpp"
#include "secl/backend.hpp"
#include "secl/errors.hpp"
#include "secl/gate.hpp"
#include "secl/metrics.hpp"
#include "secl/signal.hpp"
#include "secl/synthetic.hpp"

namespace secl {

using ojson = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class Method { Verbalized, PTrueNorm, Secl };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

struct BackendConfig {
  std::string kind = "synthetic"; // synthetic | remote
  std::string url;                // remote only; SECL_BACKEND_URL overrides
  int max_retries = 3;
  int timeout_s = 120;
};

struct PosthocConfig {
  bool enabled = true;
  int folds = 5;
};

struct ProbeConfig {
  int subsample = 0;   // questions probed, evenly spaced; 0 probes the whole stream
  double margin = 0.02; // ECE advantage NormP must show for a gap to count
};

struct RunConfig {
  Method method = Method::Secl;
  std::uint64_t seed = 0;
  std::string stream_path; // empty: the synthetic world's own stream
  std::vector<std::string> domain_order; // empty: natural order
  WorldConfig world = world_preset("default", 0);
  BackendConfig backend;
  GateConfig gate;
  SignalConfig signal;
  AdaptConfig adapt;
  int bins = 10;
  PosthocConfig posthoc;
  ProbeConfig probe;
  std::string output_dir;

  void validate() const;
};

// Defaults for the synthetic world. Its P(True) channel is on a [0, 1]
// scale with four distractors, which wants a sharper tau than real models.
RunConfig synthetic_run_config(std::uint64_t seed = 0);

// Relative stream paths resolve against `base_dir`. Throws ConfigError.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
// Resolved configuration without output_dir; hashed into the run id.
ojson config_to_json(const RunConfig& cfg);

// Parses JSONL rows {id, domain, prompt, options?, gold, judge}. Throws
// DataError naming the line for malformed rows and for empty files.
std::vector<QuestionRecord> parse_stream_jsonl(std::istream& in);
std::vector<QuestionRecord> load_stream_jsonl(const std::filesystem::path& path);

// Concatenates per-domain blocks in `order` (empty keeps first-appearance
// order). Domains not named are left out; naming an absent domain throws DataError.
std::vector<QuestionRecord> order_stream(const std::vector<QuestionRecord>& records,
                                         const std::vector<std::string>& order);

std::vector<std::string> reversed(std::vector<std::string> order);

struct RunResult {
  ojson report;
  std::vector<std::string> trace_lines;
  std::vector<ScoredPrediction> scored;
  std::vector<CallLogEntry> call_log;
  CostLedger ledger;
  bool failed = false;
  ExitCode exit_code = ExitCode::Ok;
};

std::unique_ptr<Backend> make_backend(const RunConfig& cfg);
std::vector<QuestionRecord> load_stream(const RunConfig& cfg);

RunResult run(const RunConfig& cfg);
RunResult run(const RunConfig& cfg, const std::vector<QuestionRecord>& stream, Backend& backend);

// report.json, trace.jsonl and reliability_<method>.csv.
void write_outputs(const RunResult& result, const RunConfig& cfg, const std::filesystem::path& dir);

struct AblationVariant {
  std::string label;
  RunConfig config;
};

inline const std::vector<std::string> kAblationAxes = {"gating_strategy", "accumulation", "target_signal",
                                                       "domain_order",    "alpha_step",   "delta",
                                                       "burst_size",      "bin_threshold"};

// Throws ConfigError for unknown axes.
std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::string& axis);

struct AblationResult {
  std::string axis;
  std::vector<std::string> labels;
  std::vector<RunResult> runs;
  ojson table;
};

AblationResult ablate(const RunConfig& base, const std::string& axis);
std::string render_ablation(const AblationResult& result);

struct TraceReport {
  ojson summary;
  std::string text;
  std::vector<std::pair<std::string, std::string>> csv_files; // file name, contents
};

// Throws DataError on parse failures and schema-version mismatches.
TraceReport report_traces(const std::vector<std::filesystem::path>& traces, int bins = 10);

struct GapProbe {
  std::size_t n = 0;
  double proxy_ece = 0.0;          // verbalized confidence scored against NormP as soft labels
  double proxy_would_train = 0.0;  // share with |bin(c) - bin(NormP)| > 1
  std::optional<double> ece_verbalized;
  std::optional<double> ece_norm_p_true;
  bool labeled = false;
  bool gap_present = false;
  std::string basis; // "labeled" or "label_free_proxy"
};

GapProbe probe_gap(const RunConfig& cfg);
ojson to_json(const GapProbe& probe);

ojson to_json(const MetricBlock& block);

} // namespace secl
