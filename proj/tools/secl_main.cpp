// secl - command-line front end for the streaming calibration engine.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "secl/harness.hpp"
#include "secl/rpc.hpp"

namespace {

using namespace secl;

int run_command(const std::string& config_path, const std::string& out_override) {
  auto cfg = load_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  auto result = run(cfg);
  if (!cfg.output_dir.empty()) write_outputs(result, cfg, cfg.output_dir);

  const auto& rep = result.report;
  std::cout << "run " << rep["run_id"].get<std::string>() << " method=" << rep["method"].get<std::string>()
            << " status=" << rep["status"].get<std::string>() << "\n";
  if (!rep["overall"].is_null()) {
    const auto& o = rep["overall"];
    std::printf("n=%zu acc=%.4f ece=%.4f brier=%.4f trained=%.1f%% fwd_eq=%.0f\n", rep["n"].get<std::size_t>(),
                o["accuracy"].get<double>(), o["ece"].get<double>(), o["brier"].get<double>(),
                rep["triggers"]["trained_pct"].get<double>(), rep["cost"]["fwd_eq_total"].get<double>());
  }
  if (result.failed) {
    std::cerr << "error: " << rep["failure"]["message"].get<std::string>() << "\n";
    return static_cast<int>(result.exit_code);
  }
  return 0;
}

int ablate_command(const std::string& config_path, const std::string& axis, const std::string& out_override) {
  auto cfg = load_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  auto result = ablate(cfg, axis);
  std::cout << render_ablation(result);
  if (!cfg.output_dir.empty()) {
    const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / ("ablate_" + axis);
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
      std::string name = result.labels[i];
      for (char& ch : name) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '_') ch = '_';
      }
      write_outputs(result.runs[i], cfg, dir / name);
    }
    std::ofstream(dir / "ablation.json") << ojson{{"axis", axis}, {"rows", result.table}}.dump(2) << "\n";
  }
  for (const auto& r : result.runs) {
    if (r.failed) return static_cast<int>(r.exit_code);
  }
  return 0;
}

int report_command(const std::vector<std::string>& traces, const std::string& out_dir, int bins) {
  std::vector<std::filesystem::path> paths(traces.begin(), traces.end());
  const auto report = report_traces(paths, bins);
  std::cout << report.text;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, contents] : report.csv_files) std::ofstream(std::filesystem::path(out_dir) / name) << contents;
    std::ofstream(std::filesystem::path(out_dir) / "summary.json") << report.summary.dump(2) << "\n";
  }
  return 0;
}

int dump_command(const std::string& preset, std::uint64_t seed, int per_domain, const std::string& out) {
  auto world_cfg = world_preset(preset, seed);
  if (per_domain > 0) world_cfg.questions_per_domain = per_domain;
  const auto text = dump_stream_jsonl(SyntheticWorld(world_cfg));
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(out, std::ios::binary) << text;
  }
  return 0;
}

int probe_command(const std::string& config_path) {
  const auto cfg = load_config(config_path);
  const auto probe = probe_gap(cfg);
  std::cout << to_json(probe).dump(2) << "\n";
  std::cout << (probe.gap_present ? "gap present: self-calibration has a usable signal\n"
                                  : "no gap: the discriminative signal is not better calibrated than verbalized "
                                    "confidence; adaptation is not expected to help\n");
  return 0;
}

int serve_command(const std::string& preset, std::uint64_t seed, const std::string& host, int port) {
  SyntheticBackend backend(std::make_shared<SyntheticWorld>(world_preset(preset, seed)));
  RpcServer server(backend);
  std::cerr << "serving synthetic backend on " << host << ":" << port << "\n";
  server.listen(host, port);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming self-calibration engine"};
  app.require_subcommand(1);

  std::string config, axis, out, preset = "default", host = "127.0.0.1";
  std::vector<std::string> traces;
  std::uint64_t seed = 0;
  int per_domain = 0, port = 8080, bins = 10;

  auto* run_cmd = app.add_subcommand("run", "Process a stream and write report, trace and reliability CSV");
  run_cmd->add_option("--config", config, "Run configuration (JSON)")->required();
  run_cmd->add_option("--out", out, "Output directory (overrides output_dir)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run every variant along one ablation axis");
  ablate_cmd->add_option("--config", config, "Base run configuration (JSON)")->required();
  ablate_cmd->add_option("--axis", axis, "Ablation axis")->required()->check(CLI::IsMember(kAblationAxes));
  ablate_cmd->add_option("--out", out, "Output directory (overrides output_dir)");

  auto* report_cmd = app.add_subcommand("report", "Tables and reliability CSVs from trace files");
  report_cmd->add_option("traces", traces, "trace.jsonl files")->required();
  report_cmd->add_option("--out", out, "Directory for CSVs and summary.json");
  report_cmd->add_option("--bins", bins, "Number of reliability bins");

  auto* dump_cmd = app.add_subcommand("dump-stream", "Write a synthetic world's stream as JSONL");
  dump_cmd->add_option("--preset", preset, "World preset (default, no_gap)")->required();
  dump_cmd->add_option("--seed", seed, "World seed");
  dump_cmd->add_option("--per-domain", per_domain, "Questions per domain");
  dump_cmd->add_option("--out", out, "Output file (stdout when omitted)");

  auto* probe_cmd = app.add_subcommand("probe-gap", "Check that NormP_True is better calibrated than verbalized confidence");
  probe_cmd->add_option("--config", config, "Run configuration (JSON)")->required();

  auto* serve_cmd = app.add_subcommand("serve", "Serve the synthetic backend over the wire protocol");
  serve_cmd->add_option("--preset", preset, "World preset");
  serve_cmd->add_option("--seed", seed, "World seed");
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--port", port, "Listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(secl::ExitCode::Config);
  }

  try {
    if (*run_cmd) return run_command(config, out);
    if (*ablate_cmd) return ablate_command(config, axis, out);
    if (*report_cmd) return report_command(traces, out, bins);
    if (*dump_cmd) return dump_command(preset, seed, per_domain, out);
    if (*probe_cmd) return probe_command(config);
    if (*serve_cmd) return serve_command(preset, seed, host, port);
  } catch (const secl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(secl::ExitCode::Data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(secl::ExitCode::Data);
  }
  return 0;
}
