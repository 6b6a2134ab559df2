// Helpers shared by the unit-test executables.
#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "secl/harness.hpp"
#include "secl/synthetic.hpp"

namespace testsupport {

// Every trace a test produces is copied here so the acceptance run can
// audit update bounds across the whole suite.
inline std::filesystem::path audit_dir() {
  if (const char* env = std::getenv("SECL_TRACE_AUDIT_DIR"); env && *env) return env;
#ifdef SECL_TRACE_AUDIT_DIR_DEFAULT
  return SECL_TRACE_AUDIT_DIR_DEFAULT;
#else
  return std::filesystem::temp_directory_path() / "secl_trace_audit";
#endif
}

inline void audit(const secl::RunResult& result, const std::string& name) {
  static std::atomic<int> counter{0};
  const auto dir = audit_dir();
  std::filesystem::create_directories(dir);
  const auto file = dir / (name + "_" + std::to_string(counter++) + ".jsonl");
  std::ofstream out(file, std::ios::binary);
  for (const auto& line : result.trace_lines) out << line << "\n";
}

inline secl::RunConfig small_config(secl::Method method, int per_domain = 60, std::uint64_t seed = 0) {
  auto cfg = secl::synthetic_run_config(seed);
  cfg.method = method;
  cfg.world.questions_per_domain = per_domain;
  cfg.posthoc.enabled = false;
  return cfg;
}

inline std::shared_ptr<secl::SyntheticWorld> small_world(int per_domain = 20, std::uint64_t seed = 0,
                                                         const std::string& preset = "default") {
  auto w = secl::world_preset(preset, seed);
  w.questions_per_domain = per_domain;
  return std::make_shared<secl::SyntheticWorld>(w);
}

} // namespace testsupport
