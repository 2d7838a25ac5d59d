#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aida/executor.hpp"
#include "aida/numerals.hpp"
#include "aida/step.hpp"

namespace aida {

struct SandboxOptions {
  std::chrono::milliseconds wall_clock{10000};
  std::size_t max_output = 1 << 20;  // combined stdout + stderr bytes
  std::string interpreter = "python3";
  /// Exposed to scripts as AIDA_WORKSPACE so they can read exported CSVs.
  std::filesystem::path workspace = ".";

  /// Defaults overridden by AIDA_SANDBOX_TIMEOUT_MS, AIDA_SANDBOX_MAX_OUTPUT and AIDA_PYTHON.
  static SandboxOptions from_env();
};

struct ScriptResult {
  std::string stdout_text;
  std::string stderr_text;
  bool exit_ok = false;
  int exit_code = -1;
  bool timed_out = false;
  bool truncated = false;
  bool launch_failed = false;
};

/// Runs `code` with an isolated interpreter (-I) inside a fresh scratch directory that
/// is removed afterwards. The network namespace is unshared when the kernel allows it.
ScriptResult run_script(const std::string& code, const SandboxOptions& options);

struct Observation {
  Tool tool = Tool::dsl2data;
  ExecStatus status = ExecStatus::Success;
  std::optional<FeedbackPackage> package;  // dsl2data
  std::optional<ScriptResult> script;      // python
  std::vector<Violation> violations;
  bool schema_error = false;  // arguments did not validate; nothing was executed

  bool boundary_violation() const { return !violations.empty(); }
  /// Text shown to the agent; the numerals of an observation are extracted from it.
  std::string body_text() const;
  std::vector<Numeral> numerals() const { return extract_numerals(body_text()); }
};

ordered_json to_json(const Observation& observation);
/// Rebuilds an observation from its log record (enough for re-scoring).
Observation observation_from_json(const ordered_json& j);

class Environment {
 public:
  Environment(QueryEngine& engine, SandboxOptions sandbox) : engine_(engine), sandbox_(std::move(sandbox)) {}

  /// Never throws: failures come back as an Error observation.
  Observation execute_action(const ToolCall& call);

  QueryEngine& engine() { return engine_; }
  const SandboxOptions& sandbox() const { return sandbox_; }

 private:
  QueryEngine& engine_;
  SandboxOptions sandbox_;
};

}  // namespace aida
