#pragma once

#include <string>
#include <vector>

#include "tcqkd/config.hpp"

namespace tcqkd {

/// One output file, named relative to the output directory.
struct Artifact {
  std::string name;
  std::string payload;
};

struct CommandResult {
  std::vector<Artifact> artifacts;
  std::vector<std::string> diagnostics;
  /// False when the command produced its files but could not compute the
  /// headline quantity (e.g. Q with mu = 0).
  bool complete = true;

  const Artifact* find(const std::string& name) const;
};

struct CommandOptions {
  int jobs = 1;
  /// tables mode: directory holding qber.json / coherence.json from
  /// earlier runs; empty uses the configured Q and Delta lists only.
  std::string reports_dir;
};

enum class SecurityMode { curves, tables, range };
SecurityMode parse_security_mode(const std::string& s);

CommandResult cmd_simulate(const RunConfig& cfg, const CommandOptions& opt = {});
CommandResult cmd_coherence(const RunConfig& cfg, const CommandOptions& opt = {});
CommandResult cmd_security(const RunConfig& cfg, SecurityMode mode, const CommandOptions& opt = {});
/// The run without dark counts, parasitic light, extinction or attack:
/// what the pulse shape alone costs in QBER.
RunConfig quiet_config(const RunConfig& cfg);

/// All of the above plus attack sweeps and a markdown summary against the
/// reference values.
CommandResult cmd_report(const RunConfig& cfg, const CommandOptions& opt = {});

/// Writes every artifact under `dir` (created if needed) and a
/// run_metadata.json holding the timestamp and the canonical config, so
/// the data files themselves stay byte-identical across re-runs.
void write_artifacts(const std::string& dir, const std::string& command, const RunConfig& cfg,
                     const CommandResult& result);

}  // namespace tcqkd
