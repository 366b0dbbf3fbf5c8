#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tcqkd/attacks.hpp"
#include "tcqkd/coherence.hpp"
#include "tcqkd/entangle.hpp"
#include "tcqkd/pulse.hpp"
#include "tcqkd/simulate.hpp"

namespace tcqkd {

struct SeedPolicy {
  std::uint64_t master = 42;
  /// Every sequence (or curve point) draws from derive(master, index).
  std::string stream_policy = "per_index";
};

struct OutputOptions {
  std::string directory = "out";
  std::string format = "csv";  // csv | json
};

/// Key-arm phase model of the interferometer.
struct PhaseOptions {
  std::string policy = "uniform";  // uniform per sequence | fixed
  double fixed_rad = 0.0;
};

struct SecurityOptions {
  std::vector<double> deltas{0.0, 0.061, 0.086};
  std::vector<double> qbers{0.0162, 0.033};
  std::vector<std::string> attacks{"two_slot", "max_coherence", "improved_intercept_resend", "entangling"};
  double curve_q_step = 0.0025;
  double curve_q_max = 0.3;
  std::vector<double> entangling_qbers{0.02, 0.04, 0.06, 0.08, 0.1, 0.11, 0.12, 0.13, 0.14, 0.16, 0.2};
  double fiber_loss_db_per_km = 2.0;
  double range_qber = 0.0162;
  double range_q_max = 0.058;
  /// Monte Carlo pulses for attack sweeps in reports.
  std::uint64_t mc_pulses = 1000000;
};

struct RunConfig {
  ProtocolParams protocol;
  std::uint32_t sequences = 290;
  PulseProfile profile = PulseProfile::fitted();
  DetectorModel detector;
  ClockModel clock;
  AlignmentSearch alignment;
  InterferometerModel interferometer;
  PhaseOptions phase;
  AttackStrategy attack = NoAttack{};
  SeedPolicy seeds;
  OutputOptions output;
  SecurityOptions security;
  OptimizerConfig entangle;

  /// Validates every sub-config; returns the soft warnings.
  std::vector<std::string> validate() const;
};

/// Raw `key = value` entries with their source line (0 for JSON input).
struct ConfigEntry {
  std::string value;
  int line = 0;
};
using ConfigEntries = std::map<std::string, ConfigEntry>;

/// Dotted-key text format; '#' starts a comment, lists are comma separated.
ConfigEntries read_flat_entries(const std::string& text);
/// Nested or flat JSON object, flattened to dotted keys.
ConfigEntries read_json_entries(const std::string& text);

/// Entries from the environment: TCQKD_SECTION__KEY_UNIT=value maps to
/// section.key_unit. `envp` defaults to the process environment.
ConfigEntries environment_entries(char** envp = nullptr);

/// Later entries replace earlier ones, including other unit spellings of
/// the same quantity.
void merge_entries(ConfigEntries& base, const ConfigEntries& overrides);

RunConfig config_from_entries(const ConfigEntries& entries);

/// JSON if the text starts with '{', the flat format otherwise.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path, bool use_environment = true);

/// Canonical flat text: every key, canonical units, shortest round-trip
/// number formatting.
std::string serialize_config(const RunConfig& cfg);
std::string serialize_config_json(const RunConfig& cfg);

/// Keys in canonical spelling with their unit suffix, for documentation.
std::vector<std::string> config_keys();

}  // namespace tcqkd
