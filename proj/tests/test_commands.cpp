#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tcqkd/commands.hpp"
#include "tcqkd/errors.hpp"

using namespace tcqkd;
using nlohmann::json;

namespace {

RunConfig small(std::uint32_t sequences = 4) {
  RunConfig c;
  c.sequences = sequences;
  c.protocol.pulses_per_sequence = 8000;
  c.protocol.sequence_duration_ns = 8000 * c.protocol.grid.period;
  return c;
}

json artifact_json(const CommandResult& r, const std::string& name) {
  const auto* a = r.find(name);
  REQUIRE(a != nullptr);
  return json::parse(a->payload);
}

void same_payloads(const CommandResult& a, const CommandResult& b) {
  REQUIRE(a.artifacts.size() == b.artifacts.size());
  for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
    CHECK(a.artifacts[i].name == b.artifacts[i].name);
    CHECK_MESSAGE(a.artifacts[i].payload == b.artifacts[i].payload, a.artifacts[i].name);
  }
}

}  // namespace

TEST_CASE("simulate reports a QBER") {
  const auto r = cmd_simulate(small());
  CHECK(r.complete);
  const auto q = artifact_json(r, "qber.json");
  CHECK(q["sequences"] == 4);
  CHECK(q["q"].is_number());
  CHECK(q["q"].get<double>() > 0.0);
  CHECK(q["q"].get<double>() < 0.1);
  CHECK(q["alignment"]["performed"].is_boolean());
  CHECK(r.find("detections.csv") != nullptr);

  auto j = small();
  j.output.format = "json";
  CHECK(cmd_simulate(j).find("detections.json") != nullptr);
}

TEST_CASE("simulate and coherence are reproducible") {
  const auto cfg = small(3);
  same_payloads(cmd_simulate(cfg), cmd_simulate(cfg, CommandOptions{2, ""}));
  same_payloads(cmd_coherence(cfg), cmd_coherence(cfg, CommandOptions{3, ""}));
  auto other = cfg;
  other.seeds.master = 43;
  CHECK(cmd_simulate(other).find("qber.json")->payload != cmd_simulate(cfg).find("qber.json")->payload);
}

TEST_CASE("no photons means no QBER") {
  auto cfg = small(2);
  cfg.protocol.mean_photons_per_pulse = 0.0;
  cfg.detector.dark_rate_per_s = 0.0;
  cfg.detector.parasitic_rate_per_s = 0.0;
  const auto r = cmd_simulate(cfg);
  CHECK_FALSE(r.complete);
  CHECK_FALSE(r.diagnostics.empty());
  CHECK(artifact_json(r, "qber.json")["q"].is_null());
}

TEST_CASE("coherence needs two sequences") {
  CHECK_THROWS_AS(cmd_coherence(small(1)), InsufficientStatistics);
  const auto c = artifact_json(cmd_coherence(small(3)), "coherence.json");
  CHECK(c["gamma_theory"].get<double>() == doctest::Approx(0.5746).epsilon(2e-3));
  CHECK(c["sigma_T"].get<double>() > 0.0);
}

TEST_CASE("maximum-coherence attack on ideal squares") {
  auto cfg = small(4);
  cfg.profile = PulseProfile::square(20.0);
  cfg.protocol.extinction_ratio = 0.0;
  cfg.detector.dark_rate_per_s = 0.0;
  cfg.detector.parasitic_rate_per_s = 0.0;
  cfg.detector.jitter_sigma_ns = 0.0;
  cfg.attack = MaxCoherence{1.0, 2.0 / 3};
  const auto q = artifact_json(cmd_simulate(cfg), "qber.json");
  const double se = q["q_std_error"].get<double>();
  CHECK(std::abs(q["q"].get<double>() - 1.0 / 3) < 4 * se + 0.01);
  CHECK(q["attack"] == "max_coherence");
}

TEST_CASE("security tables and range") {
  auto cfg = small();
  cfg.security.attacks = {"two_slot", "max_coherence"};
  const auto t = cmd_security(cfg, SecurityMode::tables);
  const auto tab = artifact_json(t, "tables.json");
  CHECK(tab["deltas"].size() == 3);
  REQUIRE(t.find("table_max_qber.csv") != nullptr);
  CHECK(t.find("table_max_qber.csv")->payload.rfind("attack,", 0) == 0);

  const auto r = artifact_json(cmd_security(cfg, SecurityMode::range), "range.json");
  CHECK(r.dump().find("range_km") != std::string::npos);

  CHECK_THROWS_AS(cmd_security(cfg, SecurityMode::tables, CommandOptions{1, "/nonexistent/reports"}), NoData);
  CHECK(parse_security_mode("curves") == SecurityMode::curves);
  CHECK_THROWS(parse_security_mode("all"));
}

TEST_CASE("tables read earlier reports") {
  auto cfg = small(3);
  cfg.security.attacks = {"max_coherence"};
  const auto dir = std::filesystem::temp_directory_path() / "tcqkd_test_reports";
  std::filesystem::remove_all(dir);
  write_artifacts(dir.string(), "simulate", cfg, cmd_simulate(cfg));
  write_artifacts(dir.string(), "coherence", cfg, cmd_coherence(cfg));
  CHECK(std::filesystem::exists(dir / "run_metadata.json"));
  const auto t = cmd_security(cfg, SecurityMode::tables, CommandOptions{1, dir.string()});
  const auto tab = artifact_json(t, "tables.json");
  // configured lists plus the measured Q and Delta
  CHECK(tab["qbers"].size() >= 3);
  CHECK(tab["deltas"].size() >= 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("curves for the analytic attacks") {
  auto cfg = small();
  cfg.security.attacks = {"two_slot", "improved_intercept_resend"};
  cfg.security.deltas = {0.0, 0.061};
  const auto c = cmd_security(cfg, SecurityMode::curves);
  CHECK(c.find("curve_two_slot_delta_0.csv") != nullptr);
  CHECK(c.find("curve_improved_intercept_resend_delta_0p061.csv") != nullptr);
  const auto s = artifact_json(c, "curves.json");
  CHECK(s.size() == 4);
  CHECK(s[0]["q_max"].get<double>() == doctest::Approx(0.1705).epsilon(1e-3));
}
