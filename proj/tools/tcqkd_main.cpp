#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "tcqkd/commands.hpp"
#include "tcqkd/errors.hpp"

using namespace tcqkd;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::string out;
  std::string format;
  bool print_config = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "config file (dotted keys or JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed, overrides seeds.master")
      ->each([&c](const std::string&) { c.seed_set = true; });
  app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory, overrides output.directory");
  app->add_option("--format", c.format, "data file format, overrides output.format")
      ->check(CLI::IsMember({"csv", "json"}));
  app->add_flag("--print-config", c.print_config, "print the resolved config and exit");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = load_config(c.config);
  if (c.seed_set) {
    cfg.seeds.master = c.seed;
    cfg.entangle.seed = c.seed;
  }
  if (!c.out.empty()) cfg.output.directory = c.out;
  if (!c.format.empty()) cfg.output.format = c.format;
  return cfg;
}

void report(const std::string& command, const RunConfig& cfg, const CommandResult& r) {
  write_artifacts(cfg.output.directory, command, cfg, r);
  for (const auto& d : r.diagnostics) std::cerr << "note: " << d << '\n';
  for (const auto& a : r.artifacts) std::cout << cfg.output.directory << '/' << a.name << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-coded QKD simulator and security analysis"};
  app.require_subcommand(1);
  Common sim_c, coh_c, sec_c, rep_c;
  auto* sim = app.add_subcommand("simulate", "key-arm simulation: qber.json and detections");
  add_common(sim, sim_c);
  auto* coh = app.add_subcommand("coherence", "interferometer simulation: contrasts and coherence.json");
  add_common(coh, coh_c);
  auto* sec = app.add_subcommand("security", "information curves, tables and range");
  add_common(sec, sec_c);
  std::string mode = "curves", reports;
  sec->add_option("--mode", mode, "curves | tables | range")->check(CLI::IsMember({"curves", "tables", "range"}));
  sec->add_option("--reports", reports, "tables mode: directory with qber.json and coherence.json");
  auto* rep = app.add_subcommand("report", "every artifact plus report.md");
  add_common(rep, rep_c);

  CLI11_PARSE(app, argc, argv);

  try {
    Common* c = sim->parsed() ? &sim_c : coh->parsed() ? &coh_c : sec->parsed() ? &sec_c : &rep_c;
    const RunConfig cfg = resolve(*c);
    if (c->print_config) {
      std::cout << serialize_config(cfg);
      return 0;
    }
    CommandOptions opt;
    opt.jobs = c->jobs;
    if (sim->parsed()) {
      report("simulate", cfg, cmd_simulate(cfg, opt));
    } else if (coh->parsed()) {
      report("coherence", cfg, cmd_coherence(cfg, opt));
    } else if (sec->parsed()) {
      opt.reports_dir = reports;
      report("security", cfg, cmd_security(cfg, parse_security_mode(mode), opt));
    } else {
      report("report", cfg, cmd_report(cfg, opt));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
