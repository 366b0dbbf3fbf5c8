// One line per acceptance criterion. Exit status is nonzero when any
// enforced check fails; "info" lines are comparisons that are reported only.
//
//   acceptance            run everything
//   acceptance 1 4 7      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tcqkd/attacks.hpp"
#include "tcqkd/coherence.hpp"
#include "tcqkd/commands.hpp"
#include "tcqkd/errors.hpp"
#include "tcqkd/pulse.hpp"
#include "tcqkd/rng.hpp"
#include "tcqkd/security.hpp"

using namespace tcqkd;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;  // detail, printed indented

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
  void info(const std::string& what) { lines.push_back("info  " + what); }
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double round_to(double v, int digits) {
  const double s = std::pow(10.0, digits);
  return std::round(v * s) / s;
}

int jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

const double deltas[] = {0.0, 0.061, 0.086};

// ---------------------------------------------------------------------------

Outcome autocorrelation_values() {
  Outcome o;
  const double sq = autocorrelation(PulseProfile::square(20.0), 10.0);
  o.check(std::abs(sq - 0.5) <= 1e-6, fmt("square 20 ns: gamma(10 ns) = %.9f, target 0.5 +- 1e-6", sq));
  const double fit = autocorrelation(PulseProfile::fitted(), 10.0);
  o.check(std::abs(fit - 0.576) <= 0.003, fmt("fitted profile: gamma(10 ns) = %.4f, target 0.576 +- 0.003", fit));
  return o;
}

Outcome estimator_chain() {
  Outcome o;
  const auto e = estimate_gamma_from_stats(290, 282.5, 0.15);
  o.check(round_to(e.sigma2 * 1e3, 2) == 3.54, fmt("sigma^2 = %.4e, printed 3.54e-3", e.sigma2));
  o.check(round_to(e.sigma_T2 * 1e5, 2) == 2.44, fmt("sigma_T^2 = %.4e, printed 2.44e-5", e.sigma_T2));
  o.check(round_to(e.gamma_0, 3) == 0.541, fmt("gamma_0 = %.5f, printed 0.541", e.gamma_0));
  // each later step starts from the printed value of the one before
  const double g0 = round_to(e.gamma_0, 3);
  const double g3 = g0 - 3.0 * std::sqrt(round_to(e.sigma_T2, 7));
  o.check(round_to(g3, 3) == 0.526, fmt("gamma_3sigma = %.5f, printed 0.526", g3));
  const double d0 = coherence_loss(0.576, g0);
  const double d3 = coherence_loss(0.576, g3);
  o.check(round_to(d0, 3) == 0.061, fmt("Delta(gamma_0) = %.5f, printed 0.061", d0));
  o.check(round_to(d3, 3) == 0.086, fmt("Delta(gamma_3sigma) = %.5f, printed 0.086", d3));
  const double d0_full = coherence_loss(0.576, e.gamma_0);
  const double d3_full = coherence_loss(0.576, gamma_floor(e, 3.0));
  o.info(fmt("without intermediate rounding: Delta = %.5f and %.5f", d0_full, d3_full));
  return o;
}

Outcome estimator_consistency() {
  Outcome o;
  const double gamma = 0.5, n_p = 300.0;
  const std::size_t n_s = 10000, replicates = 100;
  std::vector<double> g;
  double sigma_t = 0.0;
  int covered = 0;
  for (std::size_t r = 0; r < replicates; ++r) {
    RandomStream rng = RandomStream::derive(2024, r);
    const auto e = estimate_gamma(synthetic_contrasts(gamma, n_s, n_p, rng), n_p);
    g.push_back(e.gamma_0);
    sigma_t = e.sigma_T;
    if (std::abs(e.gamma_0 - gamma) <= 3.0 * e.sigma_T) ++covered;
  }
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= g.size();
  double var = 0.0;
  for (double v : g) var += (v - mean) * (v - mean);
  const double spread = std::sqrt(var / (g.size() - 1));
  o.check(std::abs(mean - gamma) <= 3.0 * sigma_t,
          fmt("mean gamma_0 over 100 replicates = %.5f, sigma_T = %.6f", mean, sigma_t));
  o.info(fmt("replicates within 3 sigma_T of 0.5: %.0f of 100", covered));
  const double ratio = spread / sigma_t;
  o.check(std::abs(ratio - 1.0) <= 0.2,
          fmt("empirical spread %.6f vs sigma_T %.6f: ratio %.3f, target 1 +- 0.2", spread, sigma_t, ratio));
  return o;
}

Outcome max_coherence_tables() {
  Outcome o;
  const double qmax_ref[] = {0.058, 0.050, 0.046};
  const double adv033_ref[] = {0.41, 0.27, 0.22};
  const double adv0162_ref[] = {0.69, 0.57, 0.52};
  for (int i = 0; i < 3; ++i) {
    const auto c = attack_curve(AttackKind::max_coherence, deltas[i]);
    const double qm = max_qber(c);
    o.check(std::abs(qm - qmax_ref[i]) <= 0.001,
            fmt("Delta=%.3f: Q_max = %.3f %%, reference %.1f %% +- 0.1 pp", deltas[i], 100 * qm, 100 * qmax_ref[i]));
    const double a1 = advantage(0.033, c), a2 = advantage(0.0162, c);
    o.check(std::abs(a1 - adv033_ref[i]) <= 0.01,
            fmt("Delta=%.3f: advantage at 3.3 %% = %.4f, reference %.2f", deltas[i], a1, adv033_ref[i]));
    o.check(std::abs(a2 - adv0162_ref[i]) <= 0.01,
            fmt("Delta=%.3f: advantage at 1.62 %% = %.4f, reference %.2f", deltas[i], a2, adv0162_ref[i]));
  }
  return o;
}

Outcome analytic_vs_monte_carlo() {
  Outcome o;
  const std::uint64_t pulses = 1000000;
  std::uint64_t seed = 100;
  for (double m : {0.25, 0.5, 1.0})
    for (double x : {1.0 / 3, 2.0 / 3, 1.0}) {
      const auto a = max_coherence_analytic(m, x);
      const auto mc = evaluate_attack_mc(MaxCoherence{m, x}, pulses, seed++);
      auto z = [](double est, double truth, double se) { return se > 0 ? std::abs(est - truth) / se : std::abs(est - truth) * 1e12; };
      const double zq = z(mc.mean.q, a.q, mc.std_error.q);
      const double zi = z(mc.mean.i_ae, a.i_ae, mc.std_error.i_ae);
      const double zc = z(mc.mean.contrast, a.contrast, mc.std_error.contrast);
      char buf[160];
      std::snprintf(buf, sizeof buf, "m=%.2f x=%.3f: |z| Q %.2f, I_AE %.2f, contrast %.2f (limit 3)", m, x, zq, zi,
                    zc);
      o.check(zq <= 3 && zi <= 3 && zc <= 3, buf);
    }
  return o;
}

Outcome end_to_end_qber() {
  Outcome o;
  const RunConfig cfg;
  const CommandOptions opt{jobs(), ""};
  const json q = json::parse(cmd_simulate(cfg, opt).find("qber.json")->payload);
  const bool have = q["q"].is_number();
  const double v = have ? q["q"].get<double>() : -1.0;
  o.check(have && v >= 0.015 && v <= 0.04,
          fmt("default run: Q = %.3f %% +- %.3f %%, target [1.5, 4] %%", 100 * v,
              have ? 100 * q["q_std_error"].get<double>() : 0.0));
  const json qq = json::parse(cmd_simulate(quiet_config(cfg), opt).find("qber.json")->payload);
  const bool have_q = qq["q"].is_number();
  const double vq = have_q ? qq["q"].get<double>() : -1.0;
  o.check(have_q && std::abs(vq - 0.022) <= 0.005,
          fmt("noise sources off: Q = %.3f %% +- %.3f %%, target 2.2 +- 0.5 pp", 100 * vq,
              have_q ? 100 * qq["q_std_error"].get<double>() : 0.0));
  o.info(fmt("profile alone (integrated): Q = %.3f %%", 100 * profile_qber(cfg.profile, cfg.protocol.grid)));
  return o;
}

Outcome noise_budget_values() {
  Outcome o;
  const auto n = noise_budget(DetectorModel{}, ProtocolParams{}, 3e-3);
  auto exact = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); };
  o.check(exact(n.dark, 1.1e-6), fmt("dark %.3e, reference 1.1e-6", n.dark));
  o.check(exact(n.parasitic, 1e-5), fmt("parasitic %.3e, reference 1e-5", n.parasitic));
  o.check(exact(n.signal, 3e-3), fmt("signal %.3e, reference 3e-3", n.signal));
  o.check(exact(n.extinction_background, 3e-6), fmt("extinction %.3e, reference 3e-6", n.extinction_background));
  return o;
}

Outcome range_values() {
  Outcome o;
  const auto r = range_estimate(0.0162, 0.058, 2.0);
  o.check(std::abs(r.allowed_attenuation - 3.6) <= 0.1,
          fmt("attenuation %.3f, reference 3.6 +- 0.1", r.allowed_attenuation));
  o.check(std::abs(r.allowed_attenuation_db - 5.5) <= 0.1,
          fmt("attenuation %.3f dB, reference 5.5 +- 0.1", r.allowed_attenuation_db));
  o.check(std::abs(r.range_km - 2.75) <= 0.05, fmt("range %.3f km, reference 2.75 +- 0.05", r.range_km));
  const double qm = max_qber(attack_curve(AttackKind::max_coherence, 0.0));
  o.info(fmt("with the computed Q_max %.4f: range %.3f km", qm, range_estimate(0.0162, qm, 2.0).range_km));
  return o;
}

Outcome two_slot_attack() {
  Outcome o;
  std::uint64_t seed = 200;
  for (double m : {0.2, 0.5, 1.0}) {
    const auto mc = evaluate_attack_mc(TwoSlot{m, 0.5, 0.5, 0.5}, 1000000, seed++);
    const double dev = mc.mean.i_ae - 2.0 * mc.mean.q;
    o.check(std::abs(dev) <= 0.005,
            fmt("m=%.1f: Q = %.4f, I_AE - 2Q = %+.5f (limit 0.005)", m, mc.mean.q, dev));
  }
  const double qm = max_qber(attack_curve(AttackKind::two_slot, 0.0));
  o.check(std::abs(qm - 0.17) <= 0.005, fmt("ideal crossing %.3f %%, reference 17 +- 0.5 pp", 100 * qm));
  const double ref[] = {0.0, 0.11, 0.097};
  for (int i = 1; i < 3; ++i) {
    const double q = max_qber(attack_curve(AttackKind::two_slot, deltas[i]));
    o.info(fmt("Delta=%.3f: strategy-search crossing %.2f %%, reference %.1f %% +- 1.5 pp", deltas[i], 100 * q,
               100 * ref[i]) +
           (std::abs(q - ref[i]) <= 0.015 ? " (within)" : " (outside)"));
  }
  return o;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Outcome entangling_attack() {
  Outcome o;
  RunConfig cfg;
  cfg.security.attacks = {"entangling"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = cmd_security(cfg, SecurityMode::curves, CommandOptions{jobs(), ""});
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  const json summary = json::parse(res.find("curves.json")->payload);

  const double qmax_ref[] = {0.12, 0.065, 0.058};
  const double adv033_ref[] = {0.63, 0.29, 0.22};
  const double adv0162_ref[] = {0.80, 0.50, 0.43};
  for (int i = 0; i < 3; ++i) {
    const double d = deltas[i];
    const std::string tag = i == 0 ? "0" : (i == 1 ? "0p061" : "0p086");
    const auto* pts = res.find("entangling_points_delta_" + tag + ".csv");
    if (!pts) {
      o.check(false, "no entangling points at Delta=" + fmt("%.3f", d));
      continue;
    }
    const auto rows = read_csv(pts->payload);
    int dominated = 0, total = 0, infeasible = 0;
    std::map<double, double> iae;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const double q = std::stod(rows[r][0]);
      const bool feasible = rows[r][1] == "1";
      ++total;
      if (!feasible) {
        ++infeasible;
        continue;
      }
      const double v = std::stod(rows[r][2]);
      iae[q] = v;
      double ir = 0.0;
      try {
        ir = improved_intercept_resend(q, d).i_ae;
      } catch (const Error&) {
        ir = 0.0;  // intercept-resend cannot reach this Q
      }
      if (v >= ir - 1e-9) ++dominated;
    }
    o.check(dominated == total, fmt("Delta=%.3f: curve above improved intercept-resend at %.0f of %.0f grid points",
                                    d, dominated, total));
    if (infeasible) o.info(fmt("Delta=%.3f: %.0f infeasible points", d, infeasible));

    double qm = std::nan("");
    for (const auto& row : summary)
      if (row["attack"] == "entangling" && std::abs(row["delta"].get<double>() - d) < 1e-12 && row["q_max"].is_number())
        qm = row["q_max"].get<double>();
    if (i == 0)
      o.check(qm >= 0.10 && qm <= 0.13, fmt("Delta=0: crossing %.2f %%, target [10, 13] %%", 100 * qm));
    else
      o.info(fmt("Delta=%.3f: crossing %.2f %%, reference %.1f %% +- 1.5 pp", d, 100 * qm, 100 * qmax_ref[i]) +
             (std::abs(qm - qmax_ref[i]) <= 0.015 ? " (within)" : " (outside)"));
    for (auto [q, ref] : {std::pair{0.033, adv033_ref[i]}, std::pair{0.0162, adv0162_ref[i]}}) {
      const auto it = iae.find(q);
      if (it == iae.end()) {
        o.info(fmt("Delta=%.3f Q=%.4f: no feasible point", d, q));
        continue;
      }
      const double adv = i_ab(q) - it->second;
      o.info(fmt("Delta=%.3f Q=%.4f: advantage %.3f", d, q, adv) + fmt(", reference %.2f +- 0.05", ref) +
             (std::abs(adv - ref) <= 0.05 ? " (within)" : " (outside)"));
    }
  }
  o.check(minutes <= 30.0, fmt("optimization time %.1f min with %.0f jobs, limit 30", minutes, jobs()));
  return o;
}

bool same_payloads(const CommandResult& a, const CommandResult& b, std::string& differing) {
  if (a.artifacts.size() != b.artifacts.size()) {
    differing = "artifact count";
    return false;
  }
  for (std::size_t i = 0; i < a.artifacts.size(); ++i)
    if (a.artifacts[i].name != b.artifacts[i].name || a.artifacts[i].payload != b.artifacts[i].payload) {
      differing = a.artifacts[i].name;
      return false;
    }
  return true;
}

std::map<std::string, std::string> read_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.path().filename() == "run_metadata.json") continue;
    std::ifstream in(f.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[f.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  Outcome o;
  RunConfig cfg;
  cfg.sequences = 6;
  cfg.security.entangling_qbers = {0.1};
  cfg.security.qbers = {0.0162};
  cfg.security.deltas = {0.0, 0.061};
  cfg.security.mc_pulses = 20000;
  cfg.entangle.starts = 2;
  const CommandOptions one{1, ""}, many{3, ""};

  using Run = std::function<CommandResult(const CommandOptions&)>;
  const std::vector<std::pair<std::string, Run>> commands{
      {"simulate", [&](const CommandOptions& opt) { return cmd_simulate(cfg, opt); }},
      {"coherence", [&](const CommandOptions& opt) { return cmd_coherence(cfg, opt); }},
      {"security curves", [&](const CommandOptions& opt) { return cmd_security(cfg, SecurityMode::curves, opt); }},
      {"security tables", [&](const CommandOptions& opt) { return cmd_security(cfg, SecurityMode::tables, opt); }},
      {"security range", [&](const CommandOptions& opt) { return cmd_security(cfg, SecurityMode::range, opt); }},
  };
  for (const auto& [name, run] : commands) {
    std::string diff;
    const auto a = run(one);
    const bool rerun = same_payloads(a, run(one), diff);
    o.check(rerun, name + ": re-run identical" + (rerun ? "" : " (differs in " + diff + ")"));
    const bool par = same_payloads(a, run(many), diff);
    o.check(par, name + ": 1 job vs 3 jobs identical" + (par ? "" : " (differs in " + diff + ")"));
  }

  // report through the file writer: every data file identical
  const auto base = std::filesystem::temp_directory_path() / "tcqkd_acceptance";
  std::filesystem::remove_all(base);
  write_artifacts((base / "a").string(), "report", cfg, cmd_report(cfg, one));
  write_artifacts((base / "b").string(), "report", cfg, cmd_report(cfg, many));
  const auto fa = read_dir(base / "a"), fb = read_dir(base / "b");
  o.check(!fa.empty() && fa == fb, fmt("report: %.0f data files byte-identical across runs", fa.size()));
  std::filesystem::remove_all(base);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"autocorrelation of square and fitted pulses", autocorrelation_values},
      {"estimator reproduces the recorded statistics", estimator_chain},
      {"estimator consistency on synthetic sequences", estimator_consistency},
      {"maximum-coherence security tables", max_coherence_tables},
      {"analytic and Monte Carlo attack statistics agree", analytic_vs_monte_carlo},
      {"end-to-end QBER", end_to_end_qber},
      {"noise budget", noise_budget_values},
      {"secure range", range_values},
      {"two-slot attack", two_slot_attack},
      {"entangling attack", entangling_attack},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %2d: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), s);
    for (const auto& l : o.lines) std::printf("        %s\n", l.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria failed\n", failed, only.empty() ? criteria.size() : only.size());
  return failed == 0 ? 0 : 1;
}
