#include "tcqkd/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "tcqkd/attacks.hpp"
#include "tcqkd/coherence.hpp"
#include "tcqkd/entangle.hpp"
#include "tcqkd/errors.hpp"
#include "tcqkd/parallel.hpp"
#include "tcqkd/security.hpp"

namespace tcqkd {

using json = nlohmann::ordered_json;

const Artifact* CommandResult::find(const std::string& name) const {
  for (const auto& a : artifacts)
    if (a.name == name) return &a;
  return nullptr;
}

SecurityMode parse_security_mode(const std::string& s) {
  if (s == "curves") return SecurityMode::curves;
  if (s == "tables") return SecurityMode::tables;
  if (s == "range") return SecurityMode::range;
  throw InvalidArgument("unknown security mode '" + s + "' (expected curves, tables or range)");
}

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json nullable(double v, bool ok) { return ok ? json(v) : json(nullptr); }

// Targets quoted by the published measurement, used only for comparison
// columns in the report.
namespace reference {
constexpr double qber_min = 0.0162;
constexpr double qber_min_error = 0.0075;
constexpr double qber_profile = 0.022;
constexpr double qber_last_sequence = 0.033;
constexpr double gamma_th = 0.576;
constexpr double gamma_0 = 0.541;
constexpr double sigma_t = 4.9e-3;
constexpr double delta_0 = 0.061;
constexpr double delta_3sigma = 0.086;
constexpr double range_km = 2.75;
constexpr double attenuation = 3.6;

struct Row {
  const char* attack;
  double ideal, no_noise, noise;  // Delta = 0, 0.061, 0.086
};
const Row max_qber[] = {{"two_slot", 0.17, 0.11, 0.097},
                        {"max_coherence", 0.058, 0.050, 0.046},
                        {"entangling", 0.12, 0.065, 0.058}};
const Row advantage_033[] = {{"two_slot", 0.72, 0.54, 0.49},
                             {"max_coherence", 0.41, 0.27, 0.22},
                             {"entangling", 0.63, 0.29, 0.22}};
const Row advantage_0162[] = {{"two_slot", 0.83, 0.70, 0.66},
                              {"max_coherence", 0.69, 0.57, 0.52},
                              {"entangling", 0.80, 0.50, 0.43}};

/// Reference cell for (attack, Delta), or NaN when there is none.
double lookup(const Row* rows, std::size_t n, const std::string& attack, double delta) {
  for (std::size_t i = 0; i < n; ++i) {
    if (attack != rows[i].attack) continue;
    if (std::abs(delta) < 1e-12) return rows[i].ideal;
    if (std::abs(delta - 0.061) < 1e-9) return rows[i].no_noise;
    if (std::abs(delta - 0.086) < 1e-9) return rows[i].noise;
  }
  return std::nan("");
}
}  // namespace reference

// ---------------------------------------------------------------------------
// per-sequence simulation

struct SequenceRun {
  std::vector<Bit> bits;
  std::vector<DetectionRecord> records;
  SequenceContrast contrast;
  bool has_contrast = false;
};

bool attacked(const RunConfig& cfg) { return !std::holds_alternative<NoAttack>(cfg.attack); }

EmissionBatch emit(const RunConfig& cfg, std::size_t s, RandomStream& rng, std::vector<Bit>& bits) {
  bits = random_bits(cfg.protocol.pulses_per_sequence, rng);
  EmissionBatch batch = emit_sequence(bits, cfg.protocol, cfg.profile, rng);
  batch.sequence = static_cast<std::uint32_t>(s);
  if (attacked(cfg)) apply_intercept_resend(batch, cfg.attack, cfg.protocol.grid, rng);
  return batch;
}

std::vector<SequenceRun> run_key_arm(const RunConfig& cfg, int jobs) {
  std::vector<SequenceRun> runs(cfg.sequences);
  parallel_for(runs.size(), jobs, [&](std::size_t s) {
    RandomStream rng = RandomStream::derive(cfg.seeds.master, s);
    const EmissionBatch batch = emit(cfg, s, rng, runs[s].bits);
    runs[s].records = detect_key_arm(batch, cfg.detector, cfg.clock, cfg.protocol, rng);
  });
  return runs;
}

double sequence_phase(const RunConfig& cfg, RandomStream& rng) {
  return cfg.phase.policy == "fixed" ? cfg.phase.fixed_rad : 2.0 * std::numbers::pi * rng.uniform();
}

std::vector<SequenceRun> run_interferometer_arm(const RunConfig& cfg, int jobs) {
  std::vector<SequenceRun> runs(cfg.sequences);
  parallel_for(runs.size(), jobs, [&](std::size_t s) {
    RandomStream rng = RandomStream::derive(cfg.seeds.master, s);
    const EmissionBatch batch = emit(cfg, s, rng, runs[s].bits);
    const double phase = sequence_phase(cfg, rng);
    const auto recs =
        detect_interferometer_arm(batch, 0.5, cfg.detector, cfg.clock, cfg.interferometer, phase, cfg.protocol, rng);
    try {
      runs[s].contrast = contrast_of(recs, phase);
      runs[s].has_contrast = true;
    } catch (const NoData&) {
    }
  });
  return runs;
}

void write_detections_json(std::ostream& os, const std::vector<DetectionRecord>& records) {
  // hand-rolled so that the exact number formatting matches the CSV
  os << "[\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << "  {\"sequence\": " << r.sequence_index << ", \"raw_time_ns\": " << num(r.raw_time_ns)
       << ", \"pulse_index\": " << r.pulse_index << ", \"slot\": ";
    if (r.slot == SlotGrid::outside)
      os << "\"outside\"";
    else
      os << r.slot;
    os << ", \"origin\": \"" << origin_name(r.origin) << "\"}" << (i + 1 < records.size() ? ",\n" : "\n");
  }
  os << "]\n";
}

// ---------------------------------------------------------------------------
// security analysis shared by curves, tables and report

// file-name form of a value: 6 significant digits, '.' -> 'p'
std::string delta_tag(double delta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", delta);
  std::string s = buf;
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

struct EntanglingRun {
  std::vector<EntanglingCurvePoint> points;
  InformationCurve curve;
  bool usable = false;
};

class SecurityWork {
 public:
  SecurityWork(const RunConfig& cfg, int jobs) : cfg_(cfg), jobs_(jobs) {}

  /// Optimized entangling points at Delta over the configured grid plus
  /// any extra Q values, computed once.
  const EntanglingRun& entangling(double delta, std::vector<std::string>& diagnostics) {
    const auto it = ent_.find(delta);
    if (it != ent_.end()) return it->second;
    std::vector<double> grid = cfg_.security.entangling_qbers;
    for (double q : cfg_.security.qbers)
      if (q > 0 && q < 0.5) grid.push_back(q);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    OptimizerConfig oc = cfg_.entangle;
    oc.jobs = jobs_;
    oc.seed = cfg_.seeds.master;
    EntanglingRun run;
    // streams keyed by (Q, Delta), so a point does not depend on the grid
    for (double qv : grid) {
      const auto q_id = static_cast<std::uint64_t>(std::llround(qv * 1e9));
      const auto d_id = static_cast<std::uint64_t>(std::llround(delta * 1e9));
      const std::uint64_t seed = RandomStream::derive(RandomStream::derive(oc.seed, q_id).next_u64(), d_id).next_u64();
      run.points.push_back(optimize_point(qv, delta, oc, seed));
    }
    std::vector<double> q, v;
    for (const auto& p : run.points) {
      if (!p.feasible) {
        diagnostics.push_back("entangling Delta=" + num(delta) + " Q=" + num(p.q) + ": no feasible start");
        continue;
      }
      q.push_back(p.q);
      v.push_back(p.i_ae);
    }
    if (q.size() >= 2) {
      run.curve = tabulated_curve(AttackKind::entangling, delta, q, v);
      run.usable = true;
    } else {
      diagnostics.push_back("entangling Delta=" + num(delta) + ": fewer than two feasible points");
    }
    return ent_.emplace(delta, std::move(run)).first->second;
  }

  /// The I_AE curve of an attack, or nothing when it cannot be built.
  std::optional<InformationCurve> curve(AttackKind kind, double delta, std::vector<std::string>& diagnostics) {
    if (kind != AttackKind::entangling) return attack_curve(kind, delta);
    const auto& run = entangling(delta, diagnostics);
    if (!run.usable) return std::nullopt;
    return run.curve;
  }

  std::vector<double> q_grid() const {
    std::vector<double> g;
    const auto n = static_cast<int>(std::floor(cfg_.security.curve_q_max / cfg_.security.curve_q_step + 1e-9));
    for (int i = 0; i <= n; ++i) g.push_back(i * cfg_.security.curve_q_step);
    return g;
  }

 private:
  const RunConfig& cfg_;
  int jobs_;
  std::map<double, EntanglingRun> ent_;
};

struct Crossing {
  bool found = false;
  double q = 0.0;
  std::string note;
};

Crossing crossing(const InformationCurve& c) {
  Crossing out;
  try {
    out.q = max_qber(c);
    out.found = true;
  } catch (const NoCrossing& e) {
    out.note = e.kind() == NoCrossing::Kind::never_secure ? "never_secure" : "always_secure";
  }
  return out;
}

std::vector<AttackKind> configured_attacks(const RunConfig& cfg) {
  std::vector<AttackKind> out;
  for (const auto& a : cfg.security.attacks) out.push_back(parse_attack_kind(a));
  return out;
}

void security_curves(const RunConfig& cfg, SecurityWork& work, CommandResult& res, json& summary) {
  summary = json::array();
  const auto grid = work.q_grid();
  for (AttackKind kind : configured_attacks(cfg)) {
    for (double delta : cfg.security.deltas) {
      const auto curve = work.curve(kind, delta, res.diagnostics);
      if (!curve) continue;
      std::vector<double> qs = grid;
      if (kind == AttackKind::entangling) {
        qs.clear();
        for (const auto& p : work.entangling(delta, res.diagnostics).points)
          if (p.feasible) qs.push_back(p.q);
      }
      SecurityCurve sc = sample_curve(*curve, qs);
      const Crossing x = crossing(*curve);
      sc.has_q_max = x.found;
      sc.q_max = x.q;
      std::ostringstream os;
      write_curve_csv(os, sc);
      const std::string base = std::string("curve_") + attack_kind_name(kind) + "_delta_" + delta_tag(delta);
      res.artifacts.push_back({base + ".csv", os.str()});
      json row;
      row["attack"] = attack_kind_name(kind);
      row["delta"] = delta;
      row["q_max"] = nullable(x.q, x.found);
      if (!x.found) row["no_crossing"] = x.note;
      row["samples"] = sc.samples.size();
      summary.push_back(row);

      if (kind == AttackKind::entangling) {
        std::ostringstream ep;
        ep << "Q,feasible,I_AE,I_AE_helstrom,I_AE_holevo,I_AE_fine_grained,contrast,validation,isometry_residual,"
              "q_residual,feasible_starts,starts,evaluations\n";
        for (const auto& p : work.entangling(delta, res.diagnostics).points)
          ep << num(p.q) << ',' << (p.feasible ? 1 : 0) << ',' << num(p.i_ae) << ',' << num(p.i_ae_helstrom) << ','
             << num(p.i_ae_holevo) << ',' << num(p.i_ae_fine) << ',' << num(p.contrast) << ',' << num(p.validation)
             << ',' << num(p.isometry_residual) << ',' << num(p.q_residual) << ',' << p.feasible_starts << ','
             << p.starts << ',' << p.evaluations << '\n';
        res.artifacts.push_back({"entangling_points_delta_" + delta_tag(delta) + ".csv", ep.str()});
      }
    }
  }
}

json read_report(const std::string& dir, const std::string& name) {
  const auto path = std::filesystem::path(dir) / name;
  std::ifstream in(path);
  if (!in) throw NoData("tables mode needs " + path.string() + " from an earlier run");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw NoData("cannot parse " + path.string() + ": " + e.what());
  }
}

struct TableInputs {
  std::vector<double> deltas;
  std::vector<double> qbers;
};

TableInputs table_inputs(const RunConfig& cfg, const CommandOptions& opt, std::vector<std::string>& diagnostics) {
  TableInputs in{cfg.security.deltas, cfg.security.qbers};
  if (opt.reports_dir.empty()) return in;
  const json q = read_report(opt.reports_dir, "qber.json");
  const json c = read_report(opt.reports_dir, "coherence.json");
  if (!q.contains("q") || q["q"].is_null()) throw NoData("qber.json holds no QBER value");
  in.qbers.push_back(q["q"].get<double>());
  for (const char* key : {"delta_at_gamma_0", "delta_at_gamma_3sigma"}) {
    if (!c.contains(key) || c[key].is_null()) throw NoData(std::string("coherence.json lacks ") + key);
    in.deltas.push_back(c[key].get<double>());
  }
  diagnostics.push_back("tables include measured Q=" + num(in.qbers.back()) + " and Delta values from " +
                        opt.reports_dir);
  return in;
}

std::string delta_header(double d) { return "delta=" + num(d); }

void security_tables(const RunConfig& cfg, const TableInputs& in, SecurityWork& work, CommandResult& res,
                     json& tables) {
  const auto kinds = configured_attacks(cfg);
  tables = json::object();
  tables["deltas"] = in.deltas;
  tables["qbers"] = in.qbers;
  json qmax = json::array();
  std::map<double, json> adv;

  std::ostringstream qcsv;
  qcsv << "attack";
  for (double d : in.deltas) qcsv << ',' << delta_header(d);
  qcsv << '\n';
  std::map<double, std::ostringstream> acsv;
  for (double q : in.qbers) {
    acsv[q] << "attack";
    for (double d : in.deltas) acsv[q] << ',' << delta_header(d);
    acsv[q] << '\n';
  }

  for (AttackKind kind : kinds) {
    const char* name = attack_kind_name(kind);
    qcsv << name;
    for (auto& [q, os] : acsv) os << name;
    for (double d : in.deltas) {
      const auto curve = work.curve(kind, d, res.diagnostics);
      json row{{"attack", name}, {"delta", d}};
      if (!curve) {
        row["q_max"] = nullptr;
        qcsv << ',';
        for (auto& [q, os] : acsv) os << ',';
        qmax.push_back(row);
        continue;
      }
      const Crossing x = crossing(*curve);
      row["q_max"] = nullable(x.q, x.found);
      if (!x.found) row["no_crossing"] = x.note;
      qmax.push_back(row);
      qcsv << ',' << (x.found ? num(x.q) : x.note);
      for (double q : in.qbers) {
        json arow{{"attack", name}, {"delta", d}, {"Q", q}};
        try {
          const double a = advantage(q, *curve);
          arow["advantage"] = a;
          acsv[q] << ',' << num(a);
        } catch (const ConstraintViolation& e) {
          arow["advantage"] = nullptr;
          arow["note"] = e.what();
          acsv[q] << ',';
        }
        adv[q].push_back(arow);
      }
    }
    qcsv << '\n';
    for (auto& [q, os] : acsv) os << '\n';
  }
  tables["max_qber"] = qmax;
  json advs = json::array();
  for (auto& [q, rows] : adv)
    for (auto& r : rows) advs.push_back(r);
  tables["advantage"] = advs;
  res.artifacts.push_back({"table_max_qber.csv", qcsv.str()});
  for (auto& [q, os] : acsv) res.artifacts.push_back({"table_advantage_Q_" + delta_tag(q) + ".csv", os.str()});
  res.artifacts.push_back({"tables.json", dump(tables)});
}

json range_json(const RangeEstimate& r, double q, double q_max) {
  return {{"qber", q},
          {"q_max", q_max},
          {"fiber_loss_db_per_km", r.fiber_loss_db_per_km},
          {"secure", r.secure},
          {"allowed_attenuation", r.allowed_attenuation},
          {"allowed_attenuation_db", r.allowed_attenuation_db},
          {"range_km", r.range_km}};
}

}  // namespace

// ---------------------------------------------------------------------------

CommandResult cmd_simulate(const RunConfig& cfg, const CommandOptions& opt) {
  CommandResult res;
  res.diagnostics = cfg.validate();
  const auto runs = run_key_arm(cfg, opt.jobs);

  std::vector<DetectionRecord> all;
  std::vector<std::vector<Bit>> bits;
  for (const auto& r : runs) {
    all.insert(all.end(), r.records.begin(), r.records.end());
    bits.push_back(r.bits);
  }

  AlignmentResult align;
  bool aligned = false;
  try {
    align = align_clock(all, cfg.protocol, cfg.alignment);
    aligned = true;
  } catch (const InsufficientStatistics& e) {
    res.diagnostics.push_back(std::string("alignment skipped: ") + e.what());
    align.period_ns = cfg.protocol.grid.period;
    align.relative_skew = 0.0;
    align.offset_ns = cfg.alignment.offset_hint_ns;
  }
  assign_slots(all, align, cfg.protocol);

  json q;
  q["sequences"] = cfg.sequences;
  q["records"] = all.size();
  q["attack"] = attack_name(cfg.attack);
  bool have_q = false;
  QberEstimate est;
  if (cfg.protocol.mean_photons_per_pulse <= 0) {
    res.diagnostics.push_back("Q undefined: mean photon number is 0, so every detection is noise");
  } else {
    try {
      est = estimate_qber(all, bits, cfg.protocol.grid);
      have_q = true;
    } catch (const UndefinedQber& e) {
      res.diagnostics.push_back(std::string("Q undefined: ") + e.what());
    }
  }
  res.complete = have_q;
  q["q"] = nullable(est.q, have_q);
  q["q_std_error"] = nullable(est.std_error, have_q);
  q["counts"] = {{"correct", est.correct}, {"wrong", est.wrong}, {"ambiguous", est.ambiguous}, {"outside", est.outside}};
  std::uint64_t slots[3] = {0, 0, 0};
  for (const auto& r : all)
    if (r.slot >= SlotGrid::first_slot && r.slot <= SlotGrid::last_slot) ++slots[r.slot - SlotGrid::first_slot];
  q["slot_counts"] = {{"3", slots[0]}, {"4", slots[1]}, {"5", slots[2]}};
  q["useful_per_sequence"] = static_cast<double>(est.correct + est.wrong) / cfg.sequences;
  q["alignment"] = {{"performed", aligned},
                    {"period_ns", align.period_ns},
                    {"relative_skew", align.relative_skew},
                    {"offset_ns", align.offset_ns},
                    {"folded_spread_ns", align.spread_ns},
                    {"uncorrected_spread_ns", align.uncorrected_spread_ns},
                    {"residual_drift_ns",
                     residual_drift_ns(align.relative_skew, cfg.clock.relative_skew, cfg.protocol.sequence_duration_ns)},
                    {"records_used", align.records_used}};
  q["diagnostics"] = res.diagnostics;
  res.artifacts.push_back({"qber.json", dump(q)});

  std::ostringstream os;
  if (cfg.output.format == "json") {
    write_detections_json(os, all);
    res.artifacts.push_back({"detections.json", os.str()});
  } else {
    write_detections_csv(os, all);
    res.artifacts.push_back({"detections.csv", os.str()});
  }
  return res;
}

CommandResult cmd_coherence(const RunConfig& cfg, const CommandOptions& opt) {
  CommandResult res;
  if (cfg.sequences < 2)
    throw InsufficientStatistics("the coherence estimator needs at least 2 sequences (got " +
                                 std::to_string(cfg.sequences) + ")");
  res.diagnostics = cfg.validate();
  const auto runs = run_interferometer_arm(cfg, opt.jobs);
  std::vector<SequenceContrast> contrasts;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    if (runs[s].has_contrast)
      contrasts.push_back(runs[s].contrast);
    else
      res.diagnostics.push_back("sequence " + std::to_string(s) + " has no interferometer counts; dropped");
  }
  if (contrasts.size() < 2) throw InsufficientStatistics("fewer than 2 sequences with interferometer counts");
  const CoherenceEstimate e = estimate_gamma(contrasts);
  for (const auto& w : e.warnings) res.diagnostics.push_back(w);

  const double gamma_th = autocorrelation(cfg.profile, cfg.interferometer.path_delay_ns);
  const double g3 = gamma_floor(e, 3.0);
  auto loss = [&](double g, const char* label) -> json {
    if (g > gamma_th) {
      res.diagnostics.push_back(std::string(label) + " exceeds the profile autocorrelation; Delta reported as 0");
      return 0.0;
    }
    return coherence_loss(gamma_th, std::max(0.0, g));
  };

  json c;
  c["sequences"] = contrasts.size();
  c["attack"] = attack_name(cfg.attack);
  c["gamma_theory"] = gamma_th;
  c["gamma_0"] = e.gamma_0;
  c["sigma_T"] = e.sigma_T;
  c["gamma_3sigma"] = g3;
  c["delta_at_gamma_0"] = loss(e.gamma_0, "gamma_0");
  c["delta_at_gamma_3sigma"] = loss(g3, "gamma_3sigma");
  c["n_p"] = e.n_p;
  c["c2_bar"] = e.c2_bar;
  c["sigma2"] = e.sigma2;
  c["sigma_T2"] = e.sigma_T2;
  c["noise_dominated"] = e.noise_dominated;
  c["diagnostics"] = res.diagnostics;
  res.artifacts.push_back({"coherence.json", dump(c)});

  std::ostringstream os;
  if (cfg.output.format == "json") {
    json arr = json::array();
    for (std::size_t i = 0; i < contrasts.size(); ++i)
      arr.push_back({{"sequence_index", i},
                     {"C_k", contrasts[i].c},
                     {"N_plus", contrasts[i].n_plus},
                     {"N_minus", contrasts[i].n_minus}});
    res.artifacts.push_back({"contrasts.json", dump(arr)});
  } else {
    write_contrasts_csv(os, contrasts);
    res.artifacts.push_back({"contrasts.csv", os.str()});
  }
  return res;
}

CommandResult cmd_security(const RunConfig& cfg, SecurityMode mode, const CommandOptions& opt) {
  CommandResult res;
  res.diagnostics = cfg.validate();
  switch (mode) {
    case SecurityMode::curves: {
      SecurityWork work(cfg, opt.jobs);
      json summary;
      security_curves(cfg, work, res, summary);
      res.artifacts.push_back({"curves.json", dump(summary)});
      break;
    }
    case SecurityMode::tables: {
      const TableInputs in = table_inputs(cfg, opt, res.diagnostics);
      RunConfig local = cfg;
      local.security.qbers = in.qbers;
      SecurityWork work(local, opt.jobs);
      json tables;
      security_tables(local, in, work, res, tables);
      break;
    }
    case SecurityMode::range: {
      const auto& s = cfg.security;
      const RangeEstimate r = range_estimate(s.range_qber, s.range_q_max, s.fiber_loss_db_per_km);
      if (!r.secure) res.diagnostics.push_back("measured Q is at or above Q_max: no secure range");
      res.artifacts.push_back({"range.json", dump(range_json(r, s.range_qber, s.range_q_max))});
      break;
    }
  }
  return res;
}

namespace {

std::string pct(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << 100.0 * v << " %";
  return os.str();
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

const char* row_label(const std::string& attack) {
  if (attack == "two_slot") return "Two-slot intercept-resend";
  if (attack == "max_coherence") return "Maximum-coherence intercept-resend";
  if (attack == "improved_intercept_resend") return "Intercept-resend, improved protocol";
  if (attack == "entangling") return "Entangling, improved protocol";
  return "?";
}

/// Markdown table of the (attack x Delta) cells of `rows` selected by
/// `pick`, next to the reference cells.
std::string table_md(const json& rows, const std::vector<double>& deltas, const std::vector<std::string>& attacks,
                     const reference::Row* ref, std::size_t n_ref, const std::function<bool(const json&)>& pick,
                     const char* value_key, bool percent) {
  std::ostringstream md;
  md << "| attack |";
  for (double d : deltas) md << " Delta=" << num(d) << " | reference |";
  md << "\n|---|";
  for (std::size_t i = 0; i < deltas.size(); ++i) md << "---|---|";
  md << '\n';
  for (const auto& a : attacks) {
    md << "| " << row_label(a) << " |";
    for (double d : deltas) {
      std::string cell = "-";
      for (const auto& r : rows) {
        if (r["attack"] != a || std::abs(r["delta"].get<double>() - d) > 1e-12 || !pick(r)) continue;
        if (r[value_key].is_null())
          cell = r.contains("no_crossing") ? r["no_crossing"].get<std::string>() : "n/a";
        else
          cell = percent ? pct(r[value_key].get<double>()) : fixed(r[value_key].get<double>(), 3);
      }
      const double rv = reference::lookup(ref, n_ref, a, d);
      md << ' ' << cell << " | " << (std::isfinite(rv) ? (percent ? pct(rv, 1) : fixed(rv, 2)) : "-") << " |";
    }
    md << '\n';
  }
  return md.str();
}

}  // namespace

RunConfig quiet_config(const RunConfig& cfg) {
  RunConfig quiet = cfg;
  quiet.attack = NoAttack{};
  quiet.detector.dark_rate_per_s = 0.0;
  quiet.detector.parasitic_rate_per_s = 0.0;
  quiet.protocol.extinction_ratio = 0.0;
  // the profile floor is the same extinction light seen in the pulse shape
  quiet.profile.background = 0.0;
  return quiet;
}

CommandResult cmd_report(const RunConfig& cfg, const CommandOptions& opt) {
  CommandResult res;
  res.diagnostics = cfg.validate();
  auto take = [&](CommandResult&& r) {
    for (auto& a : r.artifacts) res.artifacts.push_back(std::move(a));
    for (auto& d : r.diagnostics)
      if (std::find(res.diagnostics.begin(), res.diagnostics.end(), d) == res.diagnostics.end())
        res.diagnostics.push_back(std::move(d));
    res.complete = res.complete && r.complete;
  };

  const CommandResult quiet_sim = cmd_simulate(quiet_config(cfg), opt);
  const json q_quiet = json::parse(quiet_sim.find("qber.json")->payload);

  take(cmd_simulate(cfg, opt));
  const json q = json::parse(res.find("qber.json")->payload);
  take(cmd_coherence(cfg, opt));
  const json c = json::parse(res.find("coherence.json")->payload);

  // curves and tables share the entangling optimizations
  TableInputs in{cfg.security.deltas, cfg.security.qbers};
  if (!q["q"].is_null()) in.qbers.push_back(q["q"].get<double>());
  RunConfig local = cfg;
  local.security.qbers = in.qbers;
  SecurityWork work(local, opt.jobs);
  json summary, tables;
  security_curves(local, work, res, summary);
  res.artifacts.push_back({"curves.json", dump(summary)});
  security_tables(local, in, work, res, tables);
  const auto& s = cfg.security;
  const RangeEstimate range = range_estimate(s.range_qber, s.range_q_max, s.fiber_loss_db_per_km);
  res.artifacts.push_back({"range.json", dump(range_json(range, s.range_qber, s.range_q_max))});

  // attack sweep: analytic against Monte Carlo
  std::vector<AttackOutcome> analytic, mc;
  std::vector<double> xs;
  for (double m : {0.25, 0.5, 1.0})
    for (double x : {1.0 / 3.0, 2.0 / 3.0, 1.0}) {
      analytic.push_back(max_coherence_analytic(m, x));
      xs.push_back(x);
    }
  mc.resize(analytic.size());
  parallel_for(mc.size(), opt.jobs, [&](std::size_t i) {
    mc[i] = evaluate_attack_mc(MaxCoherence{analytic[i].m, xs[i]}, s.mc_pulses,
                               RandomStream::derive(cfg.seeds.master, 1000 + i).next_u64())
                .mean;
  });
  {
    std::ostringstream a, b;
    write_outcomes_csv(a, analytic, xs);
    write_outcomes_csv(b, mc, xs);
    res.artifacts.push_back({"attack_sweep_analytic.csv", a.str()});
    res.artifacts.push_back({"attack_sweep_mc.csv", b.str()});
  }

  std::ostringstream md;
  md << "# Run summary\n\n";
  md << "Seed " << cfg.seeds.master << ", " << cfg.sequences << " sequences, attack `" << attack_name(cfg.attack)
     << "`.\n\n";
  md << "## Key arm\n\n| quantity | obtained | reference |\n|---|---|---|\n";
  md << "| QBER | " << (q["q"].is_null() ? "undefined" : pct(q["q"].get<double>()) + " +- " + pct(q["q_std_error"].get<double>()))
     << " | " << pct(reference::qber_min) << " +- " << pct(reference::qber_min_error) << " (best), "
     << pct(reference::qber_last_sequence, 1) << " (last sequence) |\n";
  md << "| QBER, noise sources off | "
     << (q_quiet["q"].is_null() ? "undefined" : pct(q_quiet["q"].get<double>()) + " +- " +
                                                     pct(q_quiet["q_std_error"].get<double>()))
     << " | " << pct(reference::qber_profile, 1) << " |\n";
  md << "| useful detections per sequence | " << fixed(q["useful_per_sequence"].get<double>(), 1) << " | 194 |\n";
  md << "| recovered clock skew | " << q["alignment"]["relative_skew"].get<double>() << " | "
     << cfg.clock.relative_skew << " (simulated) |\n";
  md << "| residual drift over a sequence | " << fixed(q["alignment"]["residual_drift_ns"].get<double>(), 3)
     << " ns | < 0.4 ns |\n\n";

  md << "## Coherence\n\n| quantity | obtained | reference |\n|---|---|---|\n";
  md << "| gamma from the profile | " << fixed(c["gamma_theory"].get<double>(), 4) << " | " << reference::gamma_th
     << " |\n";
  md << "| gamma_0 | " << fixed(c["gamma_0"].get<double>(), 4) << " | " << reference::gamma_0 << " |\n";
  md << "| sigma_T | " << fixed(c["sigma_T"].get<double>(), 5) << " | " << reference::sigma_t << " |\n";
  md << "| Delta at gamma_0 | " << fixed(c["delta_at_gamma_0"].get<double>(), 4) << " | " << reference::delta_0
     << " |\n";
  md << "| Delta at gamma_0 - 3 sigma_T | " << fixed(c["delta_at_gamma_3sigma"].get<double>(), 4) << " | "
     << reference::delta_3sigma << " |\n";
  md << "| photons per sequence | " << fixed(c["n_p"].get<double>(), 1) << " | 282 |\n\n";

  std::vector<std::string> attacks = cfg.security.attacks;
  md << "## Maximum QBER\n\n"
     << table_md(tables["max_qber"], in.deltas, attacks, reference::max_qber, 3, [](const json&) { return true; },
                 "q_max", true)
     << '\n';
  for (double qq : in.qbers) {
    const reference::Row* ref = nullptr;
    if (std::abs(qq - 0.033) < 1e-12) ref = reference::advantage_033;
    if (std::abs(qq - 0.0162) < 1e-12) ref = reference::advantage_0162;
    md << "## Advantage I_AB - I_AE at Q = " << pct(qq) << " (bits)\n\n"
       << table_md(tables["advantage"], in.deltas, attacks, ref, ref ? 3 : 0,
                   [qq](const json& r) { return std::abs(r["Q"].get<double>() - qq) < 1e-15; }, "advantage", false)
       << '\n';
  }
  md << "## Range\n\n| quantity | obtained | reference |\n|---|---|---|\n";
  md << "| allowed attenuation | " << fixed(range.allowed_attenuation, 2) << " (" << fixed(range.allowed_attenuation_db, 2)
     << " dB) | " << reference::attenuation << " |\n";
  md << "| range at " << num(s.fiber_loss_db_per_km) << " dB/km | " << fixed(range.range_km, 3) << " km | "
     << reference::range_km << " km |\n\n";
  md << "## Attack sweep (maximum-coherence, Monte Carlo vs analytic)\n\n| m | x | Q mc | Q | I_AE mc | I_AE | C mc | C |\n|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < mc.size(); ++i)
    md << "| " << fixed(analytic[i].m, 2) << " | " << fixed(xs[i], 3) << " | " << fixed(mc[i].q, 4) << " | "
       << fixed(analytic[i].q, 4) << " | " << fixed(mc[i].i_ae, 4) << " | " << fixed(analytic[i].i_ae, 4) << " | "
       << fixed(mc[i].contrast, 4) << " | " << fixed(analytic[i].contrast, 4) << " |\n";
  if (!res.diagnostics.empty()) {
    md << "\n## Diagnostics\n\n";
    for (const auto& d : res.diagnostics) md << "- " << d << '\n';
  }
  res.artifacts.push_back({"report.md", md.str()});
  return res;
}

void write_artifacts(const std::string& dir, const std::string& command, const RunConfig& cfg,
                     const CommandResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& a : result.artifacts) {
    const fs::path p = fs::path(dir) / a.name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << a.payload;
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json meta;
  meta["command"] = command;
  meta["timestamp"] = stamp;
  meta["complete"] = result.complete;
  json files = json::array();
  for (const auto& a : result.artifacts) files.push_back(a.name);
  meta["artifacts"] = files;
  meta["diagnostics"] = result.diagnostics;
  meta["config"] = json::parse(serialize_config_json(cfg));
  std::ofstream out(fs::path(dir) / "run_metadata.json", std::ios::binary);
  out << dump(meta);
}

}  // namespace tcqkd
