#include "tcqkd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "tcqkd/errors.hpp"
#include "tcqkd/security.hpp"

extern char** environ;

namespace tcqkd {

namespace {

enum class Dim { none, time, rate, attenuation, angle };

struct Unit {
  const char* suffix;
  double scale;  // to internal units (ns, 1/s, dB/km, rad)
};

// first entry of each list is the canonical spelling
const std::vector<Unit>& units(Dim d) {
  static const std::vector<Unit> none{};
  static const std::vector<Unit> time{{"ns", 1.0}, {"ps", 1e-3}, {"us", 1e3}, {"ms", 1e6}, {"s", 1e9}};
  static const std::vector<Unit> rate{{"per_s", 1.0}, {"per_ms", 1e3}, {"per_us", 1e6}, {"per_ns", 1e9}};
  static const std::vector<Unit> att{{"db_per_km", 1.0}, {"db_per_m", 1e3}};
  static const std::vector<Unit> angle{{"rad", 1.0}, {"deg", std::numbers::pi / 180.0}};
  switch (d) {
    case Dim::none: return none;
    case Dim::time: return time;
    case Dim::rate: return rate;
    case Dim::attenuation: return att;
    case Dim::angle: return angle;
  }
  return none;
}

std::string format_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Field {
  std::string name;
  Dim dim = Dim::none;
  // `scale` converts the spelled unit to internal units
  std::function<void(RunConfig&, const std::string&, double scale)> set;
  std::function<std::string(const RunConfig&)> get;
  // JSON type of the canonical value
  enum class Kind { number, integer, boolean, string, number_list, string_list } kind = Kind::number;
};

[[noreturn]] void fail(const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg, key); }

double parse_double(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    fail(key, "expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    fail(key, "expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true") return true;
  if (s == "false") return false;
  fail(key, "expected true or false, got '" + s + "'");
}

std::string attack_kind_of(const AttackStrategy& a) { return attack_name(a); }

struct Registry {
  std::vector<Field> fields;

  void number(std::string name, Dim dim, std::function<double&(RunConfig&)> acc) {
    Field f;
    f.name = std::move(name);
    f.dim = dim;
    f.kind = Field::Kind::number;
    const std::string key = f.name;
    f.set = [acc, key](RunConfig& c, const std::string& v, double scale) { acc(c) = parse_double(key, v) * scale; };
    f.get = [acc](const RunConfig& c) { return format_number(acc(const_cast<RunConfig&>(c))); };
    fields.push_back(std::move(f));
  }

  template <typename Int>
  void integer(std::string name, std::function<Int&(RunConfig&)> acc) {
    Field f;
    f.name = std::move(name);
    f.kind = Field::Kind::integer;
    const std::string key = f.name;
    f.set = [acc, key](RunConfig& c, const std::string& v, double) {
      const std::uint64_t u = parse_unsigned(key, v);
      if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) fail(key, "value out of range");
      acc(c) = static_cast<Int>(u);
    };
    f.get = [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); };
    fields.push_back(std::move(f));
  }

  void boolean(std::string name, std::function<bool&(RunConfig&)> acc) {
    Field f;
    f.name = std::move(name);
    f.kind = Field::Kind::boolean;
    const std::string key = f.name;
    f.set = [acc, key](RunConfig& c, const std::string& v, double) { acc(c) = parse_bool(key, v); };
    f.get = [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c)) ? "true" : "false"); };
    fields.push_back(std::move(f));
  }

  void choice(std::string name, std::vector<std::string> allowed, std::function<void(RunConfig&, const std::string&)> set,
              std::function<std::string(const RunConfig&)> get) {
    Field f;
    f.name = std::move(name);
    f.kind = Field::Kind::string;
    const std::string key = f.name;
    f.set = [allowed, set, key](RunConfig& c, const std::string& v, double) {
      const std::string s = trim(v);
      if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(key, "unknown value '" + s + "' (expected one of " + list + ")");
      }
      set(c, s);
    };
    f.get = std::move(get);
    fields.push_back(std::move(f));
  }

  void number_list(std::string name, std::function<std::vector<double>&(RunConfig&)> acc) {
    Field f;
    f.name = std::move(name);
    f.kind = Field::Kind::number_list;
    const std::string key = f.name;
    f.set = [acc, key](RunConfig& c, const std::string& v, double) {
      std::vector<double> out;
      for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
      acc(c) = std::move(out);
    };
    f.get = [acc](const RunConfig& c) {
      std::string s;
      for (double v : acc(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + format_number(v);
      return s;
    };
    fields.push_back(std::move(f));
  }

  void string_list(std::string name, std::function<std::vector<std::string>&(RunConfig&)> acc) {
    Field f;
    f.name = std::move(name);
    f.kind = Field::Kind::string_list;
    f.set = [acc](RunConfig& c, const std::string& v, double) { acc(c) = split_list(v); };
    f.get = [acc](const RunConfig& c) {
      std::string s;
      for (const auto& v : acc(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + v;
      return s;
    };
    fields.push_back(std::move(f));
  }
};

// attack parameters live in the variant; the config keeps every kind's
// values in a scratch block and builds the variant once at the end
struct AttackScratch {
  std::string kind = "none";
  double m = 1.0;
  double x = 2.0 / 3.0;
  double slot4_lower_prob = 0.5;
  double unambiguous_split = 0.5;
  double ambiguous_split = 0.5;
  std::vector<double> isometry;  // 45 x 3, row-major
};

AttackScratch scratch_of(const AttackStrategy& a) {
  AttackScratch s;
  s.kind = attack_kind_of(a);
  if (auto* t = std::get_if<TwoSlot>(&a)) {
    s.m = t->m;
    s.slot4_lower_prob = t->slot4_lower_prob;
    s.unambiguous_split = t->unambiguous_split;
    s.ambiguous_split = t->ambiguous_split;
  } else if (auto* mc = std::get_if<MaxCoherence>(&a)) {
    s.m = mc->m;
    s.x = mc->x;
  } else if (auto* e = std::get_if<Entangling>(&a)) {
    s.isometry.clear();
    for (Eigen::Index r = 0; r < e->isometry.rows(); ++r)
      for (Eigen::Index c = 0; c < e->isometry.cols(); ++c) s.isometry.push_back(e->isometry(r, c));
  }
  return s;
}

AttackStrategy strategy_of(const AttackScratch& s) {
  if (s.kind == "two_slot") return TwoSlot{s.m, s.slot4_lower_prob, s.unambiguous_split, s.ambiguous_split};
  if (s.kind == "max_coherence") return MaxCoherence{s.m, s.x};
  if (s.kind == "entangling") {
    if (s.isometry.size() != 45 * 3) fail("attack.isometry", "needs 135 numbers (45 x 3, row-major)");
    Entangling e;
    e.isometry.resize(45, 3);
    for (int r = 0; r < 45; ++r)
      for (int c = 0; c < 3; ++c) e.isometry(r, c) = s.isometry[static_cast<std::size_t>(3 * r + c)];
    return e;
  }
  return NoAttack{};
}

// RunConfig plus the attack scratch, so accessors can hand out references
struct Staging {
  RunConfig cfg;
  AttackScratch attack;
};

const Registry& registry() {
  static const Registry reg = [] {
    Registry r;
    using R = RunConfig;
    // protocol
    r.number("protocol.mean_photons_per_pulse", Dim::none, [](R& c) -> double& { return c.protocol.mean_photons_per_pulse; });
    r.integer<std::uint32_t>("protocol.pulses_per_sequence", [](R& c) -> std::uint32_t& { return c.protocol.pulses_per_sequence; });
    r.integer<std::uint32_t>("protocol.sequences", [](R& c) -> std::uint32_t& { return c.sequences; });
    r.number("protocol.sequence_duration", Dim::time, [](R& c) -> double& { return c.protocol.sequence_duration_ns; });
    r.number("protocol.inter_sequence_gap", Dim::time, [](R& c) -> double& { return c.protocol.inter_sequence_gap_ns; });
    r.number("protocol.extinction_ratio", Dim::none, [](R& c) -> double& { return c.protocol.extinction_ratio; });
    r.choice(
        "protocol.source", {"poisson", "single_photon"},
        [](R& c, const std::string& v) {
          c.protocol.source = v == "poisson" ? ProtocolParams::Source::poisson : ProtocolParams::Source::single_photon;
        },
        [](const R& c) {
          return std::string(c.protocol.source == ProtocolParams::Source::poisson ? "poisson" : "single_photon");
        });
    r.number("protocol.slot_duration", Dim::time, [](R& c) -> double& { return c.protocol.grid.slot_duration; });
    r.number("protocol.pulse_duration", Dim::time, [](R& c) -> double& { return c.protocol.grid.pulse_duration; });
    r.number("protocol.period", Dim::time, [](R& c) -> double& { return c.protocol.grid.period; });
    r.number("protocol.bit0_delay", Dim::time, [](R& c) -> double& { return c.protocol.grid.bit0_delay; });
    r.number("protocol.bit1_delay", Dim::time, [](R& c) -> double& { return c.protocol.grid.bit1_delay; });
    // pulse profile
    r.choice(
        "profile.shape", {"hyper_gaussian", "square"},
        [](R& c, const std::string& v) {
          c.profile.shape = v == "square" ? PulseProfile::Shape::square : PulseProfile::Shape::hyper_gaussian;
        },
        [](const R& c) {
          return std::string(c.profile.shape == PulseProfile::Shape::square ? "square" : "hyper_gaussian");
        });
    r.number("profile.amplitude_peak", Dim::none, [](R& c) -> double& { return c.profile.amplitude_peak; });
    r.number("profile.background", Dim::none, [](R& c) -> double& { return c.profile.background; });
    r.number("profile.sigma", Dim::time, [](R& c) -> double& { return c.profile.sigma_ns; });
    r.integer<int>("profile.order", [](R& c) -> int& { return c.profile.order; });
    r.number("profile.width", Dim::time, [](R& c) -> double& { return c.profile.width_ns; });
    r.number("profile.center", Dim::time, [](R& c) -> double& { return c.profile.center_ns; });
    r.number("profile.window", Dim::time, [](R& c) -> double& { return c.profile.window_ns; });
    r.number("profile.step", Dim::time, [](R& c) -> double& { return c.profile.step_ns; });
    // detector
    r.number("detector.efficiency", Dim::none, [](R& c) -> double& { return c.detector.efficiency; });
    r.number("detector.dead_time", Dim::time, [](R& c) -> double& { return c.detector.dead_time_ns; });
    r.number("detector.jitter_sigma", Dim::time, [](R& c) -> double& { return c.detector.jitter_sigma_ns; });
    r.number("detector.dark_rate", Dim::rate, [](R& c) -> double& { return c.detector.dark_rate_per_s; });
    r.number("detector.parasitic_rate", Dim::rate, [](R& c) -> double& { return c.detector.parasitic_rate_per_s; });
    r.number("detector.filter_transmission", Dim::none, [](R& c) -> double& { return c.detector.filter_transmission; });
    // clock
    r.number("clock.relative_skew", Dim::none, [](R& c) -> double& { return c.clock.relative_skew; });
    r.number("clock.offset", Dim::time, [](R& c) -> double& { return c.clock.offset_ns; });
    r.number("clock.resolution", Dim::time, [](R& c) -> double& { return c.clock.resolution_ns; });
    // alignment search
    r.number("alignment.relative_range", Dim::none, [](R& c) -> double& { return c.alignment.relative_range; });
    r.integer<int>("alignment.coarse_steps", [](R& c) -> int& { return c.alignment.coarse_steps; });
    r.integer<int>("alignment.golden_iterations", [](R& c) -> int& { return c.alignment.golden_iterations; });
    r.boolean("alignment.likelihood_polish", [](R& c) -> bool& { return c.alignment.likelihood_polish; });
    r.number("alignment.offset_hint", Dim::time, [](R& c) -> double& { return c.alignment.offset_hint_ns; });
    r.number("alignment.template_edge", Dim::time, [](R& c) -> double& { return c.alignment.template_edge_ns; });
    // interferometer
    r.number("interferometer.path_delay", Dim::time, [](R& c) -> double& { return c.interferometer.path_delay_ns; });
    r.number("interferometer.intrinsic_visibility", Dim::none,
             [](R& c) -> double& { return c.interferometer.intrinsic_visibility; });
    r.number("interferometer.insertion_transmission", Dim::none,
             [](R& c) -> double& { return c.interferometer.insertion_transmission; });
    r.boolean("interferometer.gated", [](R& c) -> bool& { return c.interferometer.gated; });
    r.choice(
        "interferometer.phase_policy", {"uniform", "fixed"}, [](R& c, const std::string& v) { c.phase.policy = v; },
        [](const R& c) { return c.phase.policy; });
    r.number("interferometer.fixed_phase", Dim::angle, [](R& c) -> double& { return c.phase.fixed_rad; });
    // seeds and outputs
    r.integer<std::uint64_t>("seeds.master", [](R& c) -> std::uint64_t& { return c.seeds.master; });
    r.choice(
        "seeds.stream_policy", {"per_index"}, [](R& c, const std::string& v) { c.seeds.stream_policy = v; },
        [](const R& c) { return c.seeds.stream_policy; });
    r.choice(
        "output.directory", {}, [](R& c, const std::string& v) { c.output.directory = v; },
        [](const R& c) { return c.output.directory; });
    r.choice(
        "output.format", {"csv", "json"}, [](R& c, const std::string& v) { c.output.format = v; },
        [](const R& c) { return c.output.format; });
    // security analysis
    r.number_list("security.deltas", [](R& c) -> std::vector<double>& { return c.security.deltas; });
    r.number_list("security.qbers", [](R& c) -> std::vector<double>& { return c.security.qbers; });
    r.string_list("security.attacks", [](R& c) -> std::vector<std::string>& { return c.security.attacks; });
    r.number("security.curve_q_step", Dim::none, [](R& c) -> double& { return c.security.curve_q_step; });
    r.number("security.curve_q_max", Dim::none, [](R& c) -> double& { return c.security.curve_q_max; });
    r.number_list("security.entangling_qbers",
                  [](R& c) -> std::vector<double>& { return c.security.entangling_qbers; });
    r.number("security.fiber_loss", Dim::attenuation, [](R& c) -> double& { return c.security.fiber_loss_db_per_km; });
    r.number("security.range_qber", Dim::none, [](R& c) -> double& { return c.security.range_qber; });
    r.number("security.range_q_max", Dim::none, [](R& c) -> double& { return c.security.range_q_max; });
    r.integer<std::uint64_t>("security.mc_pulses", [](R& c) -> std::uint64_t& { return c.security.mc_pulses; });
    // entangling-attack optimizer
    r.integer<int>("entangle.starts", [](R& c) -> int& { return c.entangle.starts; });
    r.integer<int>("entangle.outer_iterations", [](R& c) -> int& { return c.entangle.outer_iterations; });
    r.integer<int>("entangle.inner_iterations", [](R& c) -> int& { return c.entangle.inner_iterations; });
    r.number("entangle.start_noise", Dim::none, [](R& c) -> double& { return c.entangle.start_noise; });
    r.number("entangle.q_tolerance", Dim::none, [](R& c) -> double& { return c.entangle.q_tolerance; });
    r.boolean("entangle.fix_validation", [](R& c) -> bool& { return c.entangle.fix_validation; });
    r.boolean("entangle.complex_mode", [](R& c) -> bool& { return c.entangle.complex_mode; });
    r.boolean("entangle.symmetry_reduction", [](R& c) -> bool& { return c.entangle.symmetry_reduction; });
    r.choice(
        "entangle.measure", {"helstrom", "holevo", "fine_grained"},
        [](R& c, const std::string& v) { c.entangle.measure = parse_measure(v); },
        [](const R& c) { return std::string(measure_name(c.entangle.measure)); });
    return r;
  }();
  return reg;
}

// attack keys act on the scratch block, not on RunConfig
struct AttackField {
  std::string name;
  std::vector<std::string> kinds;
  bool list = false;
  std::function<double&(AttackScratch&)> number;
  std::function<std::vector<double>&(AttackScratch&)> values;
};

const std::vector<AttackField>& attack_fields() {
  using A = AttackScratch;
  static const std::vector<AttackField> f{
      {"attack.m", {"two_slot", "max_coherence"}, false, [](A& a) -> double& { return a.m; }, {}},
      {"attack.x", {"max_coherence"}, false, [](A& a) -> double& { return a.x; }, {}},
      {"attack.slot4_lower_prob", {"two_slot"}, false, [](A& a) -> double& { return a.slot4_lower_prob; }, {}},
      {"attack.unambiguous_split", {"two_slot"}, false, [](A& a) -> double& { return a.unambiguous_split; }, {}},
      {"attack.ambiguous_split", {"two_slot"}, false, [](A& a) -> double& { return a.ambiguous_split; }, {}},
      {"attack.isometry", {"entangling"}, true, {}, [](A& a) -> std::vector<double>& { return a.isometry; }},
  };
  return f;
}

const std::vector<std::string> attack_kinds{"none", "two_slot", "max_coherence", "entangling"};

struct Spelling {
  std::size_t field;  // index into registry().fields
  double scale;
};

// every accepted spelling of every registry key
const std::map<std::string, Spelling>& spellings() {
  static const std::map<std::string, Spelling> m = [] {
    std::map<std::string, Spelling> out;
    const auto& fields = registry().fields;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].dim == Dim::none) {
        out[fields[i].name] = {i, 1.0};
        continue;
      }
      for (const auto& u : units(fields[i].dim)) out[fields[i].name + "_" + u.suffix] = {i, u.scale};
    }
    return out;
  }();
  return m;
}

std::string canonical_key(const Field& f) {
  return f.dim == Dim::none ? f.name : f.name + "_" + units(f.dim).front().suffix;
}

/// Name of the quantity a key spells, or the key itself.
std::string quantity_of(const std::string& key) {
  const auto& sp = spellings();
  const auto it = sp.find(key);
  return it == sp.end() ? key : registry().fields[it->second.field].name;
}

void flatten_json(const nlohmann::ordered_json& j, const std::string& prefix, ConfigEntries& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten_json(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    return;
  }
  auto scalar = [&](const nlohmann::ordered_json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_float()) return format_number(v.get<double>());
    if (v.is_number()) return v.dump();
    throw ConfigError(prefix + ": unsupported JSON value", prefix);
  };
  std::string value;
  if (j.is_array()) {
    for (const auto& v : j) value += (value.empty() ? "" : ", ") + scalar(v);
  } else {
    value = scalar(j);
  }
  out[prefix] = {value, 0};
}

std::string with_line(const ConfigError& e, int line) {
  return line > 0 ? "line " + std::to_string(line) + ": " + e.what() : std::string(e.what());
}

}  // namespace

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> warnings = protocol.validate();
  profile.validate();
  detector.validate();
  clock.validate();
  interferometer.validate(protocol.grid);
  tcqkd::validate(attack);
  if (sequences < 1) throw ConfigError("protocol.sequences: need at least one sequence", "protocol.sequences");
  if (alignment.coarse_steps < 3) throw ConfigError("alignment.coarse_steps: need at least 3", "alignment.coarse_steps");
  if (!(alignment.relative_range > 0))
    throw ConfigError("alignment.relative_range: must be positive", "alignment.relative_range");
  for (double d : security.deltas)
    if (!(d >= 0 && d < 1)) throw ConfigError("security.deltas: each value must lie in [0, 1)", "security.deltas");
  for (double q : security.qbers)
    if (!(q >= 0 && q <= 0.5)) throw ConfigError("security.qbers: each value must lie in [0, 0.5]", "security.qbers");
  for (double q : security.entangling_qbers)
    if (!(q > 0 && q < 0.5))
      throw ConfigError("security.entangling_qbers: each value must lie in (0, 0.5)", "security.entangling_qbers");
  for (const auto& a : security.attacks) {
    try {
      parse_attack_kind(a);
    } catch (const Error&) {
      throw ConfigError("security.attacks: unknown attack '" + a + "'", "security.attacks");
    }
  }
  if (!(security.curve_q_step > 0 && security.curve_q_max > 0 && security.curve_q_max <= 0.5))
    throw ConfigError("security.curve_q_step/curve_q_max: need 0 < step and 0 < max <= 0.5", "security.curve_q_step");
  if (!(security.fiber_loss_db_per_km > 0))
    throw ConfigError("security.fiber_loss_db_per_km: must be positive", "security.fiber_loss_db_per_km");
  if (entangle.starts < 1) throw ConfigError("entangle.starts: need at least one start", "entangle.starts");
  if (entangle.starts < 20) warnings.push_back("entangle.starts below 20; optimized curves may be loose");
  return warnings;
}

ConfigEntries read_flat_entries(const std::string& text) {
  ConfigEntries out;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'", "", line);
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": missing key", "", line);
    if (out.count(key))
      throw ConfigError("line " + std::to_string(line) + ": " + key + " set twice (first on line " +
                            std::to_string(out[key].line) + ")",
                        key, line);
    out[key] = {trim(s.substr(eq + 1)), line};
  }
  return out;
}

ConfigEntries read_json_entries(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "");
  }
  if (!j.is_object()) throw ConfigError("JSON config must be an object", "");
  ConfigEntries out;
  flatten_json(j, "", out);
  return out;
}

ConfigEntries environment_entries(char** envp) {
  ConfigEntries out;
  static const std::string prefix = "TCQKD_";
  for (char** e = envp ? envp : environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || kv.compare(0, prefix.size(), prefix) != 0) continue;
    std::string name = kv.substr(prefix.size(), eq - prefix.size());
    // SECTION__KEY -> section.key
    std::string key;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (name[i] == '_' && i + 1 < name.size() && name[i + 1] == '_') {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    if (key.find('.') == std::string::npos) continue;  // not a config key
    out[key] = {kv.substr(eq + 1), 0};
  }
  return out;
}

void merge_entries(ConfigEntries& base, const ConfigEntries& overrides) {
  for (const auto& [key, entry] : overrides) {
    const std::string q = quantity_of(key);
    for (auto it = base.begin(); it != base.end();) {
      if (quantity_of(it->first) == q)
        it = base.erase(it);
      else
        ++it;
    }
    base[key] = entry;
  }
}

RunConfig config_from_entries(const ConfigEntries& entries) {
  Staging st;
  const auto& fields = registry().fields;
  const auto& sp = spellings();
  std::vector<std::string> seen(fields.size());
  std::map<std::string, const ConfigEntry*> attack_entries;

  for (const auto& [key, entry] : entries) {
    try {
      if (key == "attack.kind" || key.rfind("attack.", 0) == 0) {
        attack_entries[key] = &entry;
        continue;
      }
      const auto it = sp.find(key);
      if (it == sp.end()) {
        for (const auto& f : fields)
          if (f.name == key && f.dim != Dim::none)
            fail(key, std::string("needs an explicit unit, e.g. ") + canonical_key(f));
        fail(key, "unknown key");
      }
      const std::size_t idx = it->second.field;
      if (!seen[idx].empty())
        fail(key, "mixes units with " + seen[idx] + "; give the quantity once");
      seen[idx] = key;
      fields[idx].set(st.cfg, entry.value, it->second.scale);
    } catch (const ConfigError& e) {
      throw ConfigError(with_line(e, entry.line), key, entry.line);
    }
  }

  // attack block: kind first, then the parameters that kind uses
  if (const auto k = attack_entries.find("attack.kind"); k != attack_entries.end()) {
    const std::string kind = trim(k->second->value);
    if (std::find(attack_kinds.begin(), attack_kinds.end(), kind) == attack_kinds.end()) {
      const ConfigError e("attack.kind: unknown attack '" + kind + "'", "attack.kind");
      throw ConfigError(with_line(e, k->second->line), "attack.kind", k->second->line);
    }
    st.attack.kind = kind;
  }
  for (const auto& [key, entry] : attack_entries) {
    if (key == "attack.kind") continue;
    try {
      const auto& af = attack_fields();
      const auto f = std::find_if(af.begin(), af.end(), [&](const AttackField& a) { return a.name == key; });
      if (f == af.end()) fail(key, "unknown key");
      if (std::find(f->kinds.begin(), f->kinds.end(), st.attack.kind) == f->kinds.end())
        fail(key, "not used by attack.kind = " + st.attack.kind);
      if (f->list) {
        std::vector<double> v;
        for (const auto& item : split_list(entry->value)) v.push_back(parse_double(key, item));
        f->values(st.attack) = std::move(v);
      } else {
        f->number(st.attack) = parse_double(key, entry->value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError(with_line(e, entry->line), key, entry->line);
    }
  }
  try {
    st.cfg.attack = strategy_of(st.attack);
  } catch (const ConfigError& e) {
    const auto it = attack_entries.find(e.key());
    if (it == attack_entries.end()) throw;
    throw ConfigError(with_line(e, it->second->line), e.key(), it->second->line);
  }
  st.cfg.entangle.seed = st.cfg.seeds.master;
  return st.cfg;
}

RunConfig parse_config(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  const bool json = first != std::string::npos && text[first] == '{';
  return config_from_entries(json ? read_json_entries(text) : read_flat_entries(text));
}

RunConfig load_config(const std::string& path, bool use_environment) {
  ConfigEntries entries;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'", "");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    entries = first != std::string::npos && text[first] == '{' ? read_json_entries(text) : read_flat_entries(text);
  }
  if (use_environment) merge_entries(entries, environment_entries());
  return config_from_entries(entries);
}

namespace {

// canonical (key, value, JSON kind) triples in registry order
struct Line {
  std::string key, value;
  Field::Kind kind;
};

std::vector<Line> canonical_lines(const RunConfig& cfg) {
  std::vector<Line> out;
  for (const auto& f : registry().fields) out.push_back({canonical_key(f), f.get(cfg), f.kind});
  AttackScratch a = scratch_of(cfg.attack);
  out.push_back({"attack.kind", a.kind, Field::Kind::string});
  for (const auto& f : attack_fields()) {
    if (std::find(f.kinds.begin(), f.kinds.end(), a.kind) == f.kinds.end()) continue;
    if (f.list) {
      std::string s;
      for (double v : f.values(a)) s += (s.empty() ? "" : ", ") + format_number(v);
      out.push_back({f.name, s, Field::Kind::number_list});
    } else {
      out.push_back({f.name, format_number(f.number(a)), Field::Kind::number});
    }
  }
  return out;
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& l : canonical_lines(cfg)) {
    const std::string sec = l.key.substr(0, l.key.find('.'));
    if (!section.empty() && sec != section) out += '\n';
    section = sec;
    out += l.key + " = " + l.value + '\n';
  }
  return out;
}

std::string serialize_config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& l : canonical_lines(cfg)) {
    const auto dot = l.key.find('.');
    auto& slot = j[l.key.substr(0, dot)][l.key.substr(dot + 1)];
    switch (l.kind) {
      case Field::Kind::number: slot = parse_double(l.key, l.value); break;
      case Field::Kind::integer: slot = parse_unsigned(l.key, l.value); break;
      case Field::Kind::boolean: slot = l.value == "true"; break;
      case Field::Kind::string: slot = l.value; break;
      case Field::Kind::number_list: {
        slot = nlohmann::ordered_json::array();
        for (const auto& item : split_list(l.value)) slot.push_back(parse_double(l.key, item));
        break;
      }
      case Field::Kind::string_list: {
        slot = nlohmann::ordered_json::array();
        for (const auto& item : split_list(l.value)) slot.push_back(item);
        break;
      }
    }
  }
  return j.dump(2) + "\n";
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : registry().fields) out.push_back(canonical_key(f));
  out.push_back("attack.kind");
  for (const auto& f : attack_fields()) out.push_back(f.name);
  return out;
}

}  // namespace tcqkd
