#include "tcqkd/security.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "tcqkd/attacks.hpp"
#include "tcqkd/errors.hpp"

namespace tcqkd {

double binary_entropy(double p) {
  if (!(p >= 0 && p <= 1)) throw InvalidArgument("probability must lie in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double i_ab(double q) { return 1.0 - binary_entropy(q); }

const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::two_slot: return "two_slot";
    case AttackKind::max_coherence: return "max_coherence";
    case AttackKind::improved_intercept_resend: return "improved_intercept_resend";
    case AttackKind::entangling: return "entangling";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& s) {
  for (AttackKind k : {AttackKind::two_slot, AttackKind::max_coherence, AttackKind::improved_intercept_resend,
                       AttackKind::entangling})
    if (s == attack_kind_name(k)) return k;
  throw InvalidArgument("unknown attack kind '" + s + "'");
}

InformationCurve attack_curve(AttackKind kind, double delta) {
  InformationCurve c{kind, delta, {}};
  switch (kind) {
    case AttackKind::max_coherence:
      c.i_ae = [delta](double q) { return iae_max_coherence(q, delta, CapPolicy::cap); };
      break;
    case AttackKind::two_slot:
      if (delta == 0.0)
        c.i_ae = [](double q) { return std::min(1.0, 2.0 * q); };
      else
        c.i_ae = [delta](double q) { return two_slot_best(q, delta).best.i_ae; };
      break;
    case AttackKind::improved_intercept_resend:
      c.i_ae = [delta](double q) { return improved_intercept_resend(q, delta).i_ae; };
      break;
    case AttackKind::entangling:
      throw InvalidArgument("the entangling curve must be tabulated from an optimization run");
  }
  return c;
}

InformationCurve tabulated_curve(AttackKind kind, double delta, std::vector<double> q, std::vector<double> v) {
  if (q.size() != v.size() || q.size() < 2) throw InvalidArgument("tabulated curve needs >= 2 matching samples");
  if (!std::is_sorted(q.begin(), q.end())) throw InvalidArgument("tabulated curve samples must be sorted by Q");
  InformationCurve c{kind, delta, {}};
  c.i_ae = [q = std::move(q), v = std::move(v)](double x) {
    if (x <= q.front()) return v.front() * (q.front() > 0 ? std::max(0.0, x) / q.front() : 1.0);
    if (x >= q.back()) return v.back();
    const auto it = std::upper_bound(q.begin(), q.end(), x);
    const auto i = static_cast<std::size_t>(it - q.begin());
    const double t = (x - q[i - 1]) / (q[i] - q[i - 1]);
    return v[i - 1] + t * (v[i] - v[i - 1]);
  };
  return c;
}

double max_qber(const InformationCurve& curve, const MaxQberOptions& opt) {
  auto gap = [&](double q) { return i_ab(q) - curve.i_ae(q); };
  double a = opt.q_lo;
  double fa = gap(a);
  if (fa <= 0)
    throw NoCrossing(std::string("no secure region for ") + attack_kind_name(curve.kind),
                     NoCrossing::Kind::never_secure);
  double b = a;
  bool found = false;
  while (b < opt.q_hi) {
    const double next = std::min(opt.q_hi, b + opt.scan_step);
    if (gap(next) <= 0) {
      a = b;
      b = next;
      found = true;
      break;
    }
    b = next;
  }
  if (!found)
    throw NoCrossing(std::string("I_AB exceeds I_AE on the whole bracket for ") + attack_kind_name(curve.kind),
                     NoCrossing::Kind::always_secure);
  while (b - a > opt.tolerance) {
    const double mid = 0.5 * (a + b);
    (gap(mid) > 0 ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

double advantage(double q, const InformationCurve& curve) { return i_ab(q) - curve.i_ae(q); }

NoiseBudget noise_budget(const DetectorModel& det, const ProtocolParams& params, double signal_per_slot) {
  det.validate();
  if (!(signal_per_slot >= 0 && signal_per_slot <= 1)) throw InvalidArgument("signal per slot must be in [0, 1]");
  const double slot_s = params.grid.slot_duration * 1e-9;
  NoiseBudget n;
  n.dark = det.dark_rate_per_s * slot_s;
  n.parasitic = det.parasitic_rate_per_s * slot_s;
  n.signal = signal_per_slot;
  n.extinction_background = signal_per_slot * params.extinction_ratio;
  return n;
}

RangeEstimate range_estimate(double q_measured, double q_max, double loss) {
  if (!(q_measured > 0) || !(q_max > 0 && q_max < 0.5)) throw InvalidArgument("need Q > 0 and 0 < Q_max < 1/2");
  if (!(loss > 0)) throw InvalidArgument("fiber loss must be positive");
  RangeEstimate r;
  r.fiber_loss_db_per_km = loss;
  if (q_measured >= q_max) return r;
  r.secure = true;
  r.allowed_attenuation = q_max / q_measured;
  r.allowed_attenuation_db = 10.0 * std::log10(r.allowed_attenuation);
  r.range_km = r.allowed_attenuation_db / loss;
  return r;
}

SecurityCurve sample_curve(const InformationCurve& curve, const std::vector<double>& q_grid) {
  SecurityCurve out;
  out.kind = curve.kind;
  out.delta = curve.delta;
  for (double q : q_grid) {
    try {
      out.samples.push_back({q, i_ab(q), curve.i_ae(q)});
    } catch (const ConstraintViolation&) {
      // attack cannot produce this Q; leave it out
    }
  }
  try {
    out.q_max = max_qber(curve);
    out.has_q_max = true;
  } catch (const NoCrossing&) {
  }
  return out;
}

void write_curve_csv(std::ostream& os, const SecurityCurve& c) {
  os << "Q,I_AB,I_AE,q_max\n";
  char buf[32];
  auto put = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, r.ptr - buf);
  };
  for (const auto& s : c.samples) {
    put(s.q);
    os << ',';
    put(s.i_ab);
    os << ',';
    put(s.i_ae);
    os << ',';
    if (c.has_q_max) put(c.q_max);
    os << '\n';
  }
}

}  // namespace tcqkd
