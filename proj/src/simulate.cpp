#include "tcqkd/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "tcqkd/errors.hpp"
#include "tcqkd/optimize.hpp"

namespace tcqkd {

std::vector<std::string> ProtocolParams::validate() const {
  grid.validate();
  std::vector<std::string> warnings;
  if (!(mean_photons_per_pulse >= 0)) throw InvalidArgument("mean photons per pulse must be >= 0");
  if (pulses_per_sequence == 0) throw InvalidArgument("pulses_per_sequence must be positive");
  const double expected = pulses_per_sequence * grid.period;
  if (std::abs(expected - sequence_duration_ns) > 1e-6 * expected) {
    std::ostringstream msg;
    msg << "pulses_per_sequence x period = " << expected << " ns but sequence_duration = " << sequence_duration_ns
        << " ns";
    throw InvalidArgument(msg.str());
  }
  if (!(inter_sequence_gap_ns >= 0)) throw InvalidArgument("inter_sequence_gap must be >= 0");
  if (!(extinction_ratio >= 0 && extinction_ratio < 1)) throw InvalidArgument("extinction_ratio must be in [0, 1)");
  if (mean_photons_per_pulse > 1)
    warnings.push_back("mean photon number above 1: outside the faint-pulse regime");
  return warnings;
}

DetectorModel DetectorModel::ideal() {
  DetectorModel d;
  d.efficiency = 1.0;
  d.dead_time_ns = 0.0;
  d.jitter_sigma_ns = 0.0;
  d.dark_rate_per_s = 0.0;
  d.parasitic_rate_per_s = 0.0;
  d.filter_transmission = 1.0;
  return d;
}

void DetectorModel::validate() const {
  auto prob = [](double p) { return p >= 0 && p <= 1; };
  if (!prob(efficiency)) throw InvalidArgument("detector efficiency must be in [0, 1]");
  if (!prob(filter_transmission)) throw InvalidArgument("filter transmission must be in [0, 1]");
  if (!(dead_time_ns >= 0)) throw InvalidArgument("dead time must be >= 0");
  if (!(jitter_sigma_ns >= 0)) throw InvalidArgument("jitter must be >= 0");
  if (!(dark_rate_per_s >= 0) || !(parasitic_rate_per_s >= 0)) throw InvalidArgument("noise rates must be >= 0");
}

void ClockModel::validate() const {
  if (!(std::abs(relative_skew) < 1e-3)) throw InvalidArgument("clock skew must satisfy |skew| < 1e-3");
  if (!(resolution_ns >= 0)) throw InvalidArgument("clock resolution must be >= 0");
}

double ClockModel::to_bob(double arrival_ns) const {
  const double t = arrival_ns * (1.0 + relative_skew);
  return resolution_ns > 0 ? std::round(t / resolution_ns) * resolution_ns : t;
}

const char* origin_name(Origin o) {
  switch (o) {
    case Origin::signal: return "signal";
    case Origin::background: return "background";
    case Origin::resent: return "resent";
    case Origin::dark: return "dark";
    case Origin::parasitic: return "parasitic";
  }
  return "unknown";
}

void EmissionBatch::sort() {
  std::stable_sort(photons.begin(), photons.end(),
                   [](const Photon& a, const Photon& b) { return a.time_ns < b.time_ns; });
}

std::vector<Bit> random_bits(std::size_t n, RandomStream& rng) {
  std::vector<Bit> bits(n);
  for (auto& b : bits) b = rng.bernoulli(0.5) ? Bit::one : Bit::zero;
  return bits;
}

EmissionBatch emit_sequence(const std::vector<Bit>& bits, const ProtocolParams& params, const PulseProfile& profile,
                            RandomStream& rng) {
  params.validate();
  if (bits.size() != params.pulses_per_sequence)
    throw InvalidArgument("bit list length must equal pulses_per_sequence");
  const SlotGrid& grid = params.grid;

  PulseProfile mode = profile;
  mode.background = params.extinction_ratio * profile.amplitude_peak;
  if (params.source == ProtocolParams::Source::single_photon) mode.background = 0.0;

  EmissionBatch out;
  out.bits = bits;
  out.packets.push_back(Wavepacket::from_profile(mode, grid, Bit::zero));
  out.packets.push_back(Wavepacket::from_profile(mode, grid, Bit::one));

  // pulse term alone, on the same bins as the mode
  const Wavepacket& ref = out.packets[0];
  Eigen::VectorXd pulse_w(ref.size());
  for (Eigen::Index i = 0; i < ref.size(); ++i) {
    const double a = mode.window_start() + ref.bin_ns * static_cast<double>(i);
    pulse_w[i] = integrate([&](double t) { return intensity(mode, t) - mode.background; }, a, a + ref.bin_ns,
                           mode.step_ns);
  }
  const double pulse_total = pulse_w.sum();
  const BinnedSampler pulse_sampler(0.0, ref.bin_ns, pulse_w);
  const double floor_mean = pulse_total > 0 ? params.mean_photons_per_pulse * mode.background * mode.window_ns / pulse_total : 0.0;

  const double mu = params.mean_photons_per_pulse;
  const bool single = params.source == ProtocolParams::Source::single_photon;
  out.photons.reserve(static_cast<std::size_t>(bits.size() * (mu + floor_mean) * 1.2) + 16);

  for (std::uint32_t k = 0; k < bits.size(); ++k) {
    const Bit b = bits[k];
    const double window_start = mode.window_start() + (grid.delay(b) - grid.bit0_delay);
    const double base = static_cast<double>(k) * grid.period;
    const auto packet = static_cast<std::uint32_t>(bit_value(b));
    const std::uint64_t n_pulse = single ? 1 : rng.poisson(mu);
    for (std::uint64_t i = 0; i < n_pulse; ++i)
      out.photons.push_back({base + window_start + pulse_sampler.sample(rng), k, packet, Origin::signal});
    const std::uint64_t n_floor = floor_mean > 0 ? rng.poisson(floor_mean) : 0;
    for (std::uint64_t i = 0; i < n_floor; ++i)
      out.photons.push_back({base + window_start + mode.window_ns * rng.uniform(), k, packet, Origin::background});
  }
  out.sort();
  return out;
}

void apply_channel(EmissionBatch& batch, double transmission, RandomStream& rng) {
  if (!(transmission >= 0 && transmission <= 1)) throw InvalidArgument("transmission must be in [0, 1]");
  if (transmission == 1.0) return;
  std::erase_if(batch.photons, [&](const Photon&) { return !rng.bernoulli(transmission); });
}

SplitBatch route_beamsplitter(const EmissionBatch& batch, RandomStream& rng) {
  SplitBatch out{{batch.sequence, batch.bits, batch.packets, {}}, {batch.sequence, batch.bits, batch.packets, {}}};
  for (const Photon& p : batch.photons) (rng.bernoulli(0.5) ? out.interferometer : out.key).photons.push_back(p);
  return out;
}

void apply_dead_time(std::vector<DetectionRecord>& sorted, double dead_time_ns) {
  if (dead_time_ns <= 0 || sorted.empty()) return;
  std::size_t kept = 0;
  double last = -1e300;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].true_arrival_ns - last >= dead_time_ns) {
      last = sorted[i].true_arrival_ns;
      sorted[kept++] = sorted[i];
    }
  }
  sorted.resize(kept);
}

std::vector<DetectionRecord> detect_arm(const EmissionBatch& batch, double route, const DetectorModel& det,
                                        const ClockModel& clock, const ProtocolParams& params, RandomStream& rng) {
  det.validate();
  clock.validate();
  const double acquisition = clock.offset_ns + params.sequence_duration_ns;
  const double p_detect = route * det.efficiency * det.filter_transmission;

  std::vector<DetectionRecord> recs;
  recs.reserve(static_cast<std::size_t>(batch.photons.size() * p_detect * 1.2) + 64);
  for (const Photon& ph : batch.photons) {
    if (!rng.bernoulli(p_detect)) continue;
    double t = ph.time_ns + clock.offset_ns;
    if (det.jitter_sigma_ns > 0) t += det.jitter_sigma_ns * rng.normal();
    if (t < 0 || t >= acquisition) continue;
    DetectionRecord r;
    r.sequence_index = batch.sequence;
    r.origin = ph.origin;
    r.true_arrival_ns = t;
    r.packet = ph.packet;
    recs.push_back(r);
  }
  auto add_noise = [&](double rate_per_s, Origin o) {
    const std::uint64_t n = rng.poisson(rate_per_s * 1e-9 * acquisition);
    for (std::uint64_t i = 0; i < n; ++i) {
      DetectionRecord r;
      r.sequence_index = batch.sequence;
      r.origin = o;
      r.true_arrival_ns = acquisition * rng.uniform();
      recs.push_back(r);
    }
  };
  add_noise(det.dark_rate_per_s, Origin::dark);
  add_noise(det.parasitic_rate_per_s, Origin::parasitic);

  std::stable_sort(recs.begin(), recs.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
    return a.true_arrival_ns < b.true_arrival_ns;
  });
  apply_dead_time(recs, det.dead_time_ns);
  for (auto& r : recs) r.raw_time_ns = clock.to_bob(r.true_arrival_ns);
  return recs;
}

std::vector<DetectionRecord> detect_key_arm(const EmissionBatch& batch, const DetectorModel& det,
                                            const ClockModel& clock, const ProtocolParams& params,
                                            RandomStream& rng) {
  return detect_arm(batch, 0.5, det, clock, params, rng);
}

namespace {

double wrap(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0) r += period;
  return r;
}

struct Folding {
  double center = 0.0;  // circular mean of the folded times
  double iqr = 0.0;
};

Folding fold_spread(const std::vector<double>& raw, double bob_period, double nominal, std::vector<double>& scratch) {
  double s = 0.0, c = 0.0;
  const double k = 2.0 * std::numbers::pi / bob_period;
  for (double t : raw) {
    const double th = k * wrap(t, bob_period);
    s += std::sin(th);
    c += std::cos(th);
  }
  Folding out;
  out.center = wrap(std::atan2(s, c) / k, bob_period);
  scratch.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double d = wrap(raw[i] - out.center + 0.5 * bob_period, bob_period) - 0.5 * bob_period;
    scratch[i] = d * nominal / bob_period;
  }
  const std::size_t q1 = scratch.size() / 4, q3 = (3 * scratch.size()) / 4;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(q1), scratch.end());
  const double lo = scratch[q1];
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(q3), scratch.end());
  out.iqr = scratch[q3] - lo;
  return out;
}

double smoothed_box(double x, double a, double b, double edge) {
  const double s = std::numbers::sqrt2 * edge;
  return 0.5 * (std::erfc((a - x) / s) - std::erfc((b - x) / s)) / (b - a);
}

}  // namespace

AlignmentResult align_clock(const std::vector<DetectionRecord>& records, const ProtocolParams& params,
                            const AlignmentSearch& search) {
  if (records.size() < 100) throw InsufficientStatistics("clock alignment needs at least 100 detection records");
  if (search.coarse_steps < 2) throw InvalidArgument("alignment search needs at least two coarse steps");
  const SlotGrid& grid = params.grid;
  const double P = grid.period;

  std::vector<double> raw;
  raw.reserve(records.size());
  double t_max = 0.0;
  for (const auto& r : records) {
    raw.push_back(r.raw_time_ns);
    t_max = std::max(t_max, r.raw_time_ns);
  }
  std::vector<double> scratch;
  auto iqr_at = [&](double rel) { return fold_spread(raw, P * (1.0 + rel), P, scratch).iqr; };

  AlignmentResult out;
  out.records_used = raw.size();
  out.uncorrected_spread_ns = iqr_at(0.0);

  const double step = 2.0 * search.relative_range / (search.coarse_steps - 1);
  double best_rel = 0.0, best_iqr = 1e300;
  for (int i = 0; i < search.coarse_steps; ++i) {
    const double rel = -search.relative_range + step * i;
    const double v = iqr_at(rel);
    if (v < best_iqr) {
      best_iqr = v;
      best_rel = rel;
    }
  }
  double rel = golden_section(iqr_at, best_rel - step, best_rel + step, search.golden_iterations);
  double bob_period = P * (1.0 + rel);
  // the folded center sits mid-way through the bit-0/bit-1 pattern
  const double pattern_center = 0.5 * (grid.bit0_delay + grid.bit1_delay + grid.pulse_duration);
  double bob_offset = fold_spread(raw, bob_period, P, scratch).center - pattern_center * (1.0 + rel);

  if (search.likelihood_polish) {
    const double floor_w = 0.02;
    const double edge = std::max(search.template_edge_ns, 1e-3);
    const double d0 = grid.bit0_delay, d1 = grid.bit1_delay, T = grid.pulse_duration;
    const double scale = std::max(t_max, P);
    auto nll = [&](const Eigen::VectorXd& x) {
      const double bp = bob_period * (1.0 + x[0] / scale);
      const double off = bob_offset + x[1];
      double acc = 0.0;
      for (double t : raw) {
        const double ph = (wrap(t - off + 0.5 * P, bp) - 0.5 * P) * P / bp;
        const double f = floor_w / P + (1.0 - floor_w) * 0.5 * (smoothed_box(ph, d0, d0 + T, edge) + smoothed_box(ph, d1, d1 + T, edge));
        acc -= std::log(f);
      }
      return acc;
    };
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2), st(2);
    st << 2.0, 2.0;
    const auto res = nelder_mead<double>(nll, x0, st, 400, 1e-12);
    bob_period *= 1.0 + res.x[0] / scale;
    bob_offset += res.x[1];
  }

  out.period_ns = bob_period;
  out.relative_skew = bob_period / P - 1.0;
  const double base = wrap(bob_offset / (1.0 + out.relative_skew), P);
  out.offset_ns = base + P * std::round((search.offset_hint_ns - base) / P);

  // spread of the folded, corrected times
  for (std::size_t i = 0; i < raw.size(); ++i) scratch[i] = wrap(aligned_time(out, raw[i]) + 0.5 * P - pattern_center, P);
  const std::size_t q1 = scratch.size() / 4, q3 = (3 * scratch.size()) / 4;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(q1), scratch.end());
  const double lo = scratch[q1];
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(q3), scratch.end());
  out.spread_ns = scratch[q3] - lo;
  return out;
}

double aligned_time(const AlignmentResult& a, double raw_ns) { return raw_ns / (1.0 + a.relative_skew) - a.offset_ns; }

void assign_slots(std::vector<DetectionRecord>& records, const AlignmentResult& a, const ProtocolParams& params) {
  const double P = params.grid.period;
  for (auto& r : records) {
    const double t = aligned_time(a, r.raw_time_ns);
    const auto k = static_cast<std::int64_t>(std::floor(t / P));
    r.pulse_index = k;
    r.slot = (k >= 0 && k < static_cast<std::int64_t>(params.pulses_per_sequence))
                 ? params.grid.slot_of(t - static_cast<double>(k) * P)
                 : SlotGrid::outside;
  }
}

double residual_drift_ns(double estimated_skew, double true_skew, double duration_ns) {
  return std::abs((1.0 + true_skew) / (1.0 + estimated_skew) - 1.0) * duration_ns;
}

QberEstimate estimate_qber(const std::vector<DetectionRecord>& records, const std::vector<std::vector<Bit>>& bits,
                           const SlotGrid& grid) {
  QberEstimate q;
  for (const auto& r : records) {
    if (r.slot == SlotGrid::outside || r.sequence_index >= bits.size() || r.pulse_index < 0 ||
        static_cast<std::size_t>(r.pulse_index) >= bits[r.sequence_index].size()) {
      ++q.outside;
      continue;
    }
    ++q.slot_counts[r.slot - SlotGrid::first_slot];
    const Bit b = bits[r.sequence_index][static_cast<std::size_t>(r.pulse_index)];
    if (r.slot == grid.unambiguous_slot(b))
      ++q.correct;
    else if (r.slot == grid.wrong_slot(b))
      ++q.wrong;
    else
      ++q.ambiguous;
  }
  const std::uint64_t n = q.correct + q.wrong;
  if (n == 0) throw UndefinedQber("no detections in the unambiguous slots; QBER is undefined");
  q.q = static_cast<double>(q.wrong) / static_cast<double>(n);
  q.std_error = std::sqrt(q.q * (1.0 - q.q) / static_cast<double>(n));
  return q;
}

namespace {

void put_double(std::ostream& os, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, res.ptr - buf);
}

}  // namespace

void write_detections_csv(std::ostream& os, const std::vector<DetectionRecord>& records) {
  os << "sequence,raw_time_ns,pulse_index,slot,origin\n";
  for (const auto& r : records) {
    os << r.sequence_index << ',';
    put_double(os, r.raw_time_ns);
    os << ',' << r.pulse_index << ',';
    if (r.slot == SlotGrid::outside)
      os << "outside";
    else
      os << r.slot;
    os << ',' << origin_name(r.origin) << '\n';
  }
}

}  // namespace tcqkd
