#include "tcqkd/coherence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "tcqkd/errors.hpp"

namespace tcqkd {

void InterferometerModel::validate(const SlotGrid& grid) const {
  if (!(intrinsic_visibility >= 0 && intrinsic_visibility <= 1))
    throw InvalidArgument("intrinsic visibility must be in [0, 1]");
  if (!(insertion_transmission >= 0 && insertion_transmission <= 1))
    throw InvalidArgument("insertion transmission must be in [0, 1]");
  if (std::abs(path_delay_ns - grid.slot_duration) > 1e-9)
    throw InvalidArgument("interferometer path delay must equal the slot duration");
}

InterferenceSampler::InterferenceSampler(const Wavepacket& w, const InterferometerModel& m, double phase) {
  const Eigen::Index k = w.bins_for(m.path_delay_ns);
  start_ = w.start_ns;
  bin_ = w.bin_ns;
  n_ = w.size() + k;
  const double vc = m.intrinsic_visibility * std::cos(phase);
  plus_.setZero(n_);
  minus_.setZero(n_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    const double direct = i < w.size() ? w.amplitude[i] : 0.0;
    const double delayed = (i - k >= 0 && i - k < w.size()) ? w.amplitude[i - k] : 0.0;
    const double incoherent = direct * direct + delayed * delayed;
    const double cross = 2.0 * vc * direct * delayed;
    plus_[i] = std::max(0.0, incoherent + cross) * bin_ / 4.0;
    minus_[i] = std::max(0.0, incoherent - cross) * bin_ / 4.0;
  }
  const double tp = plus_.sum(), tm = minus_.sum();
  p_plus_ = tp / (tp + tm);
  Eigen::VectorXd joint(2 * n_);
  joint << plus_, minus_;
  sampler_ = BinnedSampler(0.0, 1.0, joint);
}

InterferenceOutcome InterferenceSampler::sample(RandomStream& rng) const {
  const Eigen::Index j = sampler_.sample_bin(rng);
  InterferenceOutcome out;
  out.port = j < n_ ? Port::plus : Port::minus;
  out.time_ns = start_ + bin_ * (static_cast<double>(j % n_) + rng.uniform());
  return out;
}

namespace {

double slot_sum(const Eigen::VectorXd& v, double start, double bin, const SlotGrid& grid, int slot) {
  const double a = grid.slot_start(slot), b = a + grid.slot_duration;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double lo = std::max(a, start + bin * static_cast<double>(i));
    const double hi = std::min(b, start + bin * static_cast<double>(i + 1));
    if (hi > lo) acc += v[i] * (hi - lo) / bin;
  }
  return acc;
}

}  // namespace

double InterferenceSampler::slot_plus(const SlotGrid& grid, int slot) const {
  return slot_sum(plus_, start_, bin_, grid, slot);
}

double InterferenceSampler::slot_total(const SlotGrid& grid, int slot) const {
  return slot_sum(plus_, start_, bin_, grid, slot) + slot_sum(minus_, start_, bin_, grid, slot);
}

InterferenceOutcome interfere(const Wavepacket& w, const InterferometerModel& m, double phase, RandomStream& rng) {
  return InterferenceSampler(w, m, phase).sample(rng);
}

SequenceContrast sequence_contrast(std::uint64_t n_plus, std::uint64_t n_minus, double phase_truth) {
  const std::uint64_t n = n_plus + n_minus;
  if (n == 0) throw NoData("sequence has no interferometer detections");
  return {(static_cast<double>(n_plus) - static_cast<double>(n_minus)) / static_cast<double>(n), n_plus, n_minus,
          phase_truth};
}

CoherenceEstimate estimate_gamma_from_stats(std::size_t n_s, double n_p, double c2_bar) {
  if (n_s < 2) throw InsufficientStatistics("coherence estimator needs at least two sequences");
  if (!(n_p > 0)) throw InvalidArgument("mean photon number per sequence must be positive");
  CoherenceEstimate e;
  e.n_s = n_s;
  e.n_p = n_p;
  e.c2_bar = c2_bar;
  e.sigma2 = 1.0 / n_p;
  e.sigma_T2 = 2.0 / (n_p * static_cast<double>(n_s));
  e.sigma_T = std::sqrt(e.sigma_T2);
  const double radicand = 2.0 * (c2_bar - e.sigma2);
  if (radicand <= 0) {
    e.gamma_0 = 0.0;
    e.noise_dominated = true;
    e.warnings.push_back("contrast variance below shot noise: gamma_0 clamped to 0");
  } else {
    e.gamma_0 = std::sqrt(radicand);
  }
  if (n_p < 50) e.warnings.push_back("fewer than 50 photons per sequence: Gaussian approximation is poor");
  e.gamma_floor = gamma_floor(e, 3.0);
  return e;
}

CoherenceEstimate estimate_gamma(const std::vector<SequenceContrast>& contrasts, double n_p) {
  if (contrasts.size() < 2) throw InsufficientStatistics("coherence estimator needs at least two sequences");
  // sorted summation makes the result independent of the input order
  std::vector<double> c;
  c.reserve(contrasts.size());
  for (const auto& s : contrasts) c.push_back(s.c);
  std::sort(c.begin(), c.end());
  double mean = 0.0;
  for (double v : c) mean += v;
  mean /= static_cast<double>(c.size());
  std::vector<double> d2;
  d2.reserve(c.size());
  for (double v : c) d2.push_back((v - mean) * (v - mean));
  std::sort(d2.begin(), d2.end());
  double var = 0.0;
  for (double v : d2) var += v;
  var /= static_cast<double>(c.size());
  return estimate_gamma_from_stats(contrasts.size(), n_p, var);
}

CoherenceEstimate estimate_gamma(const std::vector<SequenceContrast>& contrasts) {
  std::vector<std::uint64_t> n;
  for (const auto& s : contrasts) n.push_back(s.n_plus + s.n_minus);
  std::sort(n.begin(), n.end());
  double total = 0.0;
  for (auto v : n) total += static_cast<double>(v);
  return estimate_gamma(contrasts, contrasts.empty() ? 0.0 : total / static_cast<double>(contrasts.size()));
}

double gamma_floor(const CoherenceEstimate& e, double k) {
  if (!(k >= 0)) throw InvalidArgument("sigma multiplier must be >= 0");
  return e.gamma_0 - k * e.sigma_T;
}

double coherence_loss(double gamma_th, double gamma_exp) {
  if (!(gamma_th > 0)) throw InvalidArgument("gamma_th must be positive");
  if (gamma_exp > gamma_th)
    throw InvalidArgument("measured coherence exceeds the theoretical maximum; check gamma_th");
  return (gamma_th - gamma_exp) / gamma_th;
}

std::vector<SequenceContrast> synthetic_contrasts(double gamma, std::size_t n_s, double n_p, RandomStream& rng,
                                                  const double* fixed_phase) {
  std::vector<SequenceContrast> out;
  out.reserve(n_s);
  while (out.size() < n_s) {
    const double phi = fixed_phase ? *fixed_phase : 2.0 * std::numbers::pi * rng.uniform();
    const std::uint64_t n = rng.poisson(n_p);
    if (n == 0) continue;
    const std::uint64_t plus = rng.binomial(n, 0.5 * (1.0 + gamma * std::cos(phi)));
    out.push_back(sequence_contrast(plus, n - plus, phi));
  }
  return out;
}

std::vector<DetectionRecord> detect_interferometer_arm(const EmissionBatch& batch, double route,
                                                       const DetectorModel& det, const ClockModel& clock,
                                                       const InterferometerModel& model, double phase,
                                                       const ProtocolParams& params, RandomStream& rng) {
  det.validate();
  model.validate(params.grid);
  const SlotGrid& grid = params.grid;
  const double P = grid.period;
  const double gate_lo = grid.bit0_delay;
  const double gate_hi = grid.bit1_delay + grid.pulse_duration + model.path_delay_ns;
  const double acquisition = clock.offset_ns + params.sequence_duration_ns;
  auto in_gate = [&](double alice_time) {
    if (!model.gated) return true;
    const double ph = alice_time - P * std::floor(alice_time / P);
    return ph >= gate_lo && ph < gate_hi;
  };

  std::vector<InterferenceSampler> samplers;
  samplers.reserve(batch.packets.size());
  for (const auto& w : batch.packets) samplers.emplace_back(w, model, phase);

  const double p_detect = route * model.insertion_transmission * det.efficiency * det.filter_transmission;
  std::vector<DetectionRecord> per_port[2];
  for (const Photon& ph : batch.photons) {
    if (!rng.bernoulli(p_detect)) continue;
    InterferenceOutcome o;
    if (ph.packet == no_packet) {
      o.port = rng.bernoulli(0.5) ? Port::plus : Port::minus;
      o.time_ns = ph.time_ns - std::floor(ph.time_ns / P) * P + (rng.bernoulli(0.5) ? model.path_delay_ns : 0.0);
    } else {
      o = samplers[ph.packet].sample(rng);
    }
    const double alice = static_cast<double>(ph.pulse) * P + o.time_ns;
    double t = alice + clock.offset_ns;
    if (det.jitter_sigma_ns > 0) t += det.jitter_sigma_ns * rng.normal();
    if (t < 0 || t >= acquisition || !in_gate(alice)) continue;
    DetectionRecord r;
    r.sequence_index = batch.sequence;
    r.origin = ph.origin;
    r.true_arrival_ns = t;
    r.packet = ph.packet;
    r.port = static_cast<std::int8_t>(o.port);
    per_port[static_cast<int>(o.port)].push_back(r);
  }
  for (int port = 0; port < 2; ++port) {
    auto add_noise = [&](double rate_per_s, Origin o) {
      const std::uint64_t n = rng.poisson(rate_per_s * 1e-9 * acquisition);
      for (std::uint64_t i = 0; i < n; ++i) {
        DetectionRecord r;
        r.sequence_index = batch.sequence;
        r.origin = o;
        r.true_arrival_ns = acquisition * rng.uniform();
        r.port = static_cast<std::int8_t>(port);
        if (in_gate(r.true_arrival_ns - clock.offset_ns)) per_port[port].push_back(r);
      }
    };
    add_noise(det.dark_rate_per_s, Origin::dark);
    add_noise(det.parasitic_rate_per_s, Origin::parasitic);
    auto& v = per_port[port];
    std::stable_sort(v.begin(), v.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
      return a.true_arrival_ns < b.true_arrival_ns;
    });
    apply_dead_time(v, det.dead_time_ns);
    for (auto& r : v) r.raw_time_ns = clock.to_bob(r.true_arrival_ns);
  }
  std::vector<DetectionRecord> out;
  out.reserve(per_port[0].size() + per_port[1].size());
  std::merge(per_port[0].begin(), per_port[0].end(), per_port[1].begin(), per_port[1].end(), std::back_inserter(out),
             [](const DetectionRecord& a, const DetectionRecord& b) { return a.true_arrival_ns < b.true_arrival_ns; });
  return out;
}

SequenceContrast contrast_of(const std::vector<DetectionRecord>& recs, double phase_truth) {
  std::uint64_t n[2] = {0, 0};
  for (const auto& r : recs)
    if (r.port == 0 || r.port == 1) ++n[r.port];
  return sequence_contrast(n[0], n[1], phase_truth);
}

void write_contrasts_csv(std::ostream& os, const std::vector<SequenceContrast>& contrasts) {
  os << "sequence_index,C_k,N_plus,N_minus\n";
  char buf[32];
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof buf, contrasts[i].c);
    os << i << ',';
    os.write(buf, res.ptr - buf);
    os << ',' << contrasts[i].n_plus << ',' << contrasts[i].n_minus << '\n';
  }
}

std::vector<SequenceContrast> read_contrasts_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw NoData("empty contrast file");
  std::vector<SequenceContrast> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string idx, c, np, nm;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, c, ',') || !std::getline(ss, np, ',') ||
        !std::getline(ss, nm, ','))
      throw InvalidArgument("contrast csv line " + std::to_string(lineno) + ": expected 4 columns");
    out.push_back(sequence_contrast(std::stoull(np), std::stoull(nm)));
  }
  return out;
}

}  // namespace tcqkd
