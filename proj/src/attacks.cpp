#include "tcqkd/attacks.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>

#include "tcqkd/errors.hpp"
#include "tcqkd/optimize.hpp"

namespace tcqkd {

namespace {

constexpr int first_label = 2;  // resent states live on slots 2..6
constexpr int span = 5;
constexpr int ancilla_dim = 9;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool unit(double v) { return v >= 0 && v <= 1; }

}  // namespace

const char* attack_name(const AttackStrategy& a) {
  return std::visit(overloaded{[](const NoAttack&) { return "none"; }, [](const TwoSlot&) { return "two_slot"; },
                               [](const MaxCoherence&) { return "max_coherence"; },
                               [](const Entangling&) { return "entangling"; }},
                    a);
}

void validate(const AttackStrategy& a) {
  std::visit(overloaded{[](const NoAttack&) {},
                        [](const TwoSlot& s) {
                          if (!unit(s.m) || !unit(s.slot4_lower_prob) || !unit(s.unambiguous_split) ||
                              !unit(s.ambiguous_split))
                            throw InvalidArgument("two-slot parameters must lie in [0, 1]");
                        },
                        [](const MaxCoherence& s) {
                          if (!unit(s.m) || !unit(s.x)) throw InvalidArgument("max-coherence m and x must lie in [0, 1]");
                        },
                        [](const Entangling& e) {
                          if (e.isometry.rows() != span * ancilla_dim || e.isometry.cols() != 3)
                            throw InvalidArgument("entangling isometry must be 45 x 3");
                          const double r = (e.isometry.transpose() * e.isometry - Eigen::Matrix3d::Identity())
                                               .cwiseAbs()
                                               .maxCoeff();
                          if (r > 1e-8) throw InvalidArgument("entangling map is not an isometry");
                        }},
             a);
}

ResentState ResentState::max_coherence(double x) {
  if (!unit(x)) throw InvalidArgument("x must lie in [0, 1]");
  const double side = std::sqrt(0.5 * x);
  return {Eigen::Vector3d(side, std::sqrt(1.0 - x), side)};
}

AttackOutcome max_coherence_analytic(double m, double x) {
  if (!unit(m) || !unit(x)) throw InvalidArgument("max-coherence m and x must lie in [0, 1]");
  AttackOutcome o;
  o.m = m;
  o.q = m * x / 2.0;
  o.i_ae = m * (1.0 - x);
  o.contrast = m * std::sqrt(2.0 * (1.0 - x) * x) + (1.0 - m) / 2.0;
  o.validation_probability = 0.5;
  return o;
}

double iae_max_coherence(double q, double delta, CapPolicy policy) {
  if (!(q >= 0) || !(delta >= 0)) throw InvalidArgument("Q and Delta must be non-negative");
  const double root = 4.0 * std::sqrt(q * (2.0 * q + delta));
  const double upper = 6.0 * q + delta + root;
  if (upper + 2.0 * q <= 1.0) return upper;
  // m = I + 2Q; the feasible m lie between the two roots
  const double lower = 6.0 * q + delta - root;
  const double m_lower = lower + 2.0 * q;
  if (policy == CapPolicy::raise || m_lower > 1.0)
    throw ConstraintViolation("max-coherence attack needs an intercept fraction above 1 at this (Q, Delta)",
                              policy == CapPolicy::raise ? upper + 2.0 * q : m_lower);
  return 1.0 - 2.0 * q;
}

double iae_improved(double q) {
  if (!(q >= 0 && q <= 0.5)) throw InvalidArgument("Q must lie in [0, 1/2]");
  return q;
}

double improved_coherence(double x) {
  if (!unit(x)) throw InvalidArgument("x must lie in [0, 1]");
  return 2.0 * std::sqrt(2.0 * (1.0 - x) * x) / (2.0 - x);
}

double improved_contrast(double m, double x) {
  const double num = (1.0 - m) + m * std::sqrt(2.0 * x * (1.0 - x));
  const double den = (1.0 - m) + m * (1.0 - 0.5 * x);
  return num / den;
}

AttackOutcome improved_intercept_resend(double q, double delta) {
  if (!(q >= 0 && q <= 0.5) || !(delta >= 0)) throw InvalidArgument("need 0 <= Q <= 1/2 and Delta >= 0");
  auto outcome = [&](double m) {
    AttackOutcome o;
    o.m = m;
    o.q = q;
    o.i_ae = m - 2.0 * q;
    o.contrast = improved_contrast(m, 2.0 * q / m);
    o.validation_probability = 0.5;
    return o;
  };
  const double target = 1.0 - delta;
  const double lo = 2.0 * q;  // x = 1
  if (q == 0.0) {
    AttackOutcome none;
    none.contrast = 1.0;
    none.validation_probability = 0.5;
    return none;
  }
  if (delta == 0.0) {
    if (3.0 * q > 1.0) throw ConstraintViolation("improved protocol: Q above 1/3 needs m > 1", 3.0 * q);
    return outcome(3.0 * q);
  }
  // the feasible set in m is an interval; find its upper end by scanning down from 1
  const int n = 4000;
  double prev = 1.0;
  if (improved_contrast(1.0, 2.0 * q) >= target) return outcome(1.0);
  for (int i = 1; i <= n; ++i) {
    const double m = 1.0 - (1.0 - lo) * i / n;
    if (m <= lo) break;
    if (improved_contrast(m, 2.0 * q / m) >= target) {
      double a = m, b = prev;  // a feasible, b not
      for (int k = 0; k < 80; ++k) {
        const double mid = 0.5 * (a + b);
        (improved_contrast(mid, 2.0 * q / mid) >= target ? a : b) = mid;
      }
      return outcome(a);
    }
    prev = m;
  }
  throw ConstraintViolation("improved protocol: no intercept fraction reaches this (Q, Delta)", 1.0);
}

AttackOutcome two_slot_analytic(const TwoSlot& s) {
  validate(AttackStrategy{s});
  const double y = s.unambiguous_split, z = s.ambiguous_split, m = s.m;
  // per pulse: validated, wrong, and validated with Eve knowing the bit
  const double v = 0.5 + m * (z - y) / 2.0;
  // the wrong-slot rate m z / 4 does not depend on slot4_lower_prob
  const double k = m * (1.0 - y) / 2.0;
  AttackOutcome o;
  o.m = m;
  o.validation_probability = v;
  o.q = v > 0 ? m * z / 4.0 / v : 0.0;
  o.i_ae = v > 0 ? k / v : 0.0;
  o.contrast = (1.0 - m) / 2.0 + (m / 2.0) * (std::sqrt(y * (1.0 - y)) + std::sqrt(z * (1.0 - z)));
  return o;
}

TwoSlotSearch two_slot_best(double q, double delta, int grid) {
  if (!(q >= 0 && q < 0.5) || !(delta >= 0)) throw InvalidArgument("need 0 <= Q < 1/2 and Delta >= 0");
  if (grid < 3) throw InvalidArgument("two-slot search grid too small");
  if (q == 0.0) return TwoSlotSearch{two_slot_analytic(TwoSlot{0.0, 0.5, 0.5, 0.5}), TwoSlot{0.0, 0.5, 0.5, 0.5}, 0};
  const double c_min = (1.0 - delta) / 2.0;

  TwoSlotSearch out;
  out.best.i_ae = -1.0;
  // m solved from Q = (m z / 4) / (1/2 + m (z - y) / 2)
  auto member = [&](double y, double z, AttackOutcome& o, TwoSlot& s) {
    ++out.evaluations;
    const double den = z / 4.0 - q * (z - y) / 2.0;
    if (!(den > 0)) return false;
    const double m = (q / 2.0) / den;
    if (!(m > 0 && m <= 1.0)) return false;
    s = TwoSlot{m, 0.5, y, z};
    o = two_slot_analytic(s);
    return o.contrast >= c_min - 1e-12;
  };
  auto consider = [&](double y, double z) {
    AttackOutcome o;
    TwoSlot s;
    if (member(y, z, o, s) && o.i_ae > out.best.i_ae) {
      out.best = o;
      out.strategy = s;
    }
  };
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) consider(static_cast<double>(i) / (grid - 1), static_cast<double>(j) / (grid - 1));
  if (out.best.i_ae < 0)
    throw ConstraintViolation("two-slot family cannot reach this (Q, Delta) with m <= 1", 1.0);

  // refine around the best grid point on successively finer local grids
  double h = 1.0 / (grid - 1);
  for (int level = 0; level < 12; ++level) {
    const double y0 = out.strategy.unambiguous_split, z0 = out.strategy.ambiguous_split;
    for (int i = -4; i <= 4; ++i)
      for (int j = -4; j <= 4; ++j)
        consider(std::clamp(y0 + i * h / 4.0, 0.0, 1.0), std::clamp(z0 + j * h / 4.0, 0.0, 1.0));
    h /= 4.0;
  }
  return out;
}

namespace {

int idx(int slot) { return slot - first_label; }

/// Resend amplitudes over slots 2..6 and the branch taken.
Eigen::VectorXd resend_amplitudes(const AttackStrategy& a, int j, int choice) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(span);
  if (const auto* mc = std::get_if<MaxCoherence>(&a)) {
    const auto r = ResentState::max_coherence(mc->x).amplitudes;
    v[idx(j - 1)] = r[0];
    v[idx(j)] = r[1];
    v[idx(j + 1)] = r[2];
  } else if (const auto* ts = std::get_if<TwoSlot>(&a)) {
    if (j != 4) {
      v[idx(j)] = std::sqrt(1.0 - ts->unambiguous_split);
      v[idx(4)] = std::sqrt(ts->unambiguous_split);
    } else {
      v[idx(4)] = std::sqrt(1.0 - ts->ambiguous_split);
      v[idx(choice == 0 ? 3 : 5)] = std::sqrt(ts->ambiguous_split);
    }
  }
  return v;
}

double intercept_fraction(const AttackStrategy& a) {
  if (const auto* mc = std::get_if<MaxCoherence>(&a)) return mc->m;
  if (const auto* ts = std::get_if<TwoSlot>(&a)) return ts->m;
  return 0.0;
}

struct Mixture {
  std::vector<double> weights;
  std::vector<std::uint32_t> packets;
  BinnedSampler pick;
};

}  // namespace

Eigen::MatrixXd bob_density(const Eigen::MatrixXd& iso, Bit b) {
  const int j = b == Bit::zero ? 0 : 1;
  const Eigen::VectorXd psi = (iso.col(j) + iso.col(j + 1)) / std::sqrt(2.0);
  Eigen::MatrixXd m(span, ancilla_dim);
  for (int s = 0; s < span; ++s)
    for (int e = 0; e < ancilla_dim; ++e) m(s, e) = psi[s * ancilla_dim + e];
  return m * m.transpose();
}

std::vector<EveObservation> apply_intercept_resend(EmissionBatch& batch, const AttackStrategy& strategy,
                                                   const SlotGrid& grid, RandomStream& rng) {
  validate(strategy);
  std::vector<EveObservation> seen;
  if (std::holds_alternative<NoAttack>(strategy)) return seen;
  const double P = grid.period;

  if (const auto* ent = std::get_if<Entangling>(&strategy)) {
    // Bob receives each bit's reduced state; realize it as a mixture of
    // its eigenvectors
    Mixture mix[2];
    for (Bit b : {Bit::zero, Bit::one}) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(bob_density(ent->isometry, b));
      Mixture& mx = mix[bit_value(b)];
      Eigen::VectorXd w(span);
      for (int c = 0; c < span; ++c) {
        w[c] = std::max(0.0, es.eigenvalues()[c]);
        mx.packets.push_back(static_cast<std::uint32_t>(batch.packets.size()));
        Eigen::VectorXd v = es.eigenvectors().col(c);
        batch.packets.push_back(Wavepacket::slot_state(grid, first_label, v));
      }
      mx.pick = BinnedSampler(0.0, 1.0, w);
    }
    for (Photon& ph : batch.photons) {
      if (ph.packet > 1) continue;  // only Alice's modes are transformed
      const Mixture& mx = mix[ph.packet];
      ph.packet = mx.packets[static_cast<std::size_t>(mx.pick.sample_bin(rng))];
      ph.time_ns = ph.pulse * P + batch.packets[ph.packet].time_sampler().sample(rng);
      ph.origin = Origin::resent;
    }
    batch.sort();
    return seen;
  }

  const double m = intercept_fraction(strategy);
  const auto* ts = std::get_if<TwoSlot>(&strategy);
  std::map<std::pair<int, int>, std::uint32_t> cache;
  auto packet_for = [&](int j, int choice) {
    const auto key = std::make_pair(j, choice);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(batch.packets.size());
    batch.packets.push_back(Wavepacket::slot_state(grid, first_label, resend_amplitudes(strategy, j, choice)));
    cache.emplace(key, id);
    return id;
  };

  // photons grouped by pulse, earliest first
  std::vector<std::size_t> order(batch.photons.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return batch.photons[a].pulse < batch.photons[b].pulse; });

  std::vector<Photon> out;
  out.reserve(batch.photons.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t e = i;
    const std::uint32_t pulse = batch.photons[order[i]].pulse;
    while (e < order.size() && batch.photons[order[e]].pulse == pulse) ++e;
    if (!rng.bernoulli(m)) {
      for (std::size_t k = i; k < e; ++k) out.push_back(batch.photons[order[k]]);
      i = e;
      continue;
    }
    const Photon& first = batch.photons[order[i]];
    int j = grid.slot_of(first.time_ns - pulse * P);
    if (j == SlotGrid::outside) {
      // tails: take the nearest slot
      const double t = first.time_ns - pulse * P;
      j = t < grid.slot_start(SlotGrid::first_slot) ? SlotGrid::first_slot : SlotGrid::last_slot;
    }
    int choice = 0;
    if (ts && j == 4) choice = rng.bernoulli(ts->slot4_lower_prob) ? 0 : 1;
    const std::uint32_t id = packet_for(j, choice);
    const Wavepacket& w = batch.packets[id];
    Photon resent{pulse * P + w.time_sampler().sample(rng), pulse, id, Origin::resent};
    out.push_back(resent);
    seen.push_back({pulse, j, choice});
    i = e;
  }
  batch.photons = std::move(out);
  batch.sort();
  return seen;
}

std::vector<InterferometerDetection> improved_contrast_selection(const std::vector<InterferometerDetection>& records,
                                                                 const std::vector<Bit>& bits) {
  std::vector<InterferometerDetection> out;
  for (const auto& r : records) {
    if (r.pulse >= bits.size()) continue;
    const int keep = bits[r.pulse] == Bit::zero ? 4 : 5;
    if (r.slot == keep) out.push_back(r);
  }
  return out;
}

double contrast(const std::vector<InterferometerDetection>& records) {
  if (records.empty()) throw NoData("no interferometer detections");
  double d = 0.0;
  for (const auto& r : records) d += r.port == Port::plus ? 1.0 : -1.0;
  return d / static_cast<double>(records.size());
}

namespace {

double plugin_mutual_information(const std::vector<std::array<double, 2>>& joint) {
  double total = 0.0, pa[2] = {0.0, 0.0};
  for (const auto& row : joint) {
    pa[0] += row[0];
    pa[1] += row[1];
  }
  total = pa[0] + pa[1];
  if (total <= 0) return 0.0;
  double mi = 0.0;
  for (const auto& row : joint) {
    const double pe = (row[0] + row[1]) / total;
    for (int a = 0; a < 2; ++a) {
      const double p = row[a] / total;
      if (p > 0) mi += p * std::log2(p / (pe * pa[a] / total));
    }
  }
  return mi;
}

struct BatchStats {
  double pulses = 0, valid = 0, wrong = 0, c_sum = 0, c_n = 0, ci_sum = 0, ci_n = 0;
  std::vector<std::array<double, 2>> joint = std::vector<std::array<double, 2>>(8, {0.0, 0.0});

  void add(const BatchStats& o) {
    pulses += o.pulses;
    valid += o.valid;
    wrong += o.wrong;
    c_sum += o.c_sum;
    c_n += o.c_n;
    ci_sum += o.ci_sum;
    ci_n += o.ci_n;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      joint[i][0] += o.joint[i][0];
      joint[i][1] += o.joint[i][1];
    }
  }
  double q() const { return valid > 0 ? wrong / valid : 0.0; }
  double c() const { return c_n > 0 ? c_sum / c_n : 0.0; }
  double ci() const { return ci_n > 0 ? ci_sum / ci_n : 0.0; }
};

double batch_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1) / n);
}

}  // namespace

MonteCarloOutcome evaluate_attack_mc(const AttackStrategy& strategy, std::uint64_t pulses, std::uint64_t seed) {
  validate(strategy);
  constexpr int batches = 20;
  if (pulses < static_cast<std::uint64_t>(batches) * 10) throw InvalidArgument("too few pulses for batch statistics");
  const std::uint32_t per_batch = static_cast<std::uint32_t>(pulses / batches);

  ProtocolParams params;
  params.source = ProtocolParams::Source::single_photon;
  params.pulses_per_sequence = per_batch;
  params.sequence_duration_ns = per_batch * params.grid.period;
  const SlotGrid& grid = params.grid;
  const auto profile = PulseProfile::square(grid.pulse_duration, grid.pulse_center(Bit::zero));
  InterferometerModel ideal;
  ideal.intrinsic_visibility = 1.0;

  std::vector<BatchStats> stats(batches);
  for (int b = 0; b < batches; ++b) {
    RandomStream rng = RandomStream::derive(seed, static_cast<std::uint64_t>(b));
    const auto bits = random_bits(per_batch, rng);
    EmissionBatch batch = emit_sequence(bits, params, profile, rng);
    const auto seen = apply_intercept_resend(batch, strategy, grid, rng);
    std::vector<int> category(per_batch, 0);
    for (const auto& s : seen) category[s.pulse] = 1 + (s.slot - SlotGrid::first_slot) * 2 + s.choice;

    std::vector<InterferenceSampler> samplers;
    for (const auto& w : batch.packets) samplers.emplace_back(w, ideal, 0.0);
    BatchStats& st = stats[static_cast<std::size_t>(b)];
    st.pulses = per_batch;
    for (const Photon& ph : batch.photons) {
      const Bit bit = bits[ph.pulse];
      const int slot = grid.slot_of(ph.time_ns - ph.pulse * grid.period);
      if (slot == grid.unambiguous_slot(bit) || slot == grid.wrong_slot(bit)) {
        st.valid += 1;
        if (slot == grid.wrong_slot(bit)) st.wrong += 1;
        st.joint[static_cast<std::size_t>(category[ph.pulse])][bit_value(bit)] += 1;
      }
      const auto o = samplers[ph.packet].sample(rng);
      const double sign = o.port == Port::plus ? 1.0 : -1.0;
      st.c_sum += sign;
      st.c_n += 1;
      const int out_slot = grid.slot_of(o.time_ns);
      if (out_slot == (bit == Bit::zero ? 4 : 5)) {
        st.ci_sum += sign;
        st.ci_n += 1;
      }
    }
  }

  BatchStats all;
  std::vector<double> qs, is, cs, cis, vs;
  for (const auto& s : stats) {
    all.add(s);
    qs.push_back(s.q());
    is.push_back(plugin_mutual_information(s.joint));
    cs.push_back(s.c());
    cis.push_back(s.ci());
    vs.push_back(s.valid / s.pulses);
  }
  MonteCarloOutcome out;
  out.pulses = static_cast<std::uint64_t>(all.pulses);
  out.mean.q = all.q();
  out.mean.i_ae = plugin_mutual_information(all.joint);
  out.mean.contrast = all.c();
  out.mean.validation_probability = all.valid / all.pulses;
  out.mean.m = intercept_fraction(strategy);
  out.std_error.q = batch_se(qs);
  out.std_error.i_ae = batch_se(is);
  out.std_error.contrast = batch_se(cs);
  out.std_error.validation_probability = batch_se(vs);
  out.improved_contrast = all.ci();
  out.improved_contrast_error = batch_se(cis);
  return out;
}

void write_outcomes_csv(std::ostream& os, const std::vector<AttackOutcome>& rows, const std::vector<double>& x) {
  os << "Q,I_AE,contrast,m,x\n";
  char buf[32];
  auto put = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, r.ptr - buf);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    put(rows[i].q);
    os << ',';
    put(rows[i].i_ae);
    os << ',';
    put(rows[i].contrast);
    os << ',';
    put(rows[i].m);
    os << ',';
    put(i < x.size() ? x[i] : 0.0);
    os << '\n';
  }
}

}  // namespace tcqkd
