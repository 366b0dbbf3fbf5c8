#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tcqkd/errors.hpp"
#include "tcqkd/simulate.hpp"

using namespace tcqkd;

namespace {

ProtocolParams small_params(std::uint32_t pulses = 4000) {
  ProtocolParams p;
  p.pulses_per_sequence = pulses;
  p.sequence_duration_ns = pulses * p.grid.period;
  return p;
}

ClockModel exact_clock() {
  ClockModel c;
  c.relative_skew = 0.0;
  c.resolution_ns = 0.0;
  return c;
}

std::vector<DetectionRecord> run(const ProtocolParams& pp, const PulseProfile& prof, const DetectorModel& det,
                                 const ClockModel& clk, int sequences, std::uint64_t seed,
                                 std::vector<std::vector<Bit>>& bits) {
  std::vector<DetectionRecord> all;
  for (int s = 0; s < sequences; ++s) {
    auto rng = RandomStream::derive(seed, s);
    bits.push_back(random_bits(pp.pulses_per_sequence, rng));
    auto batch = emit_sequence(bits.back(), pp, prof, rng);
    batch.sequence = s;
    auto r = detect_key_arm(batch, det, clk, pp, rng);
    all.insert(all.end(), r.begin(), r.end());
  }
  return all;
}

}  // namespace

TEST_CASE("random bits are balanced") {
  RandomStream r(1);
  const auto b = random_bits(100000, r);
  const auto ones = std::count(b.begin(), b.end(), Bit::one);
  CHECK(std::abs(ones - 50000.0) < 5.0 * std::sqrt(25000.0));
}

TEST_CASE("emission statistics") {
  const auto pp = small_params(20000);
  const auto prof = PulseProfile::fitted();
  RandomStream r(2);
  const auto bits = random_bits(pp.pulses_per_sequence, r);
  const auto batch = emit_sequence(bits, pp, prof, r);
  std::size_t sig = 0, bg = 0;
  for (const auto& ph : batch.photons) (ph.origin == Origin::signal ? sig : bg) += 1;
  const double n = pp.pulses_per_sequence;
  CHECK(std::abs(sig - 0.1 * n) < 5.0 * std::sqrt(0.1 * n));
  // floor at extinction * peak over the whole window, relative to the pulse energy
  const double floor_mean = 0.1 * pp.extinction_ratio * prof.window_ns / pulse_energy(prof);
  CHECK(std::abs(bg - floor_mean * n) < 5.0 * std::sqrt(floor_mean * n) + 2.0);
  CHECK(std::is_sorted(batch.photons.begin(), batch.photons.end(),
                       [](const Photon& a, const Photon& b) { return a.time_ns < b.time_ns; }));
  for (const auto& ph : batch.photons) {
    REQUIRE(ph.pulse < bits.size());
    CHECK(ph.packet == static_cast<std::uint32_t>(bit_value(bits[ph.pulse])));
  }

  ProtocolParams single = pp;
  single.source = ProtocolParams::Source::single_photon;
  const auto sb = emit_sequence(bits, single, prof, r);
  CHECK(sb.photons.size() == bits.size());

  ProtocolParams dark = pp;
  dark.mean_photons_per_pulse = 0.0;
  CHECK(emit_sequence(bits, dark, prof, r).photons.empty());
  CHECK_THROWS_AS(emit_sequence(std::vector<Bit>(3), pp, prof, r), InvalidArgument);
}

TEST_CASE("channel thinning and the beamsplitter") {
  auto pp = small_params(20000);
  pp.mean_photons_per_pulse = 1.0;
  RandomStream r(3);
  auto batch = emit_sequence(random_bits(pp.pulses_per_sequence, r), pp, PulseProfile::square(20.0), r);
  const double before = batch.photons.size();
  const auto split = route_beamsplitter(batch, r);
  CHECK(split.key.photons.size() + split.interferometer.photons.size() == batch.photons.size());
  CHECK(std::abs(split.key.photons.size() - before / 2) < 5.0 * std::sqrt(before / 4));
  apply_channel(batch, 0.25, r);
  CHECK(std::abs(batch.photons.size() - before / 4) < 5.0 * std::sqrt(before * 0.25 * 0.75));
  CHECK_THROWS_AS(apply_channel(batch, 1.5, r), InvalidArgument);
}

TEST_CASE("dead time leaves no pair closer than the dead time") {
  std::vector<DetectionRecord> recs;
  RandomStream r(4);
  double t = 0;
  for (int i = 0; i < 5000; ++i) {
    t += r.exponential(1.0 / 30.0);
    DetectionRecord d;
    d.true_arrival_ns = t;
    recs.push_back(d);
  }
  auto kept = recs;
  apply_dead_time(kept, 50.0);
  CHECK(kept.size() < recs.size());
  for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i].true_arrival_ns - kept[i - 1].true_arrival_ns >= 50.0);
  // non-paralyzable: every dropped event falls within 50 ns after a kept one
  std::size_t j = 0;
  for (const auto& d : recs) {
    while (j + 1 < kept.size() && kept[j + 1].true_arrival_ns <= d.true_arrival_ns) ++j;
    const double gap = d.true_arrival_ns - kept[j].true_arrival_ns;
    CHECK((gap == 0.0 || gap < 50.0 || d.true_arrival_ns == kept[std::min(j + 1, kept.size() - 1)].true_arrival_ns));
  }
}

TEST_CASE("detection is deterministic for a seed") {
  const auto pp = small_params();
  std::vector<std::vector<Bit>> b1, b2, b3;
  const auto a = run(pp, PulseProfile::fitted(), DetectorModel{}, ClockModel{}, 2, 9, b1);
  const auto b = run(pp, PulseProfile::fitted(), DetectorModel{}, ClockModel{}, 2, 9, b2);
  const auto c = run(pp, PulseProfile::fitted(), DetectorModel{}, ClockModel{}, 2, 10, b3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].raw_time_ns == b[i].raw_time_ns);
  CHECK((a.size() != c.size() || a.front().raw_time_ns != c.front().raw_time_ns));
}

TEST_CASE("clock model and quantization") {
  ClockModel c;
  c.relative_skew = 1e-4;
  c.resolution_ns = 0.4;
  const double raw = c.to_bob(1000.0);
  CHECK(std::abs(raw - 1000.1) <= 0.2 + 1e-9);
  CHECK(std::fmod(raw / 0.4 + 1e-9, 1.0) < 1e-6);
  CHECK(residual_drift_ns(5e-5, 5e-5, 3.2e6) == doctest::Approx(0.0));
  // oracle: |(1 + s) / (1 + s_hat) - 1| * D
  CHECK(residual_drift_ns(4.9e-5, 5e-5, 3.2e6) == doctest::Approx(std::abs(1.00005 / 1.000049 - 1) * 3.2e6));
}

TEST_CASE("alignment recovers skew and offset") {
  auto pp = small_params(32000);
  pp.sequence_duration_ns = 3.2e6;
  ClockModel clk;
  clk.relative_skew = -7e-5;
  clk.offset_ns = 137.0;
  std::vector<std::vector<Bit>> bits;
  auto recs = run(pp, PulseProfile::fitted(), DetectorModel{}, clk, 10, 11, bits);
  AlignmentSearch s;
  s.offset_hint_ns = 130.0;
  const auto a = align_clock(recs, pp, s);
  CHECK(a.relative_skew == doctest::Approx(-7e-5).epsilon(0.03));
  CHECK(a.offset_ns == doctest::Approx(137.0).epsilon(0.002));
  CHECK(residual_drift_ns(a.relative_skew, clk.relative_skew, pp.sequence_duration_ns) < 0.4);
  CHECK(a.spread_ns < a.uncorrected_spread_ns);
  recs.resize(50);
  CHECK_THROWS_AS(align_clock(recs, pp, s), InsufficientStatistics);
}

TEST_CASE("qber counting on hand-built records") {
  const SlotGrid g;
  std::vector<std::vector<Bit>> bits{{Bit::zero, Bit::one, Bit::zero, Bit::one}};
  auto rec = [](std::int64_t pulse, int slot) {
    DetectionRecord r;
    r.pulse_index = pulse;
    r.slot = slot;
    return r;
  };
  // bit 0: right slot 3, wrong slot 5; slot 4 ambiguous; outside ignored
  std::vector<DetectionRecord> recs{rec(0, 3), rec(1, 5), rec(2, 5), rec(3, 4), rec(3, 0), rec(7, 3)};
  const auto q = estimate_qber(recs, bits, g);
  CHECK(q.correct == 2);
  CHECK(q.wrong == 1);
  CHECK(q.ambiguous == 1);
  CHECK(q.outside == 2);  // slot 0 and the out-of-range pulse
  CHECK(q.q == doctest::Approx(1.0 / 3));
  CHECK(q.std_error == doctest::Approx(std::sqrt(1.0 / 3 * 2.0 / 3 / 3)));
  CHECK_THROWS_AS(estimate_qber({rec(3, 4)}, bits, g), UndefinedQber);
}

TEST_CASE("noiseless pipeline reproduces the profile error rate") {
  auto pp = small_params(32000);
  pp.sequence_duration_ns = 3.2e6;
  pp.mean_photons_per_pulse = 0.5;
  DetectorModel det = DetectorModel::ideal();
  const ClockModel clk = exact_clock();
  // square pulses: no tails, no errors
  {
    std::vector<std::vector<Bit>> bits;
    ProtocolParams sq = pp;
    sq.extinction_ratio = 0.0;
    auto recs = run(sq, PulseProfile::square(20.0), det, clk, 4, 12, bits);
    AlignmentResult truth;
    truth.period_ns = sq.grid.period;
    truth.offset_ns = clk.offset_ns;
    assign_slots(recs, truth, sq);
    const auto q = estimate_qber(recs, bits, sq.grid);
    CHECK(q.wrong == 0);
    CHECK(q.correct > 10000);
    // estimated alignment only moves photons sitting on the slot edges
    assign_slots(recs, align_clock(recs, sq), sq);
    CHECK(estimate_qber(recs, bits, sq.grid).q < 0.005);
  }
  // fitted profile, floor kept at the profile level
  {
    std::vector<std::vector<Bit>> bits;
    const auto prof = PulseProfile::fitted();
    ProtocolParams fp = pp;
    fp.extinction_ratio = prof.background / prof.amplitude_peak;
    auto recs = run(fp, prof, det, clk, 6, 13, bits);
    const auto a = align_clock(recs, fp);
    assign_slots(recs, a, fp);
    const auto q = estimate_qber(recs, bits, fp.grid);
    CHECK(std::abs(q.q - profile_qber(prof, fp.grid)) < 4.0 * q.std_error);
  }
}

TEST_CASE("detections csv") {
  DetectionRecord a;
  a.sequence_index = 2;
  a.raw_time_ns = 123.5;
  a.pulse_index = 1;
  a.slot = 4;
  DetectionRecord b = a;
  b.slot = SlotGrid::outside;
  b.origin = Origin::dark;
  std::ostringstream os;
  write_detections_csv(os, {a, b});
  CHECK(os.str() == "sequence,raw_time_ns,pulse_index,slot,origin\n2,123.5,1,4,signal\n2,123.5,1,outside,dark\n");
}

TEST_CASE("parameter validation") {
  ProtocolParams p;
  p.mean_photons_per_pulse = -1;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.mean_photons_per_pulse = 2.0;
  CHECK_FALSE(p.validate().empty());
  DetectorModel d;
  d.efficiency = 1.5;
  CHECK_THROWS_AS(d.validate(), InvalidArgument);
}
