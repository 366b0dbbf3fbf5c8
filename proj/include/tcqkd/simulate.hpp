#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tcqkd/pulse.hpp"
#include "tcqkd/rng.hpp"
#include "tcqkd/wavepacket.hpp"

namespace tcqkd {

// Times are in ns throughout; rates are kept in events per second as in
// the configuration and converted where used.

struct ProtocolParams {
  enum class Source { poisson, single_photon };

  SlotGrid grid;
  double mean_photons_per_pulse = 0.1;
  std::uint32_t pulses_per_sequence = 32000;
  double sequence_duration_ns = 3.2e6;
  double inter_sequence_gap_ns = 5e6;
  double extinction_ratio = 1e-3;
  Source source = Source::poisson;

  /// Throws on violated invariants; returns soft warnings.
  std::vector<std::string> validate() const;
};

struct DetectorModel {
  double efficiency = 0.5;
  double dead_time_ns = 50.0;
  double jitter_sigma_ns = 0.35;
  double dark_rate_per_s = 110.0;
  double parasitic_rate_per_s = 1000.0;
  double filter_transmission = 0.5;

  /// Unit efficiency, no noise, no jitter, no dead time.
  static DetectorModel ideal();
  void validate() const;
};

struct ClockModel {
  double relative_skew = 5e-5;
  double offset_ns = 120.0;
  /// Time-tag quantization of Bob's recorder; 0 disables it.
  double resolution_ns = 0.4;

  void validate() const;
  double to_bob(double arrival_ns) const;
};

enum class Origin : std::uint8_t { signal, background, resent, dark, parasitic };

const char* origin_name(Origin o);

inline constexpr std::uint32_t no_packet = 0xffffffffu;

struct Photon {
  double time_ns = 0.0;  // Alice frame, from the start of the sequence
  std::uint32_t pulse = 0;
  std::uint32_t packet = no_packet;  // index into EmissionBatch::packets
  Origin origin = Origin::signal;
};

struct EmissionBatch {
  std::uint32_t sequence = 0;
  std::vector<Bit> bits;
  std::vector<Wavepacket> packets;  // [0] bit 0, [1] bit 1, then resent states
  std::vector<Photon> photons;      // time-sorted

  void sort();
};

std::vector<Bit> random_bits(std::size_t n, RandomStream& rng);

/// Alice's faint-pulse source for one sequence. Each pulse is a coherent
/// mode made of the profile's pulse term plus the modulator floor at
/// `extinction_ratio` of the peak across the window; the photon count is
/// Poisson with mean mu for the pulse term, floor photons are tagged
/// `background`. The single-photon source emits exactly one pulse photon.
EmissionBatch emit_sequence(const std::vector<Bit>& bits, const ProtocolParams& params,
                            const PulseProfile& profile, RandomStream& rng);

/// Independent thinning of the photons.
void apply_channel(EmissionBatch& batch, double transmission, RandomStream& rng);

struct SplitBatch {
  EmissionBatch key;
  EmissionBatch interferometer;
};

/// Bob's 50/50 beamsplitter.
SplitBatch route_beamsplitter(const EmissionBatch& batch, RandomStream& rng);

struct DetectionRecord {
  std::uint32_t sequence_index = 0;
  double raw_time_ns = 0.0;     // Bob's clock, from the sequence trigger
  std::int64_t pulse_index = -1;  // set by alignment
  int slot = SlotGrid::outside;   // set by alignment
  Origin origin = Origin::signal;  // simulation truth
  double true_arrival_ns = 0.0;    // simulation truth, Alice frame
  std::uint32_t packet = no_packet;
  std::int8_t port = -1;  // interferometer arm only: 0 plus, 1 minus
};

/// Detection with routing probability `route` into this arm. Noise is
/// drawn over the acquisition window [0, offset + sequence duration).
std::vector<DetectionRecord> detect_arm(const EmissionBatch& batch, double route, const DetectorModel& det,
                                        const ClockModel& clock, const ProtocolParams& params,
                                        RandomStream& rng);

/// The key arm behind a fair beamsplitter.
std::vector<DetectionRecord> detect_key_arm(const EmissionBatch& batch, const DetectorModel& det,
                                            const ClockModel& clock, const ProtocolParams& params,
                                            RandomStream& rng);

/// Non-paralyzable dead time on time-sorted records.
void apply_dead_time(std::vector<DetectionRecord>& sorted, double dead_time_ns);

struct AlignmentSearch {
  double relative_range = 2e-4;
  int coarse_steps = 41;
  int golden_iterations = 60;
  bool likelihood_polish = true;
  /// Rough propagation delay used to resolve the one-period ambiguity.
  double offset_hint_ns = 120.0;
  /// Edge smoothing of the nominal square template, ns.
  double template_edge_ns = 1.0;
};

struct AlignmentResult {
  double period_ns = 100.0;  // in Bob's clock
  double relative_skew = 0.0;
  double offset_ns = 0.0;  // Alice frame
  double spread_ns = 0.0;  // inter-quartile range of the folded times
  double uncorrected_spread_ns = 0.0;
  std::size_t records_used = 0;
};

AlignmentResult align_clock(const std::vector<DetectionRecord>& records, const ProtocolParams& params,
                            const AlignmentSearch& search = {});

/// Estimated Alice-frame time of a raw Bob time.
double aligned_time(const AlignmentResult& a, double raw_ns);

/// Sets pulse_index and slot of each record from the alignment.
void assign_slots(std::vector<DetectionRecord>& records, const AlignmentResult& a, const ProtocolParams& params);

/// Drift of the residual timing error across a sequence of the given
/// length, i.e. how far apart the same slot lands at start and end.
double residual_drift_ns(double estimated_skew, double true_skew, double duration_ns);

struct QberEstimate {
  double q = 0.0;
  double std_error = 0.0;
  std::uint64_t correct = 0;
  std::uint64_t wrong = 0;
  std::uint64_t ambiguous = 0;
  std::uint64_t outside = 0;
  std::uint64_t slot_counts[3] = {0, 0, 0};
};

/// `bits[s]` are the bits of sequence s. Throws UndefinedQber without
/// unambiguous detections.
QberEstimate estimate_qber(const std::vector<DetectionRecord>& records, const std::vector<std::vector<Bit>>& bits,
                           const SlotGrid& grid);

void write_detections_csv(std::ostream& os, const std::vector<DetectionRecord>& records);

}  // namespace tcqkd
