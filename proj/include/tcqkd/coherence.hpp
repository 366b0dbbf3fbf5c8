#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tcqkd/simulate.hpp"
#include "tcqkd/wavepacket.hpp"

namespace tcqkd {

struct InterferometerModel {
  double path_delay_ns = 10.0;
  /// Instrument-only contrast factor (mirrors, mode matching).
  double intrinsic_visibility = 0.54 / 0.576;
  /// Power transmission of the interferometer arm before the detectors.
  double insertion_transmission = 0.7;
  /// Counters are gated on the part of each period that holds signal:
  /// [bit0_delay, bit1_delay + pulse_duration + path_delay).
  bool gated = true;

  void validate(const SlotGrid& grid) const;
};

enum class Port : std::uint8_t { plus = 0, minus = 1 };

struct InterferenceOutcome {
  Port port = Port::plus;
  double time_ns = 0.0;  // period time at the output
};

/// Joint law of output port and output time for one wavepacket at a fixed
/// phase: P(port, t) = (a(t)^2 + a(t-d)^2 +- 2 V a(t) a(t-d) cos phi) / 4.
class InterferenceSampler {
 public:
  InterferenceSampler(const Wavepacket& w, const InterferometerModel& m, double phase);

  InterferenceOutcome sample(RandomStream& rng) const;
  double plus_probability() const { return p_plus_; }
  /// Probability of port plus restricted to output slot s (3..5), and of
  /// any port in that slot.
  double slot_plus(const SlotGrid& grid, int slot) const;
  double slot_total(const SlotGrid& grid, int slot) const;

 private:
  double start_ = 0.0;
  double bin_ = 1.0;
  Eigen::Index n_ = 0;
  Eigen::VectorXd plus_, minus_;  // per output bin
  BinnedSampler sampler_;
  double p_plus_ = 0.5;
};

InterferenceOutcome interfere(const Wavepacket& w, const InterferometerModel& m, double phase, RandomStream& rng);

struct SequenceContrast {
  double c = 0.0;
  std::uint64_t n_plus = 0;
  std::uint64_t n_minus = 0;
  double phase_truth = 0.0;
};

/// Throws NoData for an empty sequence.
SequenceContrast sequence_contrast(std::uint64_t n_plus, std::uint64_t n_minus, double phase_truth = 0.0);

struct CoherenceEstimate {
  double gamma_0 = 0.0;
  double sigma_T = 0.0;
  double gamma_floor = 0.0;  // gamma_0 - 3 sigma_T
  double sigma2 = 0.0;       // 1 / N_p
  double sigma_T2 = 0.0;
  double c2_bar = 0.0;       // variance of the centered contrasts
  double n_p = 0.0;
  std::size_t n_s = 0;
  bool noise_dominated = false;
  std::vector<std::string> warnings;
};

/// Moment estimator gamma_0^2 = 2 (C2_bar - 1/N_p) with sigma_T^2 = 2/(N_p N_s).
CoherenceEstimate estimate_gamma(const std::vector<SequenceContrast>& contrasts, double n_p);
/// Same, with N_p taken as the mean count per sequence.
CoherenceEstimate estimate_gamma(const std::vector<SequenceContrast>& contrasts);
/// From already reduced statistics.
CoherenceEstimate estimate_gamma_from_stats(std::size_t n_s, double n_p, double c2_bar);

double gamma_floor(const CoherenceEstimate& e, double k);

/// Delta = (gamma_th - gamma_exp) / gamma_th.
double coherence_loss(double gamma_th, double gamma_exp);

/// Sequences drawn from the Gaussian-limit model: uniform phase, Poisson
/// photon number with mean n_p, binomial port split at (1 + gamma cos phi)/2.
/// A fixed phase replaces the uniform draw when `fixed_phase` is set.
std::vector<SequenceContrast> synthetic_contrasts(double gamma, std::size_t n_s, double n_p, RandomStream& rng,
                                                  const double* fixed_phase = nullptr);

/// Interferometer arm of one sequence: every photon interferes at the
/// sequence phase and is counted at its port detector.
std::vector<DetectionRecord> detect_interferometer_arm(const EmissionBatch& batch, double route,
                                                       const DetectorModel& det, const ClockModel& clock,
                                                       const InterferometerModel& model, double phase,
                                                       const ProtocolParams& params, RandomStream& rng);

SequenceContrast contrast_of(const std::vector<DetectionRecord>& interferometer_records, double phase_truth);

void write_contrasts_csv(std::ostream& os, const std::vector<SequenceContrast>& contrasts);
std::vector<SequenceContrast> read_contrasts_csv(std::istream& is);

}  // namespace tcqkd
