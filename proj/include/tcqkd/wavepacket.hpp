#pragma once

#include <Eigen/Core>
#include <vector>

#include "tcqkd/pulse.hpp"
#include "tcqkd/rng.hpp"

namespace tcqkd {

/// Inverse-CDF sampler over equal-width bins; uniform within a bin.
class BinnedSampler {
 public:
  BinnedSampler() = default;
  BinnedSampler(double start_ns, double bin_ns, const Eigen::VectorXd& weights);

  Eigen::Index sample_bin(RandomStream& rng) const;
  double sample(RandomStream& rng) const;
  bool empty() const { return cdf_.empty(); }

 private:
  double start_ = 0.0;
  double bin_ = 1.0;
  std::vector<double> cdf_;
};

/// Single-photon temporal mode with piecewise-constant real amplitude on
/// period time. Normalized so that sum(a^2) * bin = 1.
struct Wavepacket {
  double start_ns = 0.0;
  double bin_ns = 1.0;
  Eigen::VectorXd amplitude;

  Eigen::Index size() const { return amplitude.size(); }
  double end_ns() const { return start_ns + bin_ns * static_cast<double>(size()); }
  double time_of(Eigen::Index bin) const { return start_ns + bin_ns * static_cast<double>(bin); }

  /// Alice's pulse for a bit, `bins` bins over the normalization window.
  static Wavepacket from_profile(const PulseProfile& p, const SlotGrid& grid, Bit b, int bins = 1000);
  /// Superposition of square slot states; `amps[i]` belongs to slot
  /// `first_label + i` (labels as in SlotGrid, may extend past 3..5).
  static Wavepacket slot_state(const SlotGrid& grid, int first_label, const Eigen::VectorXd& amps);

  /// Probability of each slot 3, 4, 5 (anything else is outside).
  Eigen::Vector3d slot_probabilities(const SlotGrid& grid) const;
  /// Overlap with the copy delayed by `delay_ns`, which must be a whole
  /// number of bins.
  double overlap(double delay_ns) const;
  Eigen::Index bins_for(double delay_ns) const;
  BinnedSampler time_sampler() const;
};

}  // namespace tcqkd
