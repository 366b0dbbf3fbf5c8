#include "tcqkd/wavepacket.hpp"

#include <algorithm>
#include <cmath>

#include "tcqkd/errors.hpp"

namespace tcqkd {

BinnedSampler::BinnedSampler(double start_ns, double bin_ns, const Eigen::VectorXd& weights)
    : start_(start_ns), bin_(bin_ns) {
  cdf_.resize(static_cast<std::size_t>(weights.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0) throw InvalidArgument("sampler weights must be non-negative");
    acc += weights[i];
    cdf_[static_cast<std::size_t>(i)] = acc;
  }
  if (!(acc > 0)) {
    cdf_.clear();
    return;
  }
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

Eigen::Index BinnedSampler::sample_bin(RandomStream& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<Eigen::Index>(std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
}

double BinnedSampler::sample(RandomStream& rng) const {
  const Eigen::Index i = sample_bin(rng);
  return start_ + bin_ * (static_cast<double>(i) + rng.uniform());
}

Wavepacket Wavepacket::from_profile(const PulseProfile& p, const SlotGrid& grid, Bit b, int bins) {
  if (bins < 1) throw InvalidArgument("wavepacket needs at least one bin");
  p.validate();
  Wavepacket w;
  const double shift = grid.delay(b) - grid.bit0_delay;
  w.start_ns = p.window_start() + shift;
  w.bin_ns = p.window_ns / bins;
  w.amplitude.resize(bins);
  for (int i = 0; i < bins; ++i) {
    const double a = p.window_start() + w.bin_ns * i;
    const double mean_i = integrate([&](double t) { return intensity(p, t); }, a, a + w.bin_ns, p.step_ns) / w.bin_ns;
    w.amplitude[i] = std::sqrt(mean_i);
  }
  w.amplitude /= std::sqrt(w.amplitude.squaredNorm() * w.bin_ns);
  return w;
}

Wavepacket Wavepacket::slot_state(const SlotGrid& grid, int first_label, const Eigen::VectorXd& amps) {
  const double norm = amps.squaredNorm();
  if (!(norm > 0)) throw InvalidArgument("slot state has zero norm");
  Wavepacket w;
  w.start_ns = grid.slot_start(first_label);
  w.bin_ns = grid.slot_duration;
  w.amplitude = amps / std::sqrt(norm * grid.slot_duration);
  return w;
}

Eigen::Vector3d Wavepacket::slot_probabilities(const SlotGrid& grid) const {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < size(); ++i) {
    const double w = amplitude[i] * amplitude[i] * bin_ns;
    // spread the bin over the slots it straddles
    const double a = time_of(i), b = a + bin_ns;
    for (int s = SlotGrid::first_slot; s <= SlotGrid::last_slot; ++s) {
      const double lo = std::max(a, grid.slot_start(s));
      const double hi = std::min(b, grid.slot_start(s) + grid.slot_duration);
      if (hi > lo) p[s - SlotGrid::first_slot] += w * (hi - lo) / bin_ns;
    }
  }
  return p;
}

Eigen::Index Wavepacket::bins_for(double delay_ns) const {
  const double k = delay_ns / bin_ns;
  const double r = std::round(k);
  if (std::abs(k - r) > 1e-6) throw InvalidArgument("delay is not a whole number of wavepacket bins");
  return static_cast<Eigen::Index>(r);
}

double Wavepacket::overlap(double delay_ns) const {
  const Eigen::Index k = std::abs(bins_for(delay_ns));
  if (k >= size()) return 0.0;
  return amplitude.head(size() - k).dot(amplitude.tail(size() - k)) * bin_ns;
}

BinnedSampler Wavepacket::time_sampler() const {
  return BinnedSampler(start_ns, bin_ns, amplitude.array().square().matrix());
}

}  // namespace tcqkd
