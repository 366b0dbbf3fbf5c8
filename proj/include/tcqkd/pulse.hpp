#pragma once

#include <Eigen/Core>

#include "tcqkd/quadrature.hpp"

namespace tcqkd {

enum class Bit { zero = 0, one = 1 };

inline int bit_value(Bit b) { return static_cast<int>(b); }

/// Timing of one pulse period. Times in ns, measured from the start of
/// the period; slots are labeled 3, 4, 5 and slot 3 starts at bit0_delay.
struct SlotGrid {
  double slot_duration = 10.0;
  double pulse_duration = 20.0;
  double period = 100.0;
  double bit0_delay = 0.0;
  double bit1_delay = 10.0;

  static constexpr int first_slot = 3;
  static constexpr int last_slot = 5;
  static constexpr int outside = 0;

  void validate() const;

  double delay(Bit b) const { return b == Bit::zero ? bit0_delay : bit1_delay; }
  double slot_start(int slot) const { return bit0_delay + (slot - first_slot) * slot_duration; }
  /// Pulse center for a given bit (the pulse begins at its delay).
  double pulse_center(Bit b) const { return delay(b) + 0.5 * pulse_duration; }
  /// Slot label 3..5 of a time within the period, or `outside`.
  int slot_of(double t_in_period) const;
  /// Slot that carries energy only for the given bit.
  int unambiguous_slot(Bit b) const { return b == Bit::zero ? first_slot : last_slot; }
  int wrong_slot(Bit b) const { return b == Bit::zero ? last_slot : first_slot; }
};

/// Temporal intensity of Alice's pulse, hyper-Gaussian I_A exp(-t^2n / 2 sigma^2n) + I_B or an
/// ideal square. `center_ns` is the bit-0 pulse center in period time.
struct PulseProfile {
  enum class Shape { hyper_gaussian, square };

  Shape shape = Shape::hyper_gaussian;
  double amplitude_peak = 1.0;  // I_A
  double background = 1e-3;     // I_B
  double sigma_ns = 9.6;
  int order = 4;
  double width_ns = 20.0;  // square only
  double center_ns = 10.0;
  double window_ns = 100.0;
  double step_ns = 0.01;

  static PulseProfile hyper_gaussian(double sigma_ns, int order, double amplitude_peak = 1.0,
                                     double background = 1e-3, double center_ns = 10.0);
  static PulseProfile square(double width_ns, double center_ns = 10.0);
  /// Hyper-Gaussian matching the measured pulses: FWHM 18.7 ns, n = 4,
  /// I_B/I_A = 1e-3.
  static PulseProfile fitted();

  static constexpr double measured_fwhm_ns = 18.7;

  void validate() const;
  double window_start() const { return center_ns - 0.5 * window_ns; }
  double window_end() const { return center_ns + 0.5 * window_ns; }
};

double intensity(const PulseProfile& p, double t_ns);

/// Full width at half maximum of the pulse term (background excluded).
double fwhm(const PulseProfile& p);
/// Sigma of the hyper-Gaussian form that yields the given FWHM at order n.
double sigma_for_fwhm(double fwhm_ns, int order);

/// Integral of the pulse term over the whole real line.
double pulse_energy(const PulseProfile& p);

/// g(t) sampled at midpoints of the normalization window, with
/// sum(g^2) * step = 1.
struct SampledAmplitude {
  MidpointGrid<double> grid;
  Eigen::VectorXd values;

  double at(double t_ns) const;
};

/// Throws InvalidArgument when the window holds < 99.9 % of the pulse energy.
SampledAmplitude normalized_amplitude(const PulseProfile& p);

double autocorrelation(const SampledAmplitude& g, double tau_ns);
double autocorrelation(const PulseProfile& p, double tau_ns);

/// Energy of a bit pulse in each slot 3, 4, 5.
Eigen::Vector3d slot_energies(const PulseProfile& p, const SlotGrid& grid, Bit b);

/// Error rate due to pulse tails alone, averaged over both bits.
double profile_qber(const PulseProfile& p, const SlotGrid& grid);

}  // namespace tcqkd
