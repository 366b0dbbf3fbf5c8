#include "tcqkd/pulse.hpp"

#include <cmath>
#include <sstream>

#include "tcqkd/errors.hpp"

namespace tcqkd {

void SlotGrid::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("slot grid: " + msg); };
  if (!(slot_duration > 0)) fail("slot_duration must be positive");
  if (std::abs(pulse_duration - 2.0 * slot_duration) > 1e-9) fail("pulse_duration must be 2 x slot_duration");
  if (std::abs(bit1_delay - bit0_delay - slot_duration) > 1e-9) fail("bit1_delay - bit0_delay must equal slot_duration");
  if (!(period > pulse_duration + bit1_delay)) fail("period must exceed pulse_duration + bit1_delay");
  if (bit0_delay < 0) fail("bit0_delay must be non-negative");
}

int SlotGrid::slot_of(double t) const {
  if (t < slot_start(first_slot)) return outside;
  const int k = first_slot + static_cast<int>(std::floor((t - slot_start(first_slot)) / slot_duration));
  return k <= last_slot ? k : outside;
}

PulseProfile PulseProfile::hyper_gaussian(double sigma_ns, int order, double amplitude_peak,
                                          double background, double center_ns) {
  PulseProfile p;
  p.shape = Shape::hyper_gaussian;
  p.sigma_ns = sigma_ns;
  p.order = order;
  p.amplitude_peak = amplitude_peak;
  p.background = background;
  p.center_ns = center_ns;
  p.validate();
  return p;
}

PulseProfile PulseProfile::square(double width_ns, double center_ns) {
  PulseProfile p;
  p.shape = Shape::square;
  p.width_ns = width_ns;
  p.background = 0.0;
  p.center_ns = center_ns;
  p.validate();
  return p;
}

PulseProfile PulseProfile::fitted() {
  return hyper_gaussian(sigma_for_fwhm(measured_fwhm_ns, 4), 4, 1.0, 1e-3);
}

void PulseProfile::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("pulse profile: " + msg); };
  if (!(amplitude_peak > 0)) fail("amplitude_peak must be positive");
  if (!(background >= 0)) fail("background must be non-negative");
  if (!(window_ns > 0)) fail("normalization window must be positive");
  if (!(step_ns > 0) || step_ns > window_ns) fail("integration step must be in (0, window]");
  if (shape == Shape::hyper_gaussian) {
    if (!(sigma_ns > 0)) fail("sigma must be positive");
    if (order < 1) fail("order must be >= 1");
  } else if (!(width_ns > 0)) {
    fail("square width must be positive");
  }
}

double intensity(const PulseProfile& p, double t) {
  const double dt = t - p.center_ns;
  if (p.shape == PulseProfile::Shape::square)
    return (std::abs(dt) < 0.5 * p.width_ns ? p.amplitude_peak : 0.0) + p.background;
  const double two_n = 2.0 * p.order;
  const double e = std::pow(std::abs(dt), two_n) / (2.0 * std::pow(p.sigma_ns, two_n));
  return p.amplitude_peak * std::exp(-e) + p.background;
}

double fwhm(const PulseProfile& p) {
  if (p.shape == PulseProfile::Shape::square) return p.width_ns;
  return 2.0 * p.sigma_ns * std::pow(2.0 * std::log(2.0), 1.0 / (2.0 * p.order));
}

double sigma_for_fwhm(double fwhm_ns, int order) {
  if (!(fwhm_ns > 0) || order < 1) throw InvalidArgument("sigma_for_fwhm: need fwhm > 0 and order >= 1");
  return 0.5 * fwhm_ns / std::pow(2.0 * std::log(2.0), 1.0 / (2.0 * order));
}

double pulse_energy(const PulseProfile& p) {
  if (p.shape == PulseProfile::Shape::square) return p.amplitude_peak * p.width_ns;
  const double inv = 1.0 / (2.0 * p.order);
  // substitute u = t / (sigma 2^(1/2n)): integral of exp(-u^2n) is 2 Gamma(1 + 1/2n)
  return p.amplitude_peak * p.sigma_ns * std::pow(2.0, inv) * 2.0 * std::tgamma(1.0 + inv);
}

double SampledAmplitude::at(double t) const {
  const double x = (t - grid.start) / grid.step - 0.5;
  if (x < -0.5 || x > static_cast<double>(grid.size) - 0.5) return 0.0;
  const auto i = static_cast<Eigen::Index>(std::floor(x));
  const double f = x - static_cast<double>(i);
  const double lo = (i >= 0 && i < grid.size) ? values[i] : 0.0;
  const double hi = (i + 1 >= 0 && i + 1 < grid.size) ? values[i + 1] : 0.0;
  return lo + f * (hi - lo);
}

SampledAmplitude normalized_amplitude(const PulseProfile& p) {
  p.validate();
  SampledAmplitude out;
  out.grid = MidpointGrid<double>::covering(p.window_start(), p.window_end(), p.step_ns);
  const Eigen::ArrayXd t = out.grid.nodes();
  Eigen::ArrayXd inten = t.unaryExpr([&](double s) { return intensity(p, s); });

  const double inside = integrate(inten - p.background, out.grid.step);
  const double total = pulse_energy(p);
  if (inside < 0.999 * total) {
    std::ostringstream msg;
    msg << "normalization window of " << p.window_ns << " ns holds only " << 100.0 * inside / total
        << " % of the pulse energy (need >= 99.9 %)";
    throw InvalidArgument(msg.str());
  }
  out.values = inten.sqrt().matrix();
  out.values /= std::sqrt(out.values.squaredNorm() * out.grid.step);
  return out;
}

namespace {

double lagged_overlap(const Eigen::VectorXd& g, Eigen::Index k) {
  const Eigen::Index n = g.size();
  if (k >= n) return 0.0;
  return g.head(n - k).dot(g.tail(n - k));
}

}  // namespace

double autocorrelation(const SampledAmplitude& g, double tau) {
  const double shift = std::abs(tau) / g.grid.step;
  const auto k = static_cast<Eigen::Index>(std::floor(shift + 1e-9));
  const double frac = std::max(0.0, shift - static_cast<double>(k));
  double acc = lagged_overlap(g.values, k);
  if (frac > 1e-9) acc += frac * (lagged_overlap(g.values, k + 1) - acc);
  return acc * g.grid.step;
}

double autocorrelation(const PulseProfile& p, double tau) {
  return autocorrelation(normalized_amplitude(p), tau);
}

Eigen::Vector3d slot_energies(const PulseProfile& p, const SlotGrid& grid, Bit b) {
  const double shift = grid.delay(b) - grid.bit0_delay;
  Eigen::Vector3d e;
  for (int s = SlotGrid::first_slot; s <= SlotGrid::last_slot; ++s) {
    const double a = grid.slot_start(s);
    e[s - SlotGrid::first_slot] =
        integrate([&](double t) { return intensity(p, t - shift); }, a, a + grid.slot_duration, p.step_ns);
  }
  return e;
}

double profile_qber(const PulseProfile& p, const SlotGrid& grid) {
  p.validate();
  grid.validate();
  double q = 0.0;
  for (Bit b : {Bit::zero, Bit::one}) {
    const Eigen::Vector3d e = slot_energies(p, grid, b);
    const double right = e[grid.unambiguous_slot(b) - SlotGrid::first_slot];
    const double wrong = e[grid.wrong_slot(b) - SlotGrid::first_slot];
    q += 0.5 * wrong / (right + wrong);
  }
  return q;
}

}  // namespace tcqkd
