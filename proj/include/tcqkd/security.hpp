#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tcqkd/simulate.hpp"

namespace tcqkd {

double binary_entropy(double p);

/// Bob's information per sifted bit over a binary symmetric channel.
double i_ab(double q);

enum class AttackKind { two_slot, max_coherence, improved_intercept_resend, entangling };

const char* attack_kind_name(AttackKind k);
AttackKind parse_attack_kind(const std::string& s);

/// I_AE(Q) at a fixed coherence loss.
struct InformationCurve {
  AttackKind kind = AttackKind::max_coherence;
  double delta = 0.0;
  std::function<double(double)> i_ae;
};

/// Built-in analytic or searched curves; the entangling curve comes from
/// a tabulation (see tabulated_curve).
InformationCurve attack_curve(AttackKind kind, double delta);

/// Piecewise-linear curve through (q, i_ae) samples sorted by q.
InformationCurve tabulated_curve(AttackKind kind, double delta, std::vector<double> q, std::vector<double> i_ae);

struct MaxQberOptions {
  double q_lo = 1e-4;
  double q_hi = 0.4999;
  double scan_step = 1e-3;
  double tolerance = 1e-7;
};

/// Smallest Q where I_AB(Q) = I_AE(Q). Throws NoCrossing when the sign of
/// I_AB - I_AE never changes on the bracket.
double max_qber(const InformationCurve& curve, const MaxQberOptions& opt = {});

double advantage(double q, const InformationCurve& curve);

struct NoiseBudget {
  double dark = 0.0;
  double parasitic = 0.0;
  double signal = 0.0;
  double extinction_background = 0.0;
};

NoiseBudget noise_budget(const DetectorModel& det, const ProtocolParams& params, double signal_per_slot);

struct RangeEstimate {
  double allowed_attenuation = 1.0;
  double allowed_attenuation_db = 0.0;
  double range_km = 0.0;
  double fiber_loss_db_per_km = 0.0;
  bool secure = false;
};

/// QBER is taken inversely proportional to line transmission at constant
/// absolute noise.
RangeEstimate range_estimate(double q_measured, double q_max, double fiber_loss_db_per_km);

struct CurveSample {
  double q = 0.0;
  double i_ab = 0.0;
  double i_ae = 0.0;
};

struct SecurityCurve {
  AttackKind kind = AttackKind::max_coherence;
  double delta = 0.0;
  std::vector<CurveSample> samples;
  double q_max = 0.0;
  bool has_q_max = false;
};

SecurityCurve sample_curve(const InformationCurve& curve, const std::vector<double>& q_grid);

void write_curve_csv(std::ostream& os, const SecurityCurve& c);

}  // namespace tcqkd
