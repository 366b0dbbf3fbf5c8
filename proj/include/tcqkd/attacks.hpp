#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "tcqkd/coherence.hpp"
#include "tcqkd/simulate.hpp"

namespace tcqkd {

struct NoAttack {};

/// Eve detects slot j. After an unambiguous detection she resends
/// sqrt(1-y)|j> + sqrt(y)|4>; after a slot-4 detection she resends
/// sqrt(1-z)|4> + sqrt(z)|j'> with j' = 3 w.p. slot4_lower_prob. The
/// plain two-slot attack (bit states resent) is y = z = 1/2.
struct TwoSlot {
  double m = 1.0;
  double slot4_lower_prob = 0.5;
  double unambiguous_split = 0.5;  // y
  double ambiguous_split = 0.5;    // z
};

/// Eve resends sqrt(x/2)|j-1> + sqrt(1-x)|j> + sqrt(x/2)|j+1>.
struct MaxCoherence {
  double m = 1.0;
  double x = 2.0 / 3.0;
};

/// Isometry from the three slot states to slots 2..6 (x) a 9-dim ancilla:
/// column j-3 holds the image of |j>, row (s-2)*9 + a the slot s, ancilla a.
struct Entangling {
  Eigen::MatrixXd isometry;  // 45 x 3
};

using AttackStrategy = std::variant<NoAttack, TwoSlot, MaxCoherence, Entangling>;

const char* attack_name(const AttackStrategy& a);
void validate(const AttackStrategy& a);

/// Amplitudes over (j-1, j, j+1) of the max-coherence resend.
struct ResentState {
  Eigen::Vector3d amplitudes;

  static ResentState max_coherence(double x);
  double autocorrelation() const { return amplitudes[0] * amplitudes[1] + amplitudes[1] * amplitudes[2]; }
};

struct AttackOutcome {
  double q = 0.0;
  double i_ae = 0.0;
  double contrast = 0.0;
  double validation_probability = 0.0;
  double m = 0.0;
};

AttackOutcome max_coherence_analytic(double m, double x);

enum class CapPolicy {
  cap,    // use m = 1 where the closed-form root implies m > 1
  raise,  // throw ConstraintViolation instead
};

/// Eve's information for the max-coherence attack at (Q, Delta).
double iae_max_coherence(double q, double delta, CapPolicy policy = CapPolicy::cap);

/// Improved protocol, Delta = 0.
double iae_improved(double q);
double improved_coherence(double x);

/// Contrast measured by the improved protocol when a fraction m of square
/// pulses is replaced by the max-coherence resend.
double improved_contrast(double m, double x);

/// Best max-coherence intercept-resend against the improved protocol at
/// (Q, Delta); Delta = 0 reduces to iae_improved.
AttackOutcome improved_intercept_resend(double q, double delta);

AttackOutcome two_slot_analytic(const TwoSlot& s);

/// Numerical maximization over the (y, z) family at fixed Q under the
/// raw-contrast constraint C >= (1 - Delta)/2. Throws ConstraintViolation
/// when no member reaches Q.
struct TwoSlotSearch {
  AttackOutcome best;
  TwoSlot strategy;
  int evaluations = 0;
};
TwoSlotSearch two_slot_best(double q, double delta, int grid = 201);

/// What Eve saw on one pulse she intercepted.
struct EveObservation {
  std::uint32_t pulse = 0;
  int slot = SlotGrid::outside;
  int choice = 0;  // which resend branch she took
};

/// Photon-level attack on an emission batch: each non-empty pulse is
/// intercepted with probability m and its photons replaced by one resent
/// photon. The entangling attack replaces every photon by a draw from an
/// eigen-component of Bob's reduced state.
std::vector<EveObservation> apply_intercept_resend(EmissionBatch& batch, const AttackStrategy& strategy,
                                                   const SlotGrid& grid, RandomStream& rng);

struct InterferometerDetection {
  std::uint32_t pulse = 0;
  Port port = Port::plus;
  int slot = SlotGrid::outside;  // output slot
};

/// Improved-protocol selection: bit 0 keeps slot 4, bit 1 keeps slot 5.
std::vector<InterferometerDetection> improved_contrast_selection(const std::vector<InterferometerDetection>& records,
                                                                 const std::vector<Bit>& bits);

double contrast(const std::vector<InterferometerDetection>& records);

struct MonteCarloOutcome {
  AttackOutcome mean;
  AttackOutcome std_error;
  double improved_contrast = 0.0;
  double improved_contrast_error = 0.0;
  std::uint64_t pulses = 0;
};

/// Single-photon source, square pulses, ideal detectors, phase 0, unit
/// visibility. Every pulse is scored both in the key arm and in the
/// interferometer (two independent draws from the same state), so each
/// marginal uses all pulses. Errors are batch-means standard errors.
MonteCarloOutcome evaluate_attack_mc(const AttackStrategy& strategy, std::uint64_t pulses, std::uint64_t seed);

/// Bob's reduced density over slots 2..6 for a bit under an isometry.
Eigen::MatrixXd bob_density(const Eigen::MatrixXd& isometry, Bit b);

void write_outcomes_csv(std::ostream& os, const std::vector<AttackOutcome>& rows, const std::vector<double>& x);

}  // namespace tcqkd
