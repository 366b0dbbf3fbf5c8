#pragma once

#include <Eigen/Core>
#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <type_traits>
#include <vector>

namespace tcqkd {

inline constexpr int ancilla_dimension = 9;

template <typename Scalar>
inline constexpr bool is_complex_v = !std::is_same_v<Scalar, typename Eigen::NumTraits<Scalar>::Real>;

/// Eve's coupling of each slot state to a 9-dim ancilla:
///   |j>  ->  sum_o |j + o - 1> (x) e.col(3 (j - 3) + o),   j = 3, 4, 5, o = 0, 1, 2.
template <typename Scalar = double>
struct EveCoupling {
  using Matrix9 = Eigen::Matrix<Scalar, ancilla_dimension, ancilla_dimension>;
  using Isometry = Eigen::Matrix<Scalar, 5 * ancilla_dimension, 3>;

  Matrix9 e = Matrix9::Zero();

  /// Eve leaves the photon alone.
  static EveCoupling identity();
  /// Measure the slot, resend sqrt(x/2)|j-1> + sqrt(1-x)|j> + sqrt(x/2)|j+1>,
  /// keep the slot in the ancilla. With intercept fraction m the rest is
  /// passed untouched.
  static EveCoupling product_resend(double x, double m = 1.0);
  /// |j> -> (|j-1>|a_j> + |j+1>|b_j>)/sqrt(2) with orthogonal records.
  static EveCoupling randomizing();

  Isometry isometry() const;
  static EveCoupling from_isometry(const Isometry& v);
  Eigen::Matrix<Scalar, 3, 3> gram() const;
  /// max |V^H V - I|.
  double isometry_residual() const;
};

/// Eve's states conditioned on Alice's bit, restricted to pulses Bob
/// validated.
template <typename Scalar = double>
struct ConditionalEnsemble {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::array<double, 2> prior{0.5, 0.5};
  std::array<Matrix, 2> rho;
};

enum class InformationMeasure {
  helstrom,      // mutual information of the two-outcome minimum-error measurement
  holevo,        // Holevo quantity, an upper envelope
  fine_grained,  // full projective measurement in the eigenbasis of p0 rho0 - p1 rho1
};

const char* measure_name(InformationMeasure m);
InformationMeasure parse_measure(const std::string& s);

/// Throws InvalidArgument unless both states are density operators
/// (unit trace, Hermitian, positive semidefinite, tolerance 1e-8).
template <typename Scalar>
double eve_information(const ConditionalEnsemble<Scalar>& ens, InformationMeasure measure);

template <typename Scalar = double>
struct EntangledOutcome {
  double q = 0.0;
  double validation = 0.0;  // both bits together; 1 without attack
  double contrast = 0.0;    // improved-protocol selected contrast
  std::array<Eigen::Matrix<double, 5, 1>, 2> bob_slots;  // slots 2..6 per bit
  ConditionalEnsemble<Scalar> eve;
};

/// Throws InvalidArgument if the coupling is not an isometry (1e-8).
template <typename Scalar>
EntangledOutcome<Scalar> simulate_entangled_attack(const EveCoupling<Scalar>& c);

/// Fast route used by the optimizer: Eve's information from the
/// validated ancilla vectors, without forming 9x9 density operators.
template <typename Scalar>
double information_from_coupling(const EveCoupling<Scalar>& c, InformationMeasure measure);

struct OptimizerConfig {
  int starts = 24;
  int outer_iterations = 30;
  int inner_iterations = 200;
  double start_noise = 0.3;
  double q_tolerance = 1e-4;
  /// Hold Bob's validation rate at its unattacked value.
  bool fix_validation = true;
  bool complex_mode = false;
  /// Impose the slot-3/slot-5 mirror symmetry, roughly halving the
  /// parameters.
  bool symmetry_reduction = false;
  InformationMeasure measure = InformationMeasure::helstrom;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct EntanglingCurvePoint {
  double q = 0.0;
  double delta = 0.0;
  bool feasible = false;
  double i_ae = 0.0;  // under the configured measure
  double i_ae_holevo = 0.0;
  double i_ae_helstrom = 0.0;
  double i_ae_fine = 0.0;
  double contrast = 0.0;
  double validation = 0.0;
  double isometry_residual = 0.0;
  double q_residual = 0.0;
  int feasible_starts = 0;
  int starts = 0;
  long evaluations = 0;
  bool complex_mode = false;
  Eigen::VectorXd parameters;  // best start, optimizer layout
  EveCoupling<double> best;    // set in real mode only
};

EntanglingCurvePoint optimize_point(double q, double delta, const OptimizerConfig& cfg, std::uint64_t point_seed);

std::vector<EntanglingCurvePoint> optimize_curve(const std::vector<double>& q_grid, double delta,
                                                 const OptimizerConfig& cfg);

}  // namespace tcqkd
