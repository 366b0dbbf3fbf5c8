#include <doctest.h>

#include <cmath>
#include <complex>

#include <Eigen/QR>

#include "tcqkd/attacks.hpp"
#include "tcqkd/entangle.hpp"
#include "tcqkd/errors.hpp"
#include "tcqkd/rng.hpp"

using namespace tcqkd;
using cd = std::complex<double>;

namespace {

// columns of a unitary scaled by 1/sqrt(3) always form an isometry
template <typename S>
EveCoupling<S> random_coupling(RandomStream& r) {
  using M = typename EveCoupling<S>::Matrix9;
  M a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      if constexpr (is_complex_v<S>)
        a(i, j) = S(r.normal(), r.normal());
      else
        a(i, j) = r.normal();
    }
  Eigen::HouseholderQR<M> qr(a);
  EveCoupling<S> c;
  c.e = M(qr.householderQ()) / std::sqrt(3.0);
  return c;
}

}  // namespace

TEST_CASE("reference couplings") {
  const auto id = simulate_entangled_attack(EveCoupling<double>::identity());
  CHECK(id.q == doctest::Approx(0.0));
  CHECK(id.validation == doctest::Approx(1.0));
  CHECK(id.contrast == doctest::Approx(1.0));
  CHECK(information_from_coupling(EveCoupling<double>::identity(), InformationMeasure::holevo) ==
        doctest::Approx(0.0));

  const auto rnd = simulate_entangled_attack(EveCoupling<double>::randomizing());
  CHECK(rnd.q == doctest::Approx(0.5));
  CHECK(rnd.contrast == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(information_from_coupling(EveCoupling<double>::randomizing(), InformationMeasure::holevo) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("product resend reproduces the intercept-resend statistics") {
  for (double m : {0.3, 1.0})
    for (double x : {0.2, 2.0 / 3, 0.9}) {
      const auto c = EveCoupling<double>::product_resend(x, m);
      CHECK(c.isometry_residual() < 1e-12);
      const auto o = simulate_entangled_attack(c);
      CHECK(o.q == doctest::Approx(0.5 * m * x));
      CHECK(o.validation == doctest::Approx(1.0));
      CHECK(o.contrast == doctest::Approx(improved_contrast(m, x)));
    }
  const auto full = EveCoupling<double>::product_resend(2.0 / 3);
  CHECK(simulate_entangled_attack(full).contrast == doctest::Approx(1.0));
  // the coherent ancilla record is worth more than a classical slot reading
  CHECK(information_from_coupling(full, InformationMeasure::helstrom) > 1.0 / 3 - 0.1);
}

TEST_CASE("isometry round trip and residual") {
  RandomStream r(5);
  const auto c = random_coupling<double>(r);
  CHECK(c.isometry_residual() < 1e-12);
  const auto back = EveCoupling<double>::from_isometry(c.isometry());
  CHECK((back.e - c.e).norm() == doctest::Approx(0.0));
  CHECK((c.gram() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  auto bad = c;
  bad.e *= 1.1;
  CHECK(bad.isometry_residual() > 0.1);
  CHECK_THROWS_AS(simulate_entangled_attack(bad), InvalidArgument);
}

TEST_CASE_TEMPLATE("matrix and factor routes agree", S, double, cd) {
  RandomStream r(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_coupling<S>(r);
    const auto o = simulate_entangled_attack(c);
    double prev = 0.0;
    for (auto m : {InformationMeasure::helstrom, InformationMeasure::fine_grained, InformationMeasure::holevo}) {
      const double a = eve_information(o.eve, m);
      const double b = information_from_coupling(c, m);
      CHECK(a == doctest::Approx(b).epsilon(1e-8));
      CHECK(a >= -1e-12);
      CHECK(a <= 1.0 + 1e-12);
      // Helstrom <= fine-grained <= Holevo
      CHECK(a >= prev - 1e-9);
      prev = a;
    }
    CHECK(o.eve.prior[0] + o.eve.prior[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("ensembles are validated") {
  ConditionalEnsemble<double> ens;
  ens.rho[0] = Eigen::MatrixXd::Identity(2, 2) * 0.5;
  ens.rho[1] = Eigen::MatrixXd::Identity(2, 2) * 0.5;
  CHECK(eve_information(ens, InformationMeasure::holevo) == doctest::Approx(0.0));
  ens.rho[1] = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(eve_information(ens, InformationMeasure::holevo), InvalidArgument);
  ens.rho[1] = Eigen::MatrixXd{{1.5, 0.0}, {0.0, -0.5}};
  CHECK_THROWS_AS(eve_information(ens, InformationMeasure::helstrom), InvalidArgument);
  ens.rho[1] = Eigen::MatrixXd{{1.0, 0.0}, {0.0, 0.0}};
  ens.rho[0] = Eigen::MatrixXd{{0.0, 0.0}, {0.0, 1.0}};
  CHECK(eve_information(ens, InformationMeasure::helstrom) == doctest::Approx(1.0));
  CHECK(parse_measure("holevo") == InformationMeasure::holevo);
  CHECK_THROWS_AS(parse_measure("x"), InvalidArgument);
}

TEST_CASE("optimizer finds a feasible coupling that beats intercept-resend") {
  OptimizerConfig oc;
  oc.starts = 3;
  const double q = 0.1;
  const auto p = optimize_point(q, 0.0, oc, 77);
  REQUIRE(p.feasible);
  CHECK(p.q_residual < oc.q_tolerance);
  CHECK(p.isometry_residual < 1e-8);
  CHECK(p.contrast >= 1.0 - 1e-9);
  CHECK(p.validation == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(p.i_ae == p.i_ae_helstrom);
  CHECK(p.i_ae >= improved_intercept_resend(q, 0.0).i_ae);
  CHECK(p.i_ae_holevo >= p.i_ae_helstrom - 1e-9);
  // the reported coupling is the one scored
  const auto o = simulate_entangled_attack(p.best);
  CHECK(o.q == doctest::Approx(q).epsilon(1e-3));
  CHECK(information_from_coupling(p.best, InformationMeasure::helstrom) == doctest::Approx(p.i_ae));

  SUBCASE("deterministic and independent of jobs") {
    auto oc2 = oc;
    oc2.jobs = 2;
    const auto a = optimize_point(q, 0.0, oc2, 77);
    CHECK(a.i_ae == p.i_ae);
    CHECK(a.parameters == p.parameters);
    CHECK(a.evaluations == p.evaluations);
    CHECK(optimize_point(q, 0.0, oc, 78).parameters != p.parameters);
  }
}

TEST_CASE("optimizer variants") {
  OptimizerConfig oc;
  oc.starts = 2;
  SUBCASE("symmetry reduction") {
    oc.symmetry_reduction = true;
    const auto p = optimize_point(0.08, 0.0, oc, 3);
    CHECK(p.feasible);
    CHECK(p.best.isometry_residual() < 1e-8);
  }
  SUBCASE("complex couplings") {
    oc.complex_mode = true;
    const auto p = optimize_point(0.08, 0.0, oc, 3);
    CHECK(p.complex_mode);
    CHECK(p.feasible);
    CHECK(p.parameters.size() == 162);
  }
  SUBCASE("coherence loss allowed") {
    const auto p = optimize_point(0.0162, 0.061, oc, 3);
    CHECK(p.feasible);
    CHECK(p.contrast >= 1.0 - 0.061 - 1e-9);
  }
  CHECK_THROWS_AS(optimize_point(0.0, 0.0, oc, 1), InvalidArgument);
}
