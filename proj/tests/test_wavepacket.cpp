#include <doctest.h>

#include <cmath>

#include "tcqkd/errors.hpp"
#include "tcqkd/wavepacket.hpp"

using namespace tcqkd;

TEST_CASE("profile wavepackets are normalized and carry the autocorrelation") {
  const SlotGrid g;
  for (const auto& p : {PulseProfile::fitted(), PulseProfile::square(20.0)}) {
    for (Bit b : {Bit::zero, Bit::one}) {
      const auto w = Wavepacket::from_profile(p, g, b);
      CHECK(w.amplitude.squaredNorm() * w.bin_ns == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(w.overlap(10.0) == doctest::Approx(autocorrelation(p, 10.0)).epsilon(2e-3));
      CHECK(w.overlap(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  const auto sq = Wavepacket::from_profile(PulseProfile::square(20.0), g, Bit::zero);
  CHECK(sq.overlap(10.0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("square pulse slot probabilities") {
  const SlotGrid g;
  const auto p = PulseProfile::square(20.0);
  const Eigen::Vector3d b0 = Wavepacket::from_profile(p, g, Bit::zero).slot_probabilities(g);
  const Eigen::Vector3d b1 = Wavepacket::from_profile(p, g, Bit::one).slot_probabilities(g);
  CHECK(b0[0] == doctest::Approx(0.5));
  CHECK(b0[1] == doctest::Approx(0.5));
  CHECK(b0[2] == doctest::Approx(0.0));
  CHECK(b1[0] == doctest::Approx(0.0));
  CHECK(b1[2] == doctest::Approx(0.5));
}

TEST_CASE("slot states") {
  const SlotGrid g;
  Eigen::VectorXd a(3);
  a << std::sqrt(1.0 / 6), std::sqrt(2.0 / 3), std::sqrt(1.0 / 6);
  const auto w = Wavepacket::slot_state(g, 3, a);
  const Eigen::Vector3d pr = w.slot_probabilities(g);
  CHECK(pr[0] == doctest::Approx(1.0 / 6));
  CHECK(pr[1] == doctest::Approx(2.0 / 3));
  CHECK(pr[2] == doctest::Approx(1.0 / 6));
  CHECK(w.amplitude.squaredNorm() * w.bin_ns == doctest::Approx(1.0));
  // a state spilling into slot 2 leaves that weight outside 3..5
  Eigen::VectorXd b(2);
  b << std::sqrt(0.5), std::sqrt(0.5);
  CHECK(Wavepacket::slot_state(g, 2, b).slot_probabilities(g).sum() == doctest::Approx(0.5));
}

TEST_CASE("overlap needs a whole number of bins") {
  const auto w = Wavepacket::from_profile(PulseProfile::square(20.0), SlotGrid{}, Bit::zero);
  CHECK(w.bins_for(10.0) == 100);
  CHECK_THROWS_AS(w.bins_for(10.05), InvalidArgument);
}

TEST_CASE("binned sampler follows the weights") {
  Eigen::VectorXd wts(4);
  wts << 1, 0, 3, 4;
  BinnedSampler s(0.0, 1.0, wts);
  RandomStream r(5);
  int counts[4] = {0, 0, 0, 0};
  const int n = 80000;
  for (int i = 0; i < n; ++i) {
    const double t = s.sample(r);
    REQUIRE(t >= 0.0);
    REQUIRE(t < 4.0);
    ++counts[static_cast<int>(t)];
  }
  CHECK(counts[1] == 0);
  CHECK(counts[0] / double(n) == doctest::Approx(0.125).epsilon(0.05));
  CHECK(counts[2] / double(n) == doctest::Approx(0.375).epsilon(0.03));
  CHECK(counts[3] / double(n) == doctest::Approx(0.5).epsilon(0.03));
}
