#include <doctest.h>

#include <cmath>
#include <vector>

#include "tcqkd/rng.hpp"

using namespace tcqkd;

namespace {

struct Moments {
  double mean = 0, var = 0;
};

template <typename F>
Moments moments(F draw, int n) {
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  return {m, s2 / n - m * m};
}

}  // namespace

TEST_CASE("streams are reproducible and derived streams differ") {
  RandomStream a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  auto c = RandomStream::derive(7, 0), d = RandomStream::derive(7, 1), e = RandomStream::derive(7, 0);
  const auto c0 = c.next_u64();
  CHECK(c0 == e.next_u64());
  CHECK(c0 != d.next_u64());
}

TEST_CASE("uniform stays in [0, 1) with the right moments") {
  RandomStream r(1);
  const int n = 200000;
  double lo = 1, hi = 0;
  const auto m = moments(
      [&] {
        const double u = r.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        return u;
      },
      n);
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(m.mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(m.var == doctest::Approx(1.0 / 12).epsilon(0.02));
}

TEST_CASE("below is unbiased on a non power of two") {
  RandomStream r(2);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[r.below(6)];
  // chi-square with 5 dof; 20.5 is p ~ 0.001
  double chi2 = 0;
  for (int c : counts) chi2 += (c - n / 6.0) * (c - n / 6.0) / (n / 6.0);
  CHECK(chi2 < 20.5);
}

TEST_CASE("normal, exponential, poisson and binomial moments") {
  RandomStream r(3);
  const int n = 200000;
  auto g = moments([&] { return r.normal(); }, n);
  CHECK(std::abs(g.mean) < 5.0 / std::sqrt(n));
  CHECK(g.var == doctest::Approx(1.0).epsilon(0.02));
  auto e = moments([&] { return r.exponential(2.0); }, n);
  CHECK(e.mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(e.var == doctest::Approx(0.25).epsilon(0.03));
  for (double mu : {0.1, 3.0, 40.0, 600.0}) {
    auto p = moments([&] { return static_cast<double>(r.poisson(mu)); }, 50000);
    CHECK(std::abs(p.mean - mu) < 5.0 * std::sqrt(mu / 50000));
    CHECK(p.var == doctest::Approx(mu).epsilon(0.05));
  }
  CHECK(r.poisson(0.0) == 0);
  auto b = moments([&] { return static_cast<double>(r.binomial(40, 0.3)); }, 50000);
  CHECK(b.mean == doctest::Approx(12.0).epsilon(0.01));
  CHECK(b.var == doctest::Approx(8.4).epsilon(0.05));
  CHECK(r.binomial(10, 0.0) == 0);
  CHECK(r.binomial(10, 1.0) == 10);
}

TEST_CASE("poisson zero probability matches exp(-mu)") {
  RandomStream r(4);
  const int n = 100000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += r.poisson(0.1) == 0;
  const double p = std::exp(-0.1);
  CHECK(std::abs(zeros / double(n) - p) < 5.0 * std::sqrt(p * (1 - p) / n));
}
