#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>

namespace tcqkd {

/// Uniform grid of midpoints t_i = start + (i + 1/2) * step.
template <typename Scalar>
struct MidpointGrid {
  Scalar start{};
  Scalar step{};
  Eigen::Index size = 0;

  static MidpointGrid covering(Scalar a, Scalar b, Scalar step) {
    const auto n = static_cast<Eigen::Index>(std::llround((b - a) / step));
    return {a, (b - a) / static_cast<Scalar>(n > 0 ? n : 1), n > 0 ? n : 1};
  }

  Scalar at(Eigen::Index i) const { return start + (static_cast<Scalar>(i) + Scalar(0.5)) * step; }

  Eigen::Array<Scalar, Eigen::Dynamic, 1> nodes() const {
    return Eigen::Array<Scalar, Eigen::Dynamic, 1>::LinSpaced(size, at(0), at(size - 1));
  }
};

/// Midpoint-rule integral of already sampled values.
template <typename Derived>
typename Derived::Scalar integrate(const Eigen::ArrayBase<Derived>& samples,
                                   typename Derived::Scalar step) {
  return samples.sum() * step;
}

template <typename Scalar, typename F>
Scalar integrate(F&& f, Scalar a, Scalar b, Scalar step) {
  const auto grid = MidpointGrid<Scalar>::covering(a, b, step);
  Scalar acc{};
  for (Eigen::Index i = 0; i < grid.size; ++i) acc += f(grid.at(i));
  return acc * grid.step;
}

}  // namespace tcqkd
