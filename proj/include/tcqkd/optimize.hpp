#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace tcqkd {

/// Golden-section minimization of a unimodal function on [a, b].
template <typename Scalar, typename F>
Scalar golden_section(F&& f, Scalar a, Scalar b, int iterations) {
  const Scalar r = (std::sqrt(Scalar(5)) - 1) / 2;
  Scalar c = b - r * (b - a), d = a + r * (b - a);
  Scalar fc = f(c), fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

template <typename Scalar>
struct NelderMeadResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Scalar value{};
  int evaluations = 0;
};

/// Plain Nelder-Mead with the standard coefficients. `step` sets the
/// initial simplex edge along each axis.
template <typename Scalar, typename F>
NelderMeadResult<Scalar> nelder_mead(F&& f, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& step, int max_evals,
                                     Scalar tol = Scalar(1e-10)) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = x0.size();
  std::vector<Vec> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<Scalar> val(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)][i] += step[i];
  int evals = 0;
  auto eval = [&](const Vec& x) {
    ++evals;
    return f(x);
  };
  for (std::size_t i = 0; i < pts.size(); ++i) val[i] = eval(pts[i]);
  std::vector<std::size_t> order(pts.size());

  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(val[worst] - val[best]) <= tol * (std::abs(val[best]) + tol)) {
      Scalar size = 0;
      for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
      if (size <= std::sqrt(tol)) break;
    }
    Vec centroid = Vec::Zero(n);
    for (std::size_t i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<Scalar>(n);

    const Vec xr = centroid + (centroid - pts[worst]);
    const Scalar fr = eval(xr);
    if (fr < val[best]) {
      const Vec xe = centroid + 2 * (centroid - pts[worst]);
      const Scalar fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
    } else if (fr < val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
    } else {
      const bool outside = fr < val[worst];
      const Vec xc = outside ? Vec(centroid + Scalar(0.5) * (xr - centroid))
                             : Vec(centroid + Scalar(0.5) * (pts[worst] - centroid));
      const Scalar fc = eval(xc);
      if (fc < (outside ? fr : val[worst])) {
        pts[worst] = xc;
        val[worst] = fc;
      } else {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + Scalar(0.5) * (pts[i] - pts[best]);
          val[i] = eval(pts[i]);
        }
      }
    }
  }
  const auto it = std::min_element(val.begin(), val.end());
  const auto k = static_cast<std::size_t>(it - val.begin());
  return {pts[k], val[k], evals};
}

}  // namespace tcqkd

namespace tcqkd {

struct LbfgsOptions {
  int max_iterations = 200;
  int memory = 8;
  double gradient_tolerance = 1e-9;
  double value_tolerance = 1e-13;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
};

/// Limited-memory BFGS with a backtracking Armijo line search.
/// `fg(x, grad)` returns f(x) and writes the gradient.
template <typename FG>
LbfgsResult lbfgs(FG&& fg, Eigen::VectorXd x, const LbfgsOptions& opt = {}) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n), g_new(n), d(n), x_new(n);
  double f = fg(x, g);
  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  LbfgsResult out;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) break;
    // two-loop recursion
    d = -g;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (m > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }
    double slope = g.dot(d);
    if (!(slope < 0)) {
      d = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * d;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd s = x_new - x, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == opt.memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
    }
    const double change = f - f_new;
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    if (std::abs(change) <= opt.value_tolerance * (1.0 + std::abs(f))) break;
  }
  out.x = std::move(x);
  out.value = f;
  return out;
}

}  // namespace tcqkd
