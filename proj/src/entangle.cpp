#include "tcqkd/entangle.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "tcqkd/errors.hpp"
#include "tcqkd/optimize.hpp"
#include "tcqkd/parallel.hpp"
#include "tcqkd/rng.hpp"

namespace tcqkd {

namespace {

constexpr int D = ancilla_dimension;

template <typename S>
using Vec9 = Eigen::Matrix<S, D, 1>;

template <typename S>
double real_of(const S& v) {
  return std::real(v);
}

double entropy_bits(const Eigen::VectorXd& eig) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < eig.size(); ++i)
    if (eig[i] > 1e-15) h -= eig[i] * std::log2(eig[i]);
  return h;
}

/// Mutual information of a 2 x k joint table (rows: Alice's bit).
double table_information(const Eigen::MatrixXd& joint) {
  const double total = joint.sum();
  if (!(total > 0)) return 0.0;
  const Eigen::MatrixXd p = joint / total;
  const Eigen::VectorXd pa = p.rowwise().sum();
  const Eigen::RowVectorXd pe = p.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index a = 0; a < p.rows(); ++a)
    for (Eigen::Index k = 0; k < p.cols(); ++k)
      if (p(a, k) > 1e-300 && pa[a] > 0 && pe[k] > 0) mi += p(a, k) * std::log2(p(a, k) / (pa[a] * pe[k]));
  return std::max(0.0, mi);
}

/// F(b, s): ancilla vector joint with Bob finding slot s (2..6) for bit b,
/// already including the 1/sqrt(2) of the bit state.
template <typename S>
struct SlotVectors {
  std::array<std::array<Vec9<S>, 5>, 2> f;

  explicit SlotVectors(const typename EveCoupling<S>::Matrix9& e) {
    const double r = std::sqrt(0.5);
    for (int b = 0; b < 2; ++b)
      for (int s = 0; s < 5; ++s) {
        f[b][s].setZero();
        for (int j = b; j <= b + 1; ++j) {
          const int o = s - j;  // slot label 2 + s = 3 + j + o - 1
          if (o >= 0 && o <= 2) f[b][s] += e.col(3 * j + o);
        }
        f[b][s] *= r;
      }
  }
  double norm2(int b, int s) const { return f[b][s].squaredNorm(); }
  // slots 3 and 5 are indices 1 and 3
  double validation() const { return norm2(0, 1) + norm2(0, 3) + norm2(1, 1) + norm2(1, 3); }
  double errors() const { return norm2(0, 3) + norm2(1, 1); }
  double contrast_numerator() const {
    return 2.0 * (real_of(f[0][1].dot(f[0][2])) + real_of(f[1][2].dot(f[1][3])));
  }
  double contrast_denominator() const { return norm2(0, 1) + norm2(0, 2) + norm2(1, 2) + norm2(1, 3); }
};

template <typename S>
double information_from_vectors(const SlotVectors<S>& sv, InformationMeasure measure) {
  using Mat94 = Eigen::Matrix<S, D, 4>;
  using Mat4 = Eigen::Matrix<S, 4, 4>;
  Mat94 B;
  B << sv.f[0][1], sv.f[0][3], sv.f[1][1], sv.f[1][3];
  const double t = B.squaredNorm();
  if (!(t > 0)) return 0.0;
  Eigen::HouseholderQR<Mat94> qr(B);
  const Mat4 R = qr.matrixQR().template topRows<4>().template triangularView<Eigen::Upper>();

  if (measure == InformationMeasure::holevo) {
    const Mat4 all = R * R.adjoint() / t;
    Eigen::SelfAdjointEigenSolver<Mat4> es(all, Eigen::EigenvaluesOnly);
    double chi = entropy_bits(es.eigenvalues());
    for (int b = 0; b < 2; ++b) {
      const auto Rb = R.template middleCols<2>(2 * b);
      const double pb = Rb.squaredNorm() / t;
      if (pb <= 0) continue;
      const Eigen::Matrix<S, 2, 2> g = Rb.adjoint() * Rb / (t * pb);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<S, 2, 2>> eb(g, Eigen::EigenvaluesOnly);
      chi -= pb * entropy_bits(eb.eigenvalues());
    }
    return std::max(0.0, chi);
  }

  Eigen::Matrix<double, 4, 1> sign;
  sign << 1, 1, -1, -1;
  const Mat4 M = R * sign.cast<S>().asDiagonal() * R.adjoint();
  Eigen::SelfAdjointEigenSolver<Mat4> es(M);
  // p(b, k) = |u_k^H R_b|^2 / t
  Eigen::Matrix<double, 2, 4> pk;
  for (int b = 0; b < 2; ++b) {
    const auto Rb = R.template middleCols<2>(2 * b);
    for (int k = 0; k < 4; ++k) pk(b, k) = (es.eigenvectors().col(k).adjoint() * Rb).squaredNorm() / t;
  }
  if (measure == InformationMeasure::fine_grained) return table_information(pk);
  Eigen::Matrix2d joint = Eigen::Matrix2d::Zero();
  for (int k = 0; k < 4; ++k) {
    const int guess = es.eigenvalues()[k] > 0 ? 0 : 1;
    joint(0, guess) += pk(0, k);
    joint(1, guess) += pk(1, k);
  }
  return table_information(joint);
}

}  // namespace

const char* measure_name(InformationMeasure m) {
  switch (m) {
    case InformationMeasure::helstrom: return "helstrom";
    case InformationMeasure::holevo: return "holevo";
    case InformationMeasure::fine_grained: return "fine_grained";
  }
  return "unknown";
}

InformationMeasure parse_measure(const std::string& s) {
  for (auto m : {InformationMeasure::helstrom, InformationMeasure::holevo, InformationMeasure::fine_grained})
    if (s == measure_name(m)) return m;
  throw InvalidArgument("unknown information measure '" + s + "'");
}

template <typename S>
EveCoupling<S> EveCoupling<S>::identity() {
  EveCoupling c;
  for (int j = 0; j < 3; ++j) c.e(0, 3 * j + 1) = S(1);
  return c;
}

template <typename S>
EveCoupling<S> EveCoupling<S>::product_resend(double x, double m) {
  if (!(x >= 0 && x <= 1) || !(m >= 0 && m <= 1)) throw InvalidArgument("need x, m in [0, 1]");
  EveCoupling c;
  const double amp[3] = {std::sqrt(0.5 * x), std::sqrt(1.0 - x), std::sqrt(0.5 * x)};
  for (int j = 0; j < 3; ++j) {
    c.e(0, 3 * j + 1) += S(std::sqrt(1.0 - m));  // passed through, record 0
    for (int o = 0; o < 3; ++o) c.e(1 + j, 3 * j + o) += S(std::sqrt(m) * amp[o]);
  }
  return c;
}

template <typename S>
EveCoupling<S> EveCoupling<S>::randomizing() {
  EveCoupling c;
  const double r = std::sqrt(0.5);
  for (int j = 0; j < 3; ++j) {
    c.e(2 * j, 3 * j + 0) = S(r);
    c.e(2 * j + 1, 3 * j + 2) = S(r);
  }
  return c;
}

template <typename S>
typename EveCoupling<S>::Isometry EveCoupling<S>::isometry() const {
  Isometry v = Isometry::Zero();
  for (int j = 0; j < 3; ++j)
    for (int o = 0; o < 3; ++o) {
      const int s = j + o;  // slot label 2 + s
      v.col(j).template segment<D>(s * D) = e.col(3 * j + o);
    }
  return v;
}

template <typename S>
EveCoupling<S> EveCoupling<S>::from_isometry(const Isometry& v) {
  EveCoupling c;
  for (int j = 0; j < 3; ++j) {
    for (int s = 0; s < 5; ++s) {
      const int o = s - j;
      const auto block = v.col(j).template segment<D>(s * D);
      if (o >= 0 && o <= 2)
        c.e.col(3 * j + o) = block;
      else if (block.norm() > 1e-12)
        throw InvalidArgument("isometry moves a slot state further than one slot");
    }
  }
  return c;
}

template <typename S>
Eigen::Matrix<S, 3, 3> EveCoupling<S>::gram() const {
  const Isometry v = isometry();
  return v.adjoint() * v;
}

template <typename S>
double EveCoupling<S>::isometry_residual() const {
  return (gram() - Eigen::Matrix<S, 3, 3>::Identity()).cwiseAbs().maxCoeff();
}

template <typename S>
double eve_information(const ConditionalEnsemble<S>& ens, InformationMeasure measure) {
  using Mat = typename ConditionalEnsemble<S>::Matrix;
  const Eigen::Index n = ens.rho[0].rows();
  for (int b = 0; b < 2; ++b) {
    const Mat& r = ens.rho[b];
    if (r.rows() != n || r.cols() != n) throw InvalidArgument("conditional states must be square and of equal size");
    if (std::abs(r.trace() - S(1)) > 1e-8) throw InvalidArgument("conditional state does not have unit trace");
    if ((r - r.adjoint()).cwiseAbs().maxCoeff() > 1e-8) throw InvalidArgument("conditional state is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(r, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8) throw InvalidArgument("conditional state is not positive semidefinite");
  }
  const double p0 = ens.prior[0], p1 = ens.prior[1];
  if (!(p0 >= 0 && p1 >= 0) || std::abs(p0 + p1 - 1.0) > 1e-8) throw InvalidArgument("priors must sum to one");

  if (measure == InformationMeasure::holevo) {
    const Mat avg = S(p0) * ens.rho[0] + S(p1) * ens.rho[1];
    double chi = entropy_bits(Eigen::SelfAdjointEigenSolver<Mat>(avg, Eigen::EigenvaluesOnly).eigenvalues());
    for (int b = 0; b < 2; ++b)
      chi -= ens.prior[b] *
             entropy_bits(Eigen::SelfAdjointEigenSolver<Mat>(ens.rho[b], Eigen::EigenvaluesOnly).eigenvalues());
    return std::max(0.0, chi);
  }
  const Mat M = S(p0) * ens.rho[0] - S(p1) * ens.rho[1];
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  Eigen::MatrixXd pk(2, n);
  for (int b = 0; b < 2; ++b)
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto u = es.eigenvectors().col(k);
      pk(b, k) = ens.prior[b] * std::real((u.adjoint() * ens.rho[b] * u)(0, 0));
    }
  if (measure == InformationMeasure::fine_grained) return table_information(pk);
  Eigen::Matrix2d joint = Eigen::Matrix2d::Zero();
  for (Eigen::Index k = 0; k < n; ++k) {
    const int guess = es.eigenvalues()[k] > 0 ? 0 : 1;
    joint(0, guess) += pk(0, k);
    joint(1, guess) += pk(1, k);
  }
  return table_information(joint);
}

template <typename S>
EntangledOutcome<S> simulate_entangled_attack(const EveCoupling<S>& c) {
  const double res = c.isometry_residual();
  if (res > 1e-8) throw InvalidArgument("coupling is not an isometry (residual " + std::to_string(res) + ")");
  const SlotVectors<S> sv(c.e);
  EntangledOutcome<S> out;
  out.validation = sv.validation();
  out.q = out.validation > 0 ? sv.errors() / out.validation : 0.0;
  const double den = sv.contrast_denominator();
  out.contrast = den > 0 ? sv.contrast_numerator() / den : 0.0;
  for (int b = 0; b < 2; ++b)
    for (int s = 0; s < 5; ++s) out.bob_slots[b][s] = sv.norm2(b, s);
  for (int b = 0; b < 2; ++b) {
    typename ConditionalEnsemble<S>::Matrix r = sv.f[b][1] * sv.f[b][1].adjoint() + sv.f[b][3] * sv.f[b][3].adjoint();
    const double w = std::real(r.trace());
    out.eve.prior[b] = out.validation > 0 ? w / out.validation : 0.5;
    out.eve.rho[b] = w > 0 ? typename ConditionalEnsemble<S>::Matrix(r / S(w))
                           : ConditionalEnsemble<S>::Matrix::Identity(D, D) / S(D);
  }
  return out;
}

template <typename S>
double information_from_coupling(const EveCoupling<S>& c, InformationMeasure measure) {
  return information_from_vectors(SlotVectors<S>(c.e), measure);
}

template struct EveCoupling<double>;
template struct EveCoupling<std::complex<double>>;
template double eve_information(const ConditionalEnsemble<double>&, InformationMeasure);
template double eve_information(const ConditionalEnsemble<std::complex<double>>&, InformationMeasure);
template EntangledOutcome<double> simulate_entangled_attack(const EveCoupling<double>&);
template EntangledOutcome<std::complex<double>> simulate_entangled_attack(const EveCoupling<std::complex<double>>&);
template double information_from_coupling(const EveCoupling<double>&, InformationMeasure);
template double information_from_coupling(const EveCoupling<std::complex<double>>&, InformationMeasure);

// ---------------------------------------------------------------------------
// optimizer

namespace {

struct Layout {
  bool complex_mode = false;
  bool symmetric = false;

  int free_columns() const { return symmetric ? 5 : 9; }
  int size() const { return free_columns() * D * (complex_mode ? 2 : 1); }

  // mirror |j> <-> |8 - j> takes column k to 8 - k and acts on the
  // ancilla by index reversal; the middle column is its own mirror
  template <typename S>
  typename EveCoupling<S>::Matrix9 expand(const Eigen::Matrix<S, D, Eigen::Dynamic>& cols) const {
    if (!symmetric) return cols;
    typename EveCoupling<S>::Matrix9 e;
    for (int k = 0; k < 4; ++k) {
      e.col(k) = cols.col(k);
      e.col(8 - k) = cols.col(k).reverse();
    }
    e.col(4) = 0.5 * (cols.col(4) + cols.col(4).reverse());
    return e;
  }

  template <typename S>
  EveCoupling<S> unpack(const Eigen::VectorXd& p) const {
    const int n = free_columns() * D;
    Eigen::Matrix<S, D, Eigen::Dynamic> cols(D, free_columns());
    for (int i = 0; i < n; ++i) {
      if constexpr (is_complex_v<S>)
        cols(i % D, i / D) = S(p[i], p[n + i]);
      else
        cols(i % D, i / D) = p[i];
    }
    EveCoupling<S> c;
    c.e = expand<S>(cols);
    return c;
  }

  template <typename S>
  Eigen::VectorXd pack(const EveCoupling<S>& c) const {
    Eigen::VectorXd p(size());
    const int n = free_columns() * D;
    for (int i = 0; i < n; ++i) {
      const S v = c.e(i % D, i / D);
      p[i] = std::real(v);
      if (complex_mode) p[n + i] = std::imag(v);
    }
    return p;
  }
};

struct Terms {
  double info = 0.0;
  Eigen::VectorXd eq;
  double ineq = 0.0;  // must be >= 0
};

template <typename S>
Terms evaluate_terms(const EveCoupling<S>& c, double q, double delta, const OptimizerConfig& cfg, bool with_info) {
  const SlotVectors<S> sv(c.e);
  Terms t;
  if (with_info) t.info = information_from_vectors(sv, cfg.measure);
  const Eigen::Matrix<S, 3, 3> g = c.gram();
  const int n_off = is_complex_v<S> ? 6 : 3;
  // at Delta = 0 the bound C >= 1 sits on the maximum of C, where its
  // gradient vanishes; num - den = -(|F03 - F04|^2 + |F14 - F15|^2), so
  // impose the two vector equalities instead
  const bool pinned = delta <= 0.0;
  const int n_pin = pinned ? 2 * D * (is_complex_v<S> ? 2 : 1) : 0;
  t.eq.resize(3 + n_off + 1 + (cfg.fix_validation ? 1 : 0) + n_pin);
  int k = 0;
  for (int i = 0; i < 3; ++i) t.eq[k++] = std::real(g(i, i)) - 1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      t.eq[k++] = std::real(g(i, j));
      if constexpr (is_complex_v<S>) t.eq[k++] = std::imag(g(i, j));
    }
  const double val = sv.validation();
  t.eq[k++] = sv.errors() - q * val;
  if (cfg.fix_validation) t.eq[k++] = val - 1.0;
  if (pinned) {
    const Vec9<S> d0 = sv.f[0][1] - sv.f[0][2], d1 = sv.f[1][2] - sv.f[1][3];
    for (const Vec9<S>* d : {&d0, &d1})
      for (int i = 0; i < D; ++i) {
        t.eq[k++] = std::real((*d)[i]);
        if constexpr (is_complex_v<S>) t.eq[k++] = std::imag((*d)[i]);
      }
    t.ineq = 0.0;
  } else {
    t.ineq = sv.contrast_numerator() - (1.0 - delta) * sv.contrast_denominator();
  }
  return t;
}

template <typename S>
EntanglingCurvePoint run_point(double q, double delta, const OptimizerConfig& cfg, std::uint64_t point_seed) {
  const Layout layout{cfg.complex_mode, cfg.symmetry_reduction};
  const int n = layout.size();
  EntanglingCurvePoint best_point;
  best_point.q = q;
  best_point.delta = delta;
  best_point.starts = cfg.starts;
  best_point.complex_mode = cfg.complex_mode;
  best_point.i_ae = -1.0;
  long evals = 0;

  std::vector<EntanglingCurvePoint> per_start(static_cast<std::size_t>(cfg.starts));
  std::vector<long> start_evals(static_cast<std::size_t>(cfg.starts), 0);

  auto one_start = [&](std::size_t s) {
    long ev = 0;
    RandomStream rng = RandomStream::derive(point_seed, s);
    Eigen::VectorXd x = layout.pack(EveCoupling<S>::identity());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += cfg.start_noise * rng.normal();

    auto terms = [&](const Eigen::VectorXd& p, bool info) {
      ++ev;
      return evaluate_terms(layout.unpack<S>(p), q, delta, cfg, info);
    };
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(terms(x, false).eq.size());
    double mu = 0.0, rho = 10.0, prev_violation = 1e300;

    auto lagrangian = [&](const Eigen::VectorXd& p) {
      const Terms t = terms(p, true);
      const double shifted = std::max(0.0, mu - rho * t.ineq);
      return -t.info + lambda.dot(t.eq) + 0.5 * rho * t.eq.squaredNorm() + (shifted * shifted - mu * mu) / (2.0 * rho);
    };
    auto fg = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
      const double h = 1e-6;
      Eigen::VectorXd w = p;
      grad.resize(p.size());
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        w[i] = p[i] + h;
        const double fp = lagrangian(w);
        w[i] = p[i] - h;
        const double fm = lagrangian(w);
        w[i] = p[i];
        grad[i] = (fp - fm) / (2.0 * h);
      }
      return lagrangian(p);
    };

    LbfgsOptions lo;
    lo.max_iterations = cfg.inner_iterations;
    for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
      x = lbfgs(fg, x, lo).x;
      const Terms t = terms(x, false);
      const double violation = std::max(t.eq.lpNorm<Eigen::Infinity>(), std::max(0.0, -t.ineq));
      lambda += rho * t.eq;
      mu = std::max(0.0, mu - rho * t.ineq);
      if (violation > 0.25 * prev_violation) rho = std::min(rho * 10.0, 1e8);
      prev_violation = violation;
      if (violation < 1e-10 && outer >= 2) break;
    }

    // project onto the equality constraints (and the contrast bound when
    // it binds) with minimum-norm Gauss-Newton steps
    for (int it = 0; it < 60; ++it) {
      const Terms t = terms(x, false);
      const bool active = delta > 0.0 && (t.ineq < 1e-9 || mu > 0);
      const Eigen::Index m = t.eq.size() + (active ? 1 : 0);
      Eigen::VectorXd r(m);
      r.head(t.eq.size()) = t.eq;
      if (active) r[m - 1] = std::min(t.ineq, 0.0);
      if (r.lpNorm<Eigen::Infinity>() < 1e-14) break;
      Eigen::MatrixXd J(m, n);
      const double h = 1e-6;
      Eigen::VectorXd w = x;
      for (int i = 0; i < n; ++i) {
        w[i] = x[i] + h;
        const Terms tp = terms(w, false);
        w[i] = x[i] - h;
        const Terms tm = terms(w, false);
        w[i] = x[i];
        J.col(i).head(t.eq.size()) = (tp.eq - tm.eq) / (2.0 * h);
        if (active) J(m - 1, i) = (tp.ineq - tm.ineq) / (2.0 * h);
      }
      x -= J.completeOrthogonalDecomposition().solve(r);
    }

    const EveCoupling<S> c = layout.unpack<S>(x);
    const Terms t = terms(x, true);
    EntanglingCurvePoint pt;
    pt.q = q;
    pt.delta = delta;
    pt.parameters = x;
    pt.isometry_residual = c.isometry_residual();
    const SlotVectors<S> sv(c.e);
    pt.validation = sv.validation();
    pt.q_residual = pt.validation > 0 ? std::abs(sv.errors() / pt.validation - q) : 1.0;
    pt.contrast = sv.contrast_denominator() > 0 ? sv.contrast_numerator() / sv.contrast_denominator() : 0.0;
    pt.feasible = pt.isometry_residual < 1e-8 && pt.q_residual < cfg.q_tolerance &&
                  pt.contrast >= 1.0 - delta - 1e-9 && (!cfg.fix_validation || std::abs(pt.validation - 1.0) < 1e-8);
    pt.i_ae = t.info;
    per_start[s] = pt;
    start_evals[s] = ev;
  };

  parallel_for(static_cast<std::size_t>(cfg.starts), cfg.jobs, one_start);

  for (std::size_t s = 0; s < per_start.size(); ++s) {
    evals += start_evals[s];
    const auto& pt = per_start[s];
    if (!pt.feasible) continue;
    ++best_point.feasible_starts;
    if (pt.i_ae > best_point.i_ae) {
      const int fs = best_point.feasible_starts;
      best_point = pt;
      best_point.feasible_starts = fs;
    }
  }
  best_point.starts = cfg.starts;
  best_point.evaluations = evals;
  best_point.complex_mode = cfg.complex_mode;
  if (best_point.feasible_starts == 0) {
    best_point.feasible = false;
    best_point.i_ae = 0.0;
    return best_point;
  }
  const EveCoupling<S> c = layout.unpack<S>(best_point.parameters);
  best_point.i_ae_helstrom = information_from_coupling(c, InformationMeasure::helstrom);
  best_point.i_ae_holevo = information_from_coupling(c, InformationMeasure::holevo);
  best_point.i_ae_fine = information_from_coupling(c, InformationMeasure::fine_grained);
  if constexpr (!is_complex_v<S>) best_point.best = c;
  return best_point;
}

}  // namespace

EntanglingCurvePoint optimize_point(double q, double delta, const OptimizerConfig& cfg, std::uint64_t point_seed) {
  if (!(q > 0 && q < 0.5)) throw InvalidArgument("entangling optimization needs Q in (0, 1/2)");
  if (!(delta >= 0 && delta < 1)) throw InvalidArgument("Delta must lie in [0, 1)");
  if (cfg.starts < 1) throw InvalidArgument("optimizer needs at least one start");
  return cfg.complex_mode ? run_point<std::complex<double>>(q, delta, cfg, point_seed)
                          : run_point<double>(q, delta, cfg, point_seed);
}

std::vector<EntanglingCurvePoint> optimize_curve(const std::vector<double>& q_grid, double delta,
                                                 const OptimizerConfig& cfg) {
  std::vector<EntanglingCurvePoint> out(q_grid.size());
  // starts are spread over the workers inside each point
  for (std::size_t i = 0; i < q_grid.size(); ++i)
    out[i] = optimize_point(q_grid[i], delta, cfg, RandomStream::derive(cfg.seed, i).next_u64());
  return out;
}

}  // namespace tcqkd
