#pragma once

// Shared numerical kernels: composite Gauss-Legendre quadrature, bracketed
// root finding, dense eigensolvers and exponential-rate fitting.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "mvstab/errors.hpp"

namespace mvstab {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Nodes and positive weights on a truncation interval [lower, upper].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  double lower = 0.0;
  double upper = 0.0;

  std::size_t size() const noexcept { return nodes.size(); }
};

/// Gauss-Legendre rule of the given order on [-1, 1] (Newton on P_n).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(std::size_t order) {
  if (order == 0) throw ArgumentError("gauss_legendre: order must be positive");
  if (order == 1) return {{0.0}, {2.0}};
  std::vector<double> x(order), w(order);
  const std::size_t half = (order + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(order) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = z;
      for (std::size_t k = 2; k <= order; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * z * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(order) * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[order - 1 - i] = z;
    w[i] = w[order - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// Composite Gauss-Legendre rule: `panels` equal panels of `order` nodes each.
inline QuadratureRule composite_gauss_legendre(double lower, double upper, std::size_t panels,
                                               std::size_t order = 16) {
  if (!(upper > lower) || !std::isfinite(lower) || !std::isfinite(upper))
    throw ArgumentError("composite_gauss_legendre: degenerate interval");
  if (panels == 0) throw ArgumentError("composite_gauss_legendre: need at least one panel");
  const auto [ref_x, ref_w] = gauss_legendre(order);
  QuadratureRule rule;
  rule.lower = lower;
  rule.upper = upper;
  rule.nodes.reserve(panels * order);
  rule.weights.reserve(panels * order);
  const double width = (upper - lower) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    // Panel edges are computed from the global endpoints so that a rule on a
    // symmetric interval is exactly symmetric.
    const double a = p == 0 ? lower : lower + width * static_cast<double>(p);
    const double b = p + 1 == panels ? upper : lower + width * static_cast<double>(p + 1);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t k = 0; k < order; ++k) {
      rule.nodes.push_back(mid + half * ref_x[k]);
      rule.weights.push_back(half * ref_w[k]);
    }
  }
  if (std::abs(lower + upper) == 0.0) {
    const std::size_t n = rule.size();
    for (std::size_t i = 0; i < n / 2; ++i) {
      rule.nodes[n - 1 - i] = -rule.nodes[i];
      rule.weights[n - 1 - i] = rule.weights[i];
    }
  }
  return rule;
}

/// Sum of w_i f(x_i). Throws EvaluationError on the first non-finite value.
template <class F>
double integrate(F&& f, const QuadratureRule& rule) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double v = f(rule.nodes[i]);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "integrate: non-finite integrand at node " << i << " (x = " << rule.nodes[i] << ")";
      throw EvaluationError(msg.str());
    }
    sum += rule.weights[i] * v;
  }
  return sum;
}

/// All sign-change roots of f on [lo, hi]: uniform scan of n_scan points, each
/// bracket refined by bisection until its width is below tol. Ascending,
/// deduplicated within tol. Tangential (even-multiplicity) roots are not found.
template <class F>
std::vector<double> find_roots(F&& f, double lo, double hi, std::size_t n_scan, double tol) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ArgumentError("find_roots: degenerate interval");
  if (n_scan < 2) throw ArgumentError("find_roots: n_scan must be at least 2");
  if (!(tol > 0.0)) throw ArgumentError("find_roots: tol must be positive");

  std::vector<double> xs(n_scan), fs(n_scan);
  for (std::size_t i = 0; i < n_scan; ++i) {
    xs[i] = i + 1 == n_scan ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_scan - 1);
    fs[i] = f(xs[i]);
  }
  std::vector<double> roots;
  for (std::size_t i = 0; i < n_scan; ++i) {
    if (fs[i] == 0.0) roots.push_back(xs[i]);
    if (i + 1 == n_scan) break;
    if (!(fs[i] * fs[i + 1] < 0.0)) continue;
    double a = xs[i], b = xs[i + 1], fa = fs[i];
    while (b - a > tol) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      const double fm = f(mid);
      if (fm == 0.0) {
        a = b = mid;
        break;
      }
      if ((fm < 0.0) == (fa < 0.0)) {
        a = mid;
        fa = fm;
      } else {
        b = mid;
      }
    }
    roots.push_back(0.5 * (a + b));
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> unique;
  for (double r : roots)
    if (unique.empty() || r - unique.back() > tol) unique.push_back(r);
  return unique;
}

/// Ascending eigenvalues and orthonormal eigenvectors (columns).
struct EigenSystem {
  VectorXd values;
  MatrixXd vectors;
};

/// Full symmetric eigendecomposition. Each eigenvector is signed so that its
/// largest-magnitude component is positive.
inline EigenSystem sym_eig(const MatrixXd& k) {
  if (k.rows() != k.cols()) throw ArgumentError("sym_eig: matrix is not square");
  if (k.size() == 0) return {};
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    std::ostringstream msg;
    msg << "sym_eig: matrix asymmetric (max |K - K^T| = " << asym << ")";
    throw ArgumentError(msg.str());
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(0.5 * (k + k.transpose()));
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eig: eigensolver failed");
  EigenSystem out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) {
    Eigen::Index imax = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.vectors(imax, j) < 0.0) out.vectors.col(j) *= -1.0;
  }
  return out;
}

/// Complex spectrum of a general real matrix with right and left eigenvectors.
/// Eigenvalues are sorted by descending real part (ties by descending imaginary
/// part). Left vectors satisfy l^T M = lambda l^T and are bi-orthogonal to the
/// right vectors; both are scaled to unit Euclidean norm.
struct DenseSpectrum {
  VectorXcd values;
  MatrixXcd right_vectors;
  MatrixXcd left_vectors;
  double abscissa = -std::numeric_limits<double>::infinity();
};

inline DenseSpectrum dense_spectrum(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw ArgumentError("dense_spectrum: matrix is not square");
  if (!m.allFinite()) throw ArgumentError("dense_spectrum: non-finite entry");
  DenseSpectrum out;
  const Eigen::Index n = m.rows();
  if (n == 0) return out;
  // Eigen's default budget is 40 QR sweeps per row.
  constexpr Eigen::Index sweeps_per_row = 40;
  Eigen::EigenSolver<MatrixXd> solver;
  solver.setMaxIterations(sweeps_per_row * n);
  solver.compute(m, true);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "dense_spectrum: eigensolver did not converge after "
        << sweeps_per_row * n << " iterations";
    throw NumericalError(msg.str());
  }
  const VectorXcd values = solver.eigenvalues();
  const MatrixXcd right = solver.eigenvectors();
  const MatrixXcd left = right.inverse().transpose();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (values[a].real() != values[b].real()) return values[a].real() > values[b].real();
    return values[a].imag() > values[b].imag();
  });
  out.values.resize(n);
  out.right_vectors.resize(n, n);
  out.left_vectors.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.values[j] = values[src];
    out.right_vectors.col(j) = right.col(src).normalized();
    out.left_vectors.col(j) = left.col(src).normalized();
  }
  out.abscissa = out.values[0].real();
  return out;
}

/// Least-squares slope of log(y) against t over the points with t in
/// [t_lo, t_hi]. Needs at least three points there, all with y > 0.
inline double fit_exp_rate(std::span<const double> t, std::span<const double> y, double t_lo,
                           double t_hi) {
  if (t.size() != y.size()) throw ArgumentError("fit_exp_rate: t and y differ in length");
  std::vector<double> ts, ls;
  std::vector<double> bad;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_lo || t[i] > t_hi) continue;
    if (!(y[i] > 0.0)) {
      bad.push_back(t[i]);
      continue;
    }
    ts.push_back(t[i]);
    ls.push_back(std::log(y[i]));
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "fit_exp_rate: non-positive values at t =";
    for (std::size_t i = 0; i < bad.size() && i < 8; ++i) msg << ' ' << bad[i];
    if (bad.size() > 8) msg << " ...";
    throw ArgumentError(msg.str());
  }
  if (ts.size() < 3) throw ArgumentError("fit_exp_rate: fewer than 3 points in the window");
  const double n = static_cast<double>(ts.size());
  const double tm = std::accumulate(ts.begin(), ts.end(), 0.0) / n;
  const double lm = std::accumulate(ls.begin(), ls.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - tm) * (ts[i] - tm);
    sxy += (ts[i] - tm) * (ls[i] - lm);
  }
  if (!(sxx > 0.0)) throw ArgumentError("fit_exp_rate: window has no time spread");
  return sxy / sxx;
}

/// Pairwise (tree) summation; the result depends only on the values and
/// their order, never on how the caller partitions work.
inline double tree_sum(std::span<const double> v) {
  constexpr std::size_t leaf = 64;
  if (v.size() <= leaf) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  // Split at a multiple of the leaf size so that block boundaries are fixed.
  std::size_t blocks = (v.size() + leaf - 1) / leaf;
  const std::size_t mid = (blocks / 2) * leaf;
  return tree_sum(v.first(mid)) + tree_sum(v.subspan(mid));
}

}  // namespace mvstab
