#pragma once

// Galerkin spectrum of the frozen generator in L2(mu) on mu-orthonormal
// polynomials, the rank-one coupling of the linearized mean field, the
// secular equation and the unstable mode.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <sstream>

#include "mvstab/errors.hpp"
#include "mvstab/model.hpp"
#include "mvstab/numerics.hpp"
#include "mvstab/stationary.hpp"

namespace mvstab {

/// Orthonormal polynomials p_0..p_n of a tabulated law in a coordinate z(x),
/// built by the discrete Stieltjes procedure:
/// b_{k+1} p_{k+1} = (z - alpha_k) p_k - b_k p_{k-1}. Derivatives are in x.
struct SpectralBasis {
  using Coordinate = std::function<double(double)>;

  std::size_t degree = 0;
  std::vector<double> alpha;  ///< alpha_0..alpha_{n-1}
  std::vector<double> b;      ///< b_0 = 0, b_1..b_n
  MatrixXd values;            ///< p_k(x_i), nodes by degree
  MatrixXd derivs;            ///< p_k'(x_i)
  double gram_error = 0.0;    ///< max |G - I|
  double edge_leakage = 0.0;  ///< share of mu(p_n^2) in the outer tenth of the grid
  Coordinate coordinate;       ///< z(x); empty means z = x
  Coordinate coordinate_prime;

  /// Value and x-derivative of sum_k coeffs[k] p_k at an arbitrary point.
  std::pair<double, double> eval(const VectorXd& coeffs, double x0) const {
    const double x = coordinate ? coordinate(x0) : x0;
    const double dz = coordinate_prime ? coordinate_prime(x0) : 1.0;
    double pm = 0.0, p = 1.0, dpm = 0.0, dp = 0.0;
    double f = coeffs[0], df = 0.0;
    for (std::size_t k = 0; k < degree; ++k) {
      const double pn = ((x - alpha[k]) * p - b[k] * pm) / b[k + 1];
      const double dpn = (p + (x - alpha[k]) * dp - b[k] * dpm) / b[k + 1];
      pm = p;
      p = pn;
      dpm = dp;
      dp = dpn;
      f += coeffs[static_cast<Eigen::Index>(k + 1)] * p;
      df += coeffs[static_cast<Eigen::Index>(k + 1)] * dp;
    }
    return {f, df * dz};
  }
};

inline SpectralBasis build_basis(const TabulatedLaw& law, std::size_t n,
                                 SpectralBasis::Coordinate coordinate = {},
                                 SpectralBasis::Coordinate coordinate_prime = {}) {
  const std::size_t q = law.size();
  if (n + 1 > q / 2) {
    std::ostringstream msg;
    msg << "build_basis: degree " << n << " needs more than " << q << " quadrature nodes";
    throw ResolutionError(msg.str());
  }
  const auto rows = static_cast<Eigen::Index>(q);
  const auto cols = static_cast<Eigen::Index>(n + 1);
  const Eigen::Map<const VectorXd> w(law.mass.data(), rows);
  VectorXd x(rows), dz(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double xi = law.nodes[static_cast<std::size_t>(i)];
    x[i] = coordinate ? coordinate(xi) : xi;
    dz[i] = coordinate_prime ? coordinate_prime(xi) : 1.0;
  }

  SpectralBasis basis;
  basis.degree = n;
  basis.coordinate = std::move(coordinate);
  basis.coordinate_prime = std::move(coordinate_prime);
  basis.values.resize(rows, cols);
  basis.derivs.resize(rows, cols);
  basis.values.col(0).setOnes();
  basis.derivs.col(0).setZero();
  basis.b.assign(1, 0.0);
  for (Eigen::Index k = 0; k < cols - 1; ++k) {
    const double a = (w.array() * x.array() * basis.values.col(k).array().square()).sum();
    VectorXd next = (x.array() - a) * basis.values.col(k).array();
    VectorXd dnext = basis.values.col(k).array() + (x.array() - a) * basis.derivs.col(k).array();
    if (k > 0) {
      next -= basis.b[static_cast<std::size_t>(k)] * basis.values.col(k - 1);
      dnext -= basis.b[static_cast<std::size_t>(k)] * basis.derivs.col(k - 1);
    }
    const double nb = std::sqrt((w.array() * next.array().square()).sum());
    if (!(nb > 0.0) || !std::isfinite(nb)) {
      std::ostringstream msg;
      msg << "build_basis: recurrence broke down at degree " << k + 1 << "; use more nodes";
      throw ResolutionError(msg.str());
    }
    basis.alpha.push_back(a);
    basis.b.push_back(nb);
    basis.values.col(k + 1) = next / nb;
    basis.derivs.col(k + 1) = dnext / nb;
  }
  basis.derivs = dz.asDiagonal() * basis.derivs;
  const MatrixXd gram = basis.values.transpose() * w.asDiagonal() * basis.values;
  basis.gram_error = (gram - MatrixXd::Identity(cols, cols)).cwiseAbs().maxCoeff();
  if (basis.gram_error > 1e-8) {
    std::ostringstream msg;
    msg << "build_basis: Gram matrix deviates from identity by " << basis.gram_error
        << "; use more quadrature nodes";
    throw ResolutionError(msg.str());
  }
  const double edge = 0.9 * std::max(std::abs(law.lower), std::abs(law.upper));
  double outer = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i)
    if (std::abs(law.nodes[static_cast<std::size_t>(i)]) > edge) outer += w[i] * basis.values(i, cols - 1) * basis.values(i, cols - 1);
  basis.edge_leakage = outer;
  return basis;
}

/// K_ij = (sigma^2/2) mu(p_i' p_j'), the Galerkin matrix of -L.
inline MatrixXd dirichlet_matrix(const TabulatedLaw& law, const SpectralBasis& basis, double sigma) {
  const Eigen::Map<const VectorXd> w(law.mass.data(), static_cast<Eigen::Index>(law.size()));
  MatrixXd k = 0.5 * sigma * sigma * (basis.derivs.transpose() * w.asDiagonal() * basis.derivs);
  const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, k.cwiseAbs().maxCoeff()))
    throw NumericalError("dirichlet_matrix: asymmetry beyond 1e-10");
  return 0.5 * (k + k.transpose());
}

inline MatrixXd dirichlet_matrix(const GibbsMeasure& gibbs, const SpectralBasis& basis) {
  return dirichlet_matrix(gibbs, basis, gibbs.model.sigma);
}

/// Eigenpairs of -L: ascending values with lambda_0 = 0 and e_0 = 1. Column j
/// of `vectors` holds the p-basis coefficients of e_j.
struct GeneratorSpectrum {
  VectorXd values;
  MatrixXd vectors;

  Eigen::Index size() const noexcept { return values.size(); }
};

inline GeneratorSpectrum base_spectrum(const MatrixXd& k) {
  const Eigen::Index n = k.rows();
  if (n == 0 || k.cols() != n) throw ArgumentError("base_spectrum: K must be square and nonempty");
  GeneratorSpectrum spec;
  spec.values = VectorXd::Zero(n);
  spec.vectors = MatrixXd::Zero(n, n);
  spec.vectors(0, 0) = 1.0;
  if (n > 1) {
    // Constants span the kernel exactly; only the complement is diagonalized.
    const EigenSystem es = sym_eig(k.bottomRightCorner(n - 1, n - 1));
    spec.values.tail(n - 1) = es.values;
    spec.vectors.bottomRightCorner(n - 1, n - 1) = es.vectors;
  }
  return spec;
}

/// The linearized mean field acts as Abar f = beta phi(.) <l, f>, with phi the
/// centered coupling statistic and <l, f> = mu(v' f'). Coordinates are in the
/// eigenbasis e_j.
struct RankOneCoupling {
  VectorXd phi_hat;     ///< <phi, e_j>
  VectorXd v_hat;       ///< <v, e_j>
  VectorXd ell;         ///< (2/sigma^2) lambda_j v_hat_j
  VectorXd ell_direct;  ///< mu(v' e_j') by quadrature
  double beta = 0.0;
  double sigma = 1.0;
  double g_mean = 0.0;  ///< mu(g) used for centering
};

/// Values at the law's nodes of sum_j coeffs[j] e_j.
inline VectorXd eigen_expansion_values(const SpectralBasis& basis, const GeneratorSpectrum& spec,
                                       const VectorXd& coeffs) {
  return basis.values * (spec.vectors * coeffs);
}

/// <f, e_j> for f tabulated on the law's nodes.
inline VectorXd eigen_coefficients(const TabulatedLaw& law, const SpectralBasis& basis,
                                   const GeneratorSpectrum& spec, const VectorXd& f_values) {
  const Eigen::Map<const VectorXd> w(law.mass.data(), static_cast<Eigen::Index>(law.size()));
  return spec.vectors.transpose() * (basis.values.transpose() * w.cwiseProduct(f_values));
}

inline RankOneCoupling coupling_vectors(const GibbsMeasure& gibbs, const SpectralBasis& basis,
                                        const GeneratorSpectrum& spec,
                                        const ScalarMeanFieldModel& model) {
  const auto q = static_cast<Eigen::Index>(gibbs.size());
  if (basis.values.rows() != q || spec.size() != basis.values.cols())
    throw ArgumentError("coupling_vectors: basis, spectrum and measure do not match");
  RankOneCoupling c;
  c.beta = model.beta;
  c.sigma = model.sigma;
  c.g_mean = moment(gibbs, model.g);
  VectorXd phi(q), v(q), dv(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const double x = gibbs.nodes[static_cast<std::size_t>(i)];
    phi[i] = model.g(x) - c.g_mean;
    v[i] = model.pairing(x);
    dv[i] = model.c(x);
  }
  c.phi_hat = eigen_coefficients(gibbs, basis, spec, phi);
  c.v_hat = eigen_coefficients(gibbs, basis, spec, v);
  c.ell = (2.0 / (model.sigma * model.sigma)) * spec.values.cwiseProduct(c.v_hat);
  c.ell[0] = 0.0;
  const Eigen::Map<const VectorXd> w(gibbs.mass.data(), q);
  c.ell_direct = spec.vectors.transpose() * (basis.derivs.transpose() * w.cwiseProduct(dv));
  return c;
}

/// S(lambda) = beta sum_{j>=1} ell_j phi_hat_j / (lambda_j + lambda).
inline double secular_function(const GeneratorSpectrum& spec, const RankOneCoupling& c, double lambda) {
  double s = 0.0;
  for (Eigen::Index j = 1; j < spec.size(); ++j)
    s += c.ell[j] * c.phi_hat[j] / (spec.values[j] + lambda);
  return c.beta * s;
}

/// Largest root of S(lambda) = 1 on (0, lambda_max]. lambda_max <= 0 selects
/// a bound past which S < 1 is guaranteed.
inline std::optional<double> solve_secular(const GeneratorSpectrum& spec, const RankOneCoupling& c,
                                           double lambda_max = 0.0, std::size_t n_scan = 4001) {
  if (lambda_max <= 0.0) {
    double bound = 0.0;
    for (Eigen::Index j = 1; j < spec.size(); ++j) bound += std::abs(c.ell[j] * c.phi_hat[j]);
    lambda_max = std::max(1.0, 2.0 * std::abs(c.beta) * bound);
  }
  const auto roots = find_roots([&](double l) { return secular_function(spec, c, l) - 1.0; }, 0.0,
                                lambda_max, n_scan, 1e-15);
  for (auto it = roots.rbegin(); it != roots.rend(); ++it)
    if (*it > 0.0) return *it;
  return std::nullopt;
}

/// M = diag(-lambda_j) + beta phi_hat ell^T, the Galerkin matrix of L + Abar.
inline MatrixXd full_generator_matrix(const GeneratorSpectrum& spec, const RankOneCoupling& c) {
  const Eigen::Index n = spec.size();
  if (c.phi_hat.size() != n || c.ell.size() != n)
    throw ArgumentError("full_generator_matrix: dimension mismatch");
  MatrixXd m = c.beta * c.phi_hat * c.ell.transpose();
  m.diagonal() -= spec.values;
  return m;
}

struct UnstableMode {
  std::optional<double> lambda_star;
  std::complex<double> lambda0;  ///< dominant eigenvalue of M off the constants
  double abscissa = 0.0;
  int k0 = 1;                    ///< eigenvalues within the clustering tolerance of lambda0
  bool defective_warning = false;
  bool unstable = false;
  VectorXd f_star;               ///< e-basis coefficients, normalized by <ell, f*> = 1
  VectorXd adjoint_re;           ///< left eigenvector at lambda0, real part
  VectorXd adjoint_im;
  std::vector<std::complex<double>> leading;  ///< a few dominant eigenvalues of M
};

inline UnstableMode unstable_mode(const GeneratorSpectrum& spec, const RankOneCoupling& c,
                                  double tol_spec = 1e-7, double cluster_tol = 1e-8) {
  const Eigen::Index n = spec.size();
  if (n < 2) throw ArgumentError("unstable_mode: need at least one non-constant mode");
  const MatrixXd m = full_generator_matrix(spec, c);
  // Row and column 0 vanish: constants are invariant and carry no instability.
  const DenseSpectrum ds = dense_spectrum(m.bottomRightCorner(n - 1, n - 1));

  UnstableMode mode;
  mode.lambda0 = ds.values[0];
  mode.abscissa = ds.abscissa;
  mode.k0 = 0;
  for (Eigen::Index i = 0; i < ds.values.size(); ++i)
    if (std::abs(ds.values[i] - mode.lambda0) <= cluster_tol) ++mode.k0;
  mode.defective_warning = mode.k0 > 1;
  mode.unstable = mode.abscissa > tol_spec;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(8, ds.values.size()); ++i)
    mode.leading.push_back(ds.values[i]);
  mode.lambda_star = solve_secular(spec, c);

  mode.f_star = VectorXd::Zero(n);
  if (mode.lambda_star) {
    for (Eigen::Index j = 1; j < n; ++j)
      mode.f_star[j] = c.beta * c.phi_hat[j] / (spec.values[j] + *mode.lambda_star);
  } else if (mode.unstable) {
    mode.f_star.tail(n - 1) = ds.right_vectors.col(0).real();
    const double pairing = c.ell.dot(mode.f_star);
    if (std::abs(pairing) > 1e-14) mode.f_star /= pairing;
  }

  VectorXcd w = VectorXcd::Zero(n);
  w.tail(n - 1) = ds.left_vectors.col(0);
  std::complex<double> overlap(0.0, 0.0);
  for (Eigen::Index j = 0; j < n; ++j) overlap += w[j] * mode.f_star[j];
  if (std::abs(overlap) > 0.0) w *= std::conj(overlap) / std::abs(overlap);
  w /= w.norm();
  mode.adjoint_re = w.real();
  mode.adjoint_im = w.imag();
  return mode;
}

/// Coefficients of exp(tM) f. The constant coefficient is carried exactly.
inline VectorXd linearized_propagate(const MatrixXd& m, const VectorXd& coeffs, double t) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n || coeffs.size() != n) throw ArgumentError("linearized_propagate: dimension mismatch");
  if (!(t >= 0.0)) throw ArgumentError("linearized_propagate: t must be non-negative");
  VectorXd out = coeffs;
  if (t == 0.0 || n < 2) return out;
  const MatrixXd block = m.bottomRightCorner(n - 1, n - 1);
  const double growth = t * dense_spectrum(block).abscissa;
  if (growth > 700.0) {
    std::ostringstream msg;
    msg << "linearized_propagate: t * abscissa = " << growth << " overflows";
    throw RangeError(msg.str());
  }
  const MatrixXd e = (t * block).exp();
  out.tail(n - 1) = e * coeffs.tail(n - 1);
  return out;
}

struct SpectralSpec {
  std::size_t degree = 120;
  GridSpec grid;
  double leakage_tol = 1e-13;  ///< max share of mu(p_n^2) in the outer tenth of the grid
  double growth = 1.25;        ///< half-width enlargement factor per attempt
  int max_attempts = 40;
  double tol_spec = 1e-7;
  double cluster_tol = 1e-8;
};

/// Everything the instability pipeline needs at one stationary law.
struct SpectralAnalysis {
  GibbsMeasure gibbs;
  SpectralBasis basis;
  MatrixXd dirichlet;
  GeneratorSpectrum spectrum;
  RankOneCoupling coupling;
  MatrixXd generator;
  UnstableMode mode;

  /// Values of f* at the analysis nodes.
  VectorXd f_star_values() const { return eigen_expansion_values(basis, spectrum, mode.f_star); }
  /// p-basis coefficients of an e-basis expansion (for point evaluation).
  VectorXd p_coefficients(const VectorXd& e_coeffs) const { return spectrum.vectors * e_coeffs; }
};

/// Gibbs measure whose grid is wide enough that the degree-n basis does not
/// feel the truncation: the half-width grows until the top polynomial keeps
/// less than leakage_tol of its mass in the outer tenth.
inline std::pair<GibbsMeasure, SpectralBasis> spectral_grid(const ScalarMeanFieldModel& model, double m,
                                                            const SpectralSpec& spec) {
  GridSpec grid = spec.grid;
  if (grid.half_width <= 0.0) grid.half_width = gibbs_support_half_width(model, m, grid.log_drop);
  grid.min_nodes = std::max(grid.min_nodes, 4 * (spec.degree + 1));
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    GibbsMeasure gibbs = build_gibbs(model, m, grid);
    SpectralBasis basis =
        build_basis(gibbs, spec.degree, model.basis_coordinate, model.basis_coordinate_prime);
    if (basis.edge_leakage < spec.leakage_tol) return {std::move(gibbs), std::move(basis)};
    grid.half_width *= spec.growth;
  }
  throw ResolutionError("spectral_grid: polynomial mass keeps reaching the grid edge");
}

inline SpectralAnalysis analyze_spectrum(const ScalarMeanFieldModel& model, double m,
                                         const SpectralSpec& spec = {}) {
  SpectralAnalysis out;
  std::tie(out.gibbs, out.basis) = spectral_grid(model, m, spec);
  out.dirichlet = dirichlet_matrix(out.gibbs, out.basis);
  out.spectrum = base_spectrum(out.dirichlet);
  out.coupling = coupling_vectors(out.gibbs, out.basis, out.spectrum, model);
  out.generator = full_generator_matrix(out.spectrum, out.coupling);
  out.mode = unstable_mode(out.spectrum, out.coupling, spec.tol_spec, spec.cluster_tol);
  return out;
}

}  // namespace mvstab
