#pragma once

// Gibbs measures of the frozen dynamics, the self-consistency map psi and its
// roots, the stability indicator S0 and the critical noise level.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvstab/errors.hpp"
#include "mvstab/model.hpp"
#include "mvstab/numerics.hpp"
#include "mvstab/parallel.hpp"

namespace mvstab {

/// Truncation and resolution of the analysis grid.
struct GridSpec {
  double half_width = 0.0;     ///< L; 0 selects it from the log-density decay
  std::size_t min_nodes = 256;
  double panel_width = 0.25;   ///< upper bound on Gauss-Legendre panel width
  std::size_t order = 16;      ///< nodes per panel
  double log_drop = 40.0;      ///< auto L: log-density this far below its peak
  double max_tail_mass = 1e-10;
};

/// A probability law tabulated on quadrature nodes. mass[i] is the quadrature
/// weight times the density, cdf[i] the mass left of nodes[i] plus half of
/// mass[i].
struct TabulatedLaw {
  std::vector<double> nodes;
  std::vector<double> mass;
  std::vector<double> density;
  std::vector<double> cdf;
  double lower = 0.0;
  double upper = 0.0;

  std::size_t size() const noexcept { return nodes.size(); }

  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double v = f(nodes[i]);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "expectation: non-finite integrand at node " << i << " (x = " << nodes[i] << ")";
        throw EvaluationError(msg.str());
      }
      s += mass[i] * v;
    }
    return s;
  }

  double expect_values(std::span<const double> values) const {
    if (values.size() != nodes.size()) throw ArgumentError("expect_values: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += mass[i] * values[i];
    return s;
  }
};

inline std::vector<double> midpoint_cdf(std::span<const double> mass) {
  std::vector<double> cdf(mass.size());
  double run = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    cdf[i] = run + 0.5 * mass[i];
    run += mass[i];
  }
  return cdf;
}

/// Normalized stationary law of the frozen SDE at coupling value m.
struct GibbsMeasure : TabulatedLaw {
  ScalarMeanFieldModel model;
  double m = 0.0;
  QuadratureRule rule;
  double log_z = 0.0;
};

/// Support of exp(log_gibbs(., m)) down to `log_drop` below its peak, found by
/// an outward scan. Returns the half-width of a symmetric interval covering it.
inline double gibbs_support_half_width(const ScalarMeanFieldModel& model, double m,
                                       double log_drop = 40.0) {
  double reach = 2.0;
  for (int attempt = 0; attempt < 40; ++attempt, reach *= 1.5) {
    const double step = reach / 2000.0;
    double peak = -std::numeric_limits<double>::infinity();
    std::vector<double> lx;
    lx.reserve(4001);
    for (int i = -2000; i <= 2000; ++i) {
      const double v = model.log_gibbs(step * i, m);
      lx.push_back(v);
      if (std::isfinite(v)) peak = std::max(peak, v);
    }
    if (!std::isfinite(peak)) throw EvaluationError("gibbs support: log-density not finite anywhere");
    if (lx.front() > peak - log_drop || lx.back() > peak - log_drop) continue;
    double extent = step;
    for (int i = -2000; i <= 2000; ++i)
      if (lx[static_cast<std::size_t>(i + 2000)] > peak - log_drop)
        extent = std::max(extent, std::abs(step * i));
    return extent + step;
  }
  throw TruncationError("gibbs support: density does not decay within |x| < 1e7");
}

inline GibbsMeasure build_gibbs(const ScalarMeanFieldModel& model, double m,
                                const GridSpec& spec = {}) {
  if (!std::isfinite(m)) throw ArgumentError("build_gibbs: m must be finite");
  if (spec.order == 0 || !(spec.panel_width > 0.0))
    throw ArgumentError("build_gibbs: invalid panel layout");
  const double half = spec.half_width > 0.0 ? spec.half_width
                                             : gibbs_support_half_width(model, m, spec.log_drop);
  const std::size_t by_width = static_cast<std::size_t>(std::ceil(2.0 * half / spec.panel_width));
  const std::size_t by_count = (spec.min_nodes + spec.order - 1) / spec.order;
  const std::size_t panels = std::max({by_width, by_count, std::size_t{1}});

  GibbsMeasure g;
  g.model = model;
  g.m = m;
  g.rule = composite_gauss_legendre(-half, half, panels, spec.order);
  g.lower = -half;
  g.upper = half;
  g.nodes = g.rule.nodes;
  const std::size_t n = g.rule.size();

  std::vector<double> logs(n);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    logs[i] = model.log_gibbs(g.nodes[i], m);
    if (std::isnan(logs[i])) {
      std::ostringstream msg;
      msg << "build_gibbs: log-density is NaN at x = " << g.nodes[i];
      throw EvaluationError(msg.str());
    }
    peak = std::max(peak, logs[i]);
  }
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += g.rule.weights[i] * std::exp(logs[i] - peak);
  g.log_z = peak + std::log(z);

  // Tail beyond each endpoint, estimated as rho(L) / |d log rho / dx|.
  for (const double edge : {-half, half}) {
    const double h = 1e-4 * std::max(1.0, half);
    const double l0 = model.log_gibbs(edge, m);
    const double inward = model.log_gibbs(edge - std::copysign(h, edge), m);
    const double decay = (inward - l0) / h;
    const double tail = decay > 0.0 ? std::exp(l0 - g.log_z) / decay
                                    : std::numeric_limits<double>::infinity();
    if (tail > spec.max_tail_mass) {
      std::ostringstream msg;
      msg << "build_gibbs: estimated tail mass " << tail << " beyond x = " << edge
          << " exceeds " << spec.max_tail_mass << "; increase the half-width L";
      throw TruncationError(msg.str());
    }
  }

  g.density.resize(n);
  g.mass.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.density[i] = std::exp(logs[i] - g.log_z);
    g.mass[i] = g.rule.weights[i] * g.density[i];
  }
  g.cdf = midpoint_cdf(g.mass);
  return g;
}

template <class F>
double moment(const TabulatedLaw& law, F&& f) {
  return law.expect(std::forward<F>(f));
}

/// psi(m) = mu_m(g) - m; its zeros are the stationary laws.
inline double psi(const ScalarMeanFieldModel& model, double m, const GridSpec& spec = {}) {
  return moment(build_gibbs(model, m, spec), model.g) - m;
}

/// S0 at a self-consistent coupling value: (2 beta / sigma^2) Cov(v, g).
/// S0 > 1 exactly when the secular function exceeds 1 at zero.
inline double stability_indicator(const ScalarMeanFieldModel& model, double m_root,
                                  const GridSpec& spec = {}, double root_tol = 1e-8) {
  const GibbsMeasure gibbs = build_gibbs(model, m_root, spec);
  const double mg = moment(gibbs, model.g);
  if (std::abs(mg - m_root) > root_tol) {
    std::ostringstream msg;
    msg << "stability_indicator: m = " << m_root << " is not self-consistent (psi = "
        << mg - m_root << ")";
    throw PreconditionError(msg.str());
  }
  const double mv = moment(gibbs, model.pairing);
  const double cov = moment(gibbs, [&](double x) { return (model.pairing(x) - mv) * (model.g(x) - mg); });
  return 2.0 * model.beta / (model.sigma * model.sigma) * cov;
}

struct SelfConsistencyReport {
  std::vector<double> roots;
  std::vector<bool> fold;      ///< double root where two branches merge
  std::vector<double> scan_m;
  std::vector<double> scan_psi;
  std::vector<double> s0;      ///< stability indicator per root
  std::size_t branch_count = 0;
};

inline SelfConsistencyReport self_consistent_roots(const ScalarMeanFieldModel& model, double lo,
                                                   double hi, std::size_t n_scan = 2001,
                                                   const GridSpec& spec = {}, double tol = 1e-12) {
  if (model.symmetric && !(lo <= 0.0 && hi >= 0.0))
    throw PreconditionError("self_consistent_roots: scan range must contain 0 for a symmetric model");
  auto f = [&](double m) { return psi(model, m, spec); };
  SelfConsistencyReport rep;
  rep.scan_m.resize(n_scan);
  for (std::size_t i = 0; i < n_scan; ++i)
    rep.scan_m[i] = i + 1 == n_scan ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_scan - 1);
  rep.scan_psi = parallel_map<double>(n_scan, [&](std::size_t i) { return f(rep.scan_m[i]); });

  std::vector<std::pair<double, bool>> found;
  for (double r : find_roots(f, lo, hi, n_scan, tol)) found.emplace_back(r, false);

  // Tangential roots: interior local minima of |psi| without a sign change.
  for (std::size_t i = 1; i + 1 < n_scan; ++i) {
    const double a = std::abs(rep.scan_psi[i - 1]), b = std::abs(rep.scan_psi[i]),
                 c = std::abs(rep.scan_psi[i + 1]);
    if (!(b <= a && b <= c)) continue;
    if (rep.scan_psi[i - 1] * rep.scan_psi[i] <= 0.0 || rep.scan_psi[i] * rep.scan_psi[i + 1] <= 0.0)
      continue;
    double x0 = rep.scan_m[i - 1], x1 = rep.scan_m[i + 1];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    while (x1 - x0 > tol) {
      const double p = x1 - phi * (x1 - x0), q = x0 + phi * (x1 - x0);
      if (std::abs(f(p)) < std::abs(f(q))) x1 = q; else x0 = p;
    }
    const double xm = 0.5 * (x0 + x1);
    if (std::abs(f(xm)) < 1e-9) found.emplace_back(xm, true);
  }
  std::sort(found.begin(), found.end());
  for (const auto& [r, is_fold] : found) {
    if (!rep.roots.empty() && r - rep.roots.back() <= 10.0 * tol) continue;
    rep.roots.push_back(r);
    rep.fold.push_back(is_fold);
  }
  for (double r : rep.roots) rep.s0.push_back(stability_indicator(model, r, spec));
  rep.branch_count = rep.roots.size();
  return rep;
}

inline SelfConsistencyReport self_consistent_roots(const ScalarMeanFieldModel& model,
                                                   const GridSpec& spec = {}) {
  return self_consistent_roots(model, -model.scan_half_width, model.scan_half_width, 2001, spec);
}

/// Self-consistent value the indicator is tracked at: 0 for symmetric models,
/// otherwise the root closest to 0 (NaN when there is none).
inline double reference_root(const ScalarMeanFieldModel& model, const GridSpec& spec = {},
                             std::size_t n_scan = 401) {
  if (model.symmetric) return 0.0;
  const auto roots = find_roots([&](double m) { return psi(model, m, spec); },
                                -model.scan_half_width, model.scan_half_width, n_scan, 1e-13);
  if (roots.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::min_element(roots.begin(), roots.end(),
                           [](double a, double b) { return std::abs(a) < std::abs(b); });
}

struct CriticalSigma {
  std::optional<double> sigma_c;
  double bracket_lo = 0.0, bracket_hi = 0.0;
  std::vector<double> curve_sigma;
  std::vector<double> curve_s0;
};

/// sigma_c as the crossing S0(sigma) = 1 at the reference root, located by a
/// uniform scan of [lo, hi] followed by bisection.
inline CriticalSigma critical_sigma(const ScalarMeanFieldModel& model, double lo, double hi,
                                    std::size_t n_samples = 41, const GridSpec& spec = {},
                                    double tol = 1e-12) {
  if (!(hi > lo) || !(lo > 0.0)) throw ArgumentError("critical_sigma: need 0 < lo < hi");
  if (n_samples < 2) throw ArgumentError("critical_sigma: need at least 2 samples");
  auto excess = [&](double sigma) {
    const auto at = model.with_params(model.beta, sigma);
    const double r = reference_root(at, spec);
    if (std::isnan(r)) return std::numeric_limits<double>::quiet_NaN();
    return stability_indicator(at, r, spec) - 1.0;
  };
  CriticalSigma out;
  out.curve_sigma.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    out.curve_sigma[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n_samples - 1));
  const auto ex = parallel_map<double>(n_samples, [&](std::size_t i) { return excess(out.curve_sigma[i]); });
  out.curve_s0.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) out.curve_s0[i] = ex[i] + 1.0;

  for (std::size_t i = 0; i + 1 < n_samples; ++i) {
    if (!(ex[i] * ex[i + 1] <= 0.0) || (ex[i] == 0.0 && ex[i + 1] == 0.0)) continue;
    double a = out.curve_sigma[i], b = out.curve_sigma[i + 1], fa = ex[i];
    while (b - a > tol * b) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      const double fm = excess(mid);
      if (std::isnan(fm)) break;
      if ((fm < 0.0) == (fa < 0.0)) {
        a = mid;
        fa = fm;
      } else {
        b = mid;
      }
    }
    out.sigma_c = 0.5 * (a + b);
    out.bracket_lo = a;
    out.bracket_hi = b;
    break;
  }
  return out;
}

}  // namespace mvstab
