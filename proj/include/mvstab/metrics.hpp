#pragma once

// Distances between laws on the line: exact W1 for samples and tabulated
// CDFs, and a dictionary lower bound for the weighted dual norm
//   ||mu - nu|| = sup { |(mu - nu)(g)| : |g(x) - g(y)| <= phi0(|x - y|) (V0(x) + V0(y)) / 2 }.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvstab/errors.hpp"
#include "mvstab/perturb.hpp"
#include "mvstab/stationary.hpp"

namespace mvstab {

/// Exact W1 between two empirical measures: the integral of |F_n - G_m|.
inline double w1_empirical(std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty() || ys.empty()) throw ArgumentError("w1_empirical: empty sample");
  std::vector<double> a(xs.begin(), xs.end()), b(ys.begin(), ys.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Sweep the merged breakpoints; both CDFs are constant in between.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double s = 0.0, prev = std::min(a.front(), b.front());
  while (i < a.size() || j < b.size()) {
    const double x = (j == b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    s += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - prev);
    prev = x;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return s;
}

/// Midpoint integral of |F - G| for CDFs tabulated on a common uniform grid.
inline double w1_density(std::span<const double> f, std::span<const double> g, double dx) {
  if (f.size() != g.size()) throw ArgumentError("w1_density: CDFs are not on a common grid");
  if (!(dx > 0.0)) throw ArgumentError("w1_density: spacing must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(f[i] - g[i]);
  return s * dx;
}

/// sum_i w_i |F(x_i) - G(x_i)| for two laws tabulated on the same nodes,
/// with w the quadrature weights of those nodes.
inline double w1_tabulated(const TabulatedLaw& a, const TabulatedLaw& b, std::span<const double> weights) {
  if (a.size() != b.size() || weights.size() != a.size()) throw ArgumentError("w1_tabulated: laws not on common nodes");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.nodes[i] != b.nodes[i]) throw ArgumentError("w1_tabulated: laws not on common nodes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += weights[i] * std::abs(a.cdf[i] - b.cdf[i]);
  return s;
}

/// W1 between an empirical measure and a tabulated law, integrating
/// |F_n - F| by the midpoint rule on `resolution` cells spanning both.
inline double w1_to_law(std::span<const double> xs, const TabulatedLaw& law, std::size_t resolution = 200000) {
  if (xs.empty()) throw ArgumentError("w1_to_law: empty sample");
  std::vector<double> a(xs.begin(), xs.end());
  std::sort(a.begin(), a.end());
  const CdfInterpolant cdf(law);
  const double lo = std::min(law.lower, a.front()), hi = std::max(law.upper, a.back());
  const double h = (hi - lo) / static_cast<double>(resolution);
  const double n = static_cast<double>(a.size());
  std::size_t below = 0;
  double s = 0.0;
  for (std::size_t k = 0; k < resolution; ++k) {
    const double x = lo + (static_cast<double>(k) + 0.5) * h;
    while (below < a.size() && a[below] <= x) ++below;
    s += std::abs(static_cast<double>(below) / n - cdf.cdf(x));
  }
  return s * h;
}

enum class Gauge { min_one, identity };

inline double gauge(Gauge g, double r) { return g == Gauge::identity ? r : std::min(r, 1.0); }

struct DictionaryEntry {
  std::string name;
  std::function<double(double)> f;
};

struct WeightedNormConfig {
  double p0 = 0.0;
  Gauge phi0 = Gauge::min_one;
  std::vector<DictionaryEntry> dictionary;
  std::size_t pair_nodes = 400;  ///< resolution of the pair grid
};

inline double weight_v0(double p0, double x) { return std::pow(1.0 + x * x, 0.5 * p0); }

/// Dictionary functions are replaced by their piecewise-linear interpolants
/// on the pair grid (constant beyond it), so each test function is exactly
/// what the norm estimate sees.
class WeightedNorm {
 public:
  WeightedNorm(WeightedNormConfig cfg, double lower, double upper) : cfg_(std::move(cfg)) {
    if (!(cfg_.p0 >= 0.0)) throw ArgumentError("WeightedNorm: p0 must be non-negative");
    if (!(upper > lower) || cfg_.pair_nodes < 2) throw ArgumentError("WeightedNorm: invalid pair grid");
    const std::size_t n = cfg_.pair_nodes;
    grid_.resize(n);
    v0_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      grid_[i] = lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(n - 1);
      v0_[i] = weight_v0(cfg_.p0, grid_[i]);
    }
    for (const auto& d : cfg_.dictionary) {
      std::vector<double> vals(n);
      for (std::size_t i = 0; i < n; ++i) vals[i] = d.f(grid_[i]);
      norms_.push_back(pair_norm(vals));
      values_.push_back(std::move(vals));
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  double norm(std::size_t k) const { return norms_.at(k); }
  const std::vector<double>& pair_grid() const noexcept { return grid_; }

  /// Interpolated dictionary function k at x.
  double value(std::size_t k, double x) const {
    const auto& v = values_.at(k);
    if (x <= grid_.front()) return v.front();
    if (x >= grid_.back()) return v.back();
    const double pos = (x - grid_.front()) / (grid_[1] - grid_[0]);
    const auto j = std::min(static_cast<std::size_t>(pos), grid_.size() - 2);
    const double t = pos - static_cast<double>(j);
    return (1.0 - t) * v[j] + t * v[j + 1];
  }

  /// max_k |(mu - nu)(g_k)| / ||g_k||, for measures given as masses on
  /// common nodes. A lower bound of the dual norm.
  double lower_bound(std::span<const double> nodes, std::span<const double> mass_mu,
                     std::span<const double> mass_nu) const {
    if (nodes.size() != mass_mu.size() || nodes.size() != mass_nu.size())
      throw ArgumentError("weighted_dual_norm_lb: measures are not on common nodes");
    double tm = 0.0, tn = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      tm += mass_mu[i];
      tn += mass_nu[i];
    }
    if (std::abs(tm - tn) > 1e-10) throw ArgumentError("weighted_dual_norm_lb: total masses differ");
    double best = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!(norms_[k] > 0.0)) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < nodes.size(); ++i) s += value(k, nodes[i]) * (mass_mu[i] - mass_nu[i]);
      best = std::max(best, std::abs(s) / norms_[k]);
    }
    return best;
  }

 private:
  double pair_norm(const std::vector<double>& v) const {
    double best = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = i + 1; j < v.size(); ++j) {
        const double den = gauge(cfg_.phi0, grid_[j] - grid_[i]) * 0.5 * (v0_[i] + v0_[j]);
        best = std::max(best, std::abs(v[i] - v[j]) / den);
      }
    return best;
  }

  WeightedNormConfig cfg_;
  std::vector<double> grid_, v0_;
  std::vector<std::vector<double>> values_;
  std::vector<double> norms_;
};

/// One-shot form: pair grid spans the nodes.
inline double weighted_dual_norm_lb(std::span<const double> nodes, std::span<const double> mass_mu,
                                    std::span<const double> mass_nu, const WeightedNormConfig& cfg) {
  if (nodes.empty()) throw ArgumentError("weighted_dual_norm_lb: no nodes");
  const auto [lo, hi] = std::minmax_element(nodes.begin(), nodes.end());
  return WeightedNorm(cfg, *lo, *hi).lower_bound(nodes, mass_mu, mass_nu);
}

/// Ramps (x - k)_+ at `knots` equally spaced knots, monomials up to
/// `degree` (clipped at the grid ends by the interpolation) and any extras.
inline std::vector<DictionaryEntry> default_dictionary(double lower, double upper, std::size_t knots = 32,
                                                       int degree = 4, std::vector<DictionaryEntry> extra = {}) {
  std::vector<DictionaryEntry> d;
  for (std::size_t k = 0; k < knots; ++k) {
    const double at = lower + (upper - lower) * (static_cast<double>(k) + 0.5) / static_cast<double>(knots);
    d.push_back({"ramp_" + std::to_string(k), [at](double x) { return std::max(x - at, 0.0); }});
  }
  for (int j = 1; j <= degree; ++j)
    d.push_back({"x^" + std::to_string(j), [j](double x) { return std::pow(x, j); }});
  for (auto& e : extra) d.push_back(std::move(e));
  return d;
}

}  // namespace mvstab
