#pragma once

// Perturbed initial laws (1 + delta g_M) mu built from a clipped, centered
// direction, and reproducible inverse-CDF sampling of tabulated laws.

// pchip.hpp in Boost 1.74 calls isnan unqualified; fpclassify supplies it.
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mvstab/errors.hpp"
#include "mvstab/rng.hpp"
#include "mvstab/spectrum.hpp"
#include "mvstab/stationary.hpp"

namespace mvstab {

/// Clipped and centered direction g_M on the law's nodes.
struct TruncatedDirection {
  std::vector<double> values;
  double level = 0.0;      ///< M
  double gamma = 0.0;      ///< L2(mu) distance from g_M to the centered h
  double clip_mean = 0.0;  ///< mu(clip(h)), subtracted during centering
  double sup = 0.0;        ///< max |g_M|
};

inline double l2_norm(const TabulatedLaw& law, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += law.mass[i] * f[i] * f[i];
  return std::sqrt(s);
}

/// g_M = clip(h, -M, M) - mu(clip(h, -M, M)).
inline TruncatedDirection truncate_center(const TabulatedLaw& law, std::span<const double> h, double level) {
  if (!(level > 0.0)) throw ArgumentError("truncate_center: M must be positive");
  if (h.size() != law.size()) throw ArgumentError("truncate_center: direction length mismatch");
  TruncatedDirection d;
  d.level = level;
  d.values.resize(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) d.values[i] = std::clamp(h[i], -level, level);
  d.clip_mean = law.expect_values(d.values);
  const double h_mean = law.expect_values(h);
  double gap = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    d.values[i] -= d.clip_mean;
    const double diff = d.values[i] - (h[i] - h_mean);
    gap += law.mass[i] * diff * diff;
    d.sup = std::max(d.sup, std::abs(d.values[i]));
  }
  d.gamma = std::sqrt(gap);
  return d;
}

/// Smallest M of the form 8 ||h|| 2^k whose truncation error is below
/// target * ||h|| (h centered first).
inline TruncatedDirection truncate_to_target(const TabulatedLaw& law, std::span<const double> h,
                                             double target = 0.01) {
  const double mean = law.expect_values(h);
  std::vector<double> centered(h.begin(), h.end());
  for (double& v : centered) v -= mean;
  const double norm = l2_norm(law, centered);
  if (!(norm > 0.0)) throw ArgumentError("truncate_to_target: direction vanishes in L2(mu)");
  double level = 8.0 * norm;
  for (int k = 0; k < 60; ++k, level *= 2.0) {
    TruncatedDirection d = truncate_center(law, h, level);
    if (d.gamma < target * norm) return d;
  }
  throw ArgumentError("truncate_to_target: truncation error never drops below target");
}

/// Tabulated (1 + delta g_M) mu.
struct PerturbedMeasure : TabulatedLaw {
  GibbsMeasure base;
  std::vector<double> ratio;
  double delta = 0.0;
};

inline PerturbedMeasure perturbed_measure(const GibbsMeasure& gibbs, std::span<const double> g_m, double delta) {
  if (g_m.size() != gibbs.size()) throw ArgumentError("perturbed_measure: direction length mismatch");
  if (!(delta >= 0.0)) throw ArgumentError("perturbed_measure: delta must be non-negative");
  double sup = 0.0;
  for (double v : g_m) sup = std::max(sup, std::abs(v));
  if (delta * sup >= 1.0) {
    std::ostringstream msg;
    msg << "perturbed_measure: delta = " << delta << " reaches Delta0 = 1/max|g_M| = " << 1.0 / sup;
    throw PreconditionError(msg.str());
  }
  PerturbedMeasure p;
  static_cast<TabulatedLaw&>(p) = gibbs;
  p.base = gibbs;
  p.delta = delta;
  p.ratio.resize(g_m.size());
  for (std::size_t i = 0; i < g_m.size(); ++i) {
    p.ratio[i] = 1.0 + delta * g_m[i];
    p.density[i] = gibbs.density[i] * p.ratio[i];
    p.mass[i] = gibbs.mass[i] * p.ratio[i];
  }
  p.cdf = midpoint_cdf(p.mass);
  return p;
}

enum class AdjointPart { real, imag };

/// Values at the analysis nodes of the real or imaginary part of the left
/// dominant eigenvector, the direction along which instability is seeded.
inline std::vector<double> adjoint_direction(const SpectralAnalysis& a, AdjointPart part = AdjointPart::real) {
  const VectorXd& c = part == AdjointPart::real ? a.mode.adjoint_re : a.mode.adjoint_im;
  const VectorXd v = eigen_expansion_values(a.basis, a.spectrum, c);
  return {v.data(), v.data() + v.size()};
}

/// Monotone cubic interpolant of a tabulated CDF through (lower, 0), the
/// node midpoint values and (upper, 1).
class CdfInterpolant {
 public:
  explicit CdfInterpolant(const TabulatedLaw& law) {
    if (law.size() < 2) throw ArgumentError("CdfInterpolant: law needs at least two nodes");
    std::vector<double> x, y;
    x.reserve(law.size() + 2);
    y.reserve(law.size() + 2);
    x.push_back(law.lower);
    y.push_back(0.0);
    const double total = law.cdf.back() + 0.5 * law.mass.back();
    for (std::size_t i = 0; i < law.size(); ++i) {
      x.push_back(law.nodes[i]);
      y.push_back(std::clamp(law.cdf[i] / total, 0.0, 1.0));
    }
    x.push_back(law.upper);
    y.push_back(1.0);
    for (std::size_t i = 1; i < y.size(); ++i) y[i] = std::max(y[i], y[i - 1]);
    knots_x_ = x;
    knots_y_ = y;
    spline_ = std::make_unique<Spline>(std::move(x), std::move(y));
  }

  double cdf(double x) const {
    if (x <= knots_x_.front()) return 0.0;
    if (x >= knots_x_.back()) return 1.0;
    return std::clamp((*spline_)(x), 0.0, 1.0);
  }

  /// Smallest x with cdf(x) >= u, to bisection precision inside a knot interval.
  double quantile(double u) const {
    const auto it = std::upper_bound(knots_y_.begin(), knots_y_.end(), u);
    if (it == knots_y_.begin()) return knots_x_.front();
    if (it == knots_y_.end()) return knots_x_.back();
    const auto j = static_cast<std::size_t>(it - knots_y_.begin());
    double a = knots_x_[j - 1], b = knots_x_[j];
    for (int iter = 0; iter < 80; ++iter) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if ((*spline_)(mid) < u) a = mid; else b = mid;
    }
    return 0.5 * (a + b);
  }

 private:
  using Spline = boost::math::interpolators::pchip<std::vector<double>>;
  std::vector<double> knots_x_, knots_y_;
  std::unique_ptr<Spline> spline_;
};

/// Purpose tags for stream_key.
inline constexpr std::uint64_t kSamplingStream = 0x53414d50;  // "SAMP"
inline constexpr std::uint64_t kNoiseStream = 0x4e4f4953;     // "NOIS"
inline constexpr std::uint64_t kBootstrapStream = 0x424f4f54; // "BOOT"

/// n draws by inverse-CDF sampling; draw i depends only on (seed, i).
inline std::vector<double> sample_measure(const TabulatedLaw& law, std::size_t n, std::uint64_t seed) {
  std::vector<double> out(n);
  if (n == 0) return out;
  const CdfInterpolant icdf(law);
  const Philox4x32 gen(stream_key(seed, kSamplingStream));
  for (std::size_t i = 0; i < n; i += 2) {
    const auto [u0, u1] = uniform_pair(gen(i / 2, 0));
    out[i] = icdf.quantile(u0);
    if (i + 1 < n) out[i + 1] = icdf.quantile(u1);
  }
  return out;
}

}  // namespace mvstab
