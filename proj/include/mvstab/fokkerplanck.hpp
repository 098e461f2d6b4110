#pragma once

// Finite-volume solver for the nonlinear Fokker-Planck equation
//   d_t rho = (sigma^2 / 2) rho'' - (b(x, m_t) rho)',  m_t = int g rho,
// with Scharfetter-Gummel (Chang-Cooper) exponentially fitted fluxes and
// zero-flux walls. The coupling m is frozen over a step; the flux operator is
// applied implicitly through a tridiagonal solve.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mvstab/errors.hpp"
#include "mvstab/model.hpp"
#include "mvstab/numerics.hpp"
#include "mvstab/spectrum.hpp"
#include "mvstab/stationary.hpp"
#include "mvstab/timeseries.hpp"

namespace mvstab {

/// Uniform cell-centered grid on [-L, L].
struct FpGrid {
  double half_width = 0.0;
  std::size_t n_cells = 0;
  double dx = 0.0;
  std::vector<double> centers;

  std::size_t size() const noexcept { return n_cells; }
};

inline FpGrid make_fp_grid(double half_width, std::size_t n_cells) {
  if (!(half_width > 0.0) || n_cells < 3) throw ArgumentError("make_fp_grid: need L > 0 and at least 3 cells");
  FpGrid g;
  g.half_width = half_width;
  g.n_cells = n_cells;
  g.dx = 2.0 * half_width / static_cast<double>(n_cells);
  g.centers.resize(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) g.centers[i] = -half_width + (static_cast<double>(i) + 0.5) * g.dx;
  return g;
}

/// Stationary support at coupling m (log-density 40 below its peak) plus a
/// 6 sigma buffer.
inline FpGrid auto_fp_grid(const ScalarMeanFieldModel& model, double m, std::size_t n_cells = 1200) {
  const double support = gibbs_support_half_width(model, m, 40.0);
  return make_fp_grid(support + 6.0 * model.sigma, n_cells);
}

struct FpState {
  FpGrid grid;
  std::vector<double> rho;  ///< cell averages
  double t = 0.0;
  double m = 0.0;           ///< midpoint-rule coupling sum_i g(x_i) rho_i dx
  double mass_drift = 0.0;  ///< largest |mass - 1| seen so far
};

inline double fp_mass(const FpState& s) { return tree_sum(s.rho) * s.grid.dx; }

inline double fp_pairing(const FpGrid& grid, std::span<const double> rho, std::span<const double> f) {
  if (rho.size() != grid.size() || f.size() != grid.size()) throw ArgumentError("fp_pairing: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += f[i] * rho[i];
  return s * grid.dx;
}

inline std::vector<double> tabulate(const FpGrid& grid, const std::function<double(double)>& f) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid.centers[i]);
  return out;
}

/// Cell averages of f by 4-point Gauss-Legendre in each cell.
inline std::vector<double> cell_averages(const FpGrid& grid, const std::function<double(double)>& f) {
  const auto [xs, ws] = gauss_legendre(4);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0.0;
    for (std::size_t q = 0; q < xs.size(); ++q) s += ws[q] * f(grid.centers[i] + 0.5 * grid.dx * xs[q]);
    out[i] = 0.5 * s;
  }
  return out;
}

inline double fp_coupling(const FpGrid& grid, std::span<const double> rho, const ScalarMeanFieldModel& model) {
  std::vector<double> gv(grid.size());
  statistic_into(model, grid.centers, gv);
  return fp_pairing(grid, rho, gv);
}

/// State from cell values of a density; normalized to unit mass.
inline FpState fp_state(const FpGrid& grid, std::vector<double> rho, const ScalarMeanFieldModel& model) {
  if (rho.size() != grid.size()) throw ArgumentError("fp_state: density length mismatch");
  for (double v : rho)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("fp_state: density must be finite and non-negative");
  const double mass = tree_sum(rho) * grid.dx;
  if (!(mass > 0.0)) throw ArgumentError("fp_state: density has no mass");
  for (double& v : rho) v /= mass;
  FpState s;
  s.grid = grid;
  s.rho = std::move(rho);
  s.m = fp_coupling(grid, s.rho, model);
  return s;
}

/// Discrete steady state of the frozen flux at coupling m: proportional to
/// exp(log_gibbs(x_i, m)), which zeroes every exponentially fitted flux.
inline std::vector<double> discrete_gibbs(const FpGrid& grid, const ScalarMeanFieldModel& model, double m) {
  std::vector<double> lg(grid.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    lg[i] = model.log_gibbs(grid.centers[i], m);
    peak = std::max(peak, lg[i]);
  }
  double z = 0.0;
  for (double& v : lg) {
    v = std::exp(v - peak);
    z += v;
  }
  for (double& v : lg) v /= z * grid.dx;
  return lg;
}

/// Bernoulli function z / (e^z - 1).
inline double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

/// Tridiagonal d rho / dt = A rho for the flux frozen at coupling m.
struct FluxOperator {
  std::vector<double> lower;  ///< A(i, i-1), entry 0 unused
  std::vector<double> diag;
  std::vector<double> upper;  ///< A(i, i+1), last entry unused

  std::vector<double> apply(std::span<const double> v) const {
    const std::size_t n = diag.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = diag[i] * v[i];
      if (i > 0) s += lower[i] * v[i - 1];
      if (i + 1 < n) s += upper[i] * v[i + 1];
      out[i] = s;
    }
    return out;
  }
};

inline FluxOperator flux_operator(const FpGrid& grid, const ScalarMeanFieldModel& model, double m) {
  const std::size_t n = grid.size();
  const double k = 0.5 * model.sigma * model.sigma / (grid.dx * grid.dx);
  FluxOperator op;
  op.lower.assign(n, 0.0);
  op.diag.assign(n, 0.0);
  op.upper.assign(n, 0.0);
  double prev = model.log_gibbs(grid.centers[0], m);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double next = model.log_gibbs(grid.centers[i + 1], m);
    const double w = next - prev;
    if (!std::isfinite(w)) throw EvaluationError("flux_operator: non-finite log-density increment");
    const double right = k * bernoulli(-w);  // from cell i into i+1
    const double left = k * bernoulli(w);    // from cell i+1 into i
    op.diag[i] -= right;
    op.lower[i + 1] += right;
    op.upper[i] += left;
    op.diag[i + 1] -= left;
    prev = next;
  }
  return op;
}

/// Solves (I - c A) x = rhs by the Thomas algorithm.
inline std::vector<double> solve_shifted(const FluxOperator& a, double c, std::vector<double> rhs) {
  const std::size_t n = a.diag.size();
  std::vector<double> up(n);
  double denom = 1.0 - c * a.diag[0];
  if (!(std::abs(denom) > 0.0)) throw NumericalError("tridiagonal solve: zero pivot");
  up[0] = -c * a.upper[0] / denom;
  rhs[0] /= denom;
  for (std::size_t i = 1; i < n; ++i) {
    const double lo = -c * a.lower[i];
    denom = 1.0 - c * a.diag[i] - lo * up[i - 1];
    if (!(std::abs(denom) > 0.0) || !std::isfinite(denom)) throw NumericalError("tridiagonal solve: zero pivot");
    up[i] = i + 1 < n ? -c * a.upper[i] / denom : 0.0;
    rhs[i] = (rhs[i] - lo * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= up[i] * rhs[i + 1];
  return rhs;
}

/// Default step dx / (2 max|b|), the maximum over cells holding mass.
inline double default_fp_dt(const FpState& s, const ScalarMeanFieldModel& model) {
  double worst = 0.0;
  for (std::size_t i = 0; i < s.grid.size(); ++i)
    if (s.rho[i] * s.grid.dx > 1e-12) worst = std::max(worst, std::abs(drift(model, s.grid.centers[i], s.m)));
  return worst > 0.0 ? s.grid.dx / (2.0 * worst) : 0.1;
}

/// One theta step (theta = 1 backward Euler, 0.5 Crank-Nicolson) with the
/// flux frozen at the current coupling.
inline void fp_step(FpState& s, const ScalarMeanFieldModel& model, double dt, double theta = 1.0) {
  if (!(dt > 0.0)) throw ArgumentError("fp_step: dt must be positive");
  if (!(theta >= 0.5 && theta <= 1.0)) throw ArgumentError("fp_step: theta must lie in [0.5, 1]");
  const FluxOperator a = flux_operator(s.grid, model, s.m);
  std::vector<double> rhs = s.rho;
  if (theta < 1.0) {
    const auto ar = a.apply(s.rho);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += (1.0 - theta) * dt * ar[i];
  }
  s.rho = solve_shifted(a, theta * dt, std::move(rhs));
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    if (s.rho[i] < -1e-14 || !std::isfinite(s.rho[i])) {
      std::ostringstream msg;
      msg << "fp_step: density " << s.rho[i] << " in cell " << i << " at t = " << s.t + dt
          << "; reduce dt";
      throw SchemeError(msg.str());
    }
  }
  s.t += dt;
  s.m = fp_coupling(s.grid, s.rho, model);
  s.mass_drift = std::max(s.mass_drift, std::abs(fp_mass(s) - 1.0));
}

struct FpObserver {
  std::string name;
  std::vector<double> values;  ///< f at the cell centers
};

/// Stored densities, for observables decided after the run.
struct FpFrames {
  std::vector<double> times;
  std::vector<std::vector<double>> rho;
};

struct FpConfig {
  double t_end = 1.0;
  double dt = 0.0;  ///< 0 picks default_fp_dt at the initial state
  double theta = 1.0;
  double record_every = 0.05;
  std::vector<FpObserver> observers;
  FpFrames* frames = nullptr;
  std::function<bool(const FpState&, const TimeSeries&)> stop;
};

/// Runs to t_end (or until `stop`), storing t, m_t and observer pairings.
inline TimeSeries fp_evolve(FpState& s, const ScalarMeanFieldModel& model, const FpConfig& cfg) {
  const double dt = cfg.dt > 0.0 ? cfg.dt : default_fp_dt(s, model);
  if (!(cfg.t_end >= s.t)) throw ArgumentError("fp_evolve: horizon lies in the past");
  for (const auto& o : cfg.observers)
    if (o.values.size() != s.grid.size()) throw ArgumentError("fp_evolve: observer '" + o.name + "' not on the grid");
  std::vector<std::string> names{"m"};
  for (const auto& o : cfg.observers) names.push_back(o.name);
  TimeSeries series(names);
  auto record = [&] {
    std::vector<double> row{s.m};
    for (const auto& o : cfg.observers) row.push_back(fp_pairing(s.grid, s.rho, o.values));
    series.push(s.t, row);
    if (cfg.frames) {
      cfg.frames->times.push_back(s.t);
      cfg.frames->rho.push_back(s.rho);
    }
  };
  const auto stride = std::max<long long>(1, std::llround(cfg.record_every / dt));
  const auto n_steps = std::llround((cfg.t_end - s.t) / dt);
  record();
  if (cfg.stop && cfg.stop(s, series)) return series;
  for (long long k = 1; k <= n_steps; ++k) {
    fp_step(s, model, dt, cfg.theta);
    if (k % stride == 0 || k == n_steps) {
      record();
      if (cfg.stop && cfg.stop(s, series)) break;
    }
  }
  return series;
}

/// (t, int f rho_t) for every stored frame.
inline std::vector<std::pair<double, double>> observable_series(const FpFrames& frames, const FpGrid& grid,
                                                                std::span<const double> f) {
  std::vector<std::pair<double, double>> out;
  out.reserve(frames.times.size());
  for (std::size_t k = 0; k < frames.times.size(); ++k)
    out.emplace_back(frames.times[k], fp_pairing(grid, frames.rho[k], f));
  return out;
}

/// Cell-wise CDF at the right cell edges.
inline std::vector<double> fp_cdf(const FpGrid& grid, std::span<const double> rho) {
  std::vector<double> cdf(rho.size());
  double run = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    run += rho[i] * grid.dx;
    cdf[i] = run;
  }
  return cdf;
}

inline void write_fp_frame(const FpState& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("write_fp_frame: cannot open '" + path + "'");
  out << "x,rho\n";
  char buf[64];
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.grid.centers[i], s.rho[i]);
    out << buf;
  }
}

/// Values on the grid of an expansion sum_j coeffs[j] e_j from a spectral
/// analysis. Outside the analysis interval the value is held at the nearest
/// end, since polynomials are meaningless where the base law has no mass.
inline std::vector<double> tabulate_expansion(const FpGrid& grid, const SpectralAnalysis& a, const VectorXd& e_coeffs) {
  const VectorXd p = a.p_coefficients(e_coeffs);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = std::clamp(grid.centers[i], a.gibbs.lower, a.gibbs.upper);
    out[i] = a.basis.eval(p, x).first;
  }
  return out;
}

/// (1 + delta g) rho_S with g = clip(h, +-level) recentered on the grid.
inline FpState fp_perturbed_state(const FpGrid& grid, std::span<const double> rho_s, std::span<const double> h,
                                  double level, double delta, const ScalarMeanFieldModel& model) {
  if (h.size() != grid.size() || rho_s.size() != grid.size()) throw ArgumentError("fp_perturbed_state: length mismatch");
  std::vector<double> clipped(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) clipped[i] = std::clamp(h[i], -level, level);
  const double mean = fp_pairing(grid, rho_s, clipped) / (tree_sum(rho_s) * grid.dx);
  std::vector<double> rho(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double ratio = 1.0 + delta * (clipped[i] - mean);
    if (!(ratio > 0.0)) throw PreconditionError("fp_perturbed_state: delta * |g_M| reaches 1");
    rho[i] = rho_s[i] * ratio;
  }
  return fp_state(grid, std::move(rho), model);
}

/// Linearization of the scheme about a stationary state: du/dt = A u + r <w, u>
/// with A the flux frozen at m_S, r the m-derivative of A rho_S and w = g dx.
struct FrozenLinearization {
  FluxOperator a;
  std::vector<double> r;
  std::vector<double> w;
};

inline FrozenLinearization frozen_linearization(const FpGrid& grid, const ScalarMeanFieldModel& model,
                                                std::span<const double> rho_s, double m_s) {
  FrozenLinearization lin;
  lin.a = flux_operator(grid, model, m_s);
  const double eps = 1e-6 * std::max(1.0, std::abs(m_s));
  const auto up = flux_operator(grid, model, m_s + eps).apply(rho_s);
  const auto down = flux_operator(grid, model, m_s - eps).apply(rho_s);
  lin.r.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) lin.r[i] = (up[i] - down[i]) / (2.0 * eps);
  lin.w.resize(grid.size());
  statistic_into(model, grid.centers, lin.w);
  for (double& v : lin.w) v *= grid.dx;
  return lin;
}

/// Theta steps of the linear equation; the rank-one coupling is handled by
/// Sherman-Morrison around the tridiagonal solve.
inline std::vector<double> linear_fp_evolve(const FrozenLinearization& lin, std::vector<double> u, double t_end,
                                            double dt, double theta = 0.5) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw ArgumentError("linear_fp_evolve: invalid dt or horizon");
  const auto n_steps = std::llround(t_end / dt);
  if (n_steps == 0) return u;
  dt = t_end / static_cast<double>(n_steps);
  const double c = theta * dt;
  const auto z = solve_shifted(lin.a, c, lin.r);
  double wz = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) wz += lin.w[i] * z[i];
  const double denom = 1.0 - c * wz;
  if (!(std::abs(denom) > 1e-14)) throw NumericalError("linear_fp_evolve: singular rank-one update");
  for (long long k = 0; k < n_steps; ++k) {
    std::vector<double> rhs = u;
    if (theta < 1.0) {
      const auto au = lin.a.apply(u);
      double wu = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) wu += lin.w[i] * u[i];
      for (std::size_t i = 0; i < u.size(); ++i) rhs[i] += (1.0 - theta) * dt * (au[i] + lin.r[i] * wu);
    }
    auto y = solve_shifted(lin.a, c, std::move(rhs));
    double wy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) wy += lin.w[i] * y[i];
    const double scale = c * wy / denom;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * z[i];
    u = std::move(y);
  }
  return u;
}

}  // namespace mvstab
