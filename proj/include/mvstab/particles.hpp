#pragma once

// N-particle Euler-Maruyama for dX = b(X, m_hat) dt + sigma dB with the
// empirical coupling m_hat = mean of g over the ensemble, updated once per step.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mvstab/errors.hpp"
#include "mvstab/model.hpp"
#include "mvstab/numerics.hpp"
#include "mvstab/parallel.hpp"
#include "mvstab/perturb.hpp"
#include "mvstab/rng.hpp"
#include "mvstab/stationary.hpp"
#include "mvstab/timeseries.hpp"

namespace mvstab {

struct Ensemble {
  std::vector<double> positions;
  std::vector<double> statistic;  ///< g(positions), kept in sync
  double time = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step_index = 0;   ///< noise counter
  double m_hat = 0.0;
  /// Optional noise labels: particle i draws the normal assigned to index
  /// labels[i]. Empty means labels[i] = i.
  std::vector<std::uint64_t> labels;
};

/// Empirical mean of tabulated values, by pairwise summation.
inline double ensemble_mean(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("ensemble_mean: empty ensemble");
  return tree_sum(v) / static_cast<double>(v.size());
}

inline Ensemble make_ensemble(std::vector<double> positions, const ScalarMeanFieldModel& model,
                              std::uint64_t seed) {
  if (positions.empty()) throw ArgumentError("make_ensemble: no particles");
  Ensemble e;
  e.positions = std::move(positions);
  e.statistic.resize(e.positions.size());
  statistic_into(model, e.positions, e.statistic);
  e.seed = seed;
  e.m_hat = ensemble_mean(e.statistic);
  return e;
}

/// Step-size guard 0.01 / max|a'| with a' sampled across the law's bulk
/// (between its `tail` and 1 - `tail` quantiles).
inline double relaxation_dt_bound(const ScalarMeanFieldModel& model, const TabulatedLaw& law,
                                  double tail = 1e-6) {
  const CdfInterpolant icdf(law);
  const double lo = icdf.quantile(tail), hi = icdf.quantile(1.0 - tail);
  double worst = 0.0;
  const int n = 400;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    worst = std::max(worst, std::abs((model.a(x + h) - model.a(x - h)) / (2.0 * h)));
  }
  return worst > 0.0 ? 0.01 / worst : std::numeric_limits<double>::infinity();
}

/// One synchronous Euler-Maruyama step. Particles 2k and 2k+1 draw their
/// normals from the Philox block at counter (step_index, k), so results do not
/// depend on the worker count. With labels set, the label replaces the index. `noise` scales sigma (0 gives the Euler ODE).
inline void step(Ensemble& e, const ScalarMeanFieldModel& model, double dt,
                 std::size_t workers = worker_count(), double noise = 1.0) {
  if (!(dt > 0.0)) throw ArgumentError("step: dt must be positive");
  const std::size_t n = e.positions.size();
  if (!e.labels.empty() && e.labels.size() != n) throw ArgumentError("step: label count mismatch");
  const double amp = noise * model.sigma * std::sqrt(dt);
  const double m = e.m_hat;
  const std::uint64_t s = e.step_index;
  const Philox4x32 gen(stream_key(e.seed, kNoiseStream));
  parallel_ranges(
      n,
      [&](std::size_t b, std::size_t end) {
        // Tiles keep the drift buffer in L1 and avoid a heap allocation per step.
        constexpr std::size_t tile = 512;
        double drift[tile];
        for (std::size_t t0 = b; t0 < end; t0 += tile) {
          const std::size_t len = std::min(tile, end - t0);
          double* x = e.positions.data() + t0;
          drift_into(model, std::span<const double>(x, len), m, std::span<double>(drift, len));
          if (e.labels.empty()) {
            for (std::size_t j = 0; j < len; j += 2) {
              const auto [z0, z1] = normal_pair(gen(s, (t0 + j) / 2));
              x[j] += drift[j] * dt + amp * z0;
              if (j + 1 < len) x[j + 1] += drift[j + 1] * dt + amp * z1;
            }
          } else {
            for (std::size_t j = 0; j < len; ++j) {
              const std::uint64_t id = e.labels[t0 + j];
              const auto z = normal_pair(gen(s, id / 2));
              x[j] += drift[j] * dt + amp * (id % 2 == 0 ? z.first : z.second);
            }
          }
          for (std::size_t j = 0; j < len; ++j) {
            if (!std::isfinite(x[j])) {
              std::ostringstream msg;
              msg << "step: particle " << t0 + j << " left the finite range at t = " << e.time + dt;
              throw BlowUpError(msg.str());
            }
          }
          statistic_into(model, std::span<const double>(x, len), std::span<double>(e.statistic.data() + t0, len));
        }
      },
      workers, 2);
  e.time += dt;
  ++e.step_index;
  e.m_hat = ensemble_mean(e.statistic);
}

struct Observer {
  std::string name;
  std::function<double(double)> f;
};

struct SimConfig {
  double dt = 1e-3;
  double t_end = 1.0;
  std::size_t n_particles = 10000;
  std::uint64_t seed = 1;
  double record_every = 0.05;       ///< time between stored frames
  std::vector<Observer> observers;  ///< ensemble means recorded per frame
  double dt_bound = 0.0;            ///< relaxation guard; 0 disables the check
  std::size_t workers = 0;          ///< 0 uses worker_count()
  /// Called after every stored frame; returning true ends the run early.
  std::function<bool(const Ensemble&, const TimeSeries&)> stop;
};

/// Runs to t_end (or until `stop`), storing t, m_hat and observer means.
inline TimeSeries evolve(Ensemble& e, const ScalarMeanFieldModel& model, const SimConfig& cfg) {
  if (!(cfg.dt > 0.0) || !(cfg.t_end >= e.time)) throw ArgumentError("evolve: invalid dt or horizon");
  if (cfg.dt_bound > 0.0 && cfg.dt > cfg.dt_bound) {
    std::ostringstream msg;
    msg << "evolve: dt = " << cfg.dt << " exceeds the relaxation guard " << cfg.dt_bound;
    throw PreconditionError(msg.str());
  }
  const std::size_t workers = cfg.workers ? cfg.workers : worker_count();
  std::vector<std::string> names{"m_hat"};
  for (const auto& o : cfg.observers) names.push_back(o.name);
  TimeSeries series(names);
  std::vector<double> scratch(e.positions.size());
  auto record = [&] {
    std::vector<double> row{e.m_hat};
    for (const auto& o : cfg.observers) {
      parallel_ranges(
          e.positions.size(),
          [&](std::size_t b, std::size_t end) {
            for (std::size_t i = b; i < end; ++i) scratch[i] = o.f(e.positions[i]);
          },
          workers);
      row.push_back(ensemble_mean(scratch));
    }
    series.push(e.time, row);
  };
  const auto stride = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(cfg.record_every / cfg.dt)));
  const auto n_steps = static_cast<std::uint64_t>(std::llround((cfg.t_end - e.time) / cfg.dt));
  record();
  if (cfg.stop && cfg.stop(e, series)) return series;
  for (std::uint64_t k = 1; k <= n_steps; ++k) {
    step(e, model, cfg.dt, workers);
    if (k % stride == 0 || k == n_steps) {
      record();
      if (cfg.stop && cfg.stop(e, series)) break;
    }
  }
  return series;
}

/// Positions as raw little-endian float64 plus a JSON sidecar {n, t, seed}.
inline void write_snapshot(const Ensemble& e, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("write_snapshot: cannot open '" + path + "'");
  static_assert(std::endian::native == std::endian::little, "snapshot format is little-endian");
  out.write(reinterpret_cast<const char*>(e.positions.data()),
            static_cast<std::streamsize>(e.positions.size() * sizeof(double)));
  std::ofstream side(path + ".json");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", e.time);
  side << "{\"n\": " << e.positions.size() << ", \"t\": " << buf << ", \"seed\": " << e.seed << "}\n";
}

}  // namespace mvstab
