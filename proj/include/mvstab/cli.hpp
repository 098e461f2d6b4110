#pragma once

// Subcommands behind the mvstab tool. Each writes its files into the output
// directory, returns a JSON report listing them and an exit code:
// 0 success, 2 inconclusive, 1 error (raised as an exception).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvstab/config.hpp"
#include "mvstab/fokkerplanck.hpp"
#include "mvstab/metrics.hpp"
#include "mvstab/particles.hpp"
#include "mvstab/perturb.hpp"
#include "mvstab/spectrum.hpp"
#include "mvstab/stationary.hpp"
#include "mvstab/svg.hpp"

namespace mvstab {

inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitInconclusive = 2 };

struct CommandResult {
  int exit_code = kExitOk;
  nlohmann::json report;
};

/// Collects written files so the report can list them.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw ArgumentError("output: cannot create '" + root_.string() + "': " + ec.message());
  }

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<std::string>& files() const noexcept { return files_; }

  std::filesystem::path path(const std::string& name) { return root_ / name; }

  /// Registers a file written by other code.
  void add(const std::string& name) {
    if (!std::filesystem::exists(root_ / name)) throw ArgumentError("output: '" + name + "' was not written");
    files_.push_back(name);
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(root_ / name, std::ios::binary);
    out << text;
    if (!out) throw ArgumentError("output: cannot write '" + (root_ / name).string() + "'");
    files_.push_back(name);
  }

  void write_json(const std::string& name, const nlohmann::json& j) { write_text(name, j.dump(2) + "\n"); }

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

namespace detail {

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json num_or_null(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline GridSpec grid_spec(const ExperimentConfig& c) {
  GridSpec g;
  if (c.half_width) g.half_width = *c.half_width;
  g.min_nodes = c.n_nodes;
  return g;
}

inline SpectralSpec spectral_spec(const ExperimentConfig& c) {
  SpectralSpec s;
  s.degree = c.degree;
  s.grid = grid_spec(c);
  return s;
}

inline nlohmann::json report_head(const std::string& command, const ExperimentConfig& c) {
  return {{"schema_version", kReportSchemaVersion}, {"command", command}, {"config", config_json(c)}};
}

/// Writes report.json-style output plus a manifest with a timestamp, which is
/// the only non-reproducible byte in a run.
inline void finish(OutputDir& out, const std::string& report_name, nlohmann::json& report) {
  report["files"] = out.files();
  out.write_json(report_name, report);
  nlohmann::json manifest;
  manifest["command"] = report["command"];
  manifest["created"] = [] {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return std::string(buf);
  }();
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : out.files()) files.push_back({{"name", f}, {"bytes", std::filesystem::file_size(out.path(f))}});
  manifest["files"] = files;
  std::ofstream(out.path("manifest.json")) << manifest.dump(2) << "\n";
}

/// Piecewise-linear f on a uniform table, constant beyond it. Used to
/// evaluate f* at particle positions cheaply.
class UniformTable {
 public:
  UniformTable() = default;
  UniformTable(double lo, double hi, std::vector<double> values) : lo_(lo), hi_(hi), v_(std::move(values)) {
    if (v_.size() < 2 || !(hi > lo)) throw ArgumentError("UniformTable: need two values on a proper interval");
    h_ = (hi_ - lo_) / static_cast<double>(v_.size() - 1);
  }
  double operator()(double x) const {
    if (!(x > lo_)) return v_.front();
    if (!(x < hi_)) return v_.back();
    const double pos = (x - lo_) / h_;
    const auto j = std::min(static_cast<std::size_t>(pos), v_.size() - 2);
    const double t = pos - static_cast<double>(j);
    return (1.0 - t) * v_[j] + t * v_[j + 1];
  }

 private:
  double lo_ = 0.0, hi_ = 1.0, h_ = 1.0;
  std::vector<double> v_{0.0, 0.0};
};

inline UniformTable expansion_table(const SpectralAnalysis& a, const VectorXd& e_coeffs, std::size_t n = 8001) {
  const VectorXd p = a.p_coefficients(e_coeffs);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.gibbs.lower + (a.gibbs.upper - a.gibbs.lower) * static_cast<double>(i) / static_cast<double>(n - 1);
    v[i] = a.basis.eval(p, x).first;
  }
  return {a.gibbs.lower, a.gibbs.upper, std::move(v)};
}

/// Two-column CSV (x, h) with a header row, linearly interpolated.
inline std::function<double(double)> read_direction_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("direction file: cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  std::vector<double> xs, hs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ArgumentError("direction file: expected 'x,h' rows");
    try {
      xs.push_back(std::stod(line.substr(0, comma)));
      hs.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ArgumentError("direction file: unparseable row '" + line + "'");
    }
    if (xs.size() > 1 && !(xs.back() > xs[xs.size() - 2]))
      throw ArgumentError("direction file: x must increase strictly");
  }
  if (xs.size() < 2) throw ArgumentError("direction file: need at least two rows");
  return [xs, hs](double x) {
    if (x <= xs.front()) return hs.front();
    if (x >= xs.back()) return hs.back();
    const auto j = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    const double t = (x - xs[j]) / (xs[j + 1] - xs[j]);
    return (1.0 - t) * hs[j] + t * hs[j + 1];
  };
}

inline std::string verdict_of(const UnstableMode& mode) { return mode.unstable ? "unstable" : "stable-indicator"; }

}  // namespace detail

// ---------------------------------------------------------------------------

inline CommandResult cmd_stationary(const ExperimentConfig& cfg) {
  const auto model = cfg.make_model();
  const auto spec = detail::grid_spec(cfg);
  const double lo = cfg.m_lo.value_or(-model.scan_half_width), hi = cfg.m_hi.value_or(model.scan_half_width);
  if (!(hi > lo)) throw ArgumentError("stationary: empty m range");
  const auto rep = self_consistent_roots(model, lo, hi, cfg.n_scan, spec);

  OutputDir out(cfg.out_dir);
  std::ostringstream csv;
  csv << "m,psi\n";
  for (std::size_t i = 0; i < rep.scan_m.size(); ++i)
    csv << detail::csv_num(rep.scan_m[i]) << ',' << detail::csv_num(rep.scan_psi[i]) << '\n';
  out.write_text("psi.csv", csv.str());

  auto report = detail::report_head("stationary", cfg);
  report["branch_count"] = rep.branch_count;
  nlohmann::json roots = nlohmann::json::array();
  for (std::size_t k = 0; k < rep.roots.size(); ++k)
    roots.push_back({{"m", rep.roots[k]},
                     {"S0", rep.s0[k]},
                     {"fold", static_cast<bool>(rep.fold[k])},
                     {"indicator", rep.s0[k] > 1.0 ? "unstable" : "stable"}});
  report["roots"] = roots;
  if (cfg.critical_sigma) {
    const auto cs = critical_sigma(model, cfg.sigma_lo, cfg.sigma_hi, 41, spec);
    report["sigma_c"] = detail::num_or_null(cs.sigma_c);
  }

  if (cfg.svg) {
    PlotSeries s{"psi(m)", rep.scan_m, rep.scan_psi};
    PlotSeries zero{"0", {lo, hi}, {0.0, 0.0}, "#999999"};
    out.write_text("psi.svg", svg_line_plot({"self-consistency " + model.name, "m", "psi(m)"}, {s, zero}));
  }
  detail::finish(out, "stationary.json", report);
  return {kExitOk, report};
}

// ---------------------------------------------------------------------------

inline CommandResult cmd_spectrum(const ExperimentConfig& cfg) {
  const auto model = cfg.make_model();
  const auto spec = detail::spectral_spec(cfg);
  const auto rep = self_consistent_roots(model, spec.grid);
  if (rep.roots.empty()) throw NumericalError("spectrum: no self-consistent root in the scan range");

  OutputDir out(cfg.out_dir);
  std::ostringstream secular, fstar;
  secular << "root,m,lambda,S\n";
  fstar << "root,x,f_star\n";
  auto report = detail::report_head("spectrum", cfg);
  nlohmann::json roots = nlohmann::json::array();
  bool any_unstable = false;
  for (std::size_t r = 0; r < rep.roots.size(); ++r) {
    const double m = rep.roots[r];
    const auto a = analyze_spectrum(model, m, spec);
    const auto& mode = a.mode;
    any_unstable = any_unstable || mode.unstable;
    nlohmann::json lam = nlohmann::json::array();
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(11, a.spectrum.size()); ++k) lam.push_back(a.spectrum.values[k]);
    nlohmann::json leading = nlohmann::json::array();
    for (const auto& z : mode.leading) leading.push_back({{"re", z.real()}, {"im", z.imag()}});
    nlohmann::json entry{{"m", m},
                         {"S0", rep.s0[r]},
                         {"lambda_i", lam},
                         {"lambda_star", detail::num_or_null(mode.lambda_star)},
                         {"lambda0", {{"re", mode.lambda0.real()}, {"im", mode.lambda0.imag()}}},
                         {"abscissa", mode.abscissa},
                         {"k0", mode.k0},
                         {"defective_warning", mode.defective_warning},
                         {"leading", leading},
                         {"degree", a.basis.degree},
                         {"gram_error", a.basis.gram_error},
                         {"verdict", detail::verdict_of(mode)}};
    if (mode.lambda_star || mode.unstable) {
      entry["f_star"] = std::vector<double>(mode.f_star.data(), mode.f_star.data() + mode.f_star.size());
      const auto fv = a.f_star_values();
      for (std::size_t i = 0; i < a.gibbs.size(); ++i)
        fstar << r << ',' << detail::csv_num(a.gibbs.nodes[i]) << ',' << detail::csv_num(fv[static_cast<Eigen::Index>(i)])
              << '\n';
    }
    roots.push_back(entry);

    const double top = std::max(1.0, 2.0 * mode.lambda_star.value_or(0.5));
    for (int i = 0; i <= 200; ++i) {
      const double l = top * i / 200.0;
      secular << r << ',' << detail::csv_num(m) << ',' << detail::csv_num(l) << ','
              << detail::csv_num(secular_function(a.spectrum, a.coupling, l)) << '\n';
    }
  }
  out.write_text("secular.csv", secular.str());
  out.write_text("f_star.csv", fstar.str());
  report["roots"] = roots;
  report["verdict"] = any_unstable ? "unstable" : "stable-indicator";
  detail::finish(out, "spectrum.json", report);
  return {kExitOk, report};
}

// ---------------------------------------------------------------------------

namespace detail {

/// Root selected by perturbation.root: the most unstable one, the reference
/// root or the root nearest a given value.
inline double pick_root(const ExperimentConfig& cfg, const ScalarMeanFieldModel& model,
                        const SelfConsistencyReport& rep, const SpectralSpec& spec,
                        std::optional<SpectralAnalysis>& chosen) {
  if (rep.roots.empty()) throw NumericalError("instability: no self-consistent root in the scan range");
  if (cfg.root == "unstable") {
    double best = -std::numeric_limits<double>::infinity(), m = rep.roots.front();
    for (double r : rep.roots) {
      auto a = analyze_spectrum(model, r, spec);
      if (a.mode.abscissa > best) {
        best = a.mode.abscissa;
        m = r;
        chosen = std::move(a);
      }
    }
    return m;
  }
  const double want = cfg.root == "reference" ? reference_root(model, spec.grid) : std::stod(cfg.root);
  if (std::isnan(want)) throw NumericalError("instability: model has no reference root");
  const double m = *std::min_element(rep.roots.begin(), rep.roots.end(), [&](double a, double b) {
    return std::abs(a - want) < std::abs(b - want);
  });
  chosen = analyze_spectrum(model, m, spec);
  return m;
}

struct RunSeries {
  std::vector<double> t, m, pairing, w1, weighted;
  double initial_pairing = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> final_positions;
};

inline std::string series_csv(const RunSeries& s) {
  std::ostringstream o;
  o << "t,m,pairing,w1,weighted_lb\n";
  for (std::size_t k = 0; k < s.t.size(); ++k)
    o << csv_num(s.t[k]) << ',' << csv_num(s.m[k]) << ',' << csv_num(s.pairing[k]) << ',' << csv_num(s.w1[k]) << ','
      << csv_num(s.weighted[k]) << '\n';
  return o.str();
}

/// Masses of samples binned onto the cells of `grid` (outliers go to the end cells).
inline std::vector<double> bin_masses(const FpGrid& grid, std::span<const double> xs) {
  std::vector<double> mass(grid.size(), 0.0);
  const double w = 1.0 / static_cast<double>(xs.size());
  const double left = -grid.half_width;
  for (double x : xs) {
    const double pos = std::floor((x - left) / grid.dx);
    const auto i = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(grid.size() - 1)));
    mass[i] += w;
  }
  return mass;
}

}  // namespace detail

inline CommandResult cmd_instability(const ExperimentConfig& cfg) {
  const auto model = cfg.make_model();
  const auto spec = detail::spectral_spec(cfg);
  const auto rep = self_consistent_roots(model, spec.grid);
  std::optional<SpectralAnalysis> chosen;
  const double m_root = detail::pick_root(cfg, model, rep, spec, chosen);
  const SpectralAnalysis& a = *chosen;

  OutputDir out(cfg.out_dir);
  auto report = detail::report_head("instability", cfg);
  report["root"] = m_root;
  report["lambda_star"] = detail::num_or_null(a.mode.lambda_star);
  report["abscissa"] = a.mode.abscissa;
  report["verdict"] = detail::verdict_of(a.mode);
  if (!a.mode.unstable) {
    report["status"] = "no-unstable-mode";
    detail::finish(out, "instability.json", report);
    return {kExitOk, report};
  }

  // Direction on the analysis nodes, its truncation and the perturbed law.
  std::vector<double> h;
  std::function<double(double)> h_point;
  if (cfg.direction == "custom-file") {
    h_point = detail::read_direction_file(cfg.direction_file);
    for (double x : a.gibbs.nodes) h.push_back(h_point(x));
  } else {
    const auto part = cfg.direction == "adjoint-im" ? AdjointPart::imag : AdjointPart::real;
    h = adjoint_direction(a, part);
    const auto table =
        detail::expansion_table(a, part == AdjointPart::real ? a.mode.adjoint_re : a.mode.adjoint_im);
    h_point = table;
  }
  const auto trunc = cfg.level ? truncate_center(a.gibbs, h, *cfg.level) : truncate_to_target(a.gibbs, h, cfg.target);
  const auto mu0 = perturbed_measure(a.gibbs, trunc.values, cfg.delta);
  const auto f_nodes = a.f_star_values();
  const std::span<const double> fn(f_nodes.data(), static_cast<std::size_t>(f_nodes.size()));
  const double f_mean = a.gibbs.expect_values(fn);
  const double c0 = mu0.expect_values(fn) - f_mean;
  const double w1_law = w1_tabulated(mu0, a.gibbs, a.gibbs.rule.weights);
  report["perturbation"] = {{"M", trunc.level},         {"gamma", trunc.gamma},   {"clip_mean", trunc.clip_mean},
                            {"sup_g", trunc.sup},       {"delta0", 1.0 / trunc.sup}, {"initial_pairing", c0},
                            {"initial_w1", w1_law}};

  // Shared observation grid for the weighted-norm bound.
  const auto grid = auto_fp_grid(model, m_root, cfg.fp_cells);
  const auto rho_s = discrete_gibbs(grid, model, m_root);
  const auto f_grid = tabulate_expansion(grid, a, a.mode.f_star);
  std::vector<double> mass_s(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) mass_s[i] = rho_s[i] * grid.dx;
  WeightedNormConfig wcfg;
  wcfg.p0 = cfg.p0;
  wcfg.phi0 = cfg.phi0;
  {
    const auto fs = detail::expansion_table(a, a.mode.f_star);
    wcfg.dictionary = default_dictionary(-grid.half_width, grid.half_width, cfg.knots, 4,
                                         {{"f_star", fs}, {"g", model.g}});
  }
  const WeightedNorm wnorm(wcfg, grid.centers.front(), grid.centers.back());

  std::vector<detail::RunSeries> runs;
  if (cfg.engine == "fp") {
    const auto h_grid = tabulate(grid, h_point);
    auto s = fp_perturbed_state(grid, rho_s, h_grid, trunc.level, cfg.delta, model);
    const double base = fp_pairing(grid, rho_s, f_grid);
    const auto cdf_s = fp_cdf(grid, rho_s);
    detail::RunSeries run;
    run.seed = 0;
    run.initial_pairing = fp_pairing(grid, s.rho, f_grid) - base;
    FpConfig fc;
    fc.t_end = cfg.t_end;
    fc.dt = cfg.dt;
    fc.record_every = cfg.record_every;
    std::vector<double> mass(grid.size());
    fc.stop = [&](const FpState& st, const TimeSeries&) {
      for (std::size_t i = 0; i < grid.size(); ++i) mass[i] = st.rho[i] * grid.dx;
      run.t.push_back(st.t);
      run.m.push_back(st.m);
      run.pairing.push_back(fp_pairing(grid, st.rho, f_grid) - base);
      run.w1.push_back(w1_density(fp_cdf(grid, st.rho), cdf_s, grid.dx));
      run.weighted.push_back(wnorm.lower_bound(grid.centers, mass, mass_s));
      return false;
    };
    fp_evolve(s, model, fc);
    runs.push_back(std::move(run));
  } else {
    const auto f_table = detail::expansion_table(a, a.mode.f_star);
    const double dt = cfg.dt > 0.0 ? cfg.dt : relaxation_dt_bound(model, a.gibbs);
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      detail::RunSeries run;
      run.seed = cfg.seed + r;
      auto xs = sample_measure(mu0, cfg.n_particles, run.seed);
      std::vector<double> fx(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) fx[i] = f_table(xs[i]);
      run.initial_pairing = ensemble_mean(fx) - f_mean;
      auto e = make_ensemble(std::move(xs), model, run.seed);
      SimConfig sc;
      sc.dt = dt;
      sc.dt_bound = relaxation_dt_bound(model, a.gibbs);
      sc.t_end = cfg.t_end;
      sc.record_every = cfg.record_every;
      sc.observers = {{"f_star", f_table}};
      sc.stop = [&](const Ensemble& en, const TimeSeries& ts) {
        run.t.push_back(en.time);
        run.m.push_back(en.m_hat);
        run.pairing.push_back(ts.channel("f_star").back() - f_mean);
        run.w1.push_back(w1_to_law(en.positions, a.gibbs, 20000));
        run.weighted.push_back(wnorm.lower_bound(grid.centers, detail::bin_masses(grid, en.positions), mass_s));
        return false;
      };
      evolve(e, model, sc);
      run.final_positions = std::move(e.positions);
      runs.push_back(std::move(run));
    }
  }

  // Fit on the first run: |pairing| between 2 and 10 times its initial value.
  const auto& lead = runs.front();
  const double c_abs = std::abs(lead.initial_pairing);
  std::vector<double> y(lead.pairing.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::abs(lead.pairing[k]);
  std::optional<double> t_lo, t_hi;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] > 10.0 * c_abs) break;
    if (!t_lo && y[k] >= 2.0 * c_abs) t_lo = lead.t[k];
    if (t_lo) t_hi = lead.t[k];
  }
  const bool reached_top = std::any_of(y.begin(), y.end(), [&](double v) { return v > 10.0 * c_abs; });
  std::string status = "ok";
  std::optional<double> rate;
  if (!(c_abs > 0.0)) {
    status = "inconclusive";
    report["reason"] = "initial pairing is zero";
  } else if (!t_lo || !reached_top) {
    status = "inconclusive";
    report["reason"] = "fit window [2, 10] x initial pairing not traversed before t_end";
  } else {
    try {
      rate = fit_exp_rate(lead.t, y, *t_lo, *t_hi);
    } catch (const ArgumentError& e) {
      status = "inconclusive";
      report["reason"] = e.what();
    }
  }
  report["status"] = status;
  report["fit"] = {{"t_lo", detail::num_or_null(t_lo)},
                   {"t_hi", detail::num_or_null(t_hi)},
                   {"rate", detail::num_or_null(rate)},
                   {"relative_error", rate && a.mode.lambda_star
                                          ? nlohmann::json(std::abs(*rate - *a.mode.lambda_star) / *a.mode.lambda_star)
                                          : nlohmann::json(nullptr)}};

  nlohmann::json reps = nlohmann::json::array();
  const double band = 10.0 * cfg.delta;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    std::optional<double> escape;
    for (std::size_t k = 0; k < run.t.size() && !escape; ++k)
      if (std::abs(run.m[k] - m_root) > band) escape = run.t[k];
    const double m_final = run.m.back();
    const double nearest = *std::min_element(rep.roots.begin(), rep.roots.end(), [&](double p, double q) {
      return std::abs(p - m_final) < std::abs(q - m_final);
    });
    const double moved = m_final - m_root;
    reps.push_back({{"seed", run.seed},
                    {"initial_pairing", run.initial_pairing},
                    {"escape_time", detail::num_or_null(escape)},
                    {"final_t", run.t.back()},
                    {"final_m", m_final},
                    {"final_branch", nearest},
                    {"sign_match", escape && moved != 0.0 && (moved > 0.0) == (run.initial_pairing > 0.0)},
                    {"final_w1", run.w1.back()},
                    {"final_weighted_lb", run.weighted.back()}});
    out.write_text(r == 0 ? "series.csv" : "series_" + std::to_string(r) + ".csv", detail::series_csv(run));
  }
  report["runs"] = reps;
  report["engine"] = cfg.engine;

  if (cfg.engine == "particles" && cfg.positions != "none") {
    const auto& pos = runs.front().final_positions;
    if (cfg.positions == "csv") {
      std::ostringstream o;
      o << "x\n";
      for (double x : pos) o << detail::csv_num(x) << '\n';
      out.write_text("positions.csv", o.str());
    } else {
      Ensemble e;
      e.positions = pos;
      e.time = runs.front().t.back();
      e.seed = runs.front().seed;
      write_snapshot(e, out.path("positions.bin").string());
      out.add("positions.bin");
      out.add("positions.bin.json");
    }
  }

  if (cfg.svg) {
    PlotSeries obs{"|pairing with f*|", lead.t, y};
    PlotSeries w1{"W1 to stationary law", lead.t, lead.w1, "#d62728"};
    std::vector<PlotSeries> plots{obs, w1};
    if (a.mode.lambda_star) {
      PlotSeries ref{"initial * exp(lambda* t)", {}, {}, "#2ca02c"};
      for (double t : lead.t) {
        const double v = c_abs * std::exp(*a.mode.lambda_star * t);
        if (v > 10.0 * std::max(y.empty() ? 0.0 : *std::max_element(y.begin(), y.end()), c_abs)) break;
        ref.x.push_back(t);
        ref.y.push_back(v);
      }
      plots.push_back(ref);
    }
    out.write_text("instability.svg", svg_line_plot({"escape from m = " + detail::csv_num(m_root), "t", "value", true}, plots));
  }
  detail::finish(out, "instability.json", report);
  return {status == "ok" ? kExitOk : kExitInconclusive, report};
}

// ---------------------------------------------------------------------------

inline CommandResult cmd_sweep(const ExperimentConfig& cfg) {
  const auto model = cfg.make_model();
  const auto spec = detail::spectral_spec(cfg);
  const std::size_t n = cfg.n_sigma;
  struct Row {
    double sigma, m_min, m_ref, m_max, s0, abscissa;
    std::size_t branches;
    std::optional<double> lambda_star;
  };
  // Rows are computed in parallel and collected in sigma order.
  const auto rows = parallel_map<Row>(n, [&](std::size_t i) {
    Row row{};
    row.sigma = cfg.sweep_lo + (cfg.sweep_hi - cfg.sweep_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    const auto at = model.with_params(model.beta, row.sigma);
    const auto rep = self_consistent_roots(at, spec.grid);
    row.branches = rep.branch_count;
    row.m_min = rep.roots.empty() ? std::nan("") : rep.roots.front();
    row.m_max = rep.roots.empty() ? std::nan("") : rep.roots.back();
    row.m_ref = reference_root(at, spec.grid);
    row.s0 = std::nan("");
    row.abscissa = std::nan("");
    if (!std::isnan(row.m_ref)) {
      row.s0 = stability_indicator(at, row.m_ref, spec.grid);
      const auto a = analyze_spectrum(at, row.m_ref, spec);
      row.lambda_star = a.mode.lambda_star;
      row.abscissa = a.mode.abscissa;
    }
    return row;
  });

  OutputDir out(cfg.out_dir);
  std::ostringstream csv;
  csv << "sigma,branch_count,m_min,m_ref,m_max,S0,lambda_star,abscissa\n";
  for (const auto& r : rows)
    csv << detail::csv_num(r.sigma) << ',' << r.branches << ',' << detail::csv_num(r.m_min) << ','
        << detail::csv_num(r.m_ref) << ',' << detail::csv_num(r.m_max) << ',' << detail::csv_num(r.s0) << ','
        << detail::csv_num(r.lambda_star.value_or(std::nan(""))) << ',' << detail::csv_num(r.abscissa) << '\n';
  out.write_text("sweep.csv", csv.str());

  const auto cs = critical_sigma(model, cfg.sweep_lo, cfg.sweep_hi, std::max<std::size_t>(n, 2), spec.grid);
  auto report = detail::report_head("sweep", cfg);
  report["sigma_c"] = detail::num_or_null(cs.sigma_c);
  report["rows"] = rows.size();
  if (cfg.svg) {
    PlotSeries s0{"S0 at reference root", {}, {}};
    PlotSeries mp{"largest root", {}, {}, "#d62728"};
    for (const auto& r : rows) {
      s0.x.push_back(r.sigma);
      s0.y.push_back(r.s0);
      mp.x.push_back(r.sigma);
      mp.y.push_back(r.m_max);
    }
    out.write_text("sweep.svg", svg_line_plot({"bifurcation " + model.name, "sigma", "value"}, {s0, mp}));
  }
  detail::finish(out, "sweep.json", report);
  return {kExitOk, report};
}

inline CommandResult run_command(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "stationary") return cmd_stationary(cfg);
  if (name == "spectrum") return cmd_spectrum(cfg);
  if (name == "instability") return cmd_instability(cfg);
  if (name == "sweep") return cmd_sweep(cfg);
  throw ArgumentError("unknown command '" + name + "'");
}

}  // namespace mvstab
