#pragma once

// Experiment configuration: a versioned INI file with flat sections.
//
//   version = 1
//   [model]        name, beta, sigma
//   [grid]         half_width (number or auto), n_nodes
//   [basis]        degree
//   [stationary]   m_lo, m_hi (number or auto), n_scan, critical_sigma, sigma_lo, sigma_hi
//   [perturbation] delta, M (number or auto), target, direction, file, root
//   [simulation]   engine, n_particles, dt, t_end, seed, replicates, record_every, fp_cells
//   [metric]       p0, phi0, knots
//   [sweep]        sigma_lo, sigma_hi, n_sigma
//   [output]       dir, svg, positions
//
// Every key is optional; unknown sections or keys are errors.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mvstab/errors.hpp"
#include "mvstab/metrics.hpp"
#include "mvstab/model.hpp"

namespace mvstab {

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  int version = kConfigVersion;

  std::string model = "dawson";
  double beta = 1.0;
  double sigma = 0.8;

  std::optional<double> half_width;  ///< empty selects it from the density decay
  std::size_t n_nodes = 256;
  std::size_t degree = 120;

  std::optional<double> m_lo, m_hi;  ///< psi curve range; empty uses the model's scan range
  std::size_t n_scan = 401;
  bool critical_sigma = false;
  double sigma_lo = 0.1, sigma_hi = 3.0;

  double delta = 1e-3;
  std::optional<double> level;  ///< M; empty picks the smallest level meeting `target`
  double target = 0.01;
  std::string direction = "adjoint-re";  ///< adjoint-re | adjoint-im | custom-file
  std::string direction_file;            ///< CSV (x, h) when direction = custom-file
  std::string root = "unstable";         ///< unstable | reference | a number (nearest root)

  std::string engine = "fp";  ///< fp | particles
  std::size_t n_particles = 100000;
  double dt = 0.0;  ///< 0 picks the engine default
  double t_end = 40.0;
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
  double record_every = 0.05;
  std::size_t fp_cells = 1600;

  double p0 = 0.0;
  Gauge phi0 = Gauge::min_one;
  std::size_t knots = 32;

  double sweep_lo = 0.3, sweep_hi = 1.5;
  std::size_t n_sigma = 25;

  std::string out_dir = "mvstab_out";
  bool svg = true;
  std::string positions = "none";  ///< none | csv | binary

  ScalarMeanFieldModel make_model() const { return make_builtin(model, beta, sigma); }
};

namespace detail {

inline std::string config_where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

template <class T>
T parse_value(const std::string& section, const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof())
    throw ArgumentError("config: " + config_where(section, key) + " = '" + text + "' is not a valid value");
  return v;
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& text) {
  if (text == "true" || text == "yes" || text == "1" || text == "on") return true;
  if (text == "false" || text == "no" || text == "0" || text == "off") return false;
  throw ArgumentError("config: " + config_where(section, key) + " = '" + text + "' is not a boolean");
}

inline std::optional<double> parse_auto(const std::string& section, const std::string& key, const std::string& text) {
  if (text == "auto") return std::nullopt;
  return parse_value<double>(section, key, text);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ArgumentError("config: " + what);
}

}  // namespace detail

/// Parses the INI text. Values are range-checked; unknown keys throw.
inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }

  using detail::parse_value;
  ExperimentConfig c;
  // Setters per section.key; the key set doubles as the whitelist.
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> keys{
      {"", {{"version", [&](const std::string& v) { c.version = parse_value<int>("", "version", v); }}}},
      {"model",
       {{"name", [&](const std::string& v) { c.model = v; }},
        {"beta", [&](const std::string& v) { c.beta = parse_value<double>("model", "beta", v); }},
        {"sigma", [&](const std::string& v) { c.sigma = parse_value<double>("model", "sigma", v); }}}},
      {"grid",
       {{"half_width", [&](const std::string& v) { c.half_width = detail::parse_auto("grid", "half_width", v); }},
        {"n_nodes", [&](const std::string& v) { c.n_nodes = parse_value<std::size_t>("grid", "n_nodes", v); }}}},
      {"basis", {{"degree", [&](const std::string& v) { c.degree = parse_value<std::size_t>("basis", "degree", v); }}}},
      {"stationary",
       {{"m_lo", [&](const std::string& v) { c.m_lo = detail::parse_auto("stationary", "m_lo", v); }},
        {"m_hi", [&](const std::string& v) { c.m_hi = detail::parse_auto("stationary", "m_hi", v); }},
        {"n_scan", [&](const std::string& v) { c.n_scan = parse_value<std::size_t>("stationary", "n_scan", v); }},
        {"critical_sigma",
         [&](const std::string& v) { c.critical_sigma = detail::parse_bool("stationary", "critical_sigma", v); }},
        {"sigma_lo", [&](const std::string& v) { c.sigma_lo = parse_value<double>("stationary", "sigma_lo", v); }},
        {"sigma_hi", [&](const std::string& v) { c.sigma_hi = parse_value<double>("stationary", "sigma_hi", v); }}}},
      {"perturbation",
       {{"delta", [&](const std::string& v) { c.delta = parse_value<double>("perturbation", "delta", v); }},
        {"M", [&](const std::string& v) { c.level = detail::parse_auto("perturbation", "M", v); }},
        {"target", [&](const std::string& v) { c.target = parse_value<double>("perturbation", "target", v); }},
        {"direction", [&](const std::string& v) { c.direction = v; }},
        {"file", [&](const std::string& v) { c.direction_file = v; }},
        {"root", [&](const std::string& v) { c.root = v; }}}},
      {"simulation",
       {{"engine", [&](const std::string& v) { c.engine = v; }},
        {"n_particles",
         [&](const std::string& v) { c.n_particles = parse_value<std::size_t>("simulation", "n_particles", v); }},
        {"dt", [&](const std::string& v) { c.dt = parse_value<double>("simulation", "dt", v); }},
        {"t_end", [&](const std::string& v) { c.t_end = parse_value<double>("simulation", "t_end", v); }},
        {"seed", [&](const std::string& v) { c.seed = parse_value<std::uint64_t>("simulation", "seed", v); }},
        {"replicates",
         [&](const std::string& v) { c.replicates = parse_value<std::size_t>("simulation", "replicates", v); }},
        {"record_every",
         [&](const std::string& v) { c.record_every = parse_value<double>("simulation", "record_every", v); }},
        {"fp_cells", [&](const std::string& v) { c.fp_cells = parse_value<std::size_t>("simulation", "fp_cells", v); }}}},
      {"metric",
       {{"p0", [&](const std::string& v) { c.p0 = parse_value<double>("metric", "p0", v); }},
        {"phi0",
         [&](const std::string& v) {
           if (v == "min_one") c.phi0 = Gauge::min_one;
           else if (v == "identity") c.phi0 = Gauge::identity;
           else throw ArgumentError("config: metric.phi0 must be min_one or identity");
         }},
        {"knots", [&](const std::string& v) { c.knots = parse_value<std::size_t>("metric", "knots", v); }}}},
      {"sweep",
       {{"sigma_lo", [&](const std::string& v) { c.sweep_lo = parse_value<double>("sweep", "sigma_lo", v); }},
        {"sigma_hi", [&](const std::string& v) { c.sweep_hi = parse_value<double>("sweep", "sigma_hi", v); }},
        {"n_sigma", [&](const std::string& v) { c.n_sigma = parse_value<std::size_t>("sweep", "n_sigma", v); }}}},
      {"output",
       {{"dir", [&](const std::string& v) { c.out_dir = v; }},
        {"svg", [&](const std::string& v) { c.svg = detail::parse_bool("output", "svg", v); }},
        {"positions", [&](const std::string& v) { c.positions = v; }}}},
  };

  bool saw_version = false;
  for (const auto& [name, node] : tree) {
    if (node.empty() && keys.contains(name)) continue;  // empty section
    if (node.empty()) {  // top-level key
      const auto& top = keys.at("");
      const auto it = top.find(name);
      if (it == top.end()) throw ArgumentError("config: unknown top-level key '" + name + "'");
      it->second(node.data());
      saw_version = true;
      continue;
    }
    const auto sec = keys.find(name);
    if (sec == keys.end() || name.empty()) throw ArgumentError("config: unknown section [" + name + "]");
    for (const auto& [key, leaf] : node) {
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ArgumentError("config: unknown key '" + key + "' in [" + name + "]");
      it->second(leaf.data());
    }
  }

  using detail::require;
  require(saw_version, "missing 'version' key");
  require(c.version == kConfigVersion, "unsupported version " + std::to_string(c.version));
  bool known = false;
  for (const auto& n : builtin_model_names()) known = known || n == c.model;
  require(known, "unknown model '" + c.model + "'");
  require(std::isfinite(c.beta) && c.beta >= 0.0, "model.beta must be finite and non-negative");
  require(std::isfinite(c.sigma) && c.sigma > 0.0, "model.sigma must be positive");
  require(!c.half_width || *c.half_width > 0.0, "grid.half_width must be positive or auto");
  require(c.n_nodes >= 16, "grid.n_nodes must be at least 16");
  require(c.degree >= 2 && c.degree <= 400, "basis.degree must lie in [2, 400]");
  require(!c.m_lo || !c.m_hi || *c.m_hi > *c.m_lo, "stationary.m_hi must exceed m_lo");
  require(c.n_scan >= 3, "stationary.n_scan must be at least 3");
  require(c.sigma_lo > 0.0 && c.sigma_hi > c.sigma_lo, "stationary sigma range must satisfy 0 < lo < hi");
  require(std::isfinite(c.delta) && c.delta >= 0.0, "perturbation.delta must be non-negative");
  require(!c.level || *c.level > 0.0, "perturbation.M must be positive or auto");
  require(c.target > 0.0 && c.target < 1.0, "perturbation.target must lie in (0, 1)");
  require(c.direction == "adjoint-re" || c.direction == "adjoint-im" || c.direction == "custom-file",
          "perturbation.direction must be adjoint-re, adjoint-im or custom-file");
  require(c.direction != "custom-file" || !c.direction_file.empty(),
          "perturbation.file is required for direction = custom-file");
  if (c.root != "unstable" && c.root != "reference") {
    double r = 0.0;
    std::istringstream in(c.root);
    require(static_cast<bool>(in >> r) && (in >> std::ws).eof() && std::isfinite(r),
            "perturbation.root must be unstable, reference or a number");
  }
  require(c.engine == "fp" || c.engine == "particles", "simulation.engine must be fp or particles");
  require(c.n_particles >= 2, "simulation.n_particles must be at least 2");
  require(std::isfinite(c.dt) && c.dt >= 0.0, "simulation.dt must be non-negative (0 = auto)");
  require(std::isfinite(c.t_end) && c.t_end > 0.0, "simulation.t_end must be positive");
  require(c.replicates >= 1 && c.replicates <= 1000, "simulation.replicates must lie in [1, 1000]");
  require(c.record_every > 0.0, "simulation.record_every must be positive");
  require(c.fp_cells >= 50, "simulation.fp_cells must be at least 50");
  require(c.p0 >= 0.0, "metric.p0 must be non-negative");
  require(c.knots >= 1, "metric.knots must be at least 1");
  require(c.sweep_lo > 0.0 && c.sweep_hi > c.sweep_lo, "sweep range must satisfy 0 < sigma_lo < sigma_hi");
  require(c.n_sigma >= 2, "sweep.n_sigma must be at least 2");
  require(c.positions == "none" || c.positions == "csv" || c.positions == "binary",
          "output.positions must be none, csv or binary");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config: cannot open '" + path + "'");
  return parse_config(in);
}

/// Echo of the effective configuration, embedded in every report.
inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["version"] = c.version;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("auto"); };
  j["model"] = {{"name", c.model}, {"beta", c.beta}, {"sigma", c.sigma}};
  j["grid"] = {{"half_width", opt(c.half_width)},
               {"n_nodes", c.n_nodes}};
  j["basis"] = {{"degree", c.degree}};
  j["stationary"] = {{"m_lo", opt(c.m_lo)},         {"m_hi", opt(c.m_hi)},         {"n_scan", c.n_scan},
                     {"critical_sigma", c.critical_sigma}, {"sigma_lo", c.sigma_lo}, {"sigma_hi", c.sigma_hi}};
  j["sweep"] = {{"sigma_lo", c.sweep_lo}, {"sigma_hi", c.sweep_hi}, {"n_sigma", c.n_sigma}};
  j["perturbation"] = {{"delta", c.delta},
                       {"M", opt(c.level)},
                       {"target", c.target},
                       {"direction", c.direction},
                       {"root", c.root}};
  j["simulation"] = {{"engine", c.engine},       {"n_particles", c.n_particles}, {"dt", c.dt},
                     {"t_end", c.t_end},         {"seed", c.seed},               {"replicates", c.replicates},
                     {"record_every", c.record_every}, {"fp_cells", c.fp_cells}};
  j["metric"] = {{"p0", c.p0}, {"phi0", c.phi0 == Gauge::min_one ? "min_one" : "identity"}, {"knots", c.knots}};
  return j;
}

}  // namespace mvstab
