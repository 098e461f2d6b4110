#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "mvstab/stationary.hpp"

using namespace mvstab;

namespace {

// Brute-force trapezoid moment on a fine uniform grid.
template <class F>
double trapezoid_moment(const ScalarMeanFieldModel& model, double m, F&& f, double half = 8.0,
                        int n = 100000) {
  const double h = 2.0 * half / n;
  double peak = -1e300;
  for (int i = 0; i <= n; ++i) peak = std::max(peak, model.log_gibbs(-half + h * i, m));
  double z = 0.0, s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -half + h * i;
    const double w = (i == 0 || i == n ? 0.5 : 1.0) * std::exp(model.log_gibbs(x, m) - peak);
    z += w;
    s += w * f(x);
  }
  return s / z;
}

// a = -x, c = 1, g = y^2: psi(m) = beta^2 m^2 + sigma^2/2 - m, tangent to zero
// when beta^2 sigma^2 = 1/2.
ScalarMeanFieldModel quadratic_statistic_model(double beta, double sigma) {
  ScalarMeanFieldModel model = cosine(beta, sigma);
  model.name = "quadratic_statistic";
  model.g = [](double y) { return y * y; };
  model.drift_batch = nullptr;
  model.family = quadratic_statistic_model;
  return model;
}

}  // namespace

TEST_CASE("gibbs measure of the cosine model is the shifted gaussian", "[stationary]") {
  for (double m : {-0.5, 0.0, 0.7}) {
    const auto g = build_gibbs(cosine(1.4), m);
    double total = 0.0;
    for (double w : g.mass) total += w;
    CHECK(std::abs(total - 1.0) < 1e-12);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = g.nodes[i] - 1.4 * m;
      CHECK(std::abs(g.density[i] - std::exp(-0.5 * d * d) / std::sqrt(2.0 * std::numbers::pi)) < 1e-10);
    }
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.cdf[i] >= g.cdf[i - 1]);
  }
  CHECK(build_gibbs(cosine(1.0), 0.0).size() >= 256);
}

TEST_CASE("dawson second moment against a trapezoid oracle", "[stationary]") {
  const auto model = dawson(1.0, 0.6);
  const auto g = build_gibbs(model, 0.0);
  const double oracle = trapezoid_moment(model, 0.0, [](double x) { return x * x; });
  CHECK(std::abs(moment(g, [](double x) { return x * x; }) - oracle) < 1e-8);
  CHECK(std::abs(moment(g, [](double) { return 1.0; }) - 1.0) < 1e-12);
  CHECK(std::abs(moment(g, [](double x) { return x; })) < 1e-12);
}

TEST_CASE("truncation too narrow is reported", "[stationary]") {
  GridSpec spec;
  spec.half_width = 1.0;
  CHECK_THROWS_AS(build_gibbs(dawson(1.0, 0.8), 0.0, spec), TruncationError);
}

TEST_CASE("psi basic identities", "[stationary]") {
  for (double s : {0.4, 0.7, 1.2}) {
    CHECK(std::abs(psi(dawson(1.0, s), 0.0)) < 1e-12);
    CHECK(std::abs(psi(rescaled_double_well(1.0, s), 0.0)) < 1e-12);
  }
  for (double m : {-1.0, 0.25, 2.0}) CHECK(std::abs(psi(dawson(0.0, 0.8), m) + m) < 1e-12);
  const auto d = dawson(1.0, 0.5);
  for (double m = -2.0; m <= 2.0; m += 0.1) CHECK(std::abs(psi(d, m) + psi(d, -m)) < 1e-10);
}

TEST_CASE("rescaled model reproduces the dawson psi", "[stationary]") {
  for (double s : {0.5, 0.8}) {
    const auto d = dawson(1.0, s);
    const auto r = rescaled_double_well(1.0, s);
    for (double m = -1.0; m <= 1.0 + 1e-12; m += 0.125) CHECK(std::abs(psi(r, m) - psi(d, m)) < 1e-8);
  }
}

TEST_CASE("self-consistent roots and branch structure", "[stationary]") {
  const auto low = self_consistent_roots(dawson(1.0, 0.5));
  REQUIRE(low.branch_count == 3);
  CHECK(std::abs(low.roots[0] + low.roots[2]) < 1e-9);
  CHECK(std::abs(low.roots[1]) < 1e-10);
  CHECK(low.s0[1] > 1.0);
  CHECK(low.s0[0] < 1.0);
  CHECK(low.s0[2] < 1.0);

  GridSpec fine;
  fine.panel_width = 0.125;
  for (double r : low.roots) CHECK(std::abs(psi(dawson(1.0, 0.5), r, fine)) < 1e-10);

  const auto high = self_consistent_roots(dawson(1.0, 1.5));
  REQUIRE(high.branch_count == 1);
  CHECK(std::abs(high.roots[0]) < 1e-10);

  const auto free = self_consistent_roots(dawson(0.0, 0.5));
  REQUIRE(free.branch_count == 1);
  CHECK(std::abs(free.roots[0]) < 1e-10);
  CHECK(free.s0[0] == 0.0);

  // Cosine: the single root solves cos(beta m) = sqrt(e) m at sigma = sqrt(2).
  const auto cs = cosine(1.0);
  const auto crep = self_consistent_roots(cs);
  REQUIRE(crep.branch_count == 1);
  const double r = crep.roots[0];
  CHECK(std::abs(std::cos(r) - std::sqrt(std::numbers::e) * r) < 1e-10);
  CHECK(std::abs(moment(build_gibbs(cs, r), [](double x) { return std::cos(x); }) - r) < 1e-10);
}

TEST_CASE("tangential roots are flagged as folds", "[stationary]") {
  const auto model = quadratic_statistic_model(1.0, std::sqrt(0.5));
  const auto rep = self_consistent_roots(model, -1.0, 1.1, 2000);
  REQUIRE(rep.branch_count == 1);
  CHECK(rep.fold[0]);
  CHECK(std::abs(rep.roots[0] - 0.5) < 1e-4);
}

TEST_CASE("outer branch decreases in sigma", "[stationary]") {
  double prev = 10.0;
  for (double s = 0.3; s < 0.9; s += 0.1) {
    const auto rep = self_consistent_roots(dawson(1.0, s));
    REQUIRE(rep.branch_count == 3);
    CHECK(rep.roots[2] < prev);
    prev = rep.roots[2];
  }
}

TEST_CASE("stability indicator equals one plus psi'", "[stationary]") {
  CHECK(stability_indicator(dawson(1.0, 0.5), 0.0) > 1.0);
  CHECK(stability_indicator(dawson(0.0, 0.5), 0.0) == 0.0);
  CHECK_THROWS_AS(stability_indicator(dawson(1.0, 0.5), 0.3), PreconditionError);
  for (const auto& model : {dawson(1.0, 0.5), dawson(1.0, 0.8), rescaled_double_well(1.0, 0.6),
                            rescaled_double_well(0.7, 0.9)}) {
    const auto rep = self_consistent_roots(model);
    for (double r : rep.roots) {
      const double h = 1e-4;
      const double dpsi = (psi(model, r + h) - psi(model, r - h)) / (2.0 * h);
      INFO(model.name << " sigma=" << model.sigma << " root=" << r);
      CHECK(std::abs(stability_indicator(model, r) - (1.0 + dpsi)) < 1e-6);
    }
  }
}

TEST_CASE("critical sigma", "[stationary]") {
  const auto d = dawson(1.0, 1.0);
  const auto cs = critical_sigma(d, 0.1, 3.0);
  REQUIRE(cs.sigma_c.has_value());
  const double sc = *cs.sigma_c;
  CHECK(sc > 0.1);
  CHECK(sc < 3.0);
  CHECK(cs.bracket_lo <= sc);
  CHECK(cs.bracket_hi >= sc);
  CHECK(stability_indicator(d.with_params(1.0, 0.8 * sc), 0.0) > 1.0);
  CHECK(stability_indicator(d.with_params(1.0, 1.2 * sc), 0.0) < 1.0);
  CHECK_FALSE(critical_sigma(dawson(0.0, 1.0), 0.1, 3.0).sigma_c.has_value());
  CHECK_FALSE(critical_sigma(cosine(1.0), 0.5, 3.0, 11).sigma_c.has_value());
}
