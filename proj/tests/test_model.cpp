#include <catch_amalgamated.hpp>

#include <cmath>

#include "mvstab/model.hpp"
#include "mvstab/stationary.hpp"

using namespace mvstab;

TEST_CASE("builtin drifts by substitution", "[model]") {
  CHECK(drift(dawson(1.0, 0.5), 0.0, 0.0) == 0.0);
  CHECK(drift(dawson(1.0, 0.5), 1.0, 0.0) == -1.0);
  CHECK(std::abs(drift(cosine(2.0), 0.0, 0.3) - 0.6) < 1e-15);
  const auto rdw = rescaled_double_well(0.7, 0.6);
  for (double x : {-2.0, -0.3, 0.0, 0.9, 4.0}) {
    CHECK(drift(rdw, x, 0.2) == rdw.a(x) + 0.7 * rdw.c(x) * 0.2);
    CHECK(rdw.c(x) == rescale_u0_prime(x));
  }
  CHECK(cosine(1.0).sigma == std::sqrt(2.0));
  CHECK_THROWS_AS(make_builtin("nope", 1.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(dawson(1.0, 0.0), ArgumentError);
}

TEST_CASE("linear functional derivative", "[model]") {
  const auto d = dawson(1.3, 0.7);
  for (double z : {-1.0, 0.2, 3.0}) CHECK(linear_functional_derivative(d, 0.4, z, 0.0) == 1.3 * z);
  const auto cs = cosine(2.0);
  CHECK(linear_functional_derivative(cs, 0.3, std::acos(0.25), 0.25) == 0.0);
  const auto r = rescaled_double_well(0.9, 0.6);
  for (double x : {-1.0, 0.5})
    for (double z : {-2.0, 0.7})
      CHECK(std::abs(linear_functional_derivative(r, x, z, 0.0) -
                     0.9 * rescale_u0_prime(x) * rescale_u0(z)) < 1e-15);
}

TEST_CASE("log-gibbs closed forms", "[model]") {
  const auto cs = cosine(1.7);
  // sigma^2 = 2 up to the rounding of sqrt(2) squared.
  for (double x : {-2.0, 0.1, 1.5}) {
    const double exact = -(x - 1.7 * 0.4) * (x - 1.7 * 0.4) / 2.0;
    CHECK(std::abs(log_gibbs_density(cs, x, 0.4) - exact) < 1e-15 * std::abs(exact));
  }
  const auto d = dawson(1.0, 0.6);
  for (double x : {0.3, 1.1, 2.5}) CHECK(log_gibbs_density(d, x, 0.0) == log_gibbs_density(d, -x, 0.0));
  for (double s : {0.4, 0.8}) {
    const auto r = rescaled_double_well(1.0, s);
    CHECK(std::abs(log_gibbs_density(r, 0.0, 0.0) + 1.0 / (2.0 * s * s)) < 1e-15);
  }
}

TEST_CASE("frozen drift is the gradient of the gibbs log-density", "[model]") {
  for (const std::string& name : builtin_model_names()) {
    const auto model = make_builtin(name, 1.2, 0.7);
    for (double m : {-0.4, 0.0, 0.3}) {
      for (double x = -3.0; x <= 3.0; x += 0.125) {
        const double h = 1e-5;
        const double dlog = (model.log_gibbs(x + h, m) - model.log_gibbs(x - h, m)) / (2.0 * h);
        const double b = drift(model, x, m);
        INFO(name << " x=" << x << " m=" << m);
        CHECK(std::abs(0.5 * model.sigma * model.sigma * dlog - b) < 1e-6 * std::max(1.0, std::abs(b)));
      }
    }
  }
}

TEST_CASE("symmetric models have odd drift", "[model]") {
  for (const std::string& name : {"dawson", "rescaled_double_well"}) {
    const auto model = make_builtin(name, 0.8, 0.5);
    REQUIRE(model.symmetric);
    for (double x : {0.1, 0.77, 2.0})
      for (double m : {0.0, 0.3})
        CHECK(drift(model, -x, -m) == -drift(model, x, m));
  }
  CHECK_FALSE(cosine(1.0).symmetric);
}

TEST_CASE("batched drift agrees with the scalar drift", "[model]") {
  for (const std::string& name : builtin_model_names()) {
    const auto model = make_builtin(name, 0.9, 0.8);
    std::vector<double> xs{-2.5, -0.3, 0.0, 0.4, 1.9}, out(xs.size());
    drift_into(model, xs, 0.37, out);
    for (std::size_t i = 0; i < xs.size(); ++i)
      CHECK(std::abs(out[i] - drift(model, xs[i], 0.37)) < 1e-14);
  }
}

TEST_CASE("linear functional derivative is centered at self-consistent laws", "[model]") {
  const auto model = dawson(1.0, 0.6);
  const auto rep = self_consistent_roots(model);
  for (double r : rep.roots) {
    const auto gibbs = build_gibbs(model, r);
    for (double x : {-1.0, 0.5})
      CHECK(std::abs(moment(gibbs, [&](double z) { return linear_functional_derivative(model, x, z, r); })) < 1e-10);
  }
}

TEST_CASE("rescaled model parameter family", "[model]") {
  const auto r = rescaled_double_well(1.0, 0.5).with_params(0.5, 0.9);
  CHECK(r.beta == 0.5);
  CHECK(r.sigma == 0.9);
  CHECK(r.name == "rescaled_double_well");
}
