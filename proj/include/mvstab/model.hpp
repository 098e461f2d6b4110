#pragma once

// Scalar-coupled McKean-Vlasov drifts b(x, mu) = a(x) + beta * c(x) * mu(g)
// and the three builtin model families.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mvstab/errors.hpp"

namespace mvstab {

struct ScalarMeanFieldModel {
  using Scalar = std::function<double(double)>;

  std::string name;
  double beta = 0.0;   ///< coupling strength
  double sigma = 1.0;  ///< constant diffusion coefficient
  Scalar a;            ///< base drift
  Scalar c;            ///< coupling shape
  Scalar g;            ///< coupling statistic, m = mu(g)
  /// Antiderivative of c. The coupling operator pairs f with mu(pairing' f').
  Scalar pairing;
  /// Unnormalized stationary log-density of the frozen SDE at coupling value m.
  std::function<double(double x, double m)> log_gibbs;
  /// Variable in which the spectral basis is polynomial, with its derivative.
  /// Empty means x itself.
  Scalar basis_coordinate;
  Scalar basis_coordinate_prime;
  /// Optional batched drift used by the particle engine; falls back to a and c.
  std::function<void(std::span<const double> x, double m, std::span<double> out)> drift_batch;
  /// Optional batched g, same role as drift_batch.
  std::function<void(std::span<const double> x, std::span<double> out)> statistic_batch;
  /// a odd, c even, g odd: psi is odd and m = 0 is always a root.
  bool symmetric = false;
  /// Default half-width of the self-consistency root scan.
  double scan_half_width = 3.0;
  /// Rebuilds the same family at new (beta, sigma).
  std::function<ScalarMeanFieldModel(double beta, double sigma)> family;

  ScalarMeanFieldModel with_params(double new_beta, double new_sigma) const {
    if (!family) throw ArgumentError("model '" + name + "' has no parameter family");
    return family(new_beta, new_sigma);
  }
};

inline double drift(const ScalarMeanFieldModel& model, double x, double m) {
  return model.a(x) + model.beta * model.c(x) * m;
}

/// Centered linear functional derivative of b(x, .) at a law with mu(g) = m.
inline double linear_functional_derivative(const ScalarMeanFieldModel& model, double x, double z,
                                           double m) {
  return model.beta * model.c(x) * (model.g(z) - m);
}

inline double log_gibbs_density(const ScalarMeanFieldModel& model, double x, double m) {
  return model.log_gibbs(x, m);
}

inline void drift_into(const ScalarMeanFieldModel& model, std::span<const double> x, double m,
                       std::span<double> out) {
  if (model.drift_batch) {
    model.drift_batch(x, m, out);
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = drift(model, x[i], m);
}

inline void statistic_into(const ScalarMeanFieldModel& model, std::span<const double> x,
                           std::span<double> out) {
  if (model.statistic_batch) {
    model.statistic_batch(x, out);
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = model.g(x[i]);
}

inline void check_params(const std::string& name, double beta, double sigma) {
  if (!std::isfinite(beta) || beta < 0.0)
    throw ArgumentError(name + ": beta must be finite and non-negative");
  if (!std::isfinite(sigma) || !(sigma > 0.0))
    throw ArgumentError(name + ": sigma must be finite and positive");
}

/// Double-well confinement with Curie-Weiss attraction:
/// dX = -(X^3 - X) dt - beta (X - E X) dt + sigma dB.
inline ScalarMeanFieldModel dawson(double beta, double sigma) {
  check_params("dawson", beta, sigma);
  ScalarMeanFieldModel model;
  model.name = "dawson";
  model.beta = beta;
  model.sigma = sigma;
  model.a = [beta](double x) { return -x * x * x + (1.0 - beta) * x; };
  model.c = [](double) { return 1.0; };
  model.g = [](double y) { return y; };
  model.pairing = [](double x) { return x; };
  const double scale = 2.0 / (sigma * sigma);
  model.log_gibbs = [beta, scale](double x, double m) {
    const double x2 = x * x, d = x - m;
    return -scale * (0.25 * x2 * x2 - 0.5 * x2 + 0.5 * beta * d * d);
  };
  model.drift_batch = [beta](std::span<const double> x, double m, std::span<double> out) {
    const double lin = 1.0 - beta, shift = beta * m;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      out[i] = xi * (lin - xi * xi) + shift;
    }
  };
  model.statistic_batch = [](std::span<const double> x, std::span<double> out) {
    std::copy(x.begin(), x.end(), out.begin());
  };
  model.symmetric = true;
  model.scan_half_width = 3.0;
  model.family = [](double b, double s) { return dawson(b, s); };
  return model;
}

/// Ornstein-Uhlenbeck confinement with a cosine mean field:
/// dX = -X dt + beta E[cos X] dt + sigma dB (sigma = sqrt(2) in the classical setting).
inline ScalarMeanFieldModel cosine(double beta, double sigma = std::numbers::sqrt2) {
  check_params("cosine", beta, sigma);
  ScalarMeanFieldModel model;
  model.name = "cosine";
  model.beta = beta;
  model.sigma = sigma;
  model.a = [](double x) { return -x; };
  model.c = [](double) { return 1.0; };
  model.g = [](double y) { return std::cos(y); };
  model.pairing = [](double x) { return x; };
  const double inv_var2 = 1.0 / (sigma * sigma);
  model.log_gibbs = [beta, inv_var2](double x, double m) {
    const double d = x - beta * m;
    return -d * d * inv_var2;
  };
  model.drift_batch = [beta](std::span<const double> x, double m, std::span<double> out) {
    const double shift = beta * m;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = shift - x[i];
  };
  model.statistic_batch = [](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::cos(x[i]);
  };
  model.symmetric = false;
  model.scan_half_width = 1.0;
  model.family = [](double b, double s) { return cosine(b, s); };
  return model;
}

/// u0(x) = x / (1 + x^2)^(1/3), the change of variables of the rescaled model.
inline double rescale_u0(double x) { return x / std::cbrt(1.0 + x * x); }

/// u0'(x) = (1 + x^2/3) / (1 + x^2)^(4/3).
inline double rescale_u0_prime(double x) {
  const double q = 1.0 + x * x;
  return (1.0 + x * x / 3.0) / (q * std::cbrt(q));
}

/// Double-well landscape pulled back through u0, whose stationary laws lack a
/// log-Sobolev inequality. Its stationary law at coupling m is the image of
/// the Dawson law at the same (beta, sigma, m) under u0^{-1}.
inline ScalarMeanFieldModel rescaled_double_well(double beta, double sigma) {
  check_params("rescaled_double_well", beta, sigma);
  ScalarMeanFieldModel model;
  model.name = "rescaled_double_well";
  model.beta = beta;
  model.sigma = sigma;
  const double s2 = sigma * sigma;
  // Ito correction (sigma^2/2) (log u0')' makes exp(log_gibbs) stationary.
  auto ito = [s2](double x) {
    const double x2 = x * x;
    return -s2 * x * (1.0 + x2 / 9.0) / ((1.0 + x2 / 3.0) * (1.0 + x2));
  };
  model.a = [beta, ito](double x) {
    const double u = rescale_u0(x);
    return rescale_u0_prime(x) * (-u * u * u + (1.0 - beta) * u) + ito(x);
  };
  model.c = [](double x) { return rescale_u0_prime(x); };
  model.g = [](double y) { return rescale_u0(y); };
  model.pairing = [](double x) { return rescale_u0(x); };
  model.log_gibbs = [beta, s2](double x, double m) {
    const double u = rescale_u0(x);
    const double w = u * u - 1.0, d = u - m;
    return -w * w / (2.0 * s2) - beta * d * d / s2 + std::log(rescale_u0_prime(x));
  };
  model.drift_batch = [beta, ito](std::span<const double> x, double m, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = rescale_u0(x[i]);
      out[i] = rescale_u0_prime(x[i]) * (-u * u * u + (1.0 - beta) * u + beta * m) + ito(x[i]);
    }
  };
  // Polynomials in u0 converge fast here; polynomials in x do not.
  model.basis_coordinate = [](double x) { return rescale_u0(x); };
  model.basis_coordinate_prime = [](double x) { return rescale_u0_prime(x); };
  model.symmetric = true;
  model.scan_half_width = 1.0;
  model.family = [](double b, double s) { return rescaled_double_well(b, s); };
  return model;
}

inline std::vector<std::string> builtin_model_names() {
  return {"dawson", "cosine", "rescaled_double_well"};
}

inline ScalarMeanFieldModel make_builtin(const std::string& name, double beta, double sigma) {
  if (name == "dawson") return dawson(beta, sigma);
  if (name == "cosine") return cosine(beta, sigma);
  if (name == "rescaled_double_well") return rescaled_double_well(beta, sigma);
  throw ArgumentError("unknown model '" + name + "'");
}

}  // namespace mvstab
