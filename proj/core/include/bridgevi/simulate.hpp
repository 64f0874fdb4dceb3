#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bridgevi/advi.hpp"
#include "bridgevi/basis.hpp"

namespace bridgevi {

/// Coefficients first..last (1-based, inclusive) drawn from
/// Normal(mean, spread) and optionally rounded.
struct CoefficientRange {
  std::size_t first = 1;
  std::size_t last = 1;
  double mean = 0.0;
  double spread = 1.0;
};

struct Scenario1Spec {
  std::size_t n = 100;
  std::size_t replicas = 100;
  double sigma2 = 1.0;
  std::size_t n_coef = 34;
  std::vector<CoefficientRange> ranges{{1, 10, 5.0, 2.0}, {16, 25, 10.0, 2.0}, {31, 34, 4.0, 0.25}};
  /// Read `spread` as a variance instead of a standard deviation.
  bool spread_is_variance = false;
  bool round_coefficients = true;
  double knot_lo = -0.066;
  double knot_hi = 1.066;
  double knot_spacing = 0.033;
  int degree = 3;
};

struct Scenario1Data {
  Eigen::VectorXd x;
  std::vector<Eigen::VectorXd> y;
  Eigen::VectorXd beta;
  /// Noise-free curve X beta on x.
  Eigen::VectorXd curve;
  BasisSpec basis;
};

BasisSpec scenario1_basis(const Scenario1Spec& spec);
Eigen::VectorXd scenario1_coefficients(const Scenario1Spec& spec, Rng& rng);

/// One coefficient vector shared by all replicas; x = linspace(0, 1, n).
Scenario1Data simulate_scenario1(const Scenario1Spec& spec, Rng& rng);

/// Size-dependent ADVI settings: batch size and number of iterations.
struct ScaleSetting {
  std::size_t n = 0;
  std::size_t batch_size = 0;
  std::size_t iterations = 0;
};

const std::vector<ScaleSetting>& default_scale_settings();
/// Throws std::out_of_range for sizes not in the table.
ScaleSetting scale_setting(std::size_t n);

/// Approximate bytes needed for an n-row design of the Scenario 1 basis.
std::size_t design_bytes(std::size_t n, const Scenario1Spec& spec);

/// Single Scenario 1 replica at size n. Throws std::length_error when the
/// design would need more than `max_bytes`.
Scenario1Data simulate_scaled(std::size_t n, const Scenario1Spec& spec, Rng& rng,
                              std::size_t max_bytes = std::size_t{2} << 30);

struct GPSpec {
  double tau = 1.0;
  double jitter = 1e-8;
};

/// exp(-(x_i - x_j)^2 / tau) + jitter on the diagonal.
Eigen::MatrixXd gp_covariance(const Eigen::VectorXd& x, const GPSpec& gp);

/// Zero-mean GP draw at x; throws std::runtime_error (naming a larger
/// jitter) when the covariance cannot be factorized.
Eigen::VectorXd simulate_gp_effect(const Eigen::VectorXd& x, const GPSpec& gp, Rng& rng);

struct Scenario3Spec {
  std::size_t n = 1000;
  double tau1 = 1.0;
  double tau2 = 2.0;
  double sigma2 = 1.0;
  double beta0 = 1.0;
  double x_lo = 0.0;
  double x_hi = 10.0;
  double jitter = 1e-8;
};

struct Scenario3Data {
  /// n x 2 covariates.
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd f1;
  Eigen::VectorXd f2;
  Eigen::VectorXd noise;
  double beta0 = 0.0;
};

Scenario3Data simulate_scenario3(const Scenario3Spec& spec, Rng& rng);

}  // namespace bridgevi
