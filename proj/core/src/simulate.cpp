#include "bridgevi/simulate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bridgevi {

BasisSpec scenario1_basis(const Scenario1Spec& spec) {
  return bspline_with_target(uniform_knots(spec.knot_lo, spec.knot_hi, spec.knot_spacing),
                             spec.degree, spec.n_coef);
}

Eigen::VectorXd scenario1_coefficients(const Scenario1Spec& spec, Rng& rng) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.n_coef));
  for (const auto& r : spec.ranges) {
    if (r.first < 1 || r.last < r.first || r.last > spec.n_coef) {
      throw std::invalid_argument("scenario1: coefficient range outside 1.." + std::to_string(spec.n_coef));
    }
    const double sd = spec.spread_is_variance ? std::sqrt(r.spread) : r.spread;
    std::normal_distribution<double> normal(r.mean, sd);
    for (std::size_t k = r.first; k <= r.last; ++k) {
      const double v = normal(rng);
      beta(static_cast<Eigen::Index>(k - 1)) = spec.round_coefficients ? std::round(v) : v;
    }
  }
  return beta;
}

namespace {

Scenario1Data draw_scenario1(std::size_t n, std::size_t replicas, const Scenario1Spec& spec, Rng& rng) {
  if (!(spec.sigma2 >= 0.0)) throw std::invalid_argument("scenario1: sigma2 must be >= 0");
  Scenario1Data out;
  out.basis = scenario1_basis(spec);
  out.beta = scenario1_coefficients(spec, rng);
  if (n == 1) {
    out.x = Eigen::VectorXd::Constant(1, 0.5);
  } else {
    out.x = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), 0.0, 1.0);
  }
  const DesignMatrix design = build_design({out.x.data(), static_cast<std::size_t>(out.x.size())}, out.basis);
  out.curve = design.values * out.beta;
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.sigma2));
  out.y.reserve(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    Eigen::VectorXd y = out.curve;
    if (spec.sigma2 > 0.0) {
      for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += noise(rng);
    }
    out.y.push_back(std::move(y));
  }
  return out;
}

}  // namespace

Scenario1Data simulate_scenario1(const Scenario1Spec& spec, Rng& rng) {
  if (spec.n == 0) throw std::invalid_argument("scenario1: n must be >= 1");
  return draw_scenario1(spec.n, spec.replicas, spec, rng);
}

const std::vector<ScaleSetting>& default_scale_settings() {
  static const std::vector<ScaleSetting> table{
      {1000, 1000, 2000},      {10000, 1000, 2000},    {50000, 1000, 5000},
      {100000, 10000, 1000},   {500000, 10000, 5000},  {1000000, 10000, 10000},
  };
  return table;
}

ScaleSetting scale_setting(std::size_t n) {
  for (const auto& s : default_scale_settings()) {
    if (s.n == n) return s;
  }
  throw std::out_of_range("no default batch setting for n = " + std::to_string(n));
}

std::size_t design_bytes(std::size_t n, const Scenario1Spec& spec) {
  // Sparse row storage of degree + 1 nonzeros per row plus y, the residual and x.
  const std::size_t nnz = n * static_cast<std::size_t>(spec.degree + 1);
  return nnz * (sizeof(double) + sizeof(int)) * 2 + n * sizeof(double) * 4;
}

Scenario1Data simulate_scaled(std::size_t n, const Scenario1Spec& spec, Rng& rng, std::size_t max_bytes) {
  if (n == 0) throw std::invalid_argument("simulate_scaled: n must be >= 1");
  const std::size_t need = design_bytes(n, spec);
  if (need > max_bytes) {
    throw std::length_error("simulate_scaled: n = " + std::to_string(n) + " needs about " +
                            std::to_string(need >> 20) + " MiB, above the limit of " +
                            std::to_string(max_bytes >> 20) + " MiB");
  }
  return draw_scenario1(n, 1, spec, rng);
}

Eigen::MatrixXd gp_covariance(const Eigen::VectorXd& x, const GPSpec& gp) {
  if (!(gp.tau > 0.0)) throw std::invalid_argument("gp: tau must be > 0");
  if (!(gp.jitter >= 0.0)) throw std::invalid_argument("gp: jitter must be >= 0");
  const Eigen::Index n = x.size();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double d = x(i) - x(j);
      c(i, j) = std::exp(-d * d / gp.tau);
      c(j, i) = c(i, j);
    }
    c(j, j) += gp.jitter;
  }
  return c;
}

Eigen::VectorXd simulate_gp_effect(const Eigen::VectorXd& x, const GPSpec& gp, Rng& rng) {
  const Eigen::MatrixXd c = gp_covariance(x, gp);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    const double suggested = gp.jitter > 0.0 ? gp.jitter * 100.0 : 1e-8;
    throw std::runtime_error("gp: covariance is not positive definite; retry with jitter >= " +
                             std::to_string(suggested));
  }
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(x.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return llt.matrixL() * z;
}

Scenario3Data simulate_scenario3(const Scenario3Spec& spec, Rng& rng) {
  if (spec.n == 0) throw std::invalid_argument("scenario3: n must be >= 1");
  if (!(spec.x_lo < spec.x_hi)) throw std::invalid_argument("scenario3: x_lo must be < x_hi");
  if (!(spec.sigma2 >= 0.0)) throw std::invalid_argument("scenario3: sigma2 must be >= 0");
  const auto n = static_cast<Eigen::Index>(spec.n);
  Scenario3Data out;
  out.beta0 = spec.beta0;
  out.x.resize(n, 2);
  std::uniform_real_distribution<double> unif(spec.x_lo, spec.x_hi);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) out.x(i, c) = unif(rng);
  }
  out.f1 = simulate_gp_effect(out.x.col(0), GPSpec{spec.tau1, spec.jitter}, rng);
  out.f2 = simulate_gp_effect(out.x.col(1), GPSpec{spec.tau2, spec.jitter}, rng);
  out.noise = Eigen::VectorXd::Zero(n);
  if (spec.sigma2 > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(spec.sigma2));
    for (Eigen::Index i = 0; i < n; ++i) out.noise(i) = noise(rng);
  }
  out.y = (Eigen::VectorXd::Constant(n, spec.beta0) + out.f1 + out.f2) + out.noise;
  return out;
}

}  // namespace bridgevi
