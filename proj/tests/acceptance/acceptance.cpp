// Acceptance suite: one PASS/FAIL line per criterion, written to stdout and
// to acceptance_results.txt in the working directory.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bridgevi/advi.hpp"
#include "bridgevi/basis.hpp"
#include "bridgevi/diagnostics.hpp"
#include "bridgevi/mcmc.hpp"
#include "bridgevi/model.hpp"
#include "bridgevi/simulate.hpp"
#include "bridgevi/truncated.hpp"
#include "oracles.hpp"

namespace {

using namespace bridgevi;
using Clock = std::chrono::steady_clock;

namespace tol {
constexpr double conjugate_ks = 0.05;
constexpr std::size_t conjugate_draws = 5000;
constexpr double conjugate_seconds = 60.0;
constexpr double gradient_rel = 1e-5;
constexpr std::size_t gradient_points = 50;
constexpr std::size_t elbo_mc = 10000;
constexpr double elbo_se = 3.0;
constexpr double ratio_rel = 1e-10;
constexpr std::size_t ratio_states = 100;
constexpr double truncated_ks = 0.02;
constexpr std::size_t truncated_draws = 100000;
constexpr double scenario_mae = 0.6;
constexpr double scenario_coverage = 0.9;
constexpr double scenario_rejection = 0.15;
constexpr double scenario_advi_seconds = 60.0;
constexpr double scenario_mcmc_seconds = 900.0;
constexpr std::size_t scaling_iterations = 1000;
constexpr std::size_t scaling_repeats = 3;
constexpr double basis_abs = 1e-10;
constexpr std::size_t basis_configs = 100;
constexpr double augmentation_ks = 0.02;
constexpr std::size_t augmentation_draws = 100000;
}  // namespace tol

struct Outcome {
  int id = 0;
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

DesignMatrix dense_block(const Eigen::MatrixXd& x) {
  DesignMatrix d;
  d.values = x.sparseView(0.0, 0.0);
  d.values.makeCompressed();
  d.spec = BasisSpec::identity();
  return d;
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index c) {
  return {m.col(c).data(), m.col(c).data() + m.rows()};
}

// ---------------------------------------------------------------------------

Outcome conjugate_posterior() {
  Rng rng(101);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 50;
  const Eigen::Index p = 5;
  const double phi = 4.0;
  const double lambda = 0.5;
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  Eigen::VectorXd beta(p);
  beta << 1.0, -0.5, 0.25, 0.0, 2.0;
  Eigen::VectorXd y = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) y(i) += nd(rng) / std::sqrt(phi);

  ModelSpec spec;
  spec.blocks.push_back({dense_block(x), true});
  spec.fixed_phi = phi;
  spec.fixed_lambda = Eigen::VectorXd::Constant(1, lambda);
  spec.fixed_alpha = Eigen::VectorXd::Constant(1, 2.0);
  const Model model(spec);
  const oracle::Gaussian exact = oracle::ridge_posterior(x, y, phi, lambda);

  auto worst_ks = [&](const PosteriorSamples& s) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      const double m = exact.mean(k);
      const double sd = std::sqrt(exact.cov(k, k));
      std::vector<double> v = column(s.draws, k);
      std::sort(v.begin(), v.end());
      std::vector<double> f(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) f[i] = oracle::normal_cdf((v[i] - m) / sd);
      worst = std::max(worst, oracle::ks_statistic_sorted(f));
    }
    return worst;
  };

  auto t0 = Clock::now();
  FitConfig fc;
  fc.iterations = 5000;
  fc.seed = 7;
  fc.average_fraction = 0.5;
  const FitResult fr = fit(model, y, fc);
  Rng draw_rng(8);
  const PosteriorSamples advi = sample_posterior(model, fr.state, tol::conjugate_draws, draw_rng);
  const double advi_s = seconds_since(t0);

  t0 = Clock::now();
  ChainConfig cc;
  cc.thin = 20;
  cc.burn_in = 1000;
  cc.iterations = cc.burn_in + cc.thin * tol::conjugate_draws;
  cc.seed = 9;
  const ChainOutput chain = run_chain(model, y, cc);
  const double mcmc_s = seconds_since(t0);

  const double ks_a = worst_ks(advi);
  const double ks_m = worst_ks(chain.samples);
  const bool pass = !fr.diverged && ks_a < tol::conjugate_ks && ks_m < tol::conjugate_ks &&
                    advi_s < tol::conjugate_seconds && mcmc_s < tol::conjugate_seconds &&
                    chain.samples.draws.rows() == static_cast<Eigen::Index>(tol::conjugate_draws);
  return {1, pass,
          "max KS ADVI " + fmt(ks_a) + ", MCMC " + fmt(ks_m) + " (< " + fmt(tol::conjugate_ks) +
              "); seconds ADVI " + fmt(advi_s) + ", MCMC " + fmt(mcmc_s)};
}

// ---------------------------------------------------------------------------

Model gradient_model(Eigen::VectorXd& y, Rng& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index n = 60;
  std::vector<double> x1(n);
  std::vector<double> x2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x1[i] = unif(rng);
    x2[i] = unif(rng);
  }
  Eigen::MatrixXd x0(n, 2);
  x0.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) x0(i, 1) = nd(rng);
  ModelSpec spec;
  spec.hyper.a_eta = 2.0;
  spec.hyper.b_eta = 3.0;
  spec.mu0 = Eigen::VectorXd::Zero(2);
  spec.sigma0 = Eigen::MatrixXd::Identity(2, 2) * 4.0;
  spec.sigma0(0, 1) = spec.sigma0(1, 0) = 1.0;
  spec.blocks.push_back({dense_block(x0), false});
  spec.blocks.push_back({build_design(x1, BasisSpec::bspline(uniform_knots(-0.3, 1.3, 0.2), 3)), true});
  spec.blocks.push_back({build_design(x2, BasisSpec::bspline(uniform_knots(-0.2, 1.2, 0.35), 2)), true});
  y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(6.0 * x1[i]) + x2[i] * x2[i] + 0.3 * nd(rng);
  return Model(spec);
}

// Fourth-order central difference of f along coordinate i.
double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                          Eigen::Index i, double h) {
  auto at = [&](double step) {
    Eigen::VectorXd v = x;
    v(i) += step;
    return f(v);
  };
  return (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
}

Outcome gradient_checks() {
  Rng rng(202);
  Eigen::VectorXd y;
  const Model model = gradient_model(y, rng);
  const auto rows = model.all_rows();
  const Eigen::Index d = static_cast<Eigen::Index>(model.layout().dim());
  const auto n_coef = static_cast<Eigen::Index>(model.layout().n_coef());
  std::normal_distribution<double> nd;

  double worst_point = 0.0;
  for (std::size_t t = 0; t < tol::gradient_points; ++t) {
    Eigen::VectorXd xi(d);
    for (Eigen::Index i = 0; i < d; ++i) xi(i) = nd(rng) * (i < n_coef ? 1.5 : 0.8);
    const Eigen::VectorXd g = model.grad_logjoint_unconstrained(xi, y, rows, 1.0);
    for (Eigen::Index i = 0; i < d; ++i) {
      // Coefficients have a kink at zero; keep the stencil well away from it.
      const double h = i < n_coef ? std::min(1e-3, 0.01 * std::abs(xi(i))) : 1e-3 * std::max(1.0, std::abs(xi(i)));
      const double fd = central_difference(
          [&](const Eigen::VectorXd& v) { return model.logjoint_unconstrained(v, y, rows, 1.0); }, xi, i, h);
      worst_point = std::max(worst_point, std::abs(fd - g(i)) / std::max(1.0, std::abs(fd)));
    }
  }

  // ELBO gradient with common random numbers against central differences of
  // the same Monte Carlo estimate. The standard error of each coordinate
  // comes from the per-draw terms of the reparameterized gradient.
  VariationalState state = initial_state(model, y, 0.1);
  {
    Eigen::MatrixXd l = state.factor();
    for (Eigen::Index j = 0; j < l.cols(); ++j) {
      for (Eigen::Index i = j + 1; i < l.rows(); ++i) l(i, j) = 0.02 * nd(rng);
    }
    state = VariationalState(state.mean(), l);
  }
  const std::size_t fdim = state.dim();
  const auto fd_i = static_cast<Eigen::Index>(fdim);
  const Eigen::MatrixXd eps = standard_normal(fdim, tol::elbo_mc, rng);
  const BatchStats batch = model.make_batch(y, rows, tol::elbo_mc);
  const ElboGradient eg = elbo_gradient(model, state, batch, 1.0, eps);

  const Eigen::MatrixXd l = state.factor();
  const Eigen::MatrixXd free_xi = (l * eps).colwise() + state.mean();
  const BatchEvaluation ev = model.evaluate(embed_free(model, free_xi), batch, 1.0);
  const auto& free = model.free_indices();
  Eigen::MatrixXd g_free(fd_i, eps.cols());
  for (Eigen::Index i = 0; i < fd_i; ++i) g_free.row(i) = ev.gradient.row(static_cast<Eigen::Index>(free[i]));

  const Eigen::VectorXd packed = state.packed();
  const Eigen::Index np = packed.size();
  Eigen::VectorXd se(np);
  auto stderr_of = [&](const Eigen::VectorXd& terms) {
    const double mean = terms.mean();
    const double var = (terms.array() - mean).square().sum() / static_cast<double>(terms.size() - 1);
    return std::sqrt(var / static_cast<double>(terms.size()));
  };
  for (Eigen::Index i = 0; i < fd_i; ++i) se(i) = stderr_of(g_free.row(i).transpose());
  Eigen::Index pos = fd_i;
  for (Eigen::Index j = 0; j < fd_i; ++j) {
    for (Eigen::Index i = j; i < fd_i; ++i, ++pos) {
      Eigen::VectorXd terms = (g_free.row(i).array() * eps.row(j).array()).transpose();
      if (i == j) terms *= l(j, j);
      se(pos) = stderr_of(terms);
    }
  }

  double worst_ratio = 0.0;
  for (Eigen::Index i = 0; i < np; ++i) {
    const double fd = central_difference(
        [&](const Eigen::VectorXd& v) {
          return elbo_estimate(model, VariationalState::from_packed(fdim, v), batch, 1.0, eps);
        },
        packed, i, 1e-4 * std::max(1.0, std::abs(packed(i))));
    const double bound = tol::elbo_se * std::max(se(i), 1e-12);
    worst_ratio = std::max(worst_ratio, std::abs(fd - eg.packed(i)) / bound);
  }

  const bool pass = worst_point < tol::gradient_rel && worst_ratio <= 1.0;
  return {2, pass,
          "pointwise worst rel " + fmt(worst_point) + " (< " + fmt(tol::gradient_rel) + ", " +
              std::to_string(tol::gradient_points) + " points, dim " + std::to_string(d) +
              "); ELBO worst |fd - grad| / (3 SE) " + fmt(worst_ratio) + " over " + std::to_string(np) +
              " coordinates"};
}

// ---------------------------------------------------------------------------

double logit(double p) { return std::log(p) - std::log1p(-p); }

// log q(to | from) for a random walk of variance w on logit(alpha / M),
// written as a density in alpha.
double log_proposal(double to, double from, double w, double m) {
  const double jac = std::log(m) - std::log(to) - std::log(m - to);
  return oracle::normal_logpdf(logit(to / m), logit(from / m), std::sqrt(w)) + jac;
}

double log_alpha_prior(double alpha, const Hyperparameters& h) {
  return oracle::beta_logpdf(alpha / h.alpha_max, h.a_eta, h.b_eta) - std::log(h.alpha_max);
}

bool close_log_ratio(double lib, double raw) {
  if (std::isinf(raw) || std::isinf(lib)) return lib == raw;
  return std::abs(lib - raw) <= tol::ratio_rel * std::max(1.0, std::abs(raw));
}

Outcome mh_ratio_equivalence() {
  Rng rng(303);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::size_t marg_ok = 0;
  std::size_t cond_ok = 0;
  std::size_t inside = 0;
  double worst = 0.0;
  for (std::size_t s = 0; s < tol::ratio_states; ++s) {
    Hyperparameters h;
    h.a_eta = 0.5 + 3.0 * unif(rng);
    h.b_eta = 0.5 + 3.0 * unif(rng);
    h.alpha_max = 1.5 + 2.0 * unif(rng);
    const auto k = static_cast<Eigen::Index>(1 + s % 12);
    const double phi = std::exp(nd(rng));
    const double lambda = std::exp(nd(rng));
    const double alpha = h.alpha_max * (0.05 + 0.9 * unif(rng));
    const double w = 0.05 + unif(rng);
    const double alpha_star = h.alpha_max / (1.0 + std::exp(-(logit(alpha / h.alpha_max) + std::sqrt(w) * nd(rng))));

    // Draw beta from its GG prior and u from its conditional at the current
    // alpha so that the state is feasible there.
    const double sigma = std::pow(lambda, -1.0 / alpha) / std::sqrt(phi);
    Eigen::VectorXd beta(k);
    Eigen::VectorXd u(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      std::mt19937_64 sub(rng());
      beta(i) = oracle::sample_gg(0.0, sigma, alpha, sub);
      if (i == 0 && s % 7 == 0) beta(i) = 0.0;
      const double floor = std::pow(std::abs(beta(i)) * std::sqrt(phi), alpha);
      u(i) = floor + std::exponential_distribution<double>(lambda)(rng);
    }

    const double hastings = log_proposal(alpha, alpha_star, w, h.alpha_max) -
                            log_proposal(alpha_star, alpha, w, h.alpha_max);
    const double prior = log_alpha_prior(alpha_star, h) - log_alpha_prior(alpha, h);

    double raw_m = prior + hastings;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double ss = std::pow(lambda, -1.0 / alpha_star) / std::sqrt(phi);
      raw_m += oracle::gg_logpdf(beta(i), 0.0, ss, alpha_star) - oracle::gg_logpdf(beta(i), 0.0, sigma, alpha);
    }
    const double lib_m = log_ratio_alpha_marginalized(beta, phi, lambda, alpha, alpha_star, h);

    // Joint density of (beta, u) given alpha: Gamma(1 + 1/alpha, lambda) for
    // u times the uniform density of beta on its box.
    auto log_joint = [&](double a) {
      double v = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) {
        const double half = std::pow(u(i), 1.0 / a) / std::sqrt(phi);
        if (!(std::abs(beta(i)) < half)) return -std::numeric_limits<double>::infinity();
        v += oracle::gamma_logpdf(u(i), 1.0 + 1.0 / a, lambda) - std::log(2.0 * half);
      }
      return v;
    };
    const double joint_star = log_joint(alpha_star);
    const double raw_c = std::isinf(joint_star) ? joint_star : joint_star - log_joint(alpha) + prior + hastings;
    const double lib_c = log_ratio_alpha_nonmarginalized(beta, u, phi, lambda, alpha, alpha_star, h);

    if (!std::isinf(raw_c)) ++inside;
    if (close_log_ratio(lib_m, raw_m)) ++marg_ok;
    if (close_log_ratio(lib_c, raw_c)) ++cond_ok;
    worst = std::max(worst, std::abs(lib_m - raw_m) / std::max(1.0, std::abs(raw_m)));
    if (!std::isinf(raw_c) && !std::isinf(lib_c)) {
      worst = std::max(worst, std::abs(lib_c - raw_c) / std::max(1.0, std::abs(raw_c)));
    }
  }
  const bool pass = marg_ok == tol::ratio_states && cond_ok == tol::ratio_states && inside > 0 &&
                    inside < tol::ratio_states;
  return {3, pass,
          "marginalized " + std::to_string(marg_ok) + "/" + std::to_string(tol::ratio_states) +
              ", conditional " + std::to_string(cond_ok) + "/" + std::to_string(tol::ratio_states) + " (" +
              std::to_string(inside) + " inside support); worst rel " + fmt(worst) + " (<= " +
              fmt(tol::ratio_rel) + ")"};
}

// ---------------------------------------------------------------------------

Outcome truncated_samplers() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Rng rng(404);
  double worst = 0.0;
  std::string worst_name;
  std::size_t configs = 0;
  auto record = [&](const std::string& name, std::vector<double>& v, const std::function<std::vector<double>(const std::vector<double>&)>& cdf) {
    std::sort(v.begin(), v.end());
    const double d = oracle::ks_statistic_sorted(cdf(v));
    ++configs;
    if (d > worst) {
      worst = d;
      worst_name = name;
    }
  };

  struct NormalCase {
    double mean, sd, lo, hi;
  };
  for (const NormalCase c : {NormalCase{0, 1, -1, 2}, NormalCase{0, 1, -0.5, 0.3}, NormalCase{0, 1, 3, inf},
                             NormalCase{2, 0.5, -10, -1}, NormalCase{0, 1, 8, 8.05}, NormalCase{1, 2, -inf, 0.5},
                             NormalCase{-3, 0.1, -2.9, 5}}) {
    std::vector<double> v(tol::truncated_draws);
    for (double& s : v) s = sample_truncated_normal(c.mean, c.sd, c.lo, c.hi, rng);
    record("normal(" + fmt(c.mean) + "," + fmt(c.sd) + ",[" + fmt(c.lo) + "," + fmt(c.hi) + "])", v,
           [&](const std::vector<double>& xs) {
             std::vector<double> f(xs.size());
             for (std::size_t i = 0; i < xs.size(); ++i) {
               f[i] = oracle::truncated_normal_cdf(xs[i], c.mean, c.sd, c.lo, c.hi);
             }
             return f;
           });
  }

  struct ExpCase {
    double rate, lo;
  };
  for (const ExpCase c : {ExpCase{2, 0}, ExpCase{0.5, -3}, ExpCase{10, 7}}) {
    std::vector<double> v(tol::truncated_draws);
    for (double& s : v) s = sample_truncated_exponential(c.rate, c.lo, rng);
    record("exponential(" + fmt(c.rate) + ",>" + fmt(c.lo) + ")", v, [&](const std::vector<double>& xs) {
      std::vector<double> f(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) f[i] = oracle::exponential_cdf(xs[i], c.rate, c.lo);
      return f;
    });
  }

  struct GammaCase {
    double shape, rate, hi;
  };
  for (const GammaCase c : {GammaCase{0.5, 2, inf}, GammaCase{0.5, 1, 0.3}, GammaCase{3, 1, 0.5},
                            GammaCase{2.5, 0.7, 4}, GammaCase{200, 1, 1}, GammaCase{1.2, 3, 40}}) {
    std::vector<double> v(tol::truncated_draws);
    for (double& s : v) s = sample_truncated_gamma(c.shape, c.rate, c.hi, rng);
    record("gamma(" + fmt(c.shape) + "," + fmt(c.rate) + ",<" + fmt(c.hi) + ")", v,
           [&](const std::vector<double>& xs) {
             return oracle::truncated_gamma_cdf_sorted(xs, c.shape, c.rate, c.hi);
           });
  }
  return {4, worst < tol::truncated_ks,
          std::to_string(configs) + " configurations at " + std::to_string(tol::truncated_draws) +
              " draws; worst KS " + fmt(worst) + " at " + worst_name + " (< " + fmt(tol::truncated_ks) + ")"};
}

// ---------------------------------------------------------------------------

Outcome scenario1_reproduction() {
  Rng rng(42);
  Scenario1Spec s;
  s.replicas = 1;
  const Scenario1Data data = simulate_scenario1(s, rng);
  ModelSpec spec;
  spec.blocks.push_back({build_design({data.x.data(), static_cast<std::size_t>(data.x.size())}, data.basis), true});
  const Model model(spec);
  const Eigen::VectorXd& y = data.y.front();

  auto t0 = Clock::now();
  FitConfig fc;
  fc.iterations = 5000;
  fc.seed = 42;
  const FitResult fr = fit(model, y, fc);
  Rng draw_rng(43);
  const PosteriorSamples advi = sample_posterior(model, fr.state, 5000, draw_rng);
  const double advi_s = seconds_since(t0);

  t0 = Clock::now();
  ChainConfig cc;
  cc.iterations = 51000;
  cc.burn_in = 1000;
  cc.thin = 10;
  cc.seed = 42;
  const ChainOutput chain = run_chain(model, y, cc);
  const double mcmc_s = seconds_since(t0);

  const CredibleBand band_a = credible_band(advi, model.design());
  const CredibleBand band_m = credible_band(chain.samples, model.design());
  const double mae = curve_mae(band_a.mean, data.curve);
  const double coverage = band_coverage(band_m, data.curve);
  std::vector<std::size_t> coefs(s.n_coef);
  for (std::size_t k = 0; k < coefs.size(); ++k) coefs[k] = k;
  const ComparisonReport rep = compare_posteriors(advi, chain.samples, coefs, 0.05);

  const bool pass = !fr.diverged && mae < tol::scenario_mae && coverage >= tol::scenario_coverage &&
                    rep.rejection_fraction <= tol::scenario_rejection && advi_s < tol::scenario_advi_seconds &&
                    mcmc_s < tol::scenario_mcmc_seconds;
  return {5, pass,
          "ADVI MAE " + fmt(mae) + " (< " + fmt(tol::scenario_mae) + "); MCMC coverage " + fmt(coverage) +
              " (>= " + fmt(tol::scenario_coverage) + "); KS rejection " + fmt(rep.rejection_fraction) +
              " over " + std::to_string(coefs.size()) + " coefficients (<= " + fmt(tol::scenario_rejection) +
              "); seconds ADVI " + fmt(advi_s) + ", MCMC " + fmt(mcmc_s) + " for " +
              std::to_string(cc.iterations) + " sweeps"};
}

// ---------------------------------------------------------------------------

std::size_t available_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::size_t kb = 0;
  std::string unit;
  while (in >> key >> kb >> unit) {
    if (key == "MemAvailable:") return kb * 1024;
  }
  return std::size_t{2} << 30;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Outcome scaling_order() {
  const Scenario1Spec s;
  // The fit holds the design twice (model copy, sampler column copy) plus
  // batch buffers; stay well inside the free memory.
  const std::size_t budget = available_bytes() / 6;
  std::vector<std::size_t> sizes;
  for (std::size_t n : {10000, 50000, 100000, 500000, 1000000}) {
    if (design_bytes(n, s) <= budget) sizes.push_back(n);
  }
  std::vector<TimingRow> rows;
  for (std::size_t n : sizes) {
    Rng rng(5);
    const Scenario1Data data = simulate_scaled(n, s, rng, budget);
    ModelSpec spec;
    spec.blocks.push_back({build_design({data.x.data(), n}, data.basis), true});
    const Model model(spec);
    const ScaleSetting set = scale_setting(n);
    std::vector<double> ta;
    std::vector<double> tm;
    for (std::size_t r = 0; r < tol::scaling_repeats; ++r) {
      FitConfig fc;
      fc.iterations = tol::scaling_iterations;
      fc.batch_size = set.batch_size;
      fc.trace_every = 0;
      fc.seed = 11 + r;
      auto t0 = Clock::now();
      (void)fit(model, data.y.front(), fc);
      ta.push_back(seconds_since(t0));
      ChainConfig cc;
      cc.iterations = tol::scaling_iterations;
      cc.burn_in = tol::scaling_iterations / 5;
      cc.seed = 11 + r;
      t0 = Clock::now();
      (void)run_chain(model, data.y.front(), cc);
      tm.push_back(seconds_since(t0));
    }
    rows.push_back({n, median(tm), median(ta), tol::scaling_iterations, set.batch_size});
  }

  bool ordered = false;
  bool monotone = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double gap = rows[i].mcmc_seconds - rows[i].advi_seconds;
    if (rows[i].n == 50000) ordered = rows[i].advi_seconds < rows[i].mcmc_seconds;
    if (i > 0 && !(gap > rows[i - 1].mcmc_seconds - rows[i - 1].advi_seconds)) monotone = false;
    detail << (i ? ", " : "") << "n=" << rows[i].n << " ADVI " << fmt(rows[i].advi_seconds) << "s MCMC "
           << fmt(rows[i].mcmc_seconds) << "s";
  }
  return {6, ordered && monotone && rows.size() >= 2,
          std::string("ADVI < MCMC at n=50000: ") + (ordered ? "yes" : "no") + "; gap widening: " +
              (monotone ? "yes" : "no") + " (" + detail.str() + "; median of " +
              std::to_string(tol::scaling_repeats) + ", " + std::to_string(tol::scaling_iterations) +
              " iterations)"};
}

// ---------------------------------------------------------------------------

Outcome basis_correctness() {
  Rng rng(707);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_oracle = 0.0;
  double worst_unity = 0.0;
  std::size_t evaluations = 0;
  for (int degree = 0; degree <= 5; ++degree) {
    for (std::size_t c = 0; c < tol::basis_configs; ++c) {
      const std::size_t n_knots = static_cast<std::size_t>(degree) + 2 + static_cast<std::size_t>(unif(rng) * 12);
      std::vector<double> knots(n_knots);
      double v = -5.0 + 10.0 * unif(rng);
      for (double& k : knots) {
        k = v;
        v += 0.01 + (c % 3 == 0 ? 5.0 : 1.0) * unif(rng);
      }
      const BasisSpec spec = BasisSpec::bspline(knots, degree);
      std::vector<double> xs{knots.front(), knots.back(), spec.interior_lo(), spec.interior_hi()};
      for (int t = 0; t < 25; ++t) xs.push_back(knots.front() + (knots.back() - knots.front()) * unif(rng));
      for (double x : xs) {
        const BasisRow row = bspline_row(x, spec);
        for (std::size_t i = 0; i < spec.size(); ++i) {
          worst_oracle = std::max(worst_oracle, std::abs(row.values[i] - oracle::cox_de_boor(i, degree, knots, x)));
        }
        if (x >= spec.interior_lo() && x <= spec.interior_hi()) {
          double sum = 0.0;
          for (double b : row.values) sum += b;
          worst_unity = std::max(worst_unity, std::abs(sum - 1.0));
        }
        ++evaluations;
      }
    }
  }
  return {7, worst_oracle <= tol::basis_abs && worst_unity <= tol::basis_abs,
          "degrees 0-5, " + std::to_string(tol::basis_configs) + " knot sets each, " +
              std::to_string(evaluations) + " points; worst oracle gap " + fmt(worst_oracle) +
              ", worst unity gap " + fmt(worst_unity) + " (<= " + fmt(tol::basis_abs) + ")"};
}

// ---------------------------------------------------------------------------

Outcome augmentation_marginal() {
  const double phi = 2.0;
  const double lambda = 1.5;
  const double alpha = 0.8;
  ModelSpec spec;
  spec.blocks.push_back({dense_block(Eigen::MatrixXd::Zero(0, 1)), true});
  spec.fixed_phi = phi;
  spec.fixed_lambda = Eigen::VectorXd::Constant(1, lambda);
  spec.fixed_alpha = Eigen::VectorXd::Constant(1, alpha);
  const Model model(spec);
  const Eigen::VectorXd y(0);

  ChainConfig cc;
  cc.thin = 5;
  cc.burn_in = 1000;
  cc.iterations = cc.burn_in + cc.thin * tol::augmentation_draws;
  cc.seed = 808;
  const ChainOutput chain = run_chain(model, y, cc);
  const std::vector<double> gibbs = column(chain.samples.draws, 0);

  std::mt19937_64 rng(809);
  const double sigma = std::pow(lambda, -1.0 / alpha) / std::sqrt(phi);
  std::vector<double> direct(tol::augmentation_draws);
  for (double& v : direct) v = oracle::sample_gg(0.0, sigma, alpha, rng);
  const KsResult ks = ks_two_sample(gibbs, direct);
  return {8, ks.statistic < tol::augmentation_ks && gibbs.size() == tol::augmentation_draws,
          "two-sample KS " + fmt(ks.statistic) + " (< " + fmt(tol::augmentation_ks) + ") at " +
              std::to_string(gibbs.size()) + " kept draws, alpha " + fmt(alpha)};
}

}  // namespace

// Arguments select criteria by number. --report-only exits 0 whenever every
// criterion ran to completion, so a failing criterion is reported without
// failing the calling test driver.
int main(int argc, char** argv) {
  std::vector<int> only;
  bool report_only = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report-only") {
      report_only = true;
    } else {
      only.push_back(std::atoi(argv[i]));
    }
  }
  const std::vector<std::pair<int, std::function<Outcome()>>> suite{
      {1, conjugate_posterior},   {2, gradient_checks}, {3, mh_ratio_equivalence}, {4, truncated_samplers},
      {5, scenario1_reproduction}, {6, scaling_order},  {7, basis_correctness},     {8, augmentation_marginal},
  };
  std::ofstream results("acceptance_results.txt");
  int failed = 0;
  int crashed = 0;
  for (const auto& [id, run] : suite) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {id, false, std::string("exception: ") + e.what()};
      ++crashed;
    }
    const std::string line = "criterion " + std::to_string(o.id) + ": " + (o.pass ? "PASS" : "FAIL") + " - " +
                             o.detail + " [" + fmt(seconds_since(t0)) + "s]";
    std::cout << line << std::endl;
    results << line << '\n';
    if (!o.pass) ++failed;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
            << "; results in acceptance_results.txt" << std::endl;
  if (report_only) return crashed == 0 ? 0 : 1;
  return failed == 0 ? 0 : 1;
}
