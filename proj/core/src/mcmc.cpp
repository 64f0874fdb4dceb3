#include "bridgevi/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

namespace bridgevi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// (|beta| sqrt(phi))^alpha, zero at beta = 0.
double scaled_power(double beta, double half_log_phi, double alpha) {
  if (beta == 0.0) return 0.0;
  return std::exp(alpha * (std::log(std::abs(beta)) + half_log_phi));
}

double log_alpha_prior_and_proposal(double alpha, double alpha_star, const Hyperparameters& h) {
  const double amax = h.alpha_max;
  return h.a_eta * (std::log(alpha_star) - std::log(alpha)) +
         h.b_eta * (std::log(amax - alpha_star) - std::log(amax - alpha));
}

}  // namespace

AlphaSupport alpha_support(const Eigen::VectorXd& beta, const Eigen::VectorXd& u, double phi,
                           double alpha_max) {
  if (beta.size() != u.size()) throw std::invalid_argument("alpha_support: size mismatch");
  AlphaSupport s{0.0, alpha_max};
  const double half_log_phi = 0.5 * std::log(phi);
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    if (beta(k) == 0.0) continue;
    const double c = std::log(std::abs(beta(k))) + half_log_phi;
    const double lu = std::log(u(k));
    if (c < 0.0) s.lower = std::max(s.lower, lu / c);
    if (c > 0.0) s.upper = std::min(s.upper, lu / c);
  }
  return s;
}

double log_ratio_alpha_marginalized(const Eigen::VectorXd& beta, double phi, double lambda,
                                    double alpha, double alpha_star, const Hyperparameters& hyper) {
  const double k = static_cast<double>(beta.size());
  const double half_log_phi = 0.5 * std::log(phi);
  double dw = 0.0;
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    dw += scaled_power(beta(i), half_log_phi, alpha_star) - scaled_power(beta(i), half_log_phi, alpha);
  }
  return k * (std::log(alpha_star) - std::log(alpha)) +
         k * (std::lgamma(1.0 / alpha) - std::lgamma(1.0 / alpha_star)) +
         k * (1.0 / alpha_star - 1.0 / alpha) * std::log(lambda) - lambda * dw +
         log_alpha_prior_and_proposal(alpha, alpha_star, hyper);
}

double log_ratio_alpha_nonmarginalized(const Eigen::VectorXd& beta, const Eigen::VectorXd& u,
                                       double phi, double lambda, double alpha, double alpha_star,
                                       const Hyperparameters& hyper) {
  const AlphaSupport s = alpha_support(beta, u, phi, hyper.alpha_max);
  if (!(alpha_star > s.lower && alpha_star < s.upper)) return -kInf;
  const double k = static_cast<double>(beta.size());
  return k * (1.0 / alpha_star - 1.0 / alpha) * std::log(lambda) +
         k * (std::lgamma(1.0 + 1.0 / alpha) - std::lgamma(1.0 + 1.0 / alpha_star)) +
         log_alpha_prior_and_proposal(alpha, alpha_star, hyper);
}

GibbsSampler::GibbsSampler(const Model& model, const Eigen::VectorXd& y, bool marginalized_alpha)
    : model_(model), y_(y), marginalized_(marginalized_alpha), xc_(model.design()) {
  if (y.size() != model.n_rows()) throw std::invalid_argument("GibbsSampler: y has wrong length");
  xc_.makeCompressed();
  col_sq_ = Eigen::VectorXd::Zero(xc_.cols());
  for (Eigen::Index c = 0; c < xc_.cols(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(xc_, c); it; ++it) {
      col_sq_(c) += it.value() * it.value();
    }
  }
  const auto k0 = static_cast<Eigen::Index>(model.layout().k0());
  if (k0 > 0) {
    const Eigen::SparseMatrix<double> x0 = xc_.leftCols(k0);
    x0tx0_ = Eigen::MatrixXd(x0.transpose() * x0);
    const auto& spec = model.spec();
    Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma0);
    sigma0_inv_ = llt.solve(Eigen::MatrixXd::Identity(k0, k0));
    sigma0_inv_mu0_ = sigma0_inv_ * spec.mu0;
  }
  const std::size_t d = model.layout().n_blocks();
  window_accepted_.assign(d, 0);
  window_proposed_.assign(d, 0);
}

void GibbsSampler::initialize(std::optional<ParamVector> init, double rw_variance, Rng& rng) {
  if (!(rw_variance > 0.0)) throw std::invalid_argument("GibbsSampler: rw variance must be > 0");
  const Layout& lay = model_.layout();
  const auto& h = model_.spec().hyper;
  const std::size_t d = lay.n_blocks();
  ParamVector theta;
  if (init) {
    theta = model_.apply_fixed(*init);
  } else {
    const auto p = static_cast<Eigen::Index>(lay.n_coef());
    Eigen::MatrixXd g = Eigen::MatrixXd(xc_.transpose() * xc_);
    const Eigen::VectorXd xty = xc_.transpose() * y_;
    const double tr = g.trace();
    g.diagonal().array() += (tr > 0.0 ? 1e-10 * tr / static_cast<double>(p) : 1e-10);
    const Eigen::VectorXd beta = g.ldlt().solve(xty);
    const Eigen::VectorXd r = y_ - xc_ * beta;
    const double n = static_cast<double>(y_.size());
    const double dof = n > static_cast<double>(p) ? n - static_cast<double>(p) : n;
    const double rss = r.squaredNorm();
    ParamVector flat_init = lay.unflatten(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lay.dim())));
    flat_init.beta0 = beta.head(static_cast<Eigen::Index>(lay.k0()));
    for (std::size_t j = 0; j < d; ++j) {
      flat_init.beta[j] = beta.segment(static_cast<Eigen::Index>(lay.block_offset(j)),
                                       static_cast<Eigen::Index>(lay.block_size(j)));
    }
    flat_init.phi = (dof > 0.0 && rss > 0.0) ? dof / rss : h.a_phi / h.b_phi;
    flat_init.lambda = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d));
    flat_init.alpha = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.5 * h.alpha_max);
    theta = model_.apply_fixed(std::move(flat_init));
  }
  model_.check(theta);

  McmcState s;
  s.theta = std::move(theta);
  s.u.resize(d);
  for (std::size_t j = 0; j < d; ++j) s.u[j] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lay.block_size(j)));
  s.rw_variance = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), rw_variance);
  s.accepted.assign(d, 0);
  s.proposed.assign(d, 0);
  state_ = std::move(s);
  refresh_residual();
  step_u(rng);
}

void GibbsSampler::set_state(McmcState state) {
  const Layout& lay = model_.layout();
  const std::size_t d = lay.n_blocks();
  model_.check(state.theta);
  if (state.u.size() != d) throw std::invalid_argument("GibbsSampler: u has wrong block count");
  for (std::size_t j = 0; j < d; ++j) {
    if (static_cast<std::size_t>(state.u[j].size()) != lay.block_size(j)) {
      throw std::invalid_argument("GibbsSampler: u block has wrong size");
    }
  }
  if (static_cast<std::size_t>(state.rw_variance.size()) != d) {
    state.rw_variance = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.5);
  }
  state.accepted.resize(d, 0);
  state.proposed.resize(d, 0);
  state_ = std::move(state);
  refresh_residual();
}

void GibbsSampler::refresh_residual() {
  r_ = y_ - model_.linear_predictor(state_.theta);
}

double GibbsSampler::column_dot_residual(Eigen::Index col) const {
  double s = 0.0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(xc_, col); it; ++it) {
    s += it.value() * r_(it.row());
  }
  return s;
}

void GibbsSampler::update_coefficient(Eigen::Index col, double old_value, double new_value) {
  const double delta = new_value - old_value;
  if (delta == 0.0) return;
  for (Eigen::SparseMatrix<double>::InnerIterator it(xc_, col); it; ++it) {
    r_(it.row()) -= it.value() * delta;
  }
}

void GibbsSampler::step_u_block(std::size_t j, Rng& rng) {
  const ParamVector& th = state_.theta;
  const double half_log_phi = 0.5 * std::log(th.phi);
  const double alpha = th.alpha(static_cast<Eigen::Index>(j));
  const double lambda = th.lambda(static_cast<Eigen::Index>(j));
  Eigen::VectorXd& u = state_.u[j];
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    u(k) = sample_truncated_exponential(lambda, scaled_power(th.beta[j](k), half_log_phi, alpha), rng);
  }
}

void GibbsSampler::step_u(Rng& rng) {
  for (std::size_t j = 0; j < state_.u.size(); ++j) step_u_block(j, rng);
}

double GibbsSampler::box_half_width(std::size_t j, std::size_t k) const {
  const double alpha = state_.theta.alpha(static_cast<Eigen::Index>(j));
  return std::exp(std::log(state_.u[j](static_cast<Eigen::Index>(k))) / alpha -
                  0.5 * std::log(state_.theta.phi));
}

void GibbsSampler::step_beta_j(std::size_t j, Rng& rng) {
  ParamVector& th = state_.theta;
  const double phi = th.phi;
  const double half_log_phi = 0.5 * std::log(phi);
  const double alpha = th.alpha(static_cast<Eigen::Index>(j));
  const double lambda = th.lambda(static_cast<Eigen::Index>(j));
  const auto offset = static_cast<Eigen::Index>(model_.layout().block_offset(j));
  Eigen::VectorXd& beta = th.beta[j];
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    double c = box_half_width(j, static_cast<std::size_t>(k));
    if (!(c > 0.0)) {
      state_.u[j](k) = sample_truncated_exponential(lambda, scaled_power(beta(k), half_log_phi, alpha), rng);
      c = box_half_width(j, static_cast<std::size_t>(k));
      if (!(c > 0.0)) {
        throw std::runtime_error("mcmc: empty box for coefficient " + std::to_string(k) +
                                 " of block " + std::to_string(j + 1));
      }
    }
    const Eigen::Index col = offset + k;
    const double sq = col_sq_(col);
    const double old = beta(k);
    double next;
    if (sq > 0.0) {
      const double mean = (column_dot_residual(col) + sq * old) / sq;
      next = sample_truncated_normal(mean, 1.0 / std::sqrt(phi * sq), -c, c, rng);
    } else {
      if (!std::isfinite(c)) {
        throw std::runtime_error("mcmc: unbounded coefficient without data in block " +
                                 std::to_string(j + 1));
      }
      std::uniform_real_distribution<double> unif(-c, c);
      next = unif(rng);
    }
    beta(k) = next;
    update_coefficient(col, old, next);
  }
}

void GibbsSampler::step_beta0(Rng& rng) {
  const auto k0 = static_cast<Eigen::Index>(model_.layout().k0());
  if (k0 == 0) return;
  ParamVector& th = state_.theta;
  Eigen::VectorXd xtr(k0);
  for (Eigen::Index c = 0; c < k0; ++c) xtr(c) = column_dot_residual(c);
  const Eigen::VectorXd b = th.phi * (xtr + x0tx0_ * th.beta0) + sigma0_inv_mu0_;
  const Eigen::MatrixXd precision = th.phi * x0tx0_ + sigma0_inv_;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw std::runtime_error("mcmc: beta0 precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(b);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(k0);
  for (Eigen::Index i = 0; i < k0; ++i) z(i) = normal(rng);
  const Eigen::VectorXd draw = mean + llt.matrixU().solve(z);
  for (Eigen::Index c = 0; c < k0; ++c) update_coefficient(c, th.beta0(c), draw(c));
  th.beta0 = draw;
}

double GibbsSampler::phi_upper_bound() const {
  const ParamVector& th = state_.theta;
  double log_bound = kInf;
  for (std::size_t j = 0; j < th.beta.size(); ++j) {
    const double alpha = th.alpha(static_cast<Eigen::Index>(j));
    for (Eigen::Index k = 0; k < th.beta[j].size(); ++k) {
      const double b = th.beta[j](k);
      if (b == 0.0) continue;
      log_bound = std::min(log_bound, 2.0 * std::log(state_.u[j](k)) / alpha - 2.0 * std::log(std::abs(b)));
    }
  }
  return std::exp(log_bound);
}

void GibbsSampler::step_phi(Rng& rng) {
  if (model_.spec().fixed_phi) return;
  const auto& h = model_.spec().hyper;
  const Layout& lay = model_.layout();
  const double k_pen = static_cast<double>(lay.n_coef() - lay.k0());
  const double shape = 0.5 * static_cast<double>(y_.size()) + 0.5 * k_pen + h.a_phi;
  const double rate = 0.5 * r_.squaredNorm() + h.b_phi;
  state_.theta.phi = sample_truncated_gamma(shape, rate, phi_upper_bound(), rng);
}

void GibbsSampler::step_lambda(Rng& rng) {
  if (model_.spec().fixed_lambda) return;
  const auto& h = model_.spec().hyper;
  ParamVector& th = state_.theta;
  const double half_log_phi = 0.5 * std::log(th.phi);
  for (std::size_t j = 0; j < th.beta.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double alpha = th.alpha(jj);
    double s = 0.0;
    for (Eigen::Index k = 0; k < th.beta[j].size(); ++k) s += scaled_power(th.beta[j](k), half_log_phi, alpha);
    const double shape = h.a_lambda + static_cast<double>(th.beta[j].size()) / alpha;
    std::gamma_distribution<double> gamma(shape, 1.0 / (h.b_lambda + s));
    th.lambda(jj) = gamma(rng);
  }
}

double GibbsSampler::propose_alpha(std::size_t j, Rng& rng) const {
  const double amax = model_.spec().hyper.alpha_max;
  const auto jj = static_cast<Eigen::Index>(j);
  const double alpha = state_.theta.alpha(jj);
  std::normal_distribution<double> normal;
  const double v = std::log(alpha) - std::log(amax - alpha) + std::sqrt(state_.rw_variance(jj)) * normal(rng);
  return amax / (1.0 + std::exp(-v));
}

bool GibbsSampler::accept_alpha(std::size_t j, double alpha_star, double log_ratio, Rng& rng) {
  ++state_.proposed[j];
  ++window_proposed_[j];
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (!(alpha_star >= kMinAlpha && alpha_star < model_.spec().hyper.alpha_max)) return false;
  if (!(std::log(unif(rng)) < log_ratio)) return false;
  state_.theta.alpha(static_cast<Eigen::Index>(j)) = alpha_star;
  ++state_.accepted[j];
  ++window_accepted_[j];
  return true;
}

bool GibbsSampler::mh_alpha_marginalized(std::size_t j, Rng& rng) {
  if (model_.spec().fixed_alpha) return false;
  const ParamVector& th = state_.theta;
  const auto jj = static_cast<Eigen::Index>(j);
  const double alpha_star = propose_alpha(j, rng);
  const double lr = log_ratio_alpha_marginalized(th.beta[j], th.phi, th.lambda(jj), th.alpha(jj),
                                                 alpha_star, model_.spec().hyper);
  const bool accepted = accept_alpha(j, alpha_star, lr, rng);
  if (accepted) step_u_block(j, rng);
  return accepted;
}

bool GibbsSampler::mh_alpha_nonmarginalized(std::size_t j, Rng& rng) {
  if (model_.spec().fixed_alpha) return false;
  const ParamVector& th = state_.theta;
  const auto jj = static_cast<Eigen::Index>(j);
  const double alpha_star = propose_alpha(j, rng);
  const double lr = log_ratio_alpha_nonmarginalized(th.beta[j], state_.u[j], th.phi, th.lambda(jj),
                                                    th.alpha(jj), alpha_star, model_.spec().hyper);
  return accept_alpha(j, alpha_star, lr, rng);
}

void GibbsSampler::sweep(Rng& rng) {
  const std::size_t d = model_.layout().n_blocks();
  step_u(rng);
  for (std::size_t j = 0; j < d; ++j) step_beta_j(j, rng);
  step_beta0(rng);
  step_phi(rng);
  step_lambda(rng);
  for (std::size_t j = 0; j < d; ++j) {
    if (marginalized_) {
      mh_alpha_marginalized(j, rng);
    } else {
      // lambda was drawn with u integrated out; u must be current first.
      step_u_block(j, rng);
      mh_alpha_nonmarginalized(j, rng);
    }
  }
  ++state_.iteration;
}

void GibbsSampler::adapt_proposals(double low, double high) {
  for (std::size_t j = 0; j < window_proposed_.size(); ++j) {
    if (window_proposed_[j] == 0) continue;
    const double rate = static_cast<double>(window_accepted_[j]) / static_cast<double>(window_proposed_[j]);
    double& w = state_.rw_variance(static_cast<Eigen::Index>(j));
    if (rate > high) w *= 1.5;
    if (rate < low) w /= 1.5;
    w = std::clamp(w, 1e-6, 1e3);
    window_accepted_[j] = 0;
    window_proposed_[j] = 0;
  }
}

void GibbsSampler::reset_acceptance() {
  std::fill(state_.accepted.begin(), state_.accepted.end(), 0);
  std::fill(state_.proposed.begin(), state_.proposed.end(), 0);
  std::fill(window_accepted_.begin(), window_accepted_.end(), 0);
  std::fill(window_proposed_.begin(), window_proposed_.end(), 0);
}

ChainOutput run_chain(const Model& model, const Eigen::VectorXd& y, const ChainConfig& config,
                      std::optional<ParamVector> init) {
  if (config.iterations <= config.burn_in) throw std::invalid_argument("run_chain: iterations must exceed burn_in");
  if (config.thin == 0) throw std::invalid_argument("run_chain: thin must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const Layout& lay = model.layout();

  Rng rng(config.seed);
  GibbsSampler sampler(model, y, config.marginalized_alpha);
  sampler.initialize(std::move(init), config.initial_rw_variance, rng);

  const std::size_t n_keep = (config.iterations - config.burn_in) / config.thin;
  ChainOutput out;
  out.samples.draws.resize(static_cast<Eigen::Index>(n_keep), static_cast<Eigen::Index>(lay.dim()));
  out.samples.names = lay.names();
  out.samples.source = "mcmc";

  Eigen::Index kept = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    sampler.sweep(rng);
    if (config.refresh_every > 0 && (it + 1) % config.refresh_every == 0) sampler.refresh_residual();
    const Eigen::VectorXd flat = lay.flatten(sampler.state().theta);
    if (!flat.allFinite()) {
      throw std::runtime_error("mcmc: non-finite state at iteration " + std::to_string(it + 1));
    }
    if (it < config.burn_in) {
      if (config.adapt && config.adapt_window > 0 && (it + 1) % config.adapt_window == 0) {
        sampler.adapt_proposals(config.target_accept_low, config.target_accept_high);
      }
      if (it + 1 == config.burn_in) sampler.reset_acceptance();
      continue;
    }
    if ((it - config.burn_in + 1) % config.thin == 0 && kept < out.samples.draws.rows()) {
      out.samples.draws.row(kept++) = flat.transpose();
    }
  }

  const McmcState& s = sampler.state();
  const auto d = static_cast<Eigen::Index>(lay.n_blocks());
  out.acceptance_rate = Eigen::VectorXd::Zero(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    if (s.proposed[jj] > 0) {
      out.acceptance_rate(j) = static_cast<double>(s.accepted[jj]) / static_cast<double>(s.proposed[jj]);
    }
  }
  out.rw_variance = s.rw_variance;
  out.iterations = config.iterations;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

ChainOutput run_chains(const Model& model, const Eigen::VectorXd& y, const ChainConfig& config,
                       std::size_t n_chains, std::size_t workers) {
  if (n_chains == 0) throw std::invalid_argument("run_chains: need at least one chain");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ChainOutput> outputs(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  auto run_one = [&](std::size_t c) {
    try {
      ChainConfig cc = config;
      std::seed_seq seq{config.seed, static_cast<std::uint64_t>(c)};
      std::uint64_t derived = 0;
      std::vector<std::uint32_t> words(2);
      seq.generate(words.begin(), words.end());
      derived = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
      cc.seed = derived;
      outputs[c] = run_chain(model, y, cc);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, n_chains);
  if (n_threads == 1) {
    for (std::size_t c = 0; c < n_chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < n_chains; c += n_threads) run_one(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ChainOutput merged;
  merged.samples.names = outputs.front().samples.names;
  merged.samples.source = "mcmc";
  Eigen::Index rows = 0;
  for (const auto& o : outputs) rows += o.samples.draws.rows();
  merged.samples.draws.resize(rows, outputs.front().samples.draws.cols());
  Eigen::Index at = 0;
  merged.acceptance_rate = Eigen::VectorXd::Zero(outputs.front().acceptance_rate.size());
  merged.rw_variance = Eigen::VectorXd::Zero(outputs.front().rw_variance.size());
  for (const auto& o : outputs) {
    merged.samples.draws.middleRows(at, o.samples.draws.rows()) = o.samples.draws;
    at += o.samples.draws.rows();
    merged.acceptance_rate += o.acceptance_rate / static_cast<double>(n_chains);
    merged.rw_variance += o.rw_variance / static_cast<double>(n_chains);
  }
  merged.iterations = config.iterations;
  merged.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return merged;
}

}  // namespace bridgevi
