#include "bridgevi/advi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

namespace bridgevi {

Eigen::MatrixXd standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  boost::random::normal_distribution<double> normal;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  double* p = z.data();
  for (Eigen::Index i = 0; i < z.size(); ++i) p[i] = normal(rng);
  return z;
}

VariationalState::VariationalState(Eigen::VectorXd mean, Eigen::MatrixXd factor)
    : mean_(std::move(mean)) {
  const Eigen::Index d = mean_.size();
  if (factor.rows() != d || factor.cols() != d) {
    throw std::invalid_argument("VariationalState: factor must be d x d");
  }
  if ((factor.diagonal().array() <= 0.0).any()) {
    throw std::invalid_argument("VariationalState: factor diagonal must be positive");
  }
  log_diag_ = factor.diagonal().array().log();
  strict_lower_ = factor.triangularView<Eigen::StrictlyLower>();
}

VariationalState VariationalState::from_packed(std::size_t dim, const Eigen::VectorXd& packed) {
  if (static_cast<std::size_t>(packed.size()) != packed_size(dim)) {
    throw std::invalid_argument("VariationalState::from_packed: wrong packed length");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  VariationalState s;
  s.mean_ = packed.head(d);
  s.log_diag_.resize(d);
  s.strict_lower_ = Eigen::MatrixXd::Zero(d, d);
  Eigen::Index pos = d;
  for (Eigen::Index c = 0; c < d; ++c) {
    s.log_diag_(c) = packed(pos++);
    for (Eigen::Index r = c + 1; r < d; ++r) s.strict_lower_(r, c) = packed(pos++);
  }
  return s;
}

Eigen::MatrixXd VariationalState::factor() const {
  Eigen::MatrixXd l = strict_lower_;
  l.diagonal() = log_diag_.array().exp();
  return l;
}

Eigen::MatrixXd VariationalState::covariance() const {
  const Eigen::MatrixXd l = factor();
  return l * l.transpose();
}

Eigen::VectorXd VariationalState::packed() const {
  const Eigen::Index d = mean_.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d))));
  out.head(d) = mean_;
  Eigen::Index pos = d;
  for (Eigen::Index c = 0; c < d; ++c) {
    out(pos++) = log_diag_(c);
    for (Eigen::Index r = c + 1; r < d; ++r) out(pos++) = strict_lower_(r, c);
  }
  return out;
}

double gaussian_entropy(const VariationalState& state) {
  const double d = static_cast<double>(state.dim());
  return 0.5 * d * (std::log(2.0 * std::numbers::pi) + 1.0) + state.log_diag().sum();
}

BatchScheduler::BatchScheduler(std::size_t n, std::size_t batch_size)
    : n_(n), k_(batch_size == 0 ? n : batch_size), pos_(n) {
  if (k_ > n_) throw std::invalid_argument("BatchScheduler: batch size exceeds n");
  perm_.resize(n_);
  std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
}

std::span<const Eigen::Index> BatchScheduler::next(Rng& rng) {
  if (n_ == 0) return {};
  if (pos_ >= n_) {
    std::shuffle(perm_.begin(), perm_.end(), rng);
    if (k_ < n_) {
      // Same blocks, each listed in ascending row order so that batch
      // construction reads the design front to back.
      std::vector<std::uint32_t> label(n_);
      for (std::size_t p = 0; p < n_; ++p) label[static_cast<std::size_t>(perm_[p])] = static_cast<std::uint32_t>(p / k_);
      const std::size_t n_blocks = (n_ + k_ - 1) / k_;
      std::vector<std::size_t> fill(n_blocks);
      for (std::size_t b = 0; b < n_blocks; ++b) fill[b] = b * k_;
      for (std::size_t r = 0; r < n_; ++r) perm_[fill[label[r]]++] = static_cast<Eigen::Index>(r);
    }
    pos_ = 0;
    ++epoch_;
  }
  const std::size_t len = std::min(k_, n_ - pos_);
  std::span<const Eigen::Index> out(perm_.data() + pos_, len);
  pos_ += len;
  return out;
}

Eigen::MatrixXd embed_free(const Model& model, const Eigen::Ref<const Eigen::MatrixXd>& free_xi) {
  const auto& free = model.free_indices();
  const auto d = static_cast<Eigen::Index>(model.layout().dim());
  if (free_xi.rows() != static_cast<Eigen::Index>(free.size())) {
    throw std::invalid_argument("embed_free: expected one row per free coordinate");
  }
  // Fixed coordinates take their transformed fixed value; to_unconstrained
  // needs a valid theta, so start from a neutral one.
  const Layout& lay = model.layout();
  ParamVector base;
  base.beta0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lay.k0()));
  for (std::size_t j = 0; j < lay.n_blocks(); ++j) {
    base.beta.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lay.block_size(j))));
  }
  base.phi = 1.0;
  base.lambda = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(lay.n_blocks()));
  base.alpha = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lay.n_blocks()),
                                         0.5 * model.spec().hyper.alpha_max);
  const Eigen::VectorXd fixed = model.to_unconstrained(model.apply_fixed(base));
  Eigen::MatrixXd full = fixed.replicate(1, free_xi.cols());
  for (std::size_t i = 0; i < free.size(); ++i) {
    full.row(static_cast<Eigen::Index>(free[i])) = free_xi.row(static_cast<Eigen::Index>(i));
  }
  (void)d;
  return full;
}

ElboGradient elbo_gradient(const Model& model, const VariationalState& state,
                           const BatchStats& batch, double scale,
                           const Eigen::Ref<const Eigen::MatrixXd>& eps) {
  const auto d = static_cast<Eigen::Index>(state.dim());
  if (eps.rows() != d) throw std::invalid_argument("elbo_gradient: eps has wrong dimension");
  const Eigen::Index m = eps.cols();
  if (m < 1) throw std::invalid_argument("elbo_gradient: need at least one Monte Carlo draw");
  const Eigen::MatrixXd l = state.factor();
  Eigen::MatrixXd xi_free = l.triangularView<Eigen::Lower>() * eps;
  xi_free.colwise() += state.mean();
  const BatchEvaluation ev = model.evaluate(embed_free(model, xi_free), batch, scale);

  const auto& free = model.free_indices();
  Eigen::MatrixXd g(d, m);
  for (Eigen::Index i = 0; i < d; ++i) g.row(i) = ev.gradient.row(static_cast<Eigen::Index>(free[static_cast<std::size_t>(i)]));

  const double inv_m = 1.0 / static_cast<double>(m);
  const Eigen::VectorXd grad_mean = g.rowwise().sum() * inv_m;
  const Eigen::MatrixXd grad_l = (g * eps.transpose()) * inv_m;

  ElboGradient out;
  out.packed.resize(static_cast<Eigen::Index>(VariationalState::packed_size(state.dim())));
  out.packed.head(d) = grad_mean;
  Eigen::Index pos = d;
  for (Eigen::Index c = 0; c < d; ++c) {
    // Chain rule through the log diagonal, plus the exact entropy term.
    out.packed(pos++) = grad_l(c, c) * l(c, c) + 1.0;
    for (Eigen::Index r = c + 1; r < d; ++r) out.packed(pos++) = grad_l(r, c);
  }
  out.sample_log_density = ev.log_density;
  out.elbo = ev.log_density.mean() + gaussian_entropy(state);
  return out;
}

ElboGradient elbo_gradient(const Model& model, const VariationalState& state,
                           const BatchStats& batch, double scale, std::size_t mc_samples,
                           Rng& rng) {
  const Eigen::MatrixXd eps = standard_normal(state.dim(), mc_samples, rng);
  return elbo_gradient(model, state, batch, scale, eps);
}

double elbo_estimate(const Model& model, const VariationalState& state, const BatchStats& batch,
                     double scale, const Eigen::Ref<const Eigen::MatrixXd>& eps) {
  const Eigen::MatrixXd l = state.factor();
  Eigen::MatrixXd xi_free = l.triangularView<Eigen::Lower>() * eps;
  xi_free.colwise() += state.mean();
  const BatchEvaluation ev = model.evaluate(embed_free(model, xi_free), batch, scale);
  return ev.log_density.mean() + gaussian_entropy(state);
}

void sgd_step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, const FitConfig& config) {
  params += config.learning_rate * gradient;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, AdamMoments& moments,
               const FitConfig& config) {
  if (moments.first.size() != params.size()) {
    moments.first = Eigen::VectorXd::Zero(params.size());
    moments.second = Eigen::VectorXd::Zero(params.size());
    moments.t = 0;
  }
  ++moments.t;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  moments.first = b1 * moments.first + (1.0 - b1) * gradient;
  moments.second = b2 * moments.second + (1.0 - b2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(moments.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(moments.t));
  params.array() += config.learning_rate * (moments.first.array() / c1) /
                    ((moments.second.array() / c2).sqrt() + config.adam_epsilon);
}

VariationalState initial_state(const Model& model, const Eigen::VectorXd& y, double init_scale,
                               double ridge_scale) {
  const Layout& lay = model.layout();
  const auto p = static_cast<Eigen::Index>(lay.n_coef());
  const Eigen::Index n = model.n_rows();
  ParamVector theta;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double phi = model.spec().hyper.a_phi / model.spec().hyper.b_phi;
  if (n > 0 && p > 0) {
    const SparseRowMatrix& x = model.design();
    Eigen::MatrixXd gram = Eigen::MatrixXd(x.transpose() * x);
    const double ridge = ridge_scale * std::max(gram.trace() / static_cast<double>(p), 1e-12) + 1e-10;
    gram.diagonal().array() += ridge;
    beta = gram.ldlt().solve(x.transpose() * y);
    const double rss = (y - x * beta).squaredNorm();
    const double dof = static_cast<double>(std::max<Eigen::Index>(n - p, 1));
    if (rss > 0.0) phi = dof / rss;
  } else if (n > 0) {
    const double var = (y.array() - y.mean()).square().sum() / static_cast<double>(n);
    if (var > 0.0) phi = 1.0 / var;
  }
  theta = lay.unflatten(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lay.dim())));
  theta.beta0 = beta.head(static_cast<Eigen::Index>(lay.k0()));
  for (std::size_t j = 0; j < lay.n_blocks(); ++j) {
    theta.beta[j] = beta.segment(static_cast<Eigen::Index>(lay.block_offset(j)),
                                 static_cast<Eigen::Index>(lay.block_size(j)));
  }
  theta.phi = phi;
  theta.lambda.setOnes();
  theta.alpha.setConstant(0.5 * model.spec().hyper.alpha_max);
  theta = model.apply_fixed(theta);
  const Eigen::VectorXd xi = model.to_unconstrained(theta);
  const auto& free = model.free_indices();
  Eigen::VectorXd mean(static_cast<Eigen::Index>(free.size()));
  for (std::size_t i = 0; i < free.size(); ++i) mean(static_cast<Eigen::Index>(i)) = xi(static_cast<Eigen::Index>(free[i]));
  const auto d = static_cast<Eigen::Index>(free.size());
  return VariationalState(mean, init_scale * Eigen::MatrixXd::Identity(d, d));
}

FitResult fit(const Model& model, const Eigen::VectorXd& y, const FitConfig& config,
              std::optional<VariationalState> init) {
  if (y.size() != model.n_rows()) throw std::invalid_argument("fit: y length does not match design");
  if (config.mc_samples < 1) throw std::invalid_argument("fit: mc_samples must be >= 1");
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("fit: learning rate must be > 0");
  const auto n = static_cast<std::size_t>(y.size());
  const std::size_t k = config.batch_size == 0 ? n : config.batch_size;
  if (k > n) throw std::invalid_argument("fit: batch size exceeds number of observations");

  const auto start = std::chrono::steady_clock::now();
  Rng rng(config.seed);
  FitResult result;
  result.state = init ? *init : initial_state(model, y, config.init_scale, config.init_ridge);
  if (result.state.dim() != model.free_indices().size()) {
    throw std::invalid_argument("fit: initial state dimension does not match free parameters");
  }
  const std::size_t dim = result.state.dim();
  Eigen::VectorXd params = result.state.packed();
  AdamMoments moments;
  BatchScheduler scheduler(n, k);
  if (!(config.average_fraction >= 0.0 && config.average_fraction < 1.0)) {
    throw std::invalid_argument("fit: average_fraction must lie in [0, 1)");
  }
  const auto average_from = static_cast<std::size_t>(
      std::floor((1.0 - config.average_fraction) * static_cast<double>(config.iterations)));
  Eigen::VectorXd running = Eigen::VectorXd::Zero(params.size());
  std::size_t n_averaged = 0;

  const bool full_batch = (k == n);
  std::optional<BatchStats> full_stats;
  if (full_batch) {
    const auto rows = model.all_rows();
    full_stats = model.make_batch(y, rows, config.mc_samples);
  }

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    BatchStats local;
    const BatchStats* batch = nullptr;
    double scale = 1.0;
    if (full_batch) {
      batch = &*full_stats;
    } else {
      const auto rows = scheduler.next(rng);
      local = model.make_batch(y, rows, config.mc_samples);
      batch = &local;
      scale = static_cast<double>(n) / static_cast<double>(rows.size());
    }
    const VariationalState current = VariationalState::from_packed(dim, params);
    const ElboGradient g = elbo_gradient(model, current, *batch, scale, config.mc_samples, rng);
    if (!g.packed.allFinite()) {
      result.state = current;
      result.diverged = true;
      result.message = "non-finite ELBO gradient at iteration " + std::to_string(it);
      break;
    }
    if (config.optimizer == OptimizerKind::adam) {
      adam_step(params, g.packed, moments, config);
    } else {
      sgd_step(params, g.packed, config);
    }
    if (!params.allFinite()) {
      result.state = current;
      result.diverged = true;
      result.message = "variational parameters became non-finite at iteration " + std::to_string(it);
      break;
    }
    if (config.average_fraction > 0.0 && it > average_from) {
      running += params;
      ++n_averaged;
    }
    if (config.trace_every > 0 && (it % config.trace_every == 0 || it == config.iterations)) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.trace.push_back({it, g.elbo, g.packed.norm(), secs});
    }
  }
  if (!result.diverged) {
    result.state = VariationalState::from_packed(
        dim, n_averaged > 0 ? Eigen::VectorXd(running / static_cast<double>(n_averaged)) : params);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

PosteriorSamples sample_posterior(const Model& model, const VariationalState& state,
                                  const Eigen::Ref<const Eigen::MatrixXd>& eps) {
  const Eigen::MatrixXd l = state.factor();
  Eigen::MatrixXd xi_free = l.triangularView<Eigen::Lower>() * eps;
  xi_free.colwise() += state.mean();
  const Eigen::MatrixXd xi = embed_free(model, xi_free);
  const Layout& lay = model.layout();
  PosteriorSamples out;
  out.names = lay.names();
  out.source = "advi";
  out.draws.resize(eps.cols(), static_cast<Eigen::Index>(lay.dim()));
  for (Eigen::Index s = 0; s < eps.cols(); ++s) {
    out.draws.row(s) = lay.flatten(model.to_constrained(xi.col(s))).transpose();
  }
  return out;
}

PosteriorSamples sample_posterior(const Model& model, const VariationalState& state,
                                  std::size_t n_draws, Rng& rng) {
  const Eigen::MatrixXd eps = standard_normal(state.dim(), n_draws, rng);
  return sample_posterior(model, state, eps);
}

}  // namespace bridgevi
