#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bridgevi/model.hpp"

namespace bridgevi {

using Rng = std::mt19937_64;

/// rows x cols matrix of iid N(0, 1) draws (ziggurat).
Eigen::MatrixXd standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

/// Full-rank Gaussian q(xi) = N(m, L L') over the free unconstrained coordinates.
/// The diagonal of L is stored as its logarithm so every entry is unconstrained.
class VariationalState {
 public:
  VariationalState() = default;
  VariationalState(Eigen::VectorXd mean, Eigen::MatrixXd factor);

  static VariationalState from_packed(std::size_t dim, const Eigen::VectorXd& packed);

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
  /// Lower-triangular L with positive diagonal.
  [[nodiscard]] Eigen::MatrixXd factor() const;
  [[nodiscard]] Eigen::MatrixXd covariance() const;
  [[nodiscard]] const Eigen::VectorXd& log_diag() const { return log_diag_; }

  /// [m ; column-major lower triangle of L with log diagonal].
  [[nodiscard]] Eigen::VectorXd packed() const;
  [[nodiscard]] static std::size_t packed_size(std::size_t dim) { return dim + dim * (dim + 1) / 2; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd log_diag_;
  Eigen::MatrixXd strict_lower_;
};

enum class OptimizerKind { sgd, adam };

struct FitConfig {
  double learning_rate = 0.01;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  std::size_t mc_samples = 100;
  std::size_t iterations = 5000;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double init_scale = 0.1;
  /// Ridge penalty of the starting point, relative to the mean diagonal of X'X.
  double init_ridge = 1e-3;
  std::uint64_t seed = 1;
  /// Return the average of the packed parameters over this final fraction of
  /// the iterations instead of the last iterate (0 = last iterate).
  double average_fraction = 0.0;
  /// Trace every n-th iteration (1 = all).
  std::size_t trace_every = 1;
};

/// Posterior draws in constrained space; each row is a flattened ParamVector.
struct PosteriorSamples {
  Eigen::MatrixXd draws;
  std::vector<std::string> names;
  std::string source;
};

/// Entropy of N(m, L L').
double gaussian_entropy(const VariationalState& state);

/// Epoch-wise random permutation split into consecutive blocks.
class BatchScheduler {
 public:
  BatchScheduler(std::size_t n, std::size_t batch_size);
  /// Indices of the next block; the last block of an epoch may be shorter.
  std::span<const Eigen::Index> next(Rng& rng);
  [[nodiscard]] std::size_t epoch() const { return epoch_; }

 private:
  std::size_t n_;
  std::size_t k_;
  std::vector<Eigen::Index> perm_;
  std::size_t pos_;
  std::size_t epoch_ = 0;
};

struct ElboGradient {
  /// Gradient w.r.t. VariationalState::packed().
  Eigen::VectorXd packed;
  /// Per-sample values of the rescaled log joint (incl. Jacobian).
  Eigen::VectorXd sample_log_density;
  double elbo = 0.0;
};

/// Monte Carlo ELBO gradient using the standard normal draws in `eps`
/// (free-dim x M). `scale` multiplies the batch log likelihood (n / |batch|).
ElboGradient elbo_gradient(const Model& model, const VariationalState& state,
                           const BatchStats& batch, double scale,
                           const Eigen::Ref<const Eigen::MatrixXd>& eps);

/// Same with fresh draws.
ElboGradient elbo_gradient(const Model& model, const VariationalState& state,
                           const BatchStats& batch, double scale, std::size_t mc_samples, Rng& rng);

/// Noisy ELBO estimate for fixed draws; used for common-random-number checks.
double elbo_estimate(const Model& model, const VariationalState& state, const BatchStats& batch,
                     double scale, const Eigen::Ref<const Eigen::MatrixXd>& eps);

struct AdamMoments {
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  std::size_t t = 0;
};

void sgd_step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, const FitConfig& config);
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, AdamMoments& moments,
               const FitConfig& config);

struct TraceRow {
  std::size_t iteration = 0;
  double elbo = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  VariationalState state;
  std::vector<TraceRow> trace;
  bool diverged = false;
  std::string message;
  double seconds = 0.0;
};

/// Embeds a free-coordinate vector into the full unconstrained vector.
Eigen::MatrixXd embed_free(const Model& model, const Eigen::Ref<const Eigen::MatrixXd>& free_xi);

/// Ridge start in unconstrained space, restricted to free coordinates.
VariationalState initial_state(const Model& model, const Eigen::VectorXd& y, double init_scale,
                               double ridge_scale = 1e-3);

/// Stochastic gradient ascent on the ELBO.
FitResult fit(const Model& model, const Eigen::VectorXd& y, const FitConfig& config,
              std::optional<VariationalState> init = std::nullopt);

PosteriorSamples sample_posterior(const Model& model, const VariationalState& state,
                                  std::size_t n_draws, Rng& rng);
PosteriorSamples sample_posterior(const Model& model, const VariationalState& state,
                                  const Eigen::Ref<const Eigen::MatrixXd>& eps);

}  // namespace bridgevi
