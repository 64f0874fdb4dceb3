#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bridgevi/basis.hpp"

namespace bridgevi {

/// Prior hyperparameters of the bridge hierarchy.
struct Hyperparameters {
  double a_phi = 1.0;
  double b_phi = 1.0;
  double a_lambda = 1.0;
  double b_lambda = 1.0;
  double a_eta = 1.0;
  double b_eta = 1.0;
  /// Upper end of the support of every alpha_j.
  double alpha_max = 2.5;
};

struct DesignBlock {
  DesignMatrix design;
  bool penalized = true;
};

/// Everything that defines the posterior apart from the response vector.
///
/// Unpenalized blocks are concatenated (in order) into the single X_0 group;
/// each penalized block is its own X_j with its own (lambda_j, alpha_j).
/// Optional fixed values remove the corresponding parameters from inference.
struct ModelSpec {
  Hyperparameters hyper;
  Eigen::VectorXd mu0;
  Eigen::MatrixXd sigma0;
  std::vector<DesignBlock> blocks;

  std::optional<double> fixed_phi;
  std::optional<Eigen::VectorXd> fixed_lambda;
  std::optional<Eigen::VectorXd> fixed_alpha;
};

/// Constrained parameter vector theta.
struct ParamVector {
  Eigen::VectorXd beta0;
  std::vector<Eigen::VectorXd> beta;
  double phi = 1.0;
  Eigen::VectorXd lambda;
  Eigen::VectorXd alpha;
};

/// Positions of each parameter inside the flat (unconstrained) vector:
/// [beta0 | beta_1 .. beta_D | phi | lambda_1..D | alpha_1..D].
class Layout {
 public:
  Layout() = default;
  Layout(std::size_t k0, std::vector<std::size_t> block_sizes);

  [[nodiscard]] std::size_t k0() const { return k0_; }
  [[nodiscard]] std::size_t n_blocks() const { return sizes_.size(); }
  [[nodiscard]] std::size_t block_size(std::size_t j) const { return sizes_[j]; }
  [[nodiscard]] std::size_t block_offset(std::size_t j) const { return offsets_[j]; }
  /// Total number of regression coefficients K_0 + sum K_j.
  [[nodiscard]] std::size_t n_coef() const { return n_coef_; }
  [[nodiscard]] std::size_t phi_index() const { return n_coef_; }
  [[nodiscard]] std::size_t lambda_index(std::size_t j) const { return n_coef_ + 1 + j; }
  [[nodiscard]] std::size_t alpha_index(std::size_t j) const {
    return n_coef_ + 1 + sizes_.size() + j;
  }
  [[nodiscard]] std::size_t dim() const { return n_coef_ + 1 + 2 * sizes_.size(); }

  /// Human readable names: beta0[0], beta1[3], phi, lambda1, alpha1, ...
  [[nodiscard]] std::vector<std::string> names() const;

  [[nodiscard]] Eigen::VectorXd flatten(const ParamVector& theta) const;
  [[nodiscard]] ParamVector unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat) const;

 private:
  std::size_t k0_ = 0;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::size_t n_coef_ = 0;
};

/// Log density of the generalized Gaussian GG(mu, sigma, alpha).
double gg_logpdf(double x, double mu, double sigma, double alpha);

/// Per-iteration data used by the batched gradient; either row based or
/// reduced to Gram statistics (X'X, X'y, y'y) of the selected rows.
struct BatchStats {
  std::vector<Eigen::Index> rows;
  Eigen::VectorXd y;
  SparseRowMatrix x;
  bool use_gram = false;
  Eigen::MatrixXd gram;
  Eigen::VectorXd xty;
  double yty = 0.0;
};

/// Value and gradient (w.r.t. the unconstrained vector) of the transformed
/// log joint for each column of a d x M block of unconstrained points.
struct BatchEvaluation {
  Eigen::VectorXd log_density;
  Eigen::MatrixXd gradient;
};

/// Compiled bridge regression model.
class Model {
 public:
  explicit Model(ModelSpec spec);

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] const Layout& layout() const { return layout_; }
  [[nodiscard]] const SparseRowMatrix& design() const { return x_; }
  [[nodiscard]] Eigen::Index n_rows() const { return x_.rows(); }

  /// Coordinates of the unconstrained vector that are not fixed.
  [[nodiscard]] const std::vector<std::size_t>& free_indices() const { return free_; }

  /// Throws std::invalid_argument when theta violates its constraints.
  void check(const ParamVector& theta) const;

  /// Replaces fixed components of theta with their fixed values.
  [[nodiscard]] ParamVector apply_fixed(ParamVector theta) const;

  [[nodiscard]] double log_prior(const ParamVector& theta) const;
  [[nodiscard]] double log_likelihood(std::span<const double> y_batch,
                                      std::span<const Eigen::Index> rows,
                                      const ParamVector& theta) const;
  [[nodiscard]] double log_likelihood(const Eigen::VectorXd& y, const ParamVector& theta) const;
  [[nodiscard]] double log_joint(const ParamVector& theta, const Eigen::VectorXd& y) const;

  [[nodiscard]] Eigen::VectorXd to_unconstrained(const ParamVector& theta) const;
  [[nodiscard]] ParamVector to_constrained(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
  [[nodiscard]] double log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& xi) const;

  /// Mean of y for each design row: X beta.
  [[nodiscard]] Eigen::VectorXd linear_predictor(const ParamVector& theta) const;

  /// Builds the statistics for a batch of rows; `prefer_gram` can force
  /// either path (nullopt chooses by estimated cost for `n_samples` columns).
  [[nodiscard]] BatchStats make_batch(const Eigen::VectorXd& y,
                                      std::span<const Eigen::Index> rows,
                                      std::size_t n_samples,
                                      std::optional<bool> prefer_gram = std::nullopt) const;

  /// Evaluates scale * log p(y_batch | theta) + log p(theta) + log|J| and its
  /// gradient w.r.t. xi for every column of `xi`.
  [[nodiscard]] BatchEvaluation evaluate(const Eigen::Ref<const Eigen::MatrixXd>& xi,
                                         const BatchStats& batch, double scale) const;

  /// Single point convenience wrapper around evaluate().
  [[nodiscard]] Eigen::VectorXd grad_logjoint_unconstrained(
      const Eigen::Ref<const Eigen::VectorXd>& xi, const Eigen::VectorXd& y,
      std::span<const Eigen::Index> rows, double scale) const;
  [[nodiscard]] double logjoint_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                              const Eigen::VectorXd& y,
                                              std::span<const Eigen::Index> rows,
                                              double scale) const;

  /// All row indices 0..n-1.
  [[nodiscard]] std::vector<Eigen::Index> all_rows() const;

 private:
  double log_prior_no_check(const ParamVector& theta) const;

  ModelSpec spec_;
  Layout layout_;
  SparseRowMatrix x_;
  std::vector<std::size_t> free_;
  Eigen::MatrixXd sigma0_inv_;
  double sigma0_logdet_ = 0.0;
};

/// Smallest alpha accepted anywhere; 1/alpha overflows Gamma below this.
inline constexpr double kMinAlpha = 1e-3;

}  // namespace bridgevi
