#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bridgevi/advi.hpp"
#include "bridgevi/model.hpp"
#include "bridgevi/truncated.hpp"

namespace bridgevi {

/// Complete Gibbs state. u[j](k) is the auxiliary variable of beta[j](k).
struct McmcState {
  ParamVector theta;
  std::vector<Eigen::VectorXd> u;
  Eigen::VectorXd rw_variance;
  std::size_t iteration = 0;
  std::vector<std::size_t> accepted;
  std::vector<std::size_t> proposed;
};

struct ChainConfig {
  std::size_t iterations = 5000;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  /// false selects the update of alpha conditional on u.
  bool marginalized_alpha = true;
  double initial_rw_variance = 0.5;
  bool adapt = true;
  std::size_t adapt_window = 50;
  double target_accept_low = 0.30;
  double target_accept_high = 0.40;
  /// Recompute the residual from scratch every n sweeps.
  std::size_t refresh_every = 100;
};

struct ChainOutput {
  PosteriorSamples samples;
  /// Post burn-in acceptance rate of each alpha_j.
  Eigen::VectorXd acceptance_rate;
  Eigen::VectorXd rw_variance;
  double seconds = 0.0;
  std::size_t iterations = 0;
};

/// Interval [lower, upper] of alpha values compatible with the current
/// (beta, u, phi) under the uniform augmentation.
struct AlphaSupport {
  double lower = 0.0;
  double upper = 0.0;
};

AlphaSupport alpha_support(const Eigen::VectorXd& beta, const Eigen::VectorXd& u, double phi,
                           double alpha_max);

/// Log acceptance ratio of a logit random-walk move alpha -> alpha_star with
/// u integrated out (GG prior on beta).
double log_ratio_alpha_marginalized(const Eigen::VectorXd& beta, double phi, double lambda,
                                    double alpha, double alpha_star, const Hyperparameters& hyper);

/// Same move conditional on u; -inf outside alpha_support().
double log_ratio_alpha_nonmarginalized(const Eigen::VectorXd& beta, const Eigen::VectorXd& u,
                                       double phi, double lambda, double alpha, double alpha_star,
                                       const Hyperparameters& hyper);

/// Gibbs sampler with gamma-uniform augmentation. Keeps the residual
/// y - X beta up to date so coordinate updates touch one column each.
class GibbsSampler {
 public:
  GibbsSampler(const Model& model, const Eigen::VectorXd& y, bool marginalized_alpha = true);

  /// Least-squares start (or `init`), lambda = 1, alpha at half its range,
  /// u drawn from its conditional.
  void initialize(std::optional<ParamVector> init, double rw_variance, Rng& rng);
  void set_state(McmcState state);
  [[nodiscard]] const McmcState& state() const { return state_; }
  [[nodiscard]] const Eigen::VectorXd& residual() const { return r_; }

  void step_u(Rng& rng);
  void step_u_block(std::size_t j, Rng& rng);
  void step_beta_j(std::size_t j, Rng& rng);
  void step_beta0(Rng& rng);
  void step_phi(Rng& rng);
  void step_lambda(Rng& rng);
  bool mh_alpha_marginalized(std::size_t j, Rng& rng);
  bool mh_alpha_nonmarginalized(std::size_t j, Rng& rng);

  /// Upper bound on phi implied by the box constraints.
  [[nodiscard]] double phi_upper_bound() const;
  /// Half-width of the box of beta[j](k).
  [[nodiscard]] double box_half_width(std::size_t j, std::size_t k) const;

  /// u -> beta_j -> beta_0 -> phi -> lambda -> alpha.
  void sweep(Rng& rng);
  void refresh_residual();
  void adapt_proposals(double low, double high);
  void reset_acceptance();

 private:
  double column_dot_residual(Eigen::Index col) const;
  void update_coefficient(Eigen::Index col, double old_value, double new_value);
  bool accept_alpha(std::size_t j, double alpha_star, double log_ratio, Rng& rng);
  double propose_alpha(std::size_t j, Rng& rng) const;

  const Model& model_;
  const Eigen::VectorXd& y_;
  bool marginalized_;
  Eigen::SparseMatrix<double> xc_;
  Eigen::VectorXd col_sq_;
  Eigen::MatrixXd x0tx0_;
  Eigen::MatrixXd sigma0_inv_;
  Eigen::VectorXd sigma0_inv_mu0_;
  Eigen::VectorXd r_;
  McmcState state_;
  std::vector<std::size_t> window_accepted_;
  std::vector<std::size_t> window_proposed_;
};

/// Runs one chain; draws are recorded after burn-in every `thin` sweeps.
ChainOutput run_chain(const Model& model, const Eigen::VectorXd& y, const ChainConfig& config,
                      std::optional<ParamVector> init = std::nullopt);

/// Independent chains with derived seeds, run on up to `workers` threads;
/// draws are stacked in chain order.
ChainOutput run_chains(const Model& model, const Eigen::VectorXd& y, const ChainConfig& config,
                       std::size_t n_chains, std::size_t workers);

}  // namespace bridgevi
