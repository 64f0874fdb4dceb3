#include "bridgevi/model.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>

namespace bridgevi {

namespace {

// Lower triangle of the row outer product plus its y contribution.
template <int N>
void accumulate_row(const int* inner, const double* vals, double yi, Eigen::Index p, double* g,
                    double* xty) {
  std::array<Eigen::Index, N> idx;
  std::array<double, N> val;
  for (int a = 0; a < N; ++a) {
    idx[a] = inner[a];
    val[a] = vals[a];
  }
  for (int a = 0; a < N; ++a) {
    double* gcol = g + idx[a] * p;
    xty[idx[a]] += val[a] * yi;
    for (int c = a; c < N; ++c) gcol[idx[c]] += val[a] * val[c];
  }
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double scaled_logistic(double xi, double upper) {
  if (xi >= 0.0) return upper / (1.0 + std::exp(-xi));
  const double e = std::exp(xi);
  return upper * e / (1.0 + e);
}

double gamma_logpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double scaled_beta_logpdf(double alpha, double a, double b, double upper) {
  const double log_beta_fn = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return (a - 1.0) * std::log(alpha) + (b - 1.0) * std::log(upper - alpha) -
         (a + b - 1.0) * std::log(upper) - log_beta_fn;
}

}  // namespace

Layout::Layout(std::size_t k0, std::vector<std::size_t> block_sizes)
    : k0_(k0), sizes_(std::move(block_sizes)) {
  offsets_.resize(sizes_.size());
  std::size_t off = k0_;
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    offsets_[j] = off;
    off += sizes_[j];
  }
  n_coef_ = off;
}

std::vector<std::string> Layout::names() const {
  std::vector<std::string> out;
  out.reserve(dim());
  for (std::size_t k = 0; k < k0_; ++k) out.push_back("beta0[" + std::to_string(k) + "]");
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    for (std::size_t k = 0; k < sizes_[j]; ++k) {
      out.push_back("beta" + std::to_string(j + 1) + "[" + std::to_string(k) + "]");
    }
  }
  out.emplace_back("phi");
  for (std::size_t j = 0; j < sizes_.size(); ++j) out.push_back("lambda" + std::to_string(j + 1));
  for (std::size_t j = 0; j < sizes_.size(); ++j) out.push_back("alpha" + std::to_string(j + 1));
  return out;
}

Eigen::VectorXd Layout::flatten(const ParamVector& theta) const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(dim()));
  if (static_cast<std::size_t>(theta.beta0.size()) != k0_ || theta.beta.size() != sizes_.size() ||
      static_cast<std::size_t>(theta.lambda.size()) != sizes_.size() ||
      static_cast<std::size_t>(theta.alpha.size()) != sizes_.size()) {
    throw std::invalid_argument("Layout::flatten: parameter dimensions do not match layout");
  }
  flat.head(static_cast<Eigen::Index>(k0_)) = theta.beta0;
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    if (static_cast<std::size_t>(theta.beta[j].size()) != sizes_[j]) {
      throw std::invalid_argument("Layout::flatten: block size mismatch");
    }
    flat.segment(static_cast<Eigen::Index>(offsets_[j]), static_cast<Eigen::Index>(sizes_[j])) =
        theta.beta[j];
    flat(static_cast<Eigen::Index>(lambda_index(j))) = theta.lambda(static_cast<Eigen::Index>(j));
    flat(static_cast<Eigen::Index>(alpha_index(j))) = theta.alpha(static_cast<Eigen::Index>(j));
  }
  flat(static_cast<Eigen::Index>(phi_index())) = theta.phi;
  return flat;
}

ParamVector Layout::unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat) const {
  if (static_cast<std::size_t>(flat.size()) != dim()) {
    throw std::invalid_argument("Layout::unflatten: expected length " + std::to_string(dim()));
  }
  ParamVector theta;
  theta.beta0 = flat.head(static_cast<Eigen::Index>(k0_));
  theta.beta.resize(sizes_.size());
  theta.lambda.resize(static_cast<Eigen::Index>(sizes_.size()));
  theta.alpha.resize(static_cast<Eigen::Index>(sizes_.size()));
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    theta.beta[j] =
        flat.segment(static_cast<Eigen::Index>(offsets_[j]), static_cast<Eigen::Index>(sizes_[j]));
    theta.lambda(static_cast<Eigen::Index>(j)) = flat(static_cast<Eigen::Index>(lambda_index(j)));
    theta.alpha(static_cast<Eigen::Index>(j)) = flat(static_cast<Eigen::Index>(alpha_index(j)));
  }
  theta.phi = flat(static_cast<Eigen::Index>(phi_index()));
  return theta;
}

double gg_logpdf(double x, double mu, double sigma, double alpha) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gg_logpdf: sigma must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("gg_logpdf: alpha must be > 0");
  return std::log(alpha) - std::log(2.0 * sigma) - std::lgamma(1.0 / alpha) -
         std::pow(std::abs(x - mu) / sigma, alpha);
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  const auto& h = spec_.hyper;
  for (double v : {h.a_phi, h.b_phi, h.a_lambda, h.b_lambda, h.a_eta, h.b_eta, h.alpha_max}) {
    if (!(v > 0.0)) throw std::invalid_argument("ModelSpec: hyperparameters must be > 0");
  }
  if (spec_.blocks.empty()) throw std::invalid_argument("ModelSpec: no design blocks");

  const Eigen::Index n = spec_.blocks.front().design.rows();
  std::size_t k0 = 0;
  std::vector<std::size_t> sizes;
  for (const auto& b : spec_.blocks) {
    if (b.design.rows() != n) throw std::invalid_argument("ModelSpec: blocks differ in row count");
    if (!b.penalized) k0 += static_cast<std::size_t>(b.design.cols());
  }
  for (const auto& b : spec_.blocks) {
    if (b.penalized) sizes.push_back(static_cast<std::size_t>(b.design.cols()));
  }
  layout_ = Layout(k0, sizes);

  // Column order: unpenalized blocks first, then penalized blocks.
  std::vector<Eigen::Triplet<double>> triplets;
  std::size_t col = 0;
  auto append = [&](DesignBlock& b) {
    b.design.column_offset = col;
    for (Eigen::Index r = 0; r < b.design.values.outerSize(); ++r) {
      for (SparseRowMatrix::InnerIterator it(b.design.values, r); it; ++it) {
        triplets.emplace_back(r, static_cast<Eigen::Index>(col) + it.col(), it.value());
      }
    }
    col += static_cast<std::size_t>(b.design.cols());
  };
  for (auto& b : spec_.blocks) if (!b.penalized) append(b);
  for (auto& b : spec_.blocks) if (b.penalized) append(b);
  x_.resize(n, static_cast<Eigen::Index>(layout_.n_coef()));
  x_.setFromTriplets(triplets.begin(), triplets.end());
  x_.makeCompressed();

  const auto ek0 = static_cast<Eigen::Index>(k0);
  if (spec_.mu0.size() == 0) spec_.mu0 = Eigen::VectorXd::Zero(ek0);
  if (spec_.sigma0.size() == 0) spec_.sigma0 = 100.0 * Eigen::MatrixXd::Identity(ek0, ek0);
  if (spec_.mu0.size() != ek0 || spec_.sigma0.rows() != ek0 || spec_.sigma0.cols() != ek0) {
    throw std::invalid_argument("ModelSpec: mu0/sigma0 must match the unpenalized block width");
  }
  if (k0 > 0) {
    if (!spec_.sigma0.isApprox(spec_.sigma0.transpose(), 1e-12)) {
      throw std::invalid_argument("ModelSpec: sigma0 must be symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(spec_.sigma0);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("ModelSpec: sigma0 must be positive definite");
    }
    sigma0_inv_ = llt.solve(Eigen::MatrixXd::Identity(ek0, ek0));
    sigma0_logdet_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  const auto d_blocks = static_cast<Eigen::Index>(sizes.size());
  if (spec_.fixed_phi && !(*spec_.fixed_phi > 0.0)) {
    throw std::invalid_argument("ModelSpec: fixed phi must be > 0");
  }
  if (spec_.fixed_lambda) {
    if (spec_.fixed_lambda->size() != d_blocks || (spec_.fixed_lambda->array() <= 0.0).any()) {
      throw std::invalid_argument("ModelSpec: fixed lambda must have D positive entries");
    }
  }
  if (spec_.fixed_alpha) {
    if (spec_.fixed_alpha->size() != d_blocks || (spec_.fixed_alpha->array() < kMinAlpha).any() ||
        (spec_.fixed_alpha->array() >= h.alpha_max).any()) {
      throw std::invalid_argument("ModelSpec: fixed alpha must lie in (0, alpha_max)");
    }
  }

  for (std::size_t i = 0; i < layout_.n_coef(); ++i) free_.push_back(i);
  if (!spec_.fixed_phi) free_.push_back(layout_.phi_index());
  if (!spec_.fixed_lambda) {
    for (std::size_t j = 0; j < sizes.size(); ++j) free_.push_back(layout_.lambda_index(j));
  }
  if (!spec_.fixed_alpha) {
    for (std::size_t j = 0; j < sizes.size(); ++j) free_.push_back(layout_.alpha_index(j));
  }
}

std::vector<Eigen::Index> Model::all_rows() const {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x_.rows()));
  for (Eigen::Index i = 0; i < x_.rows(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

void Model::check(const ParamVector& theta) const {
  (void)layout_.flatten(theta);  // dimension check
  const double amax = spec_.hyper.alpha_max;
  if (!(theta.phi > 0.0) || !std::isfinite(theta.phi)) {
    throw std::invalid_argument("theta: phi must be positive and finite");
  }
  for (Eigen::Index j = 0; j < theta.lambda.size(); ++j) {
    if (!(theta.lambda(j) > 0.0) || !std::isfinite(theta.lambda(j))) {
      throw std::invalid_argument("theta: lambda must be positive and finite");
    }
    if (!(theta.alpha(j) >= kMinAlpha && theta.alpha(j) < amax)) {
      throw std::invalid_argument("theta: alpha must lie in [1e-3, alpha_max)");
    }
  }
  if (!theta.beta0.allFinite()) throw std::invalid_argument("theta: beta0 must be finite");
  for (const auto& b : theta.beta) {
    if (!b.allFinite()) throw std::invalid_argument("theta: beta must be finite");
  }
}

ParamVector Model::apply_fixed(ParamVector theta) const {
  if (spec_.fixed_phi) theta.phi = *spec_.fixed_phi;
  if (spec_.fixed_lambda) theta.lambda = *spec_.fixed_lambda;
  if (spec_.fixed_alpha) theta.alpha = *spec_.fixed_alpha;
  return theta;
}

double Model::log_prior_no_check(const ParamVector& theta) const {
  const auto& h = spec_.hyper;
  double lp = 0.0;
  if (layout_.k0() > 0) {
    const Eigen::VectorXd diff = theta.beta0 - spec_.mu0;
    lp += -0.5 * (static_cast<double>(layout_.k0()) * kLog2Pi + sigma0_logdet_ +
                  diff.dot(sigma0_inv_ * diff));
  }
  lp += gamma_logpdf(theta.phi, h.a_phi, h.b_phi);
  for (std::size_t j = 0; j < layout_.n_blocks(); ++j) {
    const auto ej = static_cast<Eigen::Index>(j);
    const double lambda = theta.lambda(ej);
    const double alpha = theta.alpha(ej);
    const double sigma = std::pow(lambda, -1.0 / alpha) / std::sqrt(theta.phi);
    for (Eigen::Index k = 0; k < theta.beta[j].size(); ++k) {
      lp += gg_logpdf(theta.beta[j](k), 0.0, sigma, alpha);
    }
    lp += gamma_logpdf(lambda, h.a_lambda, h.b_lambda);
    lp += scaled_beta_logpdf(alpha, h.a_eta, h.b_eta, h.alpha_max);
  }
  return lp;
}

double Model::log_prior(const ParamVector& theta) const {
  check(theta);
  return log_prior_no_check(theta);
}

double Model::log_likelihood(std::span<const double> y_batch, std::span<const Eigen::Index> rows,
                             const ParamVector& theta) const {
  if (y_batch.size() != rows.size()) {
    throw std::invalid_argument("log_likelihood: y_batch and rows differ in length");
  }
  check(theta);
  const Eigen::VectorXd beta = layout_.flatten(theta).head(static_cast<Eigen::Index>(layout_.n_coef()));
  double rss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index r = rows[i];
    if (r < 0 || r >= x_.rows()) throw std::invalid_argument("log_likelihood: row out of range");
    double mu = 0.0;
    for (SparseRowMatrix::InnerIterator it(x_, r); it; ++it) mu += it.value() * beta(it.col());
    const double res = y_batch[i] - mu;
    rss += res * res;
  }
  const double nb = static_cast<double>(rows.size());
  return 0.5 * nb * (std::log(theta.phi) - kLog2Pi) - 0.5 * theta.phi * rss;
}

double Model::log_likelihood(const Eigen::VectorXd& y, const ParamVector& theta) const {
  if (y.size() != x_.rows()) throw std::invalid_argument("log_likelihood: y length mismatch");
  const auto rows = all_rows();
  return log_likelihood(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                        rows, theta);
}

double Model::log_joint(const ParamVector& theta, const Eigen::VectorXd& y) const {
  return log_likelihood(y, theta) + log_prior(theta);
}

Eigen::VectorXd Model::to_unconstrained(const ParamVector& theta) const {
  const double amax = spec_.hyper.alpha_max;
  if (!(theta.phi > 0.0)) throw std::invalid_argument("to_unconstrained: phi must be > 0");
  for (Eigen::Index j = 0; j < theta.lambda.size(); ++j) {
    if (!(theta.lambda(j) > 0.0)) throw std::invalid_argument("to_unconstrained: lambda must be > 0");
    if (!(theta.alpha(j) > 0.0 && theta.alpha(j) < amax)) {
      throw std::invalid_argument("to_unconstrained: alpha must lie strictly inside (0, alpha_max)");
    }
  }
  Eigen::VectorXd xi = layout_.flatten(theta);
  xi(static_cast<Eigen::Index>(layout_.phi_index())) = std::log(theta.phi);
  for (std::size_t j = 0; j < layout_.n_blocks(); ++j) {
    const auto ej = static_cast<Eigen::Index>(j);
    xi(static_cast<Eigen::Index>(layout_.lambda_index(j))) = std::log(theta.lambda(ej));
    const double a = theta.alpha(ej);
    xi(static_cast<Eigen::Index>(layout_.alpha_index(j))) = std::log(a) - std::log(amax - a);
  }
  return xi;
}

ParamVector Model::to_constrained(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  ParamVector theta = layout_.unflatten(xi);
  theta.phi = std::exp(theta.phi);
  theta.lambda = theta.lambda.array().exp();
  for (Eigen::Index j = 0; j < theta.alpha.size(); ++j) {
    theta.alpha(j) = scaled_logistic(theta.alpha(j), spec_.hyper.alpha_max);
  }
  return theta;
}

double Model::log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  double lj = xi(static_cast<Eigen::Index>(layout_.phi_index()));
  const double log_amax = std::log(spec_.hyper.alpha_max);
  for (std::size_t j = 0; j < layout_.n_blocks(); ++j) {
    const double xl = xi(static_cast<Eigen::Index>(layout_.lambda_index(j)));
    const double xa = xi(static_cast<Eigen::Index>(layout_.alpha_index(j)));
    lj += log_amax + xl - xa - 2.0 * softplus(-xa);
  }
  return lj;
}

Eigen::VectorXd Model::linear_predictor(const ParamVector& theta) const {
  const Eigen::VectorXd beta = layout_.flatten(theta).head(static_cast<Eigen::Index>(layout_.n_coef()));
  return x_ * beta;
}

BatchStats Model::make_batch(const Eigen::VectorXd& y, std::span<const Eigen::Index> rows,
                             std::size_t n_samples, std::optional<bool> prefer_gram) const {
  if (y.size() != x_.rows()) throw std::invalid_argument("make_batch: y length mismatch");
  BatchStats b;
  b.rows.assign(rows.begin(), rows.end());
  const auto nb = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(layout_.n_coef());
  b.y.resize(nb);
  double nnz = 0.0;
  double nnz_sq = 0.0;
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (i + 16 < nb) {
      const Eigen::Index ahead = rows[static_cast<std::size_t>(i + 16)];
      if (ahead >= 0 && ahead < x_.rows()) {
        __builtin_prefetch(y.data() + ahead);
        __builtin_prefetch(x_.outerIndexPtr() + ahead);
      }
    }
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= x_.rows()) throw std::invalid_argument("make_batch: row out of range");
    b.y(i) = y(r);
    const double row_nnz = static_cast<double>(x_.outerIndexPtr()[r + 1] - x_.outerIndexPtr()[r]);
    nnz += row_nnz;
    nnz_sq += row_nnz * row_nnz;
  }
  const double m = static_cast<double>(std::max<std::size_t>(n_samples, 1));
  const double pd = static_cast<double>(p);
  b.use_gram = prefer_gram.value_or(nnz_sq + pd * pd * (m + 1.0) < 2.0 * nnz * m);

  if (b.use_gram) {
    b.gram = Eigen::MatrixXd::Zero(p, p);
    b.xty = Eigen::VectorXd::Zero(p);
    b.yty = b.y.squaredNorm();
    const auto* outer = x_.outerIndexPtr();
    const auto* inner = x_.innerIndexPtr();
    const double* vals = x_.valuePtr();
    double* g = b.gram.data();
    double* xty = b.xty.data();
    constexpr Eigen::Index kAhead = 8;
    for (Eigen::Index i = 0; i < nb; ++i) {
      if (i + kAhead < nb) {
        const Eigen::Index ahead = rows[static_cast<std::size_t>(i + kAhead)];
        __builtin_prefetch(inner + outer[ahead]);
        __builtin_prefetch(vals + outer[ahead]);
      }
      const Eigen::Index r = rows[static_cast<std::size_t>(i)];
      const auto beg = outer[r];
      const auto len = outer[r + 1] - beg;
      const double yi = b.y(i);
      switch (len) {
        case 2: accumulate_row<2>(inner + beg, vals + beg, yi, p, g, xty); break;
        case 3: accumulate_row<3>(inner + beg, vals + beg, yi, p, g, xty); break;
        case 4: accumulate_row<4>(inner + beg, vals + beg, yi, p, g, xty); break;
        case 5: accumulate_row<5>(inner + beg, vals + beg, yi, p, g, xty); break;
        case 6: accumulate_row<6>(inner + beg, vals + beg, yi, p, g, xty); break;
        default:
          for (auto a = beg; a < beg + len; ++a) {
            const double va = vals[a];
            double* gcol = g + static_cast<Eigen::Index>(inner[a]) * p;
            xty[inner[a]] += va * yi;
            for (auto c = a; c < beg + len; ++c) gcol[inner[c]] += va * vals[c];
          }
      }
    }
    for (Eigen::Index j = 1; j < p; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) b.gram(i, j) = b.gram(j, i);
    }
  } else {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(nnz));
    for (Eigen::Index i = 0; i < nb; ++i) {
      const Eigen::Index r = rows[static_cast<std::size_t>(i)];
      for (SparseRowMatrix::InnerIterator a(x_, r); a; ++a) {
        triplets.emplace_back(i, a.col(), a.value());
      }
    }
    b.x.resize(nb, p);
    b.x.setFromTriplets(triplets.begin(), triplets.end());
    b.x.makeCompressed();
  }
  return b;
}

BatchEvaluation Model::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& xi, const BatchStats& batch,
                                double scale) const {
  const auto& h = spec_.hyper;
  const auto d = static_cast<Eigen::Index>(layout_.dim());
  const auto p = static_cast<Eigen::Index>(layout_.n_coef());
  const Eigen::Index m = xi.cols();
  if (xi.rows() != d) throw std::invalid_argument("evaluate: xi has wrong number of rows");

  BatchEvaluation out;
  out.log_density.setZero(m);
  out.gradient.setZero(d, m);

  const auto phi_i = static_cast<Eigen::Index>(layout_.phi_index());
  const Eigen::ArrayXd phi = xi.row(phi_i).array().exp().transpose();
  const double nb = static_cast<double>(batch.rows.size());

  // Likelihood term.
  Eigen::VectorXd rss(m);
  Eigen::MatrixXd grad_beta_lik;  // p x m, before multiplying by phi
  const auto beta = xi.topRows(p);
  if (batch.rows.empty()) {
    rss.setZero();
    grad_beta_lik.setZero(p, m);
  } else if (batch.use_gram) {
    const Eigen::MatrixXd g_beta = batch.gram * beta;
    grad_beta_lik = (-g_beta).colwise() + batch.xty;
    for (Eigen::Index l = 0; l < m; ++l) {
      rss(l) = batch.yty - 2.0 * batch.xty.dot(beta.col(l)) + beta.col(l).dot(g_beta.col(l));
      rss(l) = std::max(rss(l), 0.0);
    }
  } else {
    Eigen::MatrixXd resid = -(batch.x * beta);
    resid.colwise() += batch.y;
    rss = resid.colwise().squaredNorm().transpose();
    grad_beta_lik = batch.x.transpose() * resid;
  }
  for (Eigen::Index l = 0; l < m; ++l) {
    const double loglik = 0.5 * nb * (std::log(phi(l)) - kLog2Pi) - 0.5 * phi(l) * rss(l);
    out.log_density(l) += scale * loglik;
    out.gradient.col(l).head(p) += scale * phi(l) * grad_beta_lik.col(l);
    out.gradient(phi_i, l) += scale * (0.5 * nb - 0.5 * phi(l) * rss(l));
  }

  // beta0 prior.
  const auto k0 = static_cast<Eigen::Index>(layout_.k0());
  if (k0 > 0) {
    const double c = -0.5 * (static_cast<double>(k0) * kLog2Pi + sigma0_logdet_);
    for (Eigen::Index l = 0; l < m; ++l) {
      const Eigen::VectorXd diff = xi.col(l).head(k0) - spec_.mu0;
      const Eigen::VectorXd prec_diff = sigma0_inv_ * diff;
      out.log_density(l) += c - 0.5 * diff.dot(prec_diff);
      out.gradient.col(l).head(k0) -= prec_diff;
    }
  }

  // phi prior and Jacobian.
  const double phi_norm = h.a_phi * std::log(h.b_phi) - std::lgamma(h.a_phi);
  for (Eigen::Index l = 0; l < m; ++l) {
    const double lphi = xi(phi_i, l);
    out.log_density(l) += phi_norm + (h.a_phi - 1.0) * lphi - h.b_phi * phi(l) + lphi;
    out.gradient(phi_i, l) += (h.a_phi - 1.0) - h.b_phi * phi(l) + 1.0;
  }

  // Penalized blocks.
  const double amax = h.alpha_max;
  const double log_amax = std::log(amax);
  const double lambda_norm = h.a_lambda * std::log(h.b_lambda) - std::lgamma(h.a_lambda);
  const double beta_norm = -(h.a_eta + h.b_eta - 1.0) * log_amax -
                           (std::lgamma(h.a_eta) + std::lgamma(h.b_eta) - std::lgamma(h.a_eta + h.b_eta));
  for (std::size_t j = 0; j < layout_.n_blocks(); ++j) {
    const auto off = static_cast<Eigen::Index>(layout_.block_offset(j));
    const auto kj = static_cast<Eigen::Index>(layout_.block_size(j));
    const auto li = static_cast<Eigen::Index>(layout_.lambda_index(j));
    const auto ai = static_cast<Eigen::Index>(layout_.alpha_index(j));
    const double kd = static_cast<double>(kj);
    // w_kl = (sqrt(phi_l) |beta_kl|)^alpha_l, evaluated for the whole block.
    Eigen::ArrayXd alpha_l(m);
    for (Eigen::Index l = 0; l < m; ++l) alpha_l(l) = scaled_logistic(xi(ai, l), amax);
    const Eigen::ArrayXd lambda_l = xi.row(li).transpose().array().exp();
    const Eigen::ArrayXd half_log_phi_l = 0.5 * xi.row(phi_i).transpose().array();
    const Eigen::ArrayXXd bk = xi.block(off, 0, kj, m).array();
    const Eigen::ArrayXXd log_scaled = bk.abs().log().rowwise() + half_log_phi_l.transpose();
    const Eigen::ArrayXXd w = (log_scaled.rowwise() * alpha_l.transpose()).exp();
    const auto nonzero = bk != 0.0;
    const Eigen::ArrayXd sum_w_l = w.colwise().sum().transpose();
    const Eigen::ArrayXd sum_w_log_l = nonzero.select(w * log_scaled, 0.0).colwise().sum().transpose();
    // d/d beta of -lambda w = -lambda alpha w / beta
    out.gradient.block(off, 0, kj, m).array() -=
        nonzero.select(w / bk, 0.0).rowwise() * (lambda_l * alpha_l).transpose();

    for (Eigen::Index l = 0; l < m; ++l) {
      const double log_lambda = xi(li, l);
      const double lambda = lambda_l(l);
      const double xa = xi(ai, l);
      const double alpha = alpha_l(l);
      const double half_log_phi = half_log_phi_l(l);
      const double inv_alpha = 1.0 / alpha;
      const double sum_w = sum_w_l(l);
      const double sum_w_log = sum_w_log_l(l);
      const double lg = std::lgamma(inv_alpha);
      const double gg_norm =
          kd * (std::log(alpha) - std::numbers::ln2 + inv_alpha * log_lambda + half_log_phi - lg);
      const double log_alpha_gap = std::log(amax - alpha);
      out.log_density(l) += gg_norm - lambda * sum_w;
      out.log_density(l) += lambda_norm + (h.a_lambda - 1.0) * log_lambda - h.b_lambda * lambda;
      out.log_density(l) += beta_norm + (h.a_eta - 1.0) * std::log(alpha) + (h.b_eta - 1.0) * log_alpha_gap;
      out.log_density(l) += log_amax + log_lambda - xa - 2.0 * softplus(-xa);

      out.gradient(phi_i, l) += 0.5 * kd - 0.5 * alpha * lambda * sum_w;
      out.gradient(li, l) += kd * inv_alpha - lambda * sum_w + (h.a_lambda - 1.0) - h.b_lambda * lambda + 1.0;

      const double dig = boost::math::digamma(inv_alpha);
      const double d_alpha = kd * (inv_alpha - log_lambda * inv_alpha * inv_alpha + dig * inv_alpha * inv_alpha) -
                             lambda * sum_w_log + (h.a_eta - 1.0) * inv_alpha -
                             (h.b_eta - 1.0) / (amax - alpha);
      const double dalpha_dxi = alpha * (amax - alpha) / amax;
      out.gradient(ai, l) += d_alpha * dalpha_dxi + 1.0 - 2.0 * alpha / amax;
    }
  }
  return out;
}

Eigen::VectorXd Model::grad_logjoint_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                                   const Eigen::VectorXd& y,
                                                   std::span<const Eigen::Index> rows,
                                                   double scale) const {
  const BatchStats batch = make_batch(y, rows, 1, false);
  return evaluate(xi, batch, scale).gradient.col(0);
}

double Model::logjoint_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                     const Eigen::VectorXd& y, std::span<const Eigen::Index> rows,
                                     double scale) const {
  const BatchStats batch = make_batch(y, rows, 1, false);
  return evaluate(xi, batch, scale).log_density(0);
}

}  // namespace bridgevi
