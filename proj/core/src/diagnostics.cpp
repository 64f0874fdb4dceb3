#include "bridgevi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace bridgevi {

double kolmogorov_survival(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 1.18) {
    // Small-argument form converges quickly where the alternating series does not.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double m = 2.0 * k - 1.0;
      s += std::exp(-m * m * pi2 / (8.0 * x * x));
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return {d, kolmogorov_survival(std::sqrt(ne) * d)};
}

KsResult ks_one_sample(std::span<const double> a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
  std::vector<double> s(a.begin(), a.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0, 1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

CredibleBand credible_band(const PosteriorSamples& samples, const SparseRowMatrix& design_rows,
                           double level) {
  if (!(level >= 0.0 && level < 1.0)) throw std::invalid_argument("credible_band: level outside [0, 1)");
  const Eigen::Index p = design_rows.cols();
  if (samples.draws.cols() < p) throw std::invalid_argument("credible_band: design wider than draws");
  if (samples.draws.rows() == 0) throw std::invalid_argument("credible_band: no draws");
  const Eigen::Index m = design_rows.rows();
  const Eigen::Index s = samples.draws.rows();
  // m x S matrix of curve draws.
  const Eigen::MatrixXd curves = design_rows * samples.draws.leftCols(p).transpose();
  CredibleBand band;
  band.mean = curves.rowwise().mean();
  band.lower.resize(m);
  band.upper.resize(m);
  std::vector<double> row(static_cast<std::size_t>(s));
  const double lo_p = 0.5 * (1.0 - level);
  const double hi_p = 0.5 * (1.0 + level);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index k = 0; k < s; ++k) row[static_cast<std::size_t>(k)] = curves(i, k);
    std::sort(row.begin(), row.end());
    band.lower(i) = quantile_sorted(row, lo_p);
    band.upper(i) = quantile_sorted(row, hi_p);
  }
  return band;
}

double curve_mae(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("curve_mae: grid mismatch");
  if (estimate.size() == 0) throw std::invalid_argument("curve_mae: empty grid");
  return (estimate - truth).cwiseAbs().mean();
}

double band_coverage(const CredibleBand& band, const Eigen::VectorXd& truth) {
  if (band.lower.size() != truth.size()) throw std::invalid_argument("band_coverage: grid mismatch");
  if (truth.size() == 0) return 0.0;
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (band.lower(i) <= truth(i) && truth(i) <= band.upper(i)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(truth.size());
}

ComparisonReport compare_posteriors(const PosteriorSamples& a, const PosteriorSamples& b,
                                    const std::vector<std::size_t>& columns, double significance) {
  if (a.draws.cols() != b.draws.cols() || a.names != b.names) {
    throw std::invalid_argument("compare_posteriors: parameter sets differ");
  }
  std::vector<std::size_t> cols = columns;
  if (cols.empty()) {
    for (Eigen::Index c = 0; c < a.draws.cols(); ++c) cols.push_back(static_cast<std::size_t>(c));
  }
  ComparisonReport report;
  report.significance = significance;
  report.first.label = a.source.empty() ? "first" : a.source;
  report.second.label = b.source.empty() ? "second" : b.source;
  std::size_t rejected = 0;
  for (std::size_t c : cols) {
    if (c >= static_cast<std::size_t>(a.draws.cols())) throw std::out_of_range("compare_posteriors: bad column");
    const auto cc = static_cast<Eigen::Index>(c);
    const Eigen::VectorXd va = a.draws.col(cc);
    const Eigen::VectorXd vb = b.draws.col(cc);
    const KsResult ks = ks_two_sample({va.data(), static_cast<std::size_t>(va.size())},
                                      {vb.data(), static_cast<std::size_t>(vb.size())});
    const std::string name = c < a.names.size() ? a.names[c] : "param" + std::to_string(c);
    report.parameters.push_back({name, ks.statistic, ks.p_value});
    if (ks.p_value < significance) ++rejected;
  }
  report.rejection_fraction =
      cols.empty() ? 0.0 : static_cast<double>(rejected) / static_cast<double>(cols.size());
  return report;
}

void score_against_truth(ComparisonReport& report, const PosteriorSamples& a,
                         const PosteriorSamples& b, const SparseRowMatrix& design_rows,
                         const Eigen::VectorXd& truth, double level) {
  const CredibleBand ba = credible_band(a, design_rows, level);
  const CredibleBand bb = credible_band(b, design_rows, level);
  report.first.mae = curve_mae(ba.mean, truth);
  report.second.mae = curve_mae(bb.mean, truth);
  report.first.coverage = band_coverage(ba, truth);
  report.second.coverage = band_coverage(bb, truth);
}

void write_timing_report(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << "n,MCMC,ADVI,iterations,batch_size\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    os << r.n << ',' << r.mcmc_seconds << ',' << r.advi_seconds << ',' << r.iterations << ','
       << r.batch_size << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

}  // namespace bridgevi
