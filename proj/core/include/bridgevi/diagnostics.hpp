#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bridgevi/advi.hpp"
#include "bridgevi/basis.hpp"

namespace bridgevi {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// P(K > x) for the limiting Kolmogorov distribution.
double kolmogorov_survival(double x);

/// Two-sample test with the asymptotic p-value at effective size
/// n_a n_b / (n_a + n_b).
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// One-sample test of `a` against a continuous CDF.
KsResult ks_one_sample(std::span<const double> a, const std::function<double(double)>& cdf);

/// Linear interpolation between order statistics of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

struct CredibleBand {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Pointwise band of the linear predictor design_rows * beta over the draws.
/// `design_rows` has one column per regression coefficient; level in [0, 1)
/// and level 0 collapses to the median.
CredibleBand credible_band(const PosteriorSamples& samples, const SparseRowMatrix& design_rows,
                           double level = 0.95);

double curve_mae(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

/// Fraction of points with lower <= truth <= upper.
double band_coverage(const CredibleBand& band, const Eigen::VectorXd& truth);

struct ParameterComparison {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
};

struct MethodSummary {
  std::string label;
  std::optional<double> mae;
  std::optional<double> coverage;
  std::optional<double> seconds;
};

struct ComparisonReport {
  std::vector<ParameterComparison> parameters;
  double significance = 0.05;
  double rejection_fraction = 0.0;
  MethodSummary first;
  MethodSummary second;
};

/// Columnwise KS tests between two posterior samples with identical names.
/// `columns` restricts the comparison; empty means every column.
ComparisonReport compare_posteriors(const PosteriorSamples& a, const PosteriorSamples& b,
                                    const std::vector<std::size_t>& columns = {},
                                    double significance = 0.05);

/// Fills MAE and coverage of both methods against a true curve.
void score_against_truth(ComparisonReport& report, const PosteriorSamples& a,
                         const PosteriorSamples& b, const SparseRowMatrix& design_rows,
                         const Eigen::VectorXd& truth, double level = 0.95);

struct TimingRow {
  std::size_t n = 0;
  double mcmc_seconds = 0.0;
  double advi_seconds = 0.0;
  std::size_t iterations = 0;
  std::size_t batch_size = 0;
};

/// CSV with header n,MCMC,ADVI,iterations,batch_size.
void write_timing_report(std::ostream& os, const std::vector<TimingRow>& rows);

}  // namespace bridgevi
