#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

namespace bridgevi {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class BasisKind { bspline, fourier, identity };

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

/// Describes one block of basis functions applied to a single covariate.
struct BasisSpec {
  BasisKind kind = BasisKind::identity;
  int degree = 3;
  std::vector<double> knots;
  double period = 0.0;
  int n_harmonics = 0;

  static BasisSpec bspline(std::vector<double> knots, int degree = 3);
  static BasisSpec fourier(double period, int n_harmonics);
  static BasisSpec identity();

  /// Number of columns this basis produces.
  [[nodiscard]] std::size_t size() const;

  /// Throws std::invalid_argument when the spec violates its invariants.
  void validate() const;

  /// Closed interval on which the B-spline rows form a partition of unity.
  [[nodiscard]] double interior_lo() const;
  [[nodiscard]] double interior_hi() const;
};

/// lo, lo + spacing, ... up to the first point >= hi.
std::vector<double> uniform_knots(double lo, double hi, double spacing);

/// Pads a uniform grid with extra knots at its own spacing, alternating left
/// and right, until the cubic (or given degree) basis has exactly `target_k`
/// functions. Throws if the grid already yields more than `target_k`.
BasisSpec bspline_with_target(std::vector<double> grid, int degree,
                              std::size_t target_k);

/// Uniformly spaced knots whose interior span covers [lo, hi].
BasisSpec bspline_covering(double lo, double hi, double spacing, int degree = 3);

/// Same as bspline_covering but with a fixed total number of knots.
BasisSpec bspline_with_knot_count(double lo, double hi, std::size_t n_knots,
                                  int degree = 3);

struct BasisRow {
  std::vector<double> values;
  bool out_of_range = false;
};

BasisRow bspline_row(double x, const BasisSpec& spec);
std::vector<double> fourier_row(double t, const BasisSpec& spec);

struct DesignMatrix {
  SparseRowMatrix values;
  BasisSpec spec;
  std::size_t column_offset = 0;
  /// Rows whose covariate fell outside the knot range (zero rows).
  std::size_t out_of_range_rows = 0;

  [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
  [[nodiscard]] Eigen::MatrixXd dense() const { return Eigen::MatrixXd(values); }
};

DesignMatrix build_design(std::span<const double> x, const BasisSpec& spec,
                          std::size_t column_offset = 0);

}  // namespace bridgevi
