#include "bridgevi/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bridgevi {

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::bspline: return "bspline";
    case BasisKind::fourier: return "fourier";
    case BasisKind::identity: return "identity";
  }
  return "unknown";
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "bspline") return BasisKind::bspline;
  if (name == "fourier") return BasisKind::fourier;
  if (name == "identity") return BasisKind::identity;
  throw std::invalid_argument("unknown basis kind: " + name);
}

BasisSpec BasisSpec::bspline(std::vector<double> knots, int degree) {
  BasisSpec s;
  s.kind = BasisKind::bspline;
  s.degree = degree;
  s.knots = std::move(knots);
  s.validate();
  return s;
}

BasisSpec BasisSpec::fourier(double period, int n_harmonics) {
  BasisSpec s;
  s.kind = BasisKind::fourier;
  s.period = period;
  s.n_harmonics = n_harmonics;
  s.validate();
  return s;
}

BasisSpec BasisSpec::identity() { return BasisSpec{}; }

std::size_t BasisSpec::size() const {
  switch (kind) {
    case BasisKind::bspline:
      return knots.size() - static_cast<std::size_t>(degree) - 1;
    case BasisKind::fourier:
      return 2 * static_cast<std::size_t>(n_harmonics);
    case BasisKind::identity:
      return 1;
  }
  return 0;
}

void BasisSpec::validate() const {
  switch (kind) {
    case BasisKind::bspline: {
      if (degree < 0) throw std::invalid_argument("bspline degree must be >= 0");
      if (knots.size() < static_cast<std::size_t>(degree) + 2)
        throw std::invalid_argument("bspline needs at least degree+2 knots");
      for (std::size_t i = 1; i < knots.size(); ++i) {
        if (!(knots[i] > knots[i - 1]))
          throw std::invalid_argument("bspline knots must be strictly increasing");
      }
      for (double k : knots) {
        if (!std::isfinite(k)) throw std::invalid_argument("bspline knots must be finite");
      }
      break;
    }
    case BasisKind::fourier:
      if (!(period > 0.0)) throw std::invalid_argument("fourier period must be > 0");
      if (n_harmonics < 1) throw std::invalid_argument("fourier needs n_harmonics >= 1");
      break;
    case BasisKind::identity:
      break;
  }
}

double BasisSpec::interior_lo() const {
  return knots.at(static_cast<std::size_t>(degree));
}

double BasisSpec::interior_hi() const {
  return knots.at(knots.size() - 1 - static_cast<std::size_t>(degree));
}

std::vector<double> uniform_knots(double lo, double hi, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("uniform_knots: spacing must be > 0");
  if (!(lo < hi)) throw std::invalid_argument("uniform_knots: lo must be < hi");
  std::vector<double> out;
  // Multiples of the spacing rather than repeated addition, so the grid does
  // not drift over long ranges.
  for (std::size_t k = 0;; ++k) {
    const double v = lo + static_cast<double>(k) * spacing;
    out.push_back(v);
    if (v >= hi) break;
  }
  return out;
}

BasisSpec bspline_with_target(std::vector<double> grid, int degree,
                              std::size_t target_k) {
  if (grid.size() < 2) throw std::invalid_argument("bspline_with_target: grid too small");
  const double h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
  const auto basis_count = [&](std::size_t n_knots) -> long {
    return static_cast<long>(n_knots) - degree - 1;
  };
  if (basis_count(grid.size()) > static_cast<long>(target_k)) {
    throw std::invalid_argument("bspline_with_target: grid of " +
                                std::to_string(grid.size()) + " knots already yields " +
                                std::to_string(basis_count(grid.size())) +
                                " functions, more than the target " +
                                std::to_string(target_k));
  }
  const double first = grid.front();
  const double last = grid.back();
  std::size_t left = 0;
  std::size_t right = 0;
  while (basis_count(grid.size() + left + right) < static_cast<long>(target_k)) {
    if (left <= right) ++left; else ++right;
  }
  std::vector<double> knots;
  knots.reserve(grid.size() + left + right);
  for (std::size_t k = left; k > 0; --k) knots.push_back(first - static_cast<double>(k) * h);
  knots.insert(knots.end(), grid.begin(), grid.end());
  for (std::size_t k = 1; k <= right; ++k) knots.push_back(last + static_cast<double>(k) * h);
  BasisSpec spec = BasisSpec::bspline(std::move(knots), degree);
  if (spec.size() != target_k) {
    throw std::logic_error("bspline_with_target: produced " + std::to_string(spec.size()) +
                           " basis functions, expected " + std::to_string(target_k));
  }
  return spec;
}

BasisSpec bspline_covering(double lo, double hi, double spacing, int degree) {
  if (!(spacing > 0.0)) throw std::invalid_argument("bspline_covering: spacing must be > 0");
  if (!(lo < hi)) throw std::invalid_argument("bspline_covering: lo must be < hi");
  const auto intervals = static_cast<std::size_t>(std::ceil((hi - lo) / spacing - 1e-9));
  const std::size_t n_knots = intervals + 2 * static_cast<std::size_t>(degree) + 1;
  std::vector<double> knots(n_knots);
  for (std::size_t k = 0; k < n_knots; ++k) {
    knots[k] = lo + (static_cast<double>(k) - degree) * spacing;
  }
  return BasisSpec::bspline(std::move(knots), degree);
}

BasisSpec bspline_with_knot_count(double lo, double hi, std::size_t n_knots, int degree) {
  const long intervals = static_cast<long>(n_knots) - 1 - 2L * degree;
  if (intervals < 1) throw std::invalid_argument("bspline_with_knot_count: too few knots");
  if (!(lo < hi)) throw std::invalid_argument("bspline_with_knot_count: lo must be < hi");
  const double h = (hi - lo) / static_cast<double>(intervals);
  std::vector<double> knots(n_knots);
  for (std::size_t k = 0; k < n_knots; ++k) {
    knots[k] = lo + (static_cast<double>(k) - degree) * h;
  }
  knots[static_cast<std::size_t>(degree) + static_cast<std::size_t>(intervals)] = hi;
  return BasisSpec::bspline(std::move(knots), degree);
}

BasisRow bspline_row(double x, const BasisSpec& spec) {
  if (spec.kind != BasisKind::bspline) throw std::invalid_argument("bspline_row: not a bspline spec");
  const auto& t = spec.knots;
  const int p = spec.degree;
  const std::size_t n_basis = spec.size();
  BasisRow row;
  row.values.assign(n_basis, 0.0);
  const std::size_t m = t.size() - 1;
  if (!(x >= t.front() && x <= t.back())) {
    row.out_of_range = true;
    return row;
  }
  // Knot span s with t[s] <= x < t[s+1]; the right end belongs to the last span.
  std::size_t s = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), x) - t.begin());
  s = (s == 0) ? 0 : s - 1;
  if (s >= m) s = m - 1;

  // local[j] holds N_{s-p+j, k}; indices below 0 or beyond the last function
  // of the current degree are structurally zero.
  std::vector<double> local(static_cast<std::size_t>(p) + 1, 0.0);
  local[static_cast<std::size_t>(p)] = 1.0;
  const long base = static_cast<long>(s) - p;
  for (int k = 1; k <= p; ++k) {
    for (int j = p - k; j <= p; ++j) {
      const long i = base + j;
      if (i < 0 || i + k + 1 > static_cast<long>(m)) {
        local[static_cast<std::size_t>(j)] = 0.0;
        continue;
      }
      const auto ui = static_cast<std::size_t>(i);
      const double left = local[static_cast<std::size_t>(j)];
      const double right = (j < p) ? local[static_cast<std::size_t>(j) + 1] : 0.0;
      double v = 0.0;
      if (left != 0.0) v += (x - t[ui]) / (t[ui + k] - t[ui]) * left;
      if (right != 0.0) v += (t[ui + k + 1] - x) / (t[ui + k + 1] - t[ui + 1]) * right;
      local[static_cast<std::size_t>(j)] = v;
    }
  }
  for (int j = 0; j <= p; ++j) {
    const long i = base + j;
    if (i >= 0 && i < static_cast<long>(n_basis)) {
      row.values[static_cast<std::size_t>(i)] = local[static_cast<std::size_t>(j)];
    }
  }
  return row;
}

std::vector<double> fourier_row(double t, const BasisSpec& spec) {
  if (spec.kind != BasisKind::fourier) throw std::invalid_argument("fourier_row: not a fourier spec");
  std::vector<double> out(spec.size());
  const double w = 2.0 * std::numbers::pi * t / spec.period;
  for (int k = 1; k <= spec.n_harmonics; ++k) {
    const auto idx = 2 * static_cast<std::size_t>(k - 1);
    out[idx] = std::cos(w * k);
    out[idx + 1] = std::sin(w * k);
  }
  return out;
}

DesignMatrix build_design(std::span<const double> x, const BasisSpec& spec,
                          std::size_t column_offset) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto k = static_cast<Eigen::Index>(spec.size());
  DesignMatrix dm;
  dm.spec = spec;
  dm.column_offset = column_offset;
  dm.values.resize(n, k);
  std::vector<Eigen::Triplet<double>> triplets;
  const std::size_t per_row = spec.kind == BasisKind::bspline
                                  ? static_cast<std::size_t>(spec.degree) + 1
                                  : spec.size();
  triplets.reserve(x.size() * per_row);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (!std::isfinite(xi)) throw std::invalid_argument("build_design: non-finite covariate");
    switch (spec.kind) {
      case BasisKind::bspline: {
        BasisRow row = bspline_row(xi, spec);
        if (row.out_of_range) ++dm.out_of_range_rows;
        for (Eigen::Index j = 0; j < k; ++j) {
          const double v = row.values[static_cast<std::size_t>(j)];
          if (v != 0.0) triplets.emplace_back(i, j, v);
        }
        break;
      }
      case BasisKind::fourier: {
        const auto row = fourier_row(xi, spec);
        for (Eigen::Index j = 0; j < k; ++j) {
          triplets.emplace_back(i, j, row[static_cast<std::size_t>(j)]);
        }
        break;
      }
      case BasisKind::identity:
        if (xi != 0.0) triplets.emplace_back(i, 0, xi);
        break;
    }
  }
  dm.values.setFromTriplets(triplets.begin(), triplets.end());
  return dm;
}

}  // namespace bridgevi
