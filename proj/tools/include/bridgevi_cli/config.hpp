#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bridgevi/advi.hpp"
#include "bridgevi/basis.hpp"
#include "bridgevi/mcmc.hpp"
#include "bridgevi/model.hpp"
#include "bridgevi/simulate.hpp"
#include "bridgevi_cli/io.hpp"

namespace bridgevi::cli {

/// One design block built from one CSV column.
///
/// kind is bspline, fourier, identity or intercept (a column of ones that
/// needs no data column). An empty column name means the first covariate
/// column. B-spline knots come from, in order of preference, `knots`,
/// `knot_spacing` (uniform knots covering the data span) or `n_knots`
/// uniform knots over the data span.
struct CovariateConfig {
  std::string column;
  /// Column holds timestamps, read as hours since the first training row.
  bool timestamp = false;
  std::string kind = "bspline";
  bool penalized = true;
  int degree = 3;
  std::vector<double> knots;
  std::optional<double> knot_spacing;
  std::optional<std::size_t> n_knots;
  double period = 0.0;
  int harmonics = 0;
};

struct SimulateSettings {
  /// scenario1, scenario2 or scenario3.
  std::string scenario = "scenario1";
  Scenario1Spec scenario1;
  Scenario3Spec scenario3;
  /// Rows of the scenario2 replica.
  std::size_t scale_n = 10000;
};

struct BenchSettings {
  std::vector<std::size_t> sizes{10000, 50000, 100000, 500000, 1000000};
  /// Iterations for both backends; 0 takes the ADVI count of the size table.
  std::size_t iterations = 1000;
  std::size_t repeats = 1;
  std::size_t max_bytes = std::size_t{2} << 30;
};

struct RunConfig {
  std::string command;
  std::string preset;
  std::string dataset;
  /// Empty selects the first CSV column.
  std::string response;
  std::vector<CovariateConfig> covariates;
  Hyperparameters hyper;
  std::string backend = "advi";
  FitConfig advi;
  ChainConfig mcmc;
  std::size_t chains = 1;
  std::size_t draws = 5000;
  std::string out = "out";
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  SimulateSettings simulate;
  std::string fit_dir;
  std::string grid;
  double level = 0.95;
  std::string fit_a;
  std::string fit_b;
  std::string truth;
  double significance = 0.05;
  BenchSettings bench;
  /// Messages collected while resolving the configuration.
  std::vector<std::string> notes;
};

/// Names accepted by apply_preset (scenario2 takes a -<n> suffix).
std::vector<std::string> preset_names();

/// Overwrites the fields a preset controls; throws for unknown names.
void apply_preset(RunConfig& config, const std::string& name);

/// Merges a JSON tree into the configuration. A "preset" key is applied
/// before the remaining keys; unknown keys are an error.
void apply_json(RunConfig& config, const Json& j);

/// Checks backend and cross-field constraints of the named command.
void validate(const RunConfig& config);

/// Propagates the global seed to the backends and simulator.
void apply_seed(RunConfig& config, std::uint64_t seed);

/// Resolved basis for one covariate given its training values.
BasisSpec resolve_basis(const CovariateConfig& cov, std::span<const double> x);

Json to_json(const CovariateConfig& cov);
Json to_json(const BasisSpec& spec);
BasisSpec basis_from_json(const Json& j);
Json to_json(const Hyperparameters& h);
Hyperparameters hyper_from_json(const Json& j);

}  // namespace bridgevi::cli
