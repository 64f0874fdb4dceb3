#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgevi/advi.hpp"
#include "bridgevi/model.hpp"
#include "bridgevi_cli/config.hpp"
#include "bridgevi_cli/io.hpp"

namespace bridgevi::cli {

/// Exit status for divergence or another numerical failure.
inline constexpr int kNumericalFailure = 2;

/// A fit directory as written by cmd_fit.
struct FitArtifacts {
  Json summary;
  PosteriorSamples samples;
};

FitArtifacts load_fit(const std::filesystem::path& dir);

/// Design rows for the covariate table `csv` under the model stored in a
/// fit summary; columns match the order of the posterior draws.
SparseRowMatrix design_from_summary(const Json& summary, const CsvText& csv, std::ostream& log);

/// Each command returns its exit status; configuration errors throw.
int cmd_simulate(const RunConfig& config, std::ostream& log);
int cmd_fit(const RunConfig& config, std::ostream& log);
int cmd_predict(const RunConfig& config, std::ostream& log);
int cmd_compare(const RunConfig& config, std::ostream& log);
int cmd_bench(const RunConfig& config, std::ostream& log);

}  // namespace bridgevi::cli
