#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace bridgevi::cli {

using Json = nlohmann::ordered_json;

/// Raw CSV contents; the first line is always the header.
struct CsvText {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws std::invalid_argument if absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
  [[nodiscard]] std::vector<double> numeric(std::size_t col) const;
};

CsvText read_csv(const std::filesystem::path& path);

/// Numeric column table written with shortest round-trip formatting.
struct NumericTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

void write_csv(const std::filesystem::path& path, const NumericTable& table);

/// Shortest decimal string that parses back to the same double.
std::string format_number(double v);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

/// "YYYY-MM-DD[ T]HH[:MM[:SS]]" as whole hours since 1970-01-01 UTC.
double timestamp_to_hours(const std::string& stamp);

/// Creates the directory (and parents) or throws naming the path.
void ensure_directory(const std::filesystem::path& dir);

}  // namespace bridgevi::cli
