#include "bridgevi_cli/io.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bridgevi::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

std::size_t CsvText::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  throw std::invalid_argument("csv: no column named '" + name + "'");
}

std::vector<double> CsvText::numeric(std::size_t col) const {
  if (col >= header.size()) throw std::out_of_range("csv: column index out of range");
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string& s = rows[r][col];
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw std::invalid_argument("csv: non-numeric value '" + s + "' in column '" + header[col] +
                                  "', data row " + std::to_string(r + 1));
    }
    out.push_back(v);
  }
  return out;
}

CsvText read_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot open " + path.string());
  CsvText out;
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument(path.string() + ": missing header");
  for (auto& h : split_line(line)) out.header.push_back(trim(h));
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != out.header.size()) {
      throw std::invalid_argument(path.string() + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " fields, expected " +
                                  std::to_string(out.header.size()));
    }
    for (auto& c : cells) c = trim(std::move(c));
    out.rows.push_back(std::move(cells));
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const fs::path& path, const NumericTable& table) {
  if (table.values.rows() > 0 && table.values.cols() != static_cast<Eigen::Index>(table.header.size())) {
    throw std::invalid_argument("write_csv: header does not match column count");
  }
  auto os = open_for_write(path);
  for (std::size_t c = 0; c < table.header.size(); ++c) os << (c ? "," : "") << table.header[c];
  os << '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      os << (c ? "," : "") << format_number(table.values(r, c));
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  auto os = open_for_write(path);
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

double timestamp_to_hours(const std::string& stamp) {
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  int h = 0;
  int mi = 0;
  int s = 0;
  char sep = ' ';
  const int got = std::sscanf(stamp.c_str(), "%d-%u-%u%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (got < 3 || (got >= 4 && sep != ' ' && sep != 'T')) {
    throw std::invalid_argument("unrecognized timestamp '" + stamp + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok()) throw std::invalid_argument("invalid date in timestamp '" + stamp + "'");
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return 24.0 * static_cast<double>(days) + h + mi / 60.0 + s / 3600.0;
}

void ensure_directory(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

}  // namespace bridgevi::cli
