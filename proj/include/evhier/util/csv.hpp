#pragma once

#include "evhier/common.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

namespace evhier::util {

/// Formats a double with 9 significant digits; fixed output for identical input.
std::string format_number(double v);

/// Comma-separated writer with a fixed header. Fields are numbers or plain
/// strings without commas.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  template <typename... Fields>
  void row(const Fields&... fields) {
    if (sizeof...(Fields) != columns_) throw ConfigError("csv: row width does not match header");
    std::string line;
    bool first = true;
    ((append(line, fields, first)), ...);
    out_ << line << '\n';
  }

 private:
  template <typename T>
  static void append(std::string& line, const T& v, bool& first) {
    if (!first) line += ',';
    first = false;
    if constexpr (std::is_floating_point_v<T>) {
      line += format_number(v);
    } else if constexpr (std::is_integral_v<T>) {
      line += std::to_string(v);
    } else {
      line += std::string(v);
    }
  }

  std::ofstream out_;
  std::size_t columns_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  const std::string& cell(std::size_t row, const std::string& name) const { return rows.at(row).at(column(name)); }
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace evhier::util
