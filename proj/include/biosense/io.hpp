#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace biosense::io {

/// Shortest locale-independent text with 17 significant digits; "nan",
/// "inf", "-inf" for non-finite values.
std::string format_double(double v);

/// Comma-separated writer with a fixed header. Cells are written verbatim,
/// numbers through format_double.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  void row(std::span<const double> values);
  void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }
  /// Mixed row of preformatted cells.
  void text_row(const std::vector<std::string>& cells);

  std::size_t columns() const { return columns_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t columns_;
};

/// Writes `text` to `path` in binary mode, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace biosense::io
