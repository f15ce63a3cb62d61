#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace repdisp {

/// 12 significant digits, the fixed numeric format of every CSV report.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// CSV document. Preamble lines are emitted first, each prefixed by "# ".
struct CsvTable {
  std::vector<std::string> preamble;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_string() const;
  /// Index of a header column, if present.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// Parses CSV text. Lines starting with '#' and blank lines are skipped;
/// the first remaining line is the header. Double-quoted fields are
/// supported.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

/// Parses a CSV cell as a finite double.
double parse_number(const std::string& cell, std::string_view context);

}  // namespace repdisp
