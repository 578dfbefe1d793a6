#pragma once
// Minimal CSV reading/writing for the numeric interchange files.

#include <filesystem>
#include <string>
#include <vector>

namespace labeldist::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a header column; throws InputError if absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> column_values(std::size_t index) const;
};

/// Parses a header line plus numeric rows. Throws InputError with the file,
/// row and column of the first malformed cell.
Table read(const std::filesystem::path& path);

/// Writes header and rows with 9 significant digits. Throws InputError if
/// the file cannot be opened.
void write(const std::filesystem::path& path, const Table& table);

/// "%.9g" formatting used for every floating-point output.
std::string format(double value);

}  // namespace labeldist::csv
