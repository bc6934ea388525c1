#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fmix {

/// Fixed 17-significant-digit formatting so outputs are byte-stable and
/// round-trip to the same double.
std::string format_double(double value);

std::string csv_join(const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws when absent unless `optional` is set.
  std::optional<size_t> find(const std::string& name) const;
  size_t require(const std::string& name) const;
};

/// Reads a comma-separated file with a header row. Fields are split on
/// commas with surrounding whitespace trimmed; every row must match the
/// header width.
CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const CsvTable& table);

double parse_double(const std::string& field, const std::string& context);

}  // namespace fmix
