#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hsnet {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

/// Plain comma-separated values, no quoting. Every row must have as many
/// fields as the header.
CsvTable read_csv(std::istream& is);

}  // namespace hsnet
