#include "hsnet/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "hsnet/errors.hpp"

namespace hsnet {

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw FormatError("csv: '" + std::string(text) + "' is not a number", 0);
  }
  return value;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << fields[i];
  }
  os << '\n';
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw LookupError("csv: no column '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(is, line)) throw FormatError("csv: missing header", 0);
  offset += line.size() + 1;
  table.header = split(line);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw FormatError("csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(table.header.size()),
                        offset);
    }
    offset += line.size() + 1;
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace hsnet
