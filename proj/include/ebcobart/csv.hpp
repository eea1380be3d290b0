#pragma once

#include <string>
#include <vector>

#include "ebcobart/errors.hpp"

namespace ebcobart {

// RFC 4180 table: header row required, '.' decimal point, UTF-8.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }
  // index of a named column; throws InputError naming the column when absent
  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv_file(const std::string& path);

// strict numeric parse of one cell; throws InputError naming column and row
double csv_number(const std::string& cell, const std::string& column, std::size_t row);

std::string csv_escape(const std::string& field);
std::string format_double(double v);  // shortest round-trip decimal

}  // namespace ebcobart
