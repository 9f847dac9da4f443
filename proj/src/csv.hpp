#pragma once

#include <istream>
#include <string>
#include <vector>

namespace botgraph::detail {

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
/// newlines. Throws ParseError on an unterminated quote.
std::vector<CsvRow> read_csv(std::istream& is, const std::string& source);

}  // namespace botgraph::detail
