#include "csv.hpp"

#include "botgraph/errors.hpp"

namespace botgraph::detail {

std::vector<CsvRow> read_csv(std::istream& is, const std::string& source) {
  std::vector<CsvRow> rows;
  CsvRow cur;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  cur.line = 1;

  auto end_field = [&] {
    cur.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A lone empty field is a blank line.
    if (!(cur.fields.size() == 1 && cur.fields[0].empty())) {
      rows.push_back(std::move(cur));
    }
    cur = CsvRow{};
    cur.line = line;
  };

  char c;
  while (is.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (is.peek() == '\n') break;
        ++line;
        end_record();
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field_started = true;
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw ParseError(source + ":" + std::to_string(cur.line) + ": unterminated quoted field");
  }
  if (field_started || !field.empty() || !cur.fields.empty()) end_record();
  return rows;
}

}  // namespace botgraph::detail
