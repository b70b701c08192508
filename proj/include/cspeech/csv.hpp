#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cspeech/error.hpp"

namespace cspeech::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
// newlines. Blank lines are skipped.
inline std::vector<Row> read(std::istream& in, char sep = ',') {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false, field_started = false;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (!(row.empty() && field.empty() && !field_started)) {
      end_field();
      rows.push_back(std::move(row));
    }
    row.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      field_started = true;
    } else if (c == sep) {
      end_field();
      field_started = true;
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw SchemaError("csv: unterminated quoted field");
  end_row();
  return rows;
}

inline std::string escape(std::string_view field, char sep = ',') {
  const bool needs = field.find_first_of(std::string{sep, '"', '\n', '\r'}) != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const Row& row, char sep = ',') {
  for (size_t i = 0; i < row.size(); ++i) {
    if (i) out << sep;
    out << escape(row[i], sep);
  }
  out << '\n';
}

}  // namespace cspeech::csv
