#pragma once

#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hazsurf/errors.hpp"

namespace hazsurf {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }

  int column(const std::string &name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
  int require_column(const std::string &name) const {
    const int i = column(name);
    if (i < 0) throw SchemaError("missing column '" + name + "'");
    return i;
  }
};

namespace detail {

// RFC 4180 record reader; returns false at end of input with no record.
inline bool read_csv_record(std::istream &in, std::vector<std::string> &out,
                            std::size_t &line_no) {
  out.clear();
  std::string field;
  bool in_quotes = false, any = false, field_open = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    const char c = static_cast<char>(ch);
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty())
        throw SchemaError("line " + std::to_string(line_no) +
                          ": quote inside unquoted field");
      in_quotes = true;
      field_open = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
      field_open = false;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      ++line_no;
      out.push_back(field);
      return true;
    } else if (c == '\n') {
      ++line_no;
      out.push_back(field);
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes)
    throw SchemaError("unterminated quoted field at end of input");
  if (!any) return false;
  if (out.empty() && field.empty() && !field_open) return false;
  out.push_back(field);
  return true;
}

}  // namespace detail

inline CsvTable read_csv(std::istream &in) {
  // Skip a UTF-8 byte-order mark if present.
  if (in.peek() == 0xEF) {
    char bom[3];
    in.read(bom, 3);
  }
  CsvTable t;
  std::size_t line_no = 1;
  if (!detail::read_csv_record(in, t.header, line_no))
    throw SchemaError("empty CSV input (a header row is required)");
  std::vector<std::string> rec;
  while (detail::read_csv_record(in, rec, line_no)) {
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    if (rec.size() != t.header.size())
      throw SchemaError("row " + std::to_string(t.rows.size()) + " has " +
                        std::to_string(rec.size()) + " fields, expected " +
                        std::to_string(t.header.size()));
    t.rows.push_back(rec);
  }
  return t;
}

inline CsvTable read_csv_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return read_csv(in);
  } catch (const SchemaError &e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline std::string csv_escape(const std::string &field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline void write_csv(std::ostream &out, const CsvTable &t) {
  for (std::size_t i = 0; i < t.header.size(); ++i)
    out << (i ? "," : "") << csv_escape(t.header[i]);
  out << "\n";
  for (const auto &row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << csv_escape(row[i]);
    out << "\n";
  }
}

inline void write_csv_file(const std::string &path, const CsvTable &t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, t);
  if (!out) throw IoError("write to '" + path + "' failed");
}

// Strict full-field numeric parse with a row/column-indexed error message.
inline double parse_csv_double(const CsvTable &t, std::size_t row, int col) {
  const std::string &s = t.rows[row][static_cast<std::size_t>(col)];
  const char *begin = s.c_str();
  char *end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw SchemaError("row " + std::to_string(row) + ", column '" +
                      t.header[static_cast<std::size_t>(col)] +
                      "': cannot parse '" + s + "' as a number");
  return v;
}

}  // namespace hazsurf
