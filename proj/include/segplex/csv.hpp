#pragma once

// Minimal RFC 4180 style CSV helpers shared by the manifest and report tables.
// Lines starting with '#' are comments and carry provenance metadata.

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "segplex/error.hpp"

namespace segplex::csv {

// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string join(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += escape(fields[i]);
  }
  return line;
}

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw input_error("unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
  std::vector<std::string> comments;      // without the leading '#'
};

// Reads a table whose header must equal `expected_header` exactly.
inline Table read_table(std::istream& in, const std::vector<std::string>& expected_header, const std::string& source) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      t.comments.push_back(line.substr(1));
      continue;
    }
    std::vector<std::string> fields;
    try {
      fields = split(line);
    } catch (const input_error& e) {
      throw input_error(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (fields != expected_header) {
        std::string expected;
        for (const auto& h : expected_header) expected += (expected.empty() ? "" : ",") + h;
        throw input_error(source + ":" + std::to_string(line_no) + ": expected header '" + expected + "'");
      }
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw input_error(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw input_error(source + ": missing header line");
  return t;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace segplex::csv
