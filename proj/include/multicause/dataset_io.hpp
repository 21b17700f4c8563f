#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "multicause/dataset.hpp"
#include "multicause/errors.hpp"

namespace multicause {

/// Shortest decimal string that round-trips back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw parse_error("failed to format floating-point value");
  return std::string(buf, ptr);
}

inline double parse_double_field(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw parse_error("line " + std::to_string(line_no) + ": invalid numeric field '" +
                      std::string(field) + "'");
  }
  return v;
}

inline int parse_int_field(std::string_view field, std::size_t line_no) {
  int v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw parse_error("line " + std::to_string(line_no) + ": invalid integer field '" +
                      std::string(field) + "'");
  }
  return v;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace detail

/// Columns: A1..Am, Y, then optional W (instrument) and optional Z (latent).
inline void write_csv(std::ostream& out, const Dataset& data) {
  data.validate();
  for (std::size_t j = 0; j < data.m; ++j) {
    if (j > 0) out << ',';
    out << data.treatment_labels[j];
  }
  out << ",Y";
  if (data.has_instrument()) out << ",W";
  if (data.has_oracle_latent()) out << ",Z";
  out << '\n';
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t j = 0; j < data.m; ++j) {
      if (j > 0) out << ',';
      out << format_double(data.a(i, j));
    }
    out << ',' << format_double(data.outcome[i]);
    if (data.has_instrument()) out << ',' << data.instrument[i];
    if (data.has_oracle_latent()) out << ',' << format_double(data.oracle_latent[i]);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open '" + path + "' for writing");
  write_csv(out, data);
  if (!out) throw parse_error("write to '" + path + "' failed");
}

inline Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw parse_error("line 1: empty input, expected header");
  auto header = detail::split_csv_line(detail::trim(line));
  std::size_t m = 0;
  while (m < header.size()) {
    const auto field = detail::trim(header[m]);
    if (field.size() >= 2 && field[0] == 'A') {
      bool digits = true;
      for (std::size_t c = 1; c < field.size(); ++c) {
        if (field[c] < '0' || field[c] > '9') digits = false;
      }
      if (digits) {
        ++m;
        continue;
      }
    }
    break;
  }
  if (m == 0) throw parse_error("line 1: expected treatment columns A1..Am first");
  std::size_t col = m;
  if (col >= header.size() || detail::trim(header[col]) != "Y") {
    throw parse_error("line 1: expected outcome column 'Y' after treatments");
  }
  ++col;
  bool has_w = false;
  bool has_z = false;
  if (col < header.size() && detail::trim(header[col]) == "W") {
    has_w = true;
    ++col;
  }
  if (col < header.size() && detail::trim(header[col]) == "Z") {
    has_z = true;
    ++col;
  }
  if (col != header.size()) {
    throw parse_error("line 1: unrecognized column '" + std::string(detail::trim(header[col])) +
                      "'");
  }
  const std::size_t expected_fields = col;

  Dataset data;
  data.m = m;
  for (std::size_t j = 0; j < m; ++j) {
    data.treatment_labels.emplace_back(detail::trim(header[j]));
  }
  std::size_t line_no = 1;
  int max_w = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    auto fields = detail::split_csv_line(trimmed);
    if (fields.size() != expected_fields) {
      throw parse_error("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(expected_fields) + " fields, got " +
                        std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < m; ++j) {
      data.treatments.push_back(parse_double_field(detail::trim(fields[j]), line_no));
    }
    data.outcome.push_back(parse_double_field(detail::trim(fields[m]), line_no));
    std::size_t f = m + 1;
    if (has_w) {
      const int w = parse_int_field(detail::trim(fields[f]), line_no);
      if (w < 0) {
        throw parse_error("line " + std::to_string(line_no) + ": instrument must be >= 0");
      }
      data.instrument.push_back(w);
      if (w > max_w) max_w = w;
      ++f;
    }
    if (has_z) {
      data.oracle_latent.push_back(parse_double_field(detail::trim(fields[f]), line_no));
    }
  }
  data.n = data.outcome.size();
  if (data.n == 0) throw parse_error("no data rows after header");
  if (has_w) data.instrument_levels = max_w + 1;
  data.validate();
  return data;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open '" + path + "' for reading");
  return read_csv(in);
}

inline std::string to_csv_string(const Dataset& data) {
  std::ostringstream out;
  write_csv(out, data);
  return out.str();
}

inline Dataset from_csv_string(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

}  // namespace multicause
