#pragma once

// Minimal TOML subset, enough for this project's config files: [table] and
// [[array-of-tables]] headers with dotted paths, key = value pairs, strings,
// integers (decimal or 0x hex), floats, booleans, and (possibly nested,
// possibly multi-line) arrays. Comments start with '#'.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "multicause/errors.hpp"

namespace multicause::minitoml {

class Value;
using Array = std::vector<Value>;
using Table = std::map<std::string, Value>;

class Value {
 public:
  Value() : data_(false) {}
  explicit Value(std::string v) : data_(std::move(v)) {}
  explicit Value(std::int64_t v) : data_(v) {}
  explicit Value(double v) : data_(v) {}
  explicit Value(bool v) : data_(v) {}
  explicit Value(Array v) : data_(std::move(v)) {}
  explicit Value(Table v) : data_(std::move(v)) {}

  bool is_string() const { return std::holds_alternative<std::string>(data_); }
  bool is_integer() const { return std::holds_alternative<std::int64_t>(data_); }
  bool is_float() const { return std::holds_alternative<double>(data_); }
  bool is_bool() const { return std::holds_alternative<bool>(data_); }
  bool is_array() const { return std::holds_alternative<Array>(data_); }
  bool is_table() const { return std::holds_alternative<Table>(data_); }

  const std::string& as_string() const { return get<std::string>("string"); }
  std::int64_t as_integer() const { return get<std::int64_t>("integer"); }
  bool as_bool() const { return get<bool>("boolean"); }
  const Array& as_array() const { return get<Array>("array"); }
  const Table& as_table() const { return get<Table>("table"); }
  Array& as_array() { return std::get<Array>(data_); }
  Table& as_table() { return std::get<Table>(data_); }

  double as_double() const {
    if (is_integer()) return static_cast<double>(std::get<std::int64_t>(data_));
    return get<double>("number");
  }

 private:
  template <typename T>
  const T& get(const char* what) const {
    if (!std::holds_alternative<T>(data_)) {
      throw config_error(std::string("config value is not a ") + what);
    }
    return std::get<T>(data_);
  }

  std::variant<std::string, std::int64_t, double, bool, Array, Table> data_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Strips a trailing comment, respecting quoted strings.
inline std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline int bracket_balance(std::string_view s) {
  bool in_string = false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (in_string) continue;
    if (c == '[') ++depth;
    if (c == ']') --depth;
  }
  return depth;
}

struct Parser {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line = 1;

  [[noreturn]] void fail(const std::string& what) const {
    throw parse_error("config line " + std::to_string(line) + ": " + what);
  }

  Value parse_value(std::string_view s) {
    s = trim(s);
    if (s.empty()) fail("missing value");
    if (s.front() == '"') {
      if (s.size() < 2 || s.back() != '"') fail("unterminated string");
      std::string out;
      for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (s[i] == '\\' && i + 2 < s.size()) {
          ++i;
          switch (s[i]) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            default: fail(std::string("unsupported escape \\") + s[i]);
          }
        } else {
          out += s[i];
        }
      }
      return Value(out);
    }
    if (s == "true") return Value(true);
    if (s == "false") return Value(false);
    if (s.front() == '[') {
      if (s.back() != ']') fail("unterminated array");
      Array arr;
      std::string_view body = s.substr(1, s.size() - 2);
      std::size_t start = 0;
      int depth = 0;
      bool in_string = false;
      bool any = false;
      for (std::size_t i = 0; i <= body.size(); ++i) {
        const bool end = i == body.size();
        const char c = end ? ',' : body[i];
        if (!end && c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
        if (in_string) continue;
        if (c == '[') ++depth;
        if (c == ']') --depth;
        if (c == ',' && depth == 0) {
          const auto piece = trim(body.substr(start, i - start));
          if (!piece.empty()) {
            arr.push_back(parse_value(piece));
            any = true;
          } else if (any && !end) {
            fail("empty array element");
          }
          start = i + 1;
        }
      }
      return Value(arr);
    }
    // number: integer unless it contains a float marker
    std::string token(s);
    const bool has_float_marker =
        token.find('.') != std::string::npos || token.find('e') != std::string::npos ||
        token.find('E') != std::string::npos || token == "inf" || token == "-inf" ||
        token == "nan";
    if (!has_float_marker) {
      std::int64_t iv = 0;
      std::string_view digits = s;
      int base = 10;
      bool negative = false;
      if (!digits.empty() && (digits.front() == '+' || digits.front() == '-')) {
        negative = digits.front() == '-';
        digits.remove_prefix(1);
      }
      if (digits.rfind("0x", 0) == 0 || digits.rfind("0X", 0) == 0) {
        base = 16;
        digits.remove_prefix(2);
      }
      const auto [p, ec] =
          std::from_chars(digits.data(), digits.data() + digits.size(), iv, base);
      if (ec == std::errc() && p == digits.data() + digits.size()) {
        return Value(negative ? -iv : iv);
      }
    }
    double dv = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), dv);
    if (ec == std::errc() && p == s.data() + s.size()) return Value(dv);
    fail("cannot parse value '" + token + "'");
  }

  std::vector<std::string> parse_path(std::string_view s) {
    std::vector<std::string> path;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
      if (i == s.size() || s[i] == '.') {
        const auto piece = trim(s.substr(start, i - start));
        if (piece.empty()) fail("empty path segment in table header");
        path.emplace_back(piece);
        start = i + 1;
      }
    }
    return path;
  }

  Table* navigate(Table& root, const std::vector<std::string>& path, bool array_of_tables) {
    Table* current = &root;
    for (std::size_t d = 0; d < path.size(); ++d) {
      const bool last = d + 1 == path.size();
      auto it = current->find(path[d]);
      if (last && array_of_tables) {
        if (it == current->end()) {
          it = current->emplace(path[d], Value(Array{})).first;
        }
        if (!it->second.is_array()) fail("'" + path[d] + "' is not an array of tables");
        it->second.as_array().push_back(Value(Table{}));
        return &it->second.as_array().back().as_table();
      }
      if (it == current->end()) {
        it = current->emplace(path[d], Value(Table{})).first;
      }
      if (it->second.is_array()) {
        auto& arr = it->second.as_array();
        if (arr.empty() || !arr.back().is_table()) {
          fail("'" + path[d] + "' is not a table");
        }
        current = &arr.back().as_table();
      } else if (it->second.is_table()) {
        current = &it->second.as_table();
      } else {
        fail("'" + path[d] + "' is not a table");
      }
    }
    return current;
  }

  Table parse() {
    Table root;
    Table* current = &root;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t physical_line = 0;
    while (std::getline(in, raw)) {
      ++physical_line;
      line = physical_line;
      std::string logical(strip_comment(raw));
      while (bracket_balance(logical) > 0) {
        if (!std::getline(in, raw)) fail("unterminated array at end of file");
        ++physical_line;
        logical += ' ';
        logical += std::string(strip_comment(raw));
      }
      const auto s = trim(logical);
      if (s.empty()) continue;
      if (s.front() == '[') {
        const bool array_header = s.size() > 1 && s[1] == '[';
        const std::size_t open = array_header ? 2 : 1;
        const std::string closer = array_header ? "]]" : "]";
        const std::size_t close = s.rfind(closer);
        if (close == std::string_view::npos || close + closer.size() != s.size()) {
          fail("malformed table header");
        }
        const auto path = parse_path(s.substr(open, close - open));
        current = navigate(root, path, array_header);
        continue;
      }
      const std::size_t eq = s.find('=');
      if (eq == std::string_view::npos) fail("expected 'key = value'");
      const auto key = trim(s.substr(0, eq));
      if (key.empty()) fail("empty key");
      if (current->contains(std::string(key))) {
        fail("duplicate key '" + std::string(key) + "'");
      }
      current->emplace(std::string(key), parse_value(s.substr(eq + 1)));
    }
    return root;
  }
};

}  // namespace detail

inline Table parse_string(std::string_view text) {
  detail::Parser parser{text};
  return parser.parse();
}

inline Table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str());
}

}  // namespace multicause::minitoml
