#pragma once

// Internal text helpers shared by the file-format code. Doubles are written
// with std::to_chars (shortest form that parses back to the same value) so
// generated files round-trip exactly.

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "panelmsm/errors.hpp"

namespace pmsm::detail {

inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ParseError("invalid number '" + std::string(s) + "' in " + what);
  return v;
}

inline long parse_long(std::string_view s, const std::string& what) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("invalid integer '" + std::string(s) + "' in " + what);
  return v;
}

inline std::string_view trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (true) {
    size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

// Splits the top level of a bracketed list "a, [b,c], "d,e"" on commas,
// respecting nested brackets and quoted strings.
std::vector<std::string> split_list_items(std::string_view body, const std::string& what);

// Non-empty, non-comment "key = value" lines in file order.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

std::string_view strip_brackets(std::string_view v, const std::string& what);
std::string unquote(std::string_view v, const std::string& what);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pmsm::detail
