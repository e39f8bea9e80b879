#include "text_util.hpp"

#include <fstream>
#include <sstream>

namespace pmsm::detail {

std::vector<std::string> split_list_items(std::string_view body, const std::string& what) {
  std::vector<std::string> items;
  int depth = 0;
  bool in_quote = false;
  std::string current;
  for (char c : body) {
    if (in_quote) {
      current.push_back(c);
      if (c == '"') in_quote = false;
      continue;
    }
    switch (c) {
      case '"':
        in_quote = true;
        current.push_back(c);
        break;
      case '[':
        ++depth;
        current.push_back(c);
        break;
      case ']':
        --depth;
        if (depth < 0) throw ParseError("unbalanced ']' in " + what);
        current.push_back(c);
        break;
      case ',':
        if (depth == 0) {
          items.emplace_back(trim(current));
          current.clear();
        } else {
          current.push_back(c);
        }
        break;
      default:
        current.push_back(c);
    }
  }
  if (depth != 0 || in_quote) throw ParseError("unbalanced list in " + what);
  std::string_view last = trim(current);
  if (!last.empty() || !items.empty()) items.emplace_back(last);
  if (items.size() == 1 && items[0].empty()) items.clear();
  return items;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::string_view line : split(text, '\n')) {
    std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value', got '" + std::string(t) + "'");
    out.emplace_back(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
  }
  return out;
}

std::string_view strip_brackets(std::string_view v, const std::string& what) {
  v = trim(v);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ParseError(what + " must be a [...] list");
  return v.substr(1, v.size() - 2);
}

std::string unquote(std::string_view v, const std::string& what) {
  v = trim(v);
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') throw ParseError(what + " must be a quoted string");
  return std::string(v.substr(1, v.size() - 2));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace pmsm::detail
