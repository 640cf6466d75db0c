#pragma once

// Small text utilities: trimming, UTF-8 case folding for the scripts we
// handle (Latin, Latin-1, Cyrillic), delimited-table reading and writing,
// and shortest round-trip number formatting.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "caa/error.hpp"

namespace caa::text {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline char32_t fold_codepoint(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  // Latin-1 capitals, skipping the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  // Cyrillic: Ѐ-Џ -> ѐ-џ, А-Я -> а-я.
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  return cp;
}

}  // namespace detail

/// Lowercases ASCII, Latin-1 and basic Cyrillic letters; other code points
/// and invalid bytes pass through unchanged.
inline std::string fold_case(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (c < 0x80) {
      cp = c, len = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F, len = 2;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F, len = 3;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07, len = 4;
    }
    bool valid = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) valid = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!valid) {
      out += s[i++];
      continue;
    }
    detail::append_utf8(out, detail::fold_codepoint(cp));
    i += len;
  }
  return out;
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error("not a number: '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error("not an integer: '" + std::string(s) + "'");
  return v;
}

inline bool parse_flag(std::string_view s) {
  auto v = fold_case(trim(s));
  if (v == "1" || v == "true" || v == "yes" || v == "y" || v == "accepted") return true;
  if (v == "0" || v == "false" || v == "no" || v == "n" || v == "rejected") return false;
  throw Error("not a boolean flag: '" + std::string(s) + "'");
}

/// A delimited table with a header row. Rows keep the 1-based line number
/// they started on so errors can point back into the file.
struct Table {
  std::vector<std::string> header;
  struct Row {
    std::size_t line = 0;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;

  std::size_t column(std::string_view name, const std::string& source = "<table>") const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError(source, 1, "missing column '" + std::string(name) + "'");
  }
};

/// Reads a delimited table. Fields may be double-quoted (RFC 4180 style,
/// `""` escapes a quote); quoted fields may contain the delimiter and
/// newlines. Blank lines are skipped.
inline Table read_table(std::istream& in, char delim, const std::string& source = "<table>") {
  Table table;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0) content.erase(0, 3);

  std::size_t line = 1;
  std::size_t i = 0;
  bool have_header = false;
  while (i < content.size()) {
    std::size_t row_line = line;
    std::vector<std::string> cells;
    std::string cell;
    bool in_quotes = false;
    bool quoted = false;
    bool row_done = false;
    while (i < content.size() && !row_done) {
      char c = content[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < content.size() && content[i + 1] == '"') {
            cell += '"';
            ++i;
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line;
          cell += c;
        }
        ++i;
        continue;
      }
      if (c == '"' && cell.empty() && !quoted) {
        in_quotes = quoted = true;
      } else if (c == delim) {
        cells.push_back(std::move(cell));
        cell.clear();
        quoted = false;
      } else if (c == '\n') {
        ++line;
        row_done = true;
      } else if (c != '\r') {
        cell += c;
      }
      ++i;
    }
    if (in_quotes) throw ParseError(source, row_line, "unterminated quoted field");
    cells.push_back(std::move(cell));
    if (cells.size() == 1 && trim(cells[0]).empty()) continue;
    if (!have_header) {
      for (auto& h : cells) h = std::string(trim(h));
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError(source, row_line,
                       "expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(cells.size()));
    table.rows.push_back({row_line, std::move(cells)});
  }
  return table;
}

inline Table read_table_file(const std::string& path, char delim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_table(in, delim, path);
}

/// Quotes a field when it contains the delimiter, a quote, or a newline.
inline std::string escape_field(std::string_view field, char delim = ',') {
  if (field.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells, char delim = ',') {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << delim;
    out << escape_field(cells[i], delim);
  }
  out << '\n';
}

}  // namespace caa::text
