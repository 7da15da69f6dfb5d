#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psi {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file content. `line` is 1-based, 0 when not applicable.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
  std::size_t line;
};

struct ValidationError : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Calendar month
// ---------------------------------------------------------------------------

class YearMonth {
 public:
  constexpr YearMonth() = default;
  constexpr YearMonth(int year, int month) : year_(year), month_(month) {
    if (month < 1 || month > 12) throw ValidationError("month out of range: " + std::to_string(month));
  }

  static constexpr YearMonth from_index(int index) {
    int y = index >= 0 ? index / 12 : -((-index + 11) / 12);
    return YearMonth(y, index - y * 12 + 1);
  }

  /// Parses "YYYY-MM" (also accepts "YYYY/MM").
  static YearMonth parse(std::string_view s) {
    auto bad = [&] { return ValidationError("invalid month \"" + std::string(s) + "\" (expected YYYY-MM)"); };
    if (s.size() != 7 || (s[4] != '-' && s[4] != '/')) throw bad();
    int y = 0, m = 0;
    auto r1 = std::from_chars(s.data(), s.data() + 4, y);
    auto r2 = std::from_chars(s.data() + 5, s.data() + 7, m);
    if (r1.ec != std::errc{} || r1.ptr != s.data() + 4 || r2.ec != std::errc{} || r2.ptr != s.data() + 7) throw bad();
    if (m < 1 || m > 12) throw bad();
    return YearMonth(y, m);
  }

  constexpr int year() const { return year_; }
  constexpr int month() const { return month_; }
  constexpr int index() const { return year_ * 12 + (month_ - 1); }

  constexpr YearMonth operator+(int months) const { return from_index(index() + months); }
  constexpr YearMonth operator-(int months) const { return from_index(index() - months); }
  constexpr int operator-(YearMonth other) const { return index() - other.index(); }

  constexpr auto operator<=>(const YearMonth&) const = default;

  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year_, month_);
    return buf;
  }

 private:
  int year_ = 1970;
  int month_ = 1;
};

// ---------------------------------------------------------------------------
// Label vocabularies
// ---------------------------------------------------------------------------

enum class Direction { Rise, Stable, Fall, NotRelated };
enum class Relevance { PriceRelated, NotPriceRelated };

inline constexpr Direction kAllDirections[] = {Direction::Rise, Direction::Stable, Direction::Fall,
                                               Direction::NotRelated};

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::Rise: return "rise";
    case Direction::Stable: return "stable";
    case Direction::Fall: return "fall";
    case Direction::NotRelated: return "not_related";
  }
  return "?";
}

inline std::string to_string(Relevance r) { return r == Relevance::PriceRelated ? "yes" : "no"; }

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
  auto ws = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

/// Decodes one code point at `i`, advancing it. Invalid bytes decode as themselves.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  auto b0 = static_cast<unsigned char>(s[i]);
  int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 1;
  if (i + len > s.size()) len = 1;
  char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (int k = 1; k < len; ++k) {
    auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

}  // namespace detail

/// Folds full-width ASCII variants (U+FF01..U+FF5E) and the ideographic space
/// to their ASCII counterparts. Everything else passes through unchanged.
inline std::string fold_width(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    char32_t cp = detail::next_code_point(s, i);
    if (cp >= 0xFF01 && cp <= 0xFF5E) cp -= 0xFEE0;
    else if (cp == 0x3000) cp = U' ';
    detail::append_utf8(out, cp);
  }
  return out;
}

inline bool valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    auto b0 = static_cast<unsigned char>(s[i]);
    int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) return false;
    for (int k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    i += len;
  }
  return true;
}

}  // namespace psi
