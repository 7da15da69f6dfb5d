#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "psi/common.hpp"
#include "psi/io.hpp"

namespace psi {

enum class Domain { Household, Corporate };
enum class SurveyKind { Current, Future };
enum class IndustryClass { Manufacturing, NonManufacturing, Unmapped };

inline std::string to_string(Domain d) { return d == Domain::Household ? "household" : "corporate"; }
inline std::string to_string(SurveyKind k) { return k == SurveyKind::Current ? "current" : "future"; }
inline std::string to_string(IndustryClass c) {
  switch (c) {
    case IndustryClass::Manufacturing: return "manufacturing";
    case IndustryClass::NonManufacturing: return "non_manufacturing";
    case IndustryClass::Unmapped: return "unmapped";
  }
  return "?";
}

struct SurveyComment {
  std::string id;
  YearMonth month;
  Domain domain = Domain::Household;
  std::string industry_raw;
  std::string text;
  SurveyKind survey_kind = SurveyKind::Current;

  bool operator==(const SurveyComment&) const = default;
};

struct LabeledComment {
  SurveyComment comment;
  std::optional<Relevance> relevance;
  std::optional<Direction> direction;
};

// ---------------------------------------------------------------------------
// Alias tables
// ---------------------------------------------------------------------------

/// Free-text spellings of the domain and survey-kind fields. Keys are matched
/// after trimming, width folding and ASCII lower-casing.
class AliasTable {
 public:
  static AliasTable defaults() {
    AliasTable t;
    for (auto k : {"household", "household trends", "household_trends", "家計動向", "家計動向関連"})
      t.domains_[key(k)] = Domain::Household;
    for (auto k : {"corporate", "corporate trends", "corporate_trends", "企業動向", "企業動向関連"})
      t.domains_[key(k)] = Domain::Corporate;
    for (auto k : {"current", "current conditions", "現状", "現状判断"}) t.kinds_[key(k)] = SurveyKind::Current;
    for (auto k : {"future", "future outlook", "先行き", "先行き判断"}) t.kinds_[key(k)] = SurveyKind::Future;
    return t;
  }

  /// Loads `{"domain": {alias: "household"|"corporate"}, "kind": {alias: "current"|"future"}}`
  /// on top of the defaults.
  static AliasTable load(const fs::path& path) {
    AliasTable t = defaults();
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    const json domains = j.value("domain", json::object()), kinds = j.value("kind", json::object());
    for (const auto& [alias, target] : domains.items()) t.domains_[key(alias)] = t.domain(target.get<std::string>());
    for (const auto& [alias, target] : kinds.items()) t.kinds_[key(alias)] = t.kind(target.get<std::string>());
    return t;
  }

  Domain domain(std::string_view raw) const {
    if (auto it = domains_.find(key(raw)); it != domains_.end()) return it->second;
    throw ValidationError("invalid domain \"" + std::string(raw) + "\"");
  }

  SurveyKind kind(std::string_view raw) const {
    if (auto it = kinds_.find(key(raw)); it != kinds_.end()) return it->second;
    throw ValidationError("invalid survey kind \"" + std::string(raw) + "\"");
  }

 private:
  static std::string key(std::string_view s) { return to_lower_ascii(trim(fold_width(s))); }

  std::map<std::string, Domain> domains_;
  std::map<std::string, SurveyKind> kinds_;
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

enum class CommentFormat { Csv, Jsonl };

inline CommentFormat parse_comment_format(std::string_view s) {
  auto k = to_lower_ascii(s);
  if (k == "csv") return CommentFormat::Csv;
  if (k == "jsonl") return CommentFormat::Jsonl;
  throw ConfigError("unknown comment format \"" + std::string(s) + "\"");
}

inline CommentFormat infer_comment_format(const fs::path& path) {
  return to_lower_ascii(path.extension().string()) == ".csv" ? CommentFormat::Csv : CommentFormat::Jsonl;
}

struct LoadOptions {
  AliasTable aliases = AliasTable::defaults();
  /// Records before `window_start` or after `window_end` are dropped.
  std::optional<YearMonth> window_start = YearMonth(2001, 1);
  std::optional<YearMonth> window_end;
};

struct LoadStats {
  std::size_t read = 0;
  std::size_t dropped_out_of_window = 0;
};

namespace detail {

inline SurveyComment make_comment(const std::map<std::string, std::string>& fields, const AliasTable& aliases,
                                  std::size_t line) {
  auto get = [&](const char* name) -> const std::string& {
    auto it = fields.find(name);
    if (it == fields.end()) throw ParseError(std::string("missing field \"") + name + "\"", line);
    return it->second;
  };
  try {
    SurveyComment c;
    c.id = std::string(trim(get("id")));
    if (c.id.empty()) throw ValidationError("empty id");
    c.month = YearMonth::parse(trim(get("month")));
    c.domain = aliases.domain(get("domain"));
    c.industry_raw = get("industry");
    c.text = get("text");
    c.survey_kind = aliases.kind(get("kind"));
    if (trim(c.text).empty()) throw ValidationError("empty text");
    if (!valid_utf8(c.text) || !valid_utf8(c.industry_raw)) throw ValidationError("text is not valid UTF-8");
    return c;
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), line);
  }
}

inline std::string json_field_as_string(const json& v, const char* name, std::size_t line) {
  if (v.is_string()) return v.get<std::string>();
  throw ParseError(std::string("field \"") + name + "\" must be a string", line);
}

}  // namespace detail

/// Reads comment records in file order. Every record is validated; an invalid
/// record aborts the load with a line-numbered `ParseError`.
inline std::vector<SurveyComment> load_comments(const fs::path& path, CommentFormat format,
                                                const LoadOptions& opts = {}, LoadStats* stats = nullptr) {
  static constexpr const char* kFields[] = {"id", "month", "domain", "industry", "text", "kind"};
  std::vector<SurveyComment> out;
  std::set<std::string> seen;
  LoadStats local;

  auto accept = [&](SurveyComment c, std::size_t line) {
    ++local.read;
    if (!seen.insert(c.id).second) throw ParseError("duplicate id \"" + c.id + "\"", line);
    if ((opts.window_start && c.month < *opts.window_start) || (opts.window_end && c.month > *opts.window_end)) {
      ++local.dropped_out_of_window;
      return;
    }
    out.push_back(std::move(c));
  };

  if (format == CommentFormat::Jsonl) {
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
      std::map<std::string, std::string> fields;
      for (const char* f : kFields)
        if (obj.contains(f)) fields[f] = detail::json_field_as_string(obj[f], f, line);
      accept(detail::make_comment(fields, opts.aliases, line), line);
    });
  } else {
    auto table = read_csv(path);
    for (const char* f : kFields)
      if (table.column(f) == CsvTable::npos) throw ParseError(std::string("missing column \"") + f + "\"", 1);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      std::map<std::string, std::string> fields;
      for (const char* f : kFields) fields[f] = table.rows[r][table.column(f)];
      accept(detail::make_comment(fields, opts.aliases, table.row_lines[r]), table.row_lines[r]);
    }
  }
  if (stats) *stats = local;
  return out;
}

inline json comment_to_json(const SurveyComment& c) {
  return json{{"id", c.id},           {"month", c.month.str()}, {"domain", to_string(c.domain)},
              {"industry", c.industry_raw}, {"text", c.text},   {"kind", to_string(c.survey_kind)}};
}

inline std::string serialize_comments(const std::vector<SurveyComment>& comments, CommentFormat format) {
  if (format == CommentFormat::Jsonl) {
    std::vector<json> rows;
    for (const auto& c : comments) rows.push_back(comment_to_json(c));
    return to_jsonl(rows);
  }
  std::string out = csv_row({"id", "month", "domain", "industry", "text", "kind"});
  for (const auto& c : comments)
    out += csv_row({c.id, c.month.str(), to_string(c.domain), c.industry_raw, c.text, to_string(c.survey_kind)});
  return out;
}

inline void write_comments(const fs::path& path, const std::vector<SurveyComment>& comments, CommentFormat format) {
  write_file_atomic(path, serialize_comments(comments, format));
}

// ---------------------------------------------------------------------------
// Industry normalization
// ---------------------------------------------------------------------------

struct UnknownIndustry : ValidationError {
  explicit UnknownIndustry(const std::string& key)
      : ValidationError("unknown industry \"" + key + "\""), key(key) {}
  std::string key;
};

/// Removes every parenthesized span, ASCII `()` or full-width `（）`, innermost
/// first until none remain, then trims.
inline std::string strip_parentheses(std::string_view raw) {
  static constexpr std::string_view kOpenFw = "\xEF\xBC\x88";   // （
  static constexpr std::string_view kCloseFw = "\xEF\xBC\x89";  // ）
  std::string s(raw);
  for (;;) {
    // Find the first closing bracket, then the nearest opening bracket before it.
    std::size_t close = std::string::npos, close_len = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == ')') {
        close = i, close_len = 1;
        break;
      }
      if (s.compare(i, kCloseFw.size(), kCloseFw) == 0) {
        close = i, close_len = kCloseFw.size();
        break;
      }
    }
    if (close == std::string::npos) break;
    std::size_t open = std::string::npos;
    for (std::size_t i = close; i-- > 0;) {
      if (s[i] == '(') {
        open = i;
        break;
      }
      if (i + kOpenFw.size() <= close && s.compare(i, kOpenFw.size(), kOpenFw) == 0) {
        open = i;
        break;
      }
    }
    if (open == std::string::npos) break;  // unbalanced: leave the rest as-is
    s.erase(open, close + close_len - open);
  }
  return std::string(trim(s));
}

class IndustryMapping {
 public:
  IndustryMapping() = default;
  IndustryMapping(std::map<std::string, IndustryClass> table, bool strict) : table_(std::move(table)), strict_(strict) {}

  /// Two-column CSV `industry,class`, class in {manufacturing, non_manufacturing}.
  static IndustryMapping load(const fs::path& path, bool strict = false) {
    auto csv = read_csv(path);
    auto ci = csv.column("industry"), cc = csv.column("class");
    if (ci == CsvTable::npos || cc == CsvTable::npos)
      throw ParseError(path.filename().string() + ": header must be industry,class", 1);
    std::map<std::string, IndustryClass> table;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      auto cls = to_lower_ascii(trim(csv.rows[r][cc]));
      IndustryClass v;
      if (cls == "manufacturing") v = IndustryClass::Manufacturing;
      else if (cls == "non_manufacturing") v = IndustryClass::NonManufacturing;
      else throw ParseError("invalid industry class \"" + cls + "\"", csv.row_lines[r]);
      auto k = strip_parentheses(csv.rows[r][ci]);
      if (!table.emplace(k, v).second) throw ParseError("duplicate industry \"" + k + "\"", csv.row_lines[r]);
    }
    return IndustryMapping(std::move(table), strict);
  }

  bool strict() const { return strict_; }
  void set_strict(bool s) { strict_ = s; }
  std::size_t size() const { return table_.size(); }

  std::optional<IndustryClass> find(const std::string& key) const {
    if (auto it = table_.find(key); it != table_.end()) return it->second;
    return std::nullopt;
  }

 private:
  std::map<std::string, IndustryClass> table_;
  bool strict_ = false;
};

inline IndustryClass normalize_industry(std::string_view industry_raw, const IndustryMapping& mapping) {
  auto key = strip_parentheses(industry_raw);
  if (auto cls = mapping.find(key)) return *cls;
  if (mapping.strict()) throw UnknownIndustry(key);
  return IndustryClass::Unmapped;
}

// ---------------------------------------------------------------------------
// Train/dev/test split
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train_ratio = 0.7;
  double dev_ratio = 0.1;
  double test_ratio = 0.2;
  std::uint64_t seed = 42;

  void validate() const {
    for (double r : {train_ratio, dev_ratio, test_ratio})
      if (!(r > 0.0 && r < 1.0)) throw PreconditionError("split ratios must lie in (0,1)");
    if (std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9)
      throw PreconditionError("split ratios must sum to 1");
  }
};

template <typename T>
struct Split {
  std::vector<T> train, dev, test;
};

namespace detail {

// Fisher-Yates with a fixed bounded-integer rule so results do not depend on
// the standard library's distribution implementation.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    std::swap(idx[i - 1], idx[r % bound]);
  }
  return idx;
}

}  // namespace detail

/// Unstratified seeded split. Dev and test receive floor(n * ratio) items and
/// train takes the remainder. Each part keeps the input's relative order.
template <typename T>
Split<T> split_dataset(const std::vector<T>& data, const SplitSpec& spec) {
  spec.validate();
  if (data.size() < 3) throw PreconditionError("split_dataset needs at least 3 items");
  const auto n = data.size();
  const auto n_dev = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.dev_ratio + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test_ratio + 1e-9));

  auto perm = detail::seeded_permutation(n, spec.seed);
  std::vector<int> part(n, 0);
  for (std::size_t i = 0; i < n_dev; ++i) part[perm[i]] = 1;
  for (std::size_t i = n_dev; i < n_dev + n_test; ++i) part[perm[i]] = 2;

  Split<T> out;
  for (std::size_t i = 0; i < n; ++i) {
    (part[i] == 0 ? out.train : part[i] == 1 ? out.dev : out.test).push_back(data[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segment filter
// ---------------------------------------------------------------------------

struct SegmentFilter {
  std::optional<Domain> domain;
  std::optional<IndustryClass> industry;
};

/// Keeps comments matching every given criterion. With an industry criterion
/// active, comments whose industry is Unmapped never match.
inline std::vector<SurveyComment> filter_by_segment(const std::vector<SurveyComment>& comments,
                                                    const SegmentFilter& filter,
                                                    const IndustryMapping* mapping = nullptr) {
  if (filter.industry && !mapping) throw ConfigError("industry filter requires an industry mapping");
  std::vector<SurveyComment> out;
  for (const auto& c : comments) {
    if (filter.domain && c.domain != *filter.domain) continue;
    if (filter.industry) {
      auto cls = normalize_industry(c.industry_raw, *mapping);
      if (cls == IndustryClass::Unmapped || cls != *filter.industry) continue;
    }
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gold labels
// ---------------------------------------------------------------------------

inline Direction parse_direction(std::string_view s) {
  auto k = to_lower_ascii(trim(s));
  if (k == "rise") return Direction::Rise;
  if (k == "stable") return Direction::Stable;
  if (k == "fall") return Direction::Fall;
  if (k == "not_related" || k == "not related" || k == "notrelated") return Direction::NotRelated;
  throw ValidationError("invalid direction label \"" + std::string(s) + "\"");
}

inline Relevance parse_relevance(std::string_view s) {
  auto k = to_lower_ascii(trim(s));
  if (k == "yes" || k == "price_related" || k == "true" || k == "1") return Relevance::PriceRelated;
  if (k == "no" || k == "not_price_related" || k == "false" || k == "0") return Relevance::NotPriceRelated;
  throw ValidationError("invalid relevance label \"" + std::string(s) + "\"");
}

/// Joins a JSONL label file `{id, relevance?, direction?}` onto `comments`.
/// Ids absent from `comments` are an error.
inline std::vector<LabeledComment> load_labels(const fs::path& path, const std::vector<SurveyComment>& comments) {
  std::map<std::string, const SurveyComment*> by_id;
  for (const auto& c : comments) by_id[c.id] = &c;
  std::vector<LabeledComment> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    try {
      auto id = obj.at("id").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("label for unknown comment id \"" + id + "\"");
      LabeledComment lc{*it->second, std::nullopt, std::nullopt};
      if (obj.contains("relevance") && !obj["relevance"].is_null()) {
        const auto& r = obj["relevance"];
        lc.relevance = r.is_boolean() ? (r.get<bool>() ? Relevance::PriceRelated : Relevance::NotPriceRelated)
                                      : parse_relevance(r.get<std::string>());
      }
      if (obj.contains("direction") && !obj["direction"].is_null())
        lc.direction = parse_direction(obj["direction"].get<std::string>());
      if (!lc.relevance && !lc.direction) throw ValidationError("label record carries neither relevance nor direction");
      out.push_back(std::move(lc));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line);
    }
  });
  return out;
}

}  // namespace psi
