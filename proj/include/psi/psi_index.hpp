#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psi/common.hpp"
#include "psi/corpus.hpp"
#include "psi/ensemble.hpp"
#include "psi/io.hpp"

namespace psi {

struct MonthlyCounts {
  YearMonth month;
  long long rise = 0;
  long long stable = 0;
  long long fall = 0;
  long long not_related = 0;

  long long total() const { return rise + stable + fall + not_related; }
  long long directional() const { return rise + stable + fall; }
  void add(Direction d) {
    switch (d) {
      case Direction::Rise: ++rise; break;
      case Direction::Stable: ++stable; break;
      case Direction::Fall: ++fall; break;
      case Direction::NotRelated: ++not_related; break;
    }
  }
  bool operator==(const MonthlyCounts&) const = default;
};

struct EmptyDenominator : Error {
  explicit EmptyDenominator(YearMonth m) : Error("no rise/stable/fall comments in " + m.str()) {}
};

/// PSI = (Rise - Fall) / (Rise + Fall + Stable). NotRelated is excluded.
inline double compute_psi(const MonthlyCounts& c) {
  if (c.rise < 0 || c.stable < 0 || c.fall < 0 || c.not_related < 0) throw PreconditionError("negative count");
  const long long denom = c.rise + c.fall + c.stable;
  if (denom == 0) throw EmptyDenominator(c.month);
  return static_cast<double>(c.rise - c.fall) / static_cast<double>(denom);
}

/// A decision joined with the comment it was made for.
struct DatedDecision {
  SurveyComment comment;
  Direction label = Direction::NotRelated;
};

/// One entry per month present in the input, month-sorted.
inline std::vector<MonthlyCounts> aggregate_monthly(const std::vector<DatedDecision>& decisions) {
  std::map<YearMonth, MonthlyCounts> by_month;
  for (const auto& d : decisions) {
    auto [it, inserted] = by_month.try_emplace(d.comment.month);
    if (inserted) it->second.month = d.comment.month;
    it->second.add(d.label);
  }
  std::vector<MonthlyCounts> out;
  out.reserve(by_month.size());
  for (auto& [_, c] : by_month) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

enum class PsiVariant { General, ConsumerGeneral, ConsumerGoods, ConsumerServices, CorporateGoods, CorporateServices };

inline constexpr PsiVariant kAllVariants[] = {PsiVariant::General,          PsiVariant::ConsumerGeneral,
                                              PsiVariant::ConsumerGoods,    PsiVariant::ConsumerServices,
                                              PsiVariant::CorporateGoods,   PsiVariant::CorporateServices};

struct PsiVariantSpec {
  PsiVariant name = PsiVariant::General;
  std::optional<Domain> domain;
  std::optional<IndustryClass> industry;
  std::optional<std::string> target_index_name;

  SegmentFilter filter() const { return SegmentFilter{domain, industry}; }
};

inline PsiVariantSpec variant_spec(PsiVariant v) {
  using D = Domain;
  using I = IndustryClass;
  switch (v) {
    case PsiVariant::General: return {v, std::nullopt, std::nullopt, std::nullopt};
    case PsiVariant::ConsumerGeneral: return {v, D::Household, std::nullopt, "Core Core CPI"};
    case PsiVariant::ConsumerGoods: return {v, D::Household, I::Manufacturing, "CPI (Goods)"};
    case PsiVariant::ConsumerServices: return {v, D::Household, I::NonManufacturing, "CPI (Services)"};
    case PsiVariant::CorporateGoods: return {v, D::Corporate, I::Manufacturing, "CGPI"};
    case PsiVariant::CorporateServices: return {v, D::Corporate, I::NonManufacturing, "SPPI"};
  }
  throw PreconditionError("unknown variant");
}

inline std::string to_string(PsiVariant v) {
  switch (v) {
    case PsiVariant::General: return "general";
    case PsiVariant::ConsumerGeneral: return "consumer_general";
    case PsiVariant::ConsumerGoods: return "consumer_goods";
    case PsiVariant::ConsumerServices: return "consumer_services";
    case PsiVariant::CorporateGoods: return "corporate_goods";
    case PsiVariant::CorporateServices: return "corporate_services";
  }
  return "?";
}

inline PsiVariant parse_variant(std::string_view s) {
  auto k = to_lower_ascii(trim(s));
  for (PsiVariant v : kAllVariants)
    if (to_string(v) == k) return v;
  throw ConfigError("unknown PSI variant \"" + std::string(s) + "\"");
}

struct PsiPoint {
  YearMonth month;
  std::optional<double> psi;  // empty when the month has no directional comments
  MonthlyCounts counts;
};

struct PsiSeries {
  PsiVariantSpec variant;
  std::vector<PsiPoint> points;
};

inline PsiSeries build_index(const std::vector<DatedDecision>& decisions, const PsiVariantSpec& variant,
                             const IndustryMapping* mapping = nullptr) {
  if (variant.industry && !mapping) throw ConfigError("variant " + to_string(variant.name) + " needs an industry mapping");
  // Run the segment filter over the comments and keep their decisions alongside.
  std::vector<SurveyComment> comments;
  comments.reserve(decisions.size());
  for (const auto& d : decisions) comments.push_back(d.comment);
  auto kept = filter_by_segment(comments, variant.filter(), mapping);

  std::vector<DatedDecision> selected;
  selected.reserve(kept.size());
  std::size_t k = 0;
  for (const auto& d : decisions) {
    if (k < kept.size() && kept[k].id == d.comment.id) {
      selected.push_back(d);
      ++k;
    }
  }

  PsiSeries s{variant, {}};
  for (const auto& c : aggregate_monthly(selected)) {
    PsiPoint p{c.month, std::nullopt, c};
    if (c.directional() > 0) p.psi = compute_psi(c);
    s.points.push_back(p);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string psi_csv_header() { return "month,variant,psi,rise,stable,fall,not_related\n"; }

inline std::string psi_csv_rows(const PsiSeries& s) {
  std::string out;
  for (const auto& p : s.points) {
    out += csv_row({p.month.str(), to_string(s.variant.name), p.psi ? format_double(*p.psi) : std::string(),
                    std::to_string(p.counts.rise), std::to_string(p.counts.stable), std::to_string(p.counts.fall),
                    std::to_string(p.counts.not_related)});
  }
  return out;
}

/// Long format `series,month,value` for charting; null months are omitted.
inline std::string plot_data_rows(const PsiSeries& s) {
  std::string out;
  for (const auto& p : s.points)
    if (p.psi) out += csv_row({to_string(s.variant.name), p.month.str(), format_double(*p.psi)});
  return out;
}

}  // namespace psi
