#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "psi/corpus.hpp"
#include "test_util.hpp"

using namespace psi;
using psi::testutil::TempDir;

namespace {

const char* kThree =
    "{\"id\":\"a\",\"month\":\"2005-01\",\"domain\":\"household\",\"industry\":\"Supermarket\",\"text\":\"one\",\"kind\":\"current\"}\n"
    "{\"id\":\"b\",\"month\":\"2005-02\",\"domain\":\"corporate\",\"industry\":\"Chemicals\",\"text\":\"two\",\"kind\":\"future\"}\n"
    "{\"id\":\"c\",\"month\":\"2004-12\",\"domain\":\"household trends\",\"industry\":\"Taxi\",\"text\":\"three\",\"kind\":\"current\"}\n";

SurveyComment comment(std::string id, YearMonth m, Domain d, std::string industry, std::string text = "t") {
  return SurveyComment{std::move(id), m, d, std::move(industry), std::move(text), SurveyKind::Current};
}

std::string record(const std::string& id, const std::string& month, const std::string& domain, const std::string& text,
                   const std::string& kind = "current") {
  return json{{"id", id}, {"month", month}, {"domain", domain}, {"industry", "x"}, {"text", text}, {"kind", kind}}.dump() + "\n";
}

}  // namespace

TEST(LoadComments, JsonlInFileOrder) {
  TempDir dir;
  auto p = dir.write("c.jsonl", kThree);
  auto cs = load_comments(p, CommentFormat::Jsonl);
  ASSERT_EQ(cs.size(), 3u);
  EXPECT_EQ(cs[0].id, "a");
  EXPECT_EQ(cs[1].id, "b");
  EXPECT_EQ(cs[2].id, "c");
  EXPECT_EQ(cs[1].survey_kind, SurveyKind::Future);
}

TEST(LoadComments, DomainAlias) {
  TempDir dir;
  auto cs = load_comments(dir.write("c.jsonl", kThree), CommentFormat::Jsonl);
  EXPECT_EQ(cs[2].domain, Domain::Household);
  auto jp = load_comments(dir.write("j.jsonl", record("j", "2005-01", "家計動向", "x", "現状")), CommentFormat::Jsonl);
  EXPECT_EQ(jp[0].domain, Domain::Household);
  EXPECT_EQ(jp[0].survey_kind, SurveyKind::Current);
}

TEST(LoadComments, AliasFileExtendsDefaults) {
  TempDir dir;
  auto aliases = dir.write("a.json", R"({"domain": {"hh": "household"}, "kind": {"now": "current"}})");
  LoadOptions opts;
  opts.aliases = AliasTable::load(aliases);
  auto cs = load_comments(dir.write("c.jsonl", record("x", "2005-01", "HH", "t", "now")), CommentFormat::Jsonl, opts);
  EXPECT_EQ(cs[0].domain, Domain::Household);
}

TEST(LoadComments, EmptyTextRejectedWithLine) {
  TempDir dir;
  auto p = dir.write("c.jsonl", record("a", "2005-01", "household", "ok") + record("b", "2005-01", "household", "   "));
  try {
    load_comments(p, CommentFormat::Jsonl);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 2u);
  }
}

TEST(LoadComments, MissingFieldAndBadEnum) {
  TempDir dir;
  EXPECT_THROW(load_comments(dir.write("m.jsonl", "{\"id\":\"a\",\"month\":\"2005-01\"}\n"), CommentFormat::Jsonl),
               ParseError);
  EXPECT_THROW(load_comments(dir.write("e.jsonl", record("a", "2005-01", "government", "t")), CommentFormat::Jsonl),
               ParseError);
  EXPECT_THROW(load_comments(dir.write("k.jsonl", record("a", "2005-01", "household", "t", "past")), CommentFormat::Jsonl),
               ParseError);
}

TEST(LoadComments, DuplicateIdRejected) {
  TempDir dir;
  auto p = dir.write("d.jsonl", record("a", "2005-01", "household", "t") + record("a", "2005-02", "household", "u"));
  EXPECT_THROW(load_comments(p, CommentFormat::Jsonl), ParseError);
}

TEST(LoadComments, WindowDropsOldRecords) {
  TempDir dir;
  auto p = dir.write("w.jsonl", record("old", "2000-12", "household", "t") + record("new", "2001-01", "household", "u"));
  LoadStats stats;
  auto cs = load_comments(p, CommentFormat::Jsonl, {}, &stats);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs[0].id, "new");
  EXPECT_EQ(stats.dropped_out_of_window, 1u);
  LoadOptions all;
  all.window_start.reset();
  EXPECT_EQ(load_comments(p, CommentFormat::Jsonl, all).size(), 2u);
}

TEST(LoadComments, CsvAndJsonlRoundTrip) {
  TempDir dir;
  std::vector<SurveyComment> cs{
      comment("1", YearMonth(2003, 5), Domain::Corporate, "Retail (convenience store)", "Prices, \"quoted\"\nup"),
      comment("2", YearMonth(2010, 11), Domain::Household, "飲食店（居酒屋）", "値段が上がった"),
  };
  cs[1].survey_kind = SurveyKind::Future;
  for (auto fmt : {CommentFormat::Csv, CommentFormat::Jsonl}) {
    auto p = dir / (fmt == CommentFormat::Csv ? "rt.csv" : "rt.jsonl");
    write_comments(p, cs, fmt);
    EXPECT_EQ(load_comments(p, fmt), cs);
    EXPECT_EQ(infer_comment_format(p), fmt);
  }
}

TEST(NormalizeIndustry, StripsParenthesesThenLooksUp) {
  IndustryMapping m({{"Retail", IndustryClass::NonManufacturing}, {"Chemicals", IndustryClass::Manufacturing}}, false);
  EXPECT_EQ(normalize_industry("Retail (convenience store)", m), IndustryClass::NonManufacturing);
  EXPECT_EQ(normalize_industry("Chemicals", m), IndustryClass::Manufacturing);
  EXPECT_EQ(normalize_industry("Unknown sector", m), IndustryClass::Unmapped);
  m.set_strict(true);
  EXPECT_THROW(normalize_industry("Unknown sector", m), UnknownIndustry);
}

TEST(NormalizeIndustry, StripParenthesesVariants) {
  EXPECT_EQ(strip_parentheses("Retail (convenience store)"), "Retail");
  EXPECT_EQ(strip_parentheses("小売業（コンビニ）"), "小売業");
  EXPECT_EQ(strip_parentheses("a (b (c) d) e"), "a  e");
  EXPECT_EQ(strip_parentheses("x（y (z)）"), "x");
  EXPECT_EQ(strip_parentheses("(all)"), "");
  EXPECT_EQ(strip_parentheses("unbalanced ("), "unbalanced (");
}

TEST(NormalizeIndustry, Idempotent) {
  IndustryMapping m({{"Retail", IndustryClass::NonManufacturing}}, false);
  for (std::string raw : {"Retail (a)", "Retail", "Other（x）", "  Retail  "}) {
    auto once = strip_parentheses(raw);
    EXPECT_EQ(strip_parentheses(once), once);
    EXPECT_EQ(normalize_industry(once, m), normalize_industry(raw, m));
  }
}

TEST(IndustryMappingFile, LoadsAndValidates) {
  TempDir dir;
  auto m = IndustryMapping::load(dir.write("m.csv", "industry,class\nRetail (misc),non_manufacturing\nChemicals,manufacturing\n"));
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.find("Retail"), IndustryClass::NonManufacturing);
  EXPECT_THROW(IndustryMapping::load(dir.write("b.csv", "industry,class\nX,services\n")), ParseError);
  EXPECT_THROW(IndustryMapping::load(dir.write("d.csv", "industry,class\nX,manufacturing\nX (y),manufacturing\n")),
               ParseError);
}

TEST(SplitDataset, PaperProportions) {
  std::vector<int> data(1000);
  std::iota(data.begin(), data.end(), 0);
  auto s = split_dataset(data, SplitSpec{0.7, 0.1, 0.2, 42});
  EXPECT_EQ(s.train.size(), 700u);
  EXPECT_EQ(s.dev.size(), 100u);
  EXPECT_EQ(s.test.size(), 200u);
}

TEST(SplitDataset, FloorAllocationRemainderToTrain) {
  std::vector<int> ten(10);
  auto s = split_dataset(ten, SplitSpec{0.7, 0.1, 0.2, 1});
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.dev.size(), 1u);
  EXPECT_EQ(s.test.size(), 2u);
  std::vector<int> seven(7);
  auto t = split_dataset(seven, SplitSpec{0.7, 0.1, 0.2, 1});
  EXPECT_EQ(t.dev.size(), 0u);   // floor(0.7)
  EXPECT_EQ(t.test.size(), 1u);  // floor(1.4)
  EXPECT_EQ(t.train.size(), 6u);
}

TEST(SplitDataset, PartitionPropertyAcrossSeeds) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 200;
    std::vector<std::size_t> data(n);
    std::iota(data.begin(), data.end(), 0);
    SplitSpec spec{0.7, 0.1, 0.2, rng()};
    auto s = split_dataset(data, spec);
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
      EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));  // input order preserved
      all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, data);  // disjoint and complete
    auto again = split_dataset(data, spec);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.test, s.test);
  }
}

TEST(SplitDataset, SeedChangesAssignment) {
  std::vector<int> data(100);
  std::iota(data.begin(), data.end(), 0);
  EXPECT_NE(split_dataset(data, SplitSpec{0.7, 0.1, 0.2, 1}).test, split_dataset(data, SplitSpec{0.7, 0.1, 0.2, 2}).test);
}

TEST(SplitDataset, InvalidSpecs) {
  std::vector<int> data(10);
  EXPECT_THROW(split_dataset(data, SplitSpec{0.7, 0.1, 0.3, 1}), PreconditionError);
  EXPECT_THROW(split_dataset(data, SplitSpec{1.0, 0.0, 0.0, 1}), PreconditionError);
  EXPECT_THROW(split_dataset(std::vector<int>(2), SplitSpec{}), PreconditionError);
}

TEST(FilterBySegment, TableRows) {
  IndustryMapping m({{"Bakery", IndustryClass::Manufacturing}, {"Taxi", IndustryClass::NonManufacturing},
                     {"Chemicals", IndustryClass::Manufacturing}},
                    false);
  std::vector<SurveyComment> cs{
      comment("1", YearMonth(2005, 1), Domain::Household, "Bakery"),
      comment("2", YearMonth(2005, 1), Domain::Household, "Taxi"),
      comment("3", YearMonth(2005, 1), Domain::Corporate, "Chemicals"),
      comment("4", YearMonth(2005, 1), Domain::Household, "Mystery (shop)"),
  };
  auto goods = filter_by_segment(cs, {Domain::Household, IndustryClass::Manufacturing}, &m);
  ASSERT_EQ(goods.size(), 1u);
  EXPECT_EQ(goods[0].id, "1");
  EXPECT_EQ(filter_by_segment(cs, {}, nullptr), cs);
  EXPECT_TRUE(filter_by_segment(cs, {Domain::Corporate, IndustryClass::NonManufacturing}, &m).empty());
  EXPECT_THROW(filter_by_segment(cs, {std::nullopt, IndustryClass::Manufacturing}, nullptr), ConfigError);
}

TEST(FilterBySegment, OrderPreservingSubset) {
  std::mt19937_64 rng(3);
  IndustryMapping m({{"A", IndustryClass::Manufacturing}, {"B", IndustryClass::NonManufacturing}}, false);
  const char* inds[] = {"A", "B", "C"};
  std::vector<SurveyComment> cs;
  for (int i = 0; i < 300; ++i)
    cs.push_back(comment(std::to_string(i), YearMonth(2005, 1), rng() % 2 ? Domain::Household : Domain::Corporate,
                         inds[rng() % 3]));
  for (auto d : {std::optional<Domain>{}, std::optional(Domain::Household)})
    for (auto ind : {std::optional<IndustryClass>{}, std::optional(IndustryClass::Manufacturing)}) {
      auto out = filter_by_segment(cs, {d, ind}, &m);
      std::size_t k = 0;
      for (const auto& c : cs)
        if (k < out.size() && out[k].id == c.id) ++k;
      EXPECT_EQ(k, out.size());
    }
}

TEST(Labels, JoinAndValidate) {
  TempDir dir;
  auto cs = load_comments(dir.write("c.jsonl", kThree), CommentFormat::Jsonl, LoadOptions{AliasTable::defaults(), {}, {}});
  auto labels = load_labels(dir.write("l.jsonl", "{\"id\":\"a\",\"relevance\":\"yes\",\"direction\":\"rise\"}\n"
                                                 "{\"id\":\"b\",\"relevance\":false}\n"),
                            cs);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].direction, Direction::Rise);
  EXPECT_EQ(labels[1].relevance, Relevance::NotPriceRelated);
  EXPECT_THROW(load_labels(dir.write("u.jsonl", "{\"id\":\"zz\",\"relevance\":\"yes\"}\n"), cs), ParseError);
  EXPECT_THROW(load_labels(dir.write("n.jsonl", "{\"id\":\"a\"}\n"), cs), ParseError);
  EXPECT_THROW(load_labels(dir.write("x.jsonl", "{\"id\":\"a\",\"direction\":\"up\"}\n"), cs), ParseError);
}

TEST(FixtureCorpus, ShipsTwoHundredValidComments) {
  auto cs = load_comments(testutil::data_dir() / "corpus/comments.jsonl", CommentFormat::Jsonl);
  EXPECT_EQ(cs.size(), 200u);
  auto mapping = IndustryMapping::load(testutil::data_dir() / "corpus/industry_mapping.csv");
  std::size_t unmapped = 0;
  for (const auto& c : cs) unmapped += normalize_industry(c.industry_raw, mapping) == IndustryClass::Unmapped;
  EXPECT_GT(unmapped, 0u);
}
