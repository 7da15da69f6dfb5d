// Regenerates the synthetic fixture corpus under data/.
//
//   gen_fixtures [data-dir]
//
// A hidden monthly inflation tendency drives both the comment directions and
// a reference price level that lags it by two months. Canned LLM replies are
// written for every prompt the shipped pipeline config can issue, named by
// prompt digest so FixtureClient can serve them.

#include <cmath>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "psi/psi.hpp"

namespace {

using namespace psi;

constexpr std::uint64_t kSeed = 20240521;
constexpr YearMonth kFirst{2001, 1};
constexpr int kMonths = 40;
constexpr int kPerMonth = 5;

struct Industry {
  const char* name;
  Domain domain;
  const char* cls;  // nullptr: left out of the mapping
};

const std::vector<Industry> kIndustries = {
    {"Supermarket", Domain::Household, "non_manufacturing"},
    {"Department store (women's apparel)", Domain::Household, "non_manufacturing"},
    {"Convenience store", Domain::Household, "non_manufacturing"},
    {"Taxi driver", Domain::Household, "non_manufacturing"},
    {"Restaurant (Western cuisine)", Domain::Household, "non_manufacturing"},
    {"Bakery", Domain::Household, "manufacturing"},
    {"Household appliance maker (retail arm)", Domain::Household, "manufacturing"},
    {"Street vendor", Domain::Household, nullptr},
    {"Food manufacturing", Domain::Corporate, "manufacturing"},
    {"Chemical industry", Domain::Corporate, "manufacturing"},
    {"Electrical machinery", Domain::Corporate, "manufacturing"},
    {"Transportation (trucking)", Domain::Corporate, "non_manufacturing"},
    {"Advertising agency", Domain::Corporate, "non_manufacturing"},
    {"Real estate", Domain::Corporate, "non_manufacturing"},
    {"Other (unclassified)", Domain::Corporate, nullptr},
};

const std::vector<std::string> kItems = {"vegetables", "gasoline", "rice", "fish", "meat", "electricity",
                                         "steel",      "paper",    "fares", "rent", "bread", "cooking oil"};

const std::vector<std::string> kRise = {
    "Prices of {item} went up again, and customers are buying less.",
    "Our suppliers raised the cost of {item}, so we had to pass on a price hike.",
    "Everything is more expensive than last month, especially {item}.",
    "The price of {item} keeps climbing and margins are shrinking.",
};
const std::vector<std::string> kStable = {
    "Prices of {item} have been flat for several months.",
    "We kept our prices unchanged, and the cost of {item} is steady.",
    "No change in the price of {item}; customers see the same prices as before.",
};
const std::vector<std::string> kFall = {
    "Prices of {item} dropped, and stores are running discount sales.",
    "The cost of {item} fell, so we cut our prices to attract customers.",
    "Everything is cheaper this month; {item} is a bargain now.",
    "Competitors keep lowering prices on {item}, so we followed with a discount.",
};
const std::vector<std::string> kPriceNoChange = {
    "Customers compare prices carefully before buying {item}.",
    "Shoppers talk about prices a lot, but it is hard to say where {item} is heading.",
};
const std::vector<std::string> kUnrelated = {
    "Foot traffic at the station was about the same as usual.",
    "Rainy weather kept visitors away on the weekend.",
    "Orders from regular clients were steady this month.",
    "We hired two new staff members for the busy season.",
    "Sales of gifts picked up ahead of the holidays.",
    "Fewer tourists came to the shopping street this month.",
};

const std::vector<std::string> kTails = {"", " Business is slow overall.", " Weekend crowds were thin.",
                                         " Regular clients still come in.", " We are busy with year-end work."};

const std::vector<std::string> kVocab = {
    "price",  "prices",  "expensive", "cheaper",  "cost",    "discount", "raised", "hike",
    "bargain", "lowering", "cut",     "customers", "traffic", "weather",  "orders", "staff",
    "sales",  "visitors", "tourists", "hired",    "steady",  "flat",     "unchanged"};

std::string fill(std::string tpl, const std::string& item) {
  auto pos = tpl.find("{item}");
  if (pos != std::string::npos) tpl.replace(pos, 6, item);
  return tpl;
}

/// Hidden tendency in [-1, 1]: a slow cycle plus drift.
double tendency(int month_index) {
  return std::clamp(0.7 * std::sin(month_index / 7.0) + 0.2 * std::cos(month_index / 3.1), -1.0, 1.0);
}

std::string reason_for(Direction d, const std::string& item) {
  switch (d) {
    case Direction::Rise: return "The comment reports higher prices for " + item + ".";
    case Direction::Stable: return "The comment says prices of " + item + " are unchanged.";
    case Direction::Fall: return "The comment reports lower prices for " + item + ".";
    case Direction::NotRelated: return "The comment mentions prices but no change in them.";
  }
  return {};
}

struct Record {
  SurveyComment comment;
  bool price_related = false;
  Direction truth = Direction::NotRelated;
  std::string item;
};

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("data");
  std::mt19937_64 rng(kSeed);
  auto uniform = [&] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  // Comments and gold labels.
  std::vector<Record> records;
  for (int m = 0; m < kMonths; ++m) {
    const YearMonth month = kFirst + m;
    const double p = tendency(month.index() - YearMonth(2000, 1).index());
    for (int i = 0; i < kPerMonth; ++i) {
      Record r;
      const auto& ind = kIndustries[pick(kIndustries.size())];
      r.comment.id = "c" + std::to_string(m * kPerMonth + i + 1);
      r.comment.month = month;
      r.comment.domain = ind.domain;
      r.comment.industry_raw = ind.name;
      r.comment.survey_kind = uniform() < 0.15 ? SurveyKind::Future : SurveyKind::Current;
      r.item = kItems[pick(kItems.size())];
      r.price_related = uniform() < 0.75;
      if (r.price_related) {
        const double u = uniform();
        const double rise = 0.3 + 0.3 * p, fall = 0.3 - 0.3 * p;
        if (u < 0.05) r.truth = Direction::NotRelated;
        else if (u < 0.05 + 0.95 * rise) r.truth = Direction::Rise;
        else if (u < 0.05 + 0.95 * (rise + fall)) r.truth = Direction::Fall;
        else r.truth = Direction::Stable;
        const auto& pool = r.truth == Direction::Rise     ? kRise
                           : r.truth == Direction::Fall   ? kFall
                           : r.truth == Direction::Stable ? kStable
                                                          : kPriceNoChange;
        r.comment.text = fill(pool[pick(pool.size())], r.item);
      } else {
        r.comment.text = kUnrelated[pick(kUnrelated.size())];
      }
      r.comment.text += kTails[pick(kTails.size())];
      records.push_back(std::move(r));
    }
  }

  std::vector<SurveyComment> comments;
  std::vector<json> labels, external;
  for (const auto& r : records) {
    comments.push_back(r.comment);
    json l{{"id", r.comment.id}, {"relevance", r.price_related ? "yes" : "no"}};
    if (r.price_related) l["direction"] = to_string(r.truth);
    labels.push_back(l);
    external.push_back({{"id", r.comment.id}, {"price_related", r.price_related}});
  }
  write_comments(root / "corpus" / "comments.jsonl", comments, CommentFormat::Jsonl);
  write_file_atomic(root / "corpus" / "labels.jsonl", to_jsonl(labels));
  write_file_atomic(root / "corpus" / "external_predictions.jsonl", to_jsonl(external));

  std::string mapping = "industry,class\n";
  for (const auto& ind : kIndustries)
    if (ind.cls) mapping += csv_row({strip_parentheses(ind.name), ind.cls});
  write_file_atomic(root / "corpus" / "industry_mapping.csv", mapping);

  std::string vocab;
  for (const auto& w : kVocab) vocab += w + "\n";
  write_file_atomic(root / "corpus" / "vocab.txt", vocab);

  // Few-shot examples (not drawn from the corpus).
  json filtration_shots = json::array({
      {{"text", "The price of cabbage doubled because of the cold spell."}, {"answer", "Yes"}},
      {{"text", "The new shopping mall drew large crowds on opening day."}, {"answer", "No"}},
      {{"text", "Hotels offered deep discounts to fill rooms."}, {"answer", "Yes"}},
      {{"text", "Our delivery trucks were delayed by snow."}, {"answer", "No"}},
      {{"text", "Wholesale costs are unchanged from last quarter."}, {"answer", "Yes"}},
  });
  json direction_shots = json::array({
      {{"text", "The price of cabbage doubled because of the cold spell."},
       {"answer", "Rise"}, {"confidence", 100}, {"reason", "A doubled price is a rise."}},
      {{"text", "Hotels offered deep discounts to fill rooms."},
       {"answer", "Fall"}, {"confidence", 90}, {"reason", "Discounts lower the prices customers pay."}},
      {{"text", "Wholesale costs are unchanged from last quarter."},
       {"answer", "Stable"}, {"confidence", 95}, {"reason", "Costs did not change."}},
      {{"text", "Customers ask about prices more often than before."},
       {"answer", "Not related"}, {"confidence", 70}, {"reason", "Prices are mentioned without any change."}},
      {{"text", "Gasoline got a little cheaper this week."},
       {"answer", "Fall"}, {"confidence", 85}, {"reason", "Cheaper gasoline is a price fall."}},
  });
  write_file_atomic(root / "prompts" / "filtration_shots.json", filtration_shots.dump(2) + "\n");
  write_file_atomic(root / "prompts" / "direction_shots.json", direction_shots.dump(2) + "\n");

  // Canned replies for every prompt the fixture config can issue.
  const auto& lang = PromptLanguage::english();
  auto fshots = load_shots(root / "prompts" / "filtration_shots.json");
  auto dshots = load_shots(root / "prompts" / "direction_shots.json");
  const fs::path replies = root / "fixtures" / "replies";
  // Repeated texts yield repeated prompts; the first reply for a prompt is kept
  // so every reply file is consistent with the integration prompts built from it.
  std::map<std::string, std::string> issued;
  auto put = [&](const std::string& model, const std::string& prompt, std::string reply) -> std::string {
    auto [it, fresh] = issued.try_emplace(model + '\n' + prompt, std::move(reply));
    if (fresh) write_file_atomic(replies / model / (sha256_hex(prompt) + ".txt"), it->second);
    return it->second;
  };
  auto neighbour = [&](Direction d) {
    switch (d) {
      case Direction::Rise: return Direction::Stable;
      case Direction::Fall: return Direction::Stable;
      case Direction::Stable: return uniform() < 0.5 ? Direction::Rise : Direction::Fall;
      case Direction::NotRelated: return Direction::Stable;
    }
    return Direction::Stable;
  };

  for (const auto& r : records) {
    const auto& text = r.comment.text;
    const bool filter_right = uniform() < 0.95;
    const bool says_yes = filter_right ? r.price_related : !r.price_related;
    put("filter", build_filtration_prompt(text, fshots, fshots.size(), lang), says_yes ? "Yes" : "No");

    const Direction truth = r.price_related ? r.truth : Direction::NotRelated;
    const std::string direction_prompt = build_direction_prompt(text, dshots, dshots.size(), true, lang);
    std::vector<ModelJudgment> judged;
    const std::pair<const char*, double> judges[] = {{"gpt-4o", 0.85}, {"gemini-1.5-flash", 0.8}};
    for (const auto& [model, accuracy] : judges) {
      ModelJudgment j;
      const bool right = uniform() < accuracy;
      j.direction = right ? truth : neighbour(truth);
      j.confidence = right ? 80 + 5 * static_cast<int>(pick(5)) : 50 + 5 * static_cast<int>(pick(6));
      j.reason = reason_for(*j.direction, r.item);
      std::string reply = render_reply(j, lang);
      // The second judge omits the answer prefix, as some models do.
      if (std::string(model) == "gemini-1.5-flash") reply = reply.substr(lang.answer_prefix.size());
      reply = put(model, direction_prompt, reply);
      judged.push_back(parse_judgment(reply, PromptTask::Direction, model, lang));
    }

    // The integrator sides with a judge that has the true label when one does.
    Direction verdict = judged[0].confidence >= judged[1].confidence ? *judged[0].direction : *judged[1].direction;
    for (const auto& j : judged)
      if (j.direction == truth) verdict = truth;
    put("integrator", build_integration_prompt(text, judged, lang), lang.label(verdict));
  }

  // Reference price level: year-over-year inflation tracks the tendency two
  // months earlier, plus noise.
  std::normal_distribution<double> noise(0.0, 0.1);
  std::map<YearMonth, double> level;
  std::string ref = "month,value\n";
  for (YearMonth m(2000, 1); m <= YearMonth(2004, 12); m = m + 1) {
    const int idx = m.index() - YearMonth(2000, 1).index();
    double v;
    if (idx < 12) {
      v = 100.0 + 0.05 * idx;
    } else {
      const double yoy = 0.8 * tendency(idx - 2) + noise(rng);
      v = level.at(m - 12) * (1.0 + yoy / 100.0);
    }
    level[m] = v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    ref += m.str() + "," + buf + "\n";
  }
  write_file_atomic(root / "reference" / "cpi_level.csv", ref);

  std::cout << "wrote " << records.size() << " comments and replies under " << root.string() << "\n";
  return 0;
}
