#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psi/common.hpp"
#include "psi/io.hpp"

namespace psi {

enum class PromptTask { Filtration, Direction, Integration };

/// Every language-dependent string a prompt is assembled from. The English
/// set is built in; other languages load from template files with the same keys.
struct PromptLanguage {
  std::string version = "en-1";

  std::string filtration_instruction;
  std::string direction_instruction;
  std::string direction_confidence_instruction;  // appended line when confidence is requested
  std::string integration_instruction;

  std::string text_prefix = "Text: ";
  std::string answer_prefix = "Answer: ";
  std::string confidence_prefix = "Confidence: ";
  std::string reason_prefix = "Reason: ";
  std::string result_prefix = "Classification Result: ";
  std::string model_heading = "【Model {i}】";  // {i} is the zero-based model index
  std::string integration_stub = "Classification result considering the above:";

  std::string label_rise = "Rise";
  std::string label_stable = "Stable";
  std::string label_fall = "Fall";
  std::string label_not_related = "Not related";
  std::string label_yes = "Yes";
  std::string label_no = "No";

  static const PromptLanguage& english() {
    static const PromptLanguage en = [] {
      PromptLanguage p;
      p.filtration_instruction =
          "Classify whether the given text refers to prices.\n"
          "If it does, answer \"Yes\", and if it does not, answer \"No.\"\n"
          "Provide no other output.";
      p.direction_instruction =
          "Classify the given text according to the type of price change it refers to.\n"
          "If it mentions a rise, answer \"Rise\"; if it states that there is no change and prices are stable, "
          "answer \"Stable\"; if it refers to a fall, answer \"Fall\"; and if it does not mention any price change, "
          "answer \"Not related.\"";
      p.direction_confidence_instruction = "Follow this with a confidence level and a brief explanation of the reasoning.";
      p.integration_instruction =
          "Based on the outputs of several models, classify the given text according to the type of price change it "
          "refers to. If it mentions a rise, classify it as \"Rise\"; if it states that there is no change and prices "
          "are stable, classify it as \"Stable\"; if it refers to a fall, classify it as \"Fall\"; and if it does not "
          "mention any price change, classify it as \"Not related.\" Do not provide any output other than these "
          "classifications.";
      return p;
    }();
    return en;
  }

  /// Reads a template file. Keys absent from the file keep their English value.
  static PromptLanguage load(const fs::path& path) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    PromptLanguage p = english();
    auto set = [&](const char* key, std::string& field) {
      if (j.contains(key)) field = j[key].get<std::string>();
    };
    set("version", p.version);
    set("filtration_instruction", p.filtration_instruction);
    set("direction_instruction", p.direction_instruction);
    set("direction_confidence_instruction", p.direction_confidence_instruction);
    set("integration_instruction", p.integration_instruction);
    set("text_prefix", p.text_prefix);
    set("answer_prefix", p.answer_prefix);
    set("confidence_prefix", p.confidence_prefix);
    set("reason_prefix", p.reason_prefix);
    set("result_prefix", p.result_prefix);
    set("model_heading", p.model_heading);
    set("integration_stub", p.integration_stub);
    if (j.contains("labels")) {
      const auto& l = j["labels"];
      auto lab = [&](const char* key, std::string& field) {
        if (l.contains(key)) field = l[key].get<std::string>();
      };
      lab("rise", p.label_rise);
      lab("stable", p.label_stable);
      lab("fall", p.label_fall);
      lab("not_related", p.label_not_related);
      lab("yes", p.label_yes);
      lab("no", p.label_no);
    }
    return p;
  }

  json to_json() const {
    return json{{"version", version},
                {"filtration_instruction", filtration_instruction},
                {"direction_instruction", direction_instruction},
                {"direction_confidence_instruction", direction_confidence_instruction},
                {"integration_instruction", integration_instruction},
                {"text_prefix", text_prefix},
                {"answer_prefix", answer_prefix},
                {"confidence_prefix", confidence_prefix},
                {"reason_prefix", reason_prefix},
                {"result_prefix", result_prefix},
                {"model_heading", model_heading},
                {"integration_stub", integration_stub},
                {"labels",
                 {{"rise", label_rise},
                  {"stable", label_stable},
                  {"fall", label_fall},
                  {"not_related", label_not_related},
                  {"yes", label_yes},
                  {"no", label_no}}}};
  }

  const std::string& label(Direction d) const {
    switch (d) {
      case Direction::Rise: return label_rise;
      case Direction::Stable: return label_stable;
      case Direction::Fall: return label_fall;
      case Direction::NotRelated: return label_not_related;
    }
    return label_not_related;
  }
  const std::string& label(Relevance r) const { return r == Relevance::PriceRelated ? label_yes : label_no; }
};

// ---------------------------------------------------------------------------
// Shots and templates
// ---------------------------------------------------------------------------

struct FewShotExample {
  std::string text;
  std::string answer;  // label as displayed, e.g. "Rise" or "Yes"
  std::optional<int> confidence;
  std::optional<std::string> reason;

  void validate() const {
    if (confidence.has_value() != reason.has_value())
      throw ValidationError("few-shot example must carry both confidence and reason, or neither");
    if (confidence && (*confidence < 0 || *confidence > 100))
      throw ValidationError("few-shot confidence out of [0,100]");
  }
};

/// JSON array of `{text, answer, confidence?, reason?}`.
inline std::vector<FewShotExample> load_shots(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ParseError(path.string() + ": expected a JSON array of shots");
  std::vector<FewShotExample> shots;
  for (const auto& s : j) {
    FewShotExample ex;
    ex.text = s.at("text").get<std::string>();
    ex.answer = s.at("answer").get<std::string>();
    if (s.contains("confidence") && !s["confidence"].is_null()) ex.confidence = s["confidence"].get<int>();
    if (s.contains("reason") && !s["reason"].is_null()) ex.reason = s["reason"].get<std::string>();
    ex.validate();
    shots.push_back(std::move(ex));
  }
  return shots;
}

struct PromptTemplate {
  PromptTask task = PromptTask::Direction;
  std::string instruction;
  std::vector<FewShotExample> shots;
  bool with_confidence = false;

  void validate() const {
    for (const auto& s : shots) s.validate();
    if (task == PromptTask::Filtration)
      for (const auto& s : shots)
        if (s.confidence || s.reason) throw ValidationError("filtration shots never carry confidence or reason");
    if (task == PromptTask::Integration && !shots.empty()) throw ValidationError("integration prompts take no shots");
    if (task == PromptTask::Direction && with_confidence)
      for (const auto& s : shots)
        if (!s.confidence) throw ValidationError("direction shot lacks confidence/reason while confidence is requested");
  }
};

// ---------------------------------------------------------------------------
// Judgments
// ---------------------------------------------------------------------------

/// A parsed model verdict. Exactly one of `direction`/`relevance` is set,
/// according to the task it was parsed for.
struct ModelJudgment {
  std::optional<Direction> direction;
  std::optional<Relevance> relevance;
  std::optional<int> confidence;
  std::optional<std::string> reason;
  std::string model_id;
  std::string raw;

  bool operator==(const ModelJudgment&) const = default;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace detail {

inline void append_answer_block(std::string& out, const PromptLanguage& lang, const FewShotExample& shot,
                                bool with_confidence) {
  out += lang.text_prefix + shot.text + "\n";
  out += lang.answer_prefix + shot.answer + "\n";
  if (with_confidence) {
    out += lang.confidence_prefix + std::to_string(*shot.confidence) + "%\n";
    out += lang.reason_prefix + *shot.reason + "\n";
  }
  out += "\n";
}

inline std::string trimmed_prefix(const std::string& prefix) { return std::string(trim(prefix)); }

}  // namespace detail

/// Renders a prompt from a template. Layout: instruction, blank line, then
/// one block per shot (each followed by a blank line), then the query and an
/// unanswered answer line.
inline std::string render_prompt(const PromptTemplate& tpl, std::string_view comment_text,
                                 const PromptLanguage& lang = PromptLanguage::english()) {
  tpl.validate();
  std::string out = tpl.instruction + "\n\n";
  for (const auto& s : tpl.shots) detail::append_answer_block(out, lang, s, tpl.with_confidence);
  out += lang.text_prefix + std::string(comment_text) + "\n";
  out += detail::trimmed_prefix(lang.answer_prefix);
  return out;
}

inline std::string build_filtration_prompt(std::string_view comment_text, const std::vector<FewShotExample>& shots,
                                           std::size_t k, const PromptLanguage& lang = PromptLanguage::english()) {
  if (k > shots.size()) throw PreconditionError("k exceeds the number of available shots");
  PromptTemplate tpl{PromptTask::Filtration, lang.filtration_instruction, {shots.begin(), shots.begin() + k}, false};
  return render_prompt(tpl, comment_text, lang);
}

inline std::string build_direction_prompt(std::string_view comment_text, const std::vector<FewShotExample>& shots,
                                          std::size_t k, bool with_confidence,
                                          const PromptLanguage& lang = PromptLanguage::english()) {
  if (k > shots.size()) throw PreconditionError("k exceeds the number of available shots");
  std::string instruction = lang.direction_instruction;
  if (with_confidence) instruction += "\n" + lang.direction_confidence_instruction;
  PromptTemplate tpl{PromptTask::Direction, instruction, {shots.begin(), shots.begin() + k}, with_confidence};
  return render_prompt(tpl, comment_text, lang);
}

inline std::string build_integration_prompt(std::string_view comment_text, const std::vector<ModelJudgment>& judgments,
                                            const PromptLanguage& lang = PromptLanguage::english()) {
  if (judgments.size() < 2) throw PreconditionError("integration needs at least two judgments");
  std::string out = lang.integration_instruction + "\n\n";
  out += lang.text_prefix + std::string(comment_text) + "\n\n";
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const auto& j = judgments[i];
    if (!j.direction) throw PreconditionError("integration judgment lacks a direction label");
    if (!j.confidence || !j.reason) throw PreconditionError("integration judgment lacks confidence or reason");
    std::string heading = lang.model_heading;
    if (auto pos = heading.find("{i}"); pos != std::string::npos) heading.replace(pos, 3, std::to_string(i));
    out += heading + "\n";
    out += lang.result_prefix + lang.label(*j.direction) + "\n";
    out += lang.confidence_prefix + std::to_string(*j.confidence) + "%\n";
    out += lang.reason_prefix + *j.reason + "\n\n";
  }
  out += lang.integration_stub;
  return out;
}

/// Renders a judgment the way a model is asked to answer, e.g.
/// "Answer: Fall\nConfidence: 100%\nReason: ...".
inline std::string render_reply(const ModelJudgment& j, const PromptLanguage& lang = PromptLanguage::english()) {
  std::string out = lang.answer_prefix + (j.direction ? lang.label(*j.direction) : lang.label(*j.relevance));
  if (j.confidence) out += "\n" + lang.confidence_prefix + std::to_string(*j.confidence) + "%";
  if (j.reason) out += "\n" + lang.reason_prefix + *j.reason;
  return out;
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

struct NoLabelFound : ParseError {
  explicit NoLabelFound(const std::string& raw) : ParseError("no label found in reply: \"" + raw + "\"") {}
};

struct AmbiguousLabel : ParseError {
  explicit AmbiguousLabel(const std::string& line) : ParseError("ambiguous labels on answer line: \"" + line + "\"") {}
};

namespace detail {

struct LabelAlias {
  std::string folded;  // width-folded, lower-cased
  int label;           // Direction or Relevance as int
};

inline std::string fold_key(std::string_view s) { return to_lower_ascii(fold_width(s)); }

inline std::vector<LabelAlias> label_aliases(PromptTask task, const PromptLanguage& lang) {
  std::vector<LabelAlias> out;
  auto add = [&](std::string_view alias, int label) {
    auto k = fold_key(alias);
    if (k.empty()) return;
    for (const auto& a : out)
      if (a.folded == k) return;
    out.push_back({k, label});
  };
  if (task == PromptTask::Filtration) {
    add(lang.label_yes, static_cast<int>(Relevance::PriceRelated));
    add(lang.label_no, static_cast<int>(Relevance::NotPriceRelated));
    add("yes", static_cast<int>(Relevance::PriceRelated));
    add("no", static_cast<int>(Relevance::NotPriceRelated));
  } else {
    for (Direction d : kAllDirections) add(lang.label(d), static_cast<int>(d));
    add("rise", static_cast<int>(Direction::Rise));
    add("stable", static_cast<int>(Direction::Stable));
    add("fall", static_cast<int>(Direction::Fall));
    add("not related", static_cast<int>(Direction::NotRelated));
    add("not_related", static_cast<int>(Direction::NotRelated));
    add("unrelated", static_cast<int>(Direction::NotRelated));
  }
  // Longest aliases first so "not related" wins over any shorter overlap.
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.folded.size() > b.folded.size(); });
  return out;
}

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

/// Distinct labels on one folded line in order of first appearance, matched
/// leftmost-longest with ASCII word boundaries.
inline std::vector<int> labels_on_line(std::string_view line, const std::vector<LabelAlias>& aliases) {
  std::vector<int> found;
  std::size_t i = 0;
  while (i < line.size()) {
    const LabelAlias* hit = nullptr;
    for (const auto& a : aliases) {
      if (a.folded.size() > line.size() - i || line.compare(i, a.folded.size(), a.folded) != 0) continue;
      bool left_ok = i == 0 || !is_word_char(line[i - 1]) || !is_word_char(a.folded.front());
      std::size_t end = i + a.folded.size();
      bool right_ok = end == line.size() || !is_word_char(line[end]) || !is_word_char(a.folded.back());
      if (left_ok && right_ok) {
        hit = &a;
        break;
      }
    }
    if (hit) {
      if (std::find(found.begin(), found.end(), hit->label) == found.end()) found.push_back(hit->label);
      i += hit->folded.size();
    } else {
      ++i;
    }
  }
  return found;
}

inline std::optional<int> parse_percent(std::string_view s) {
  s = trim(s);
  std::size_t n = 0;
  while (n < s.size() && (std::isdigit(static_cast<unsigned char>(s[n])) || s[n] == '.')) ++n;
  if (n == 0) return std::nullopt;
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + n, v);
  if (r.ec != std::errc{}) return std::nullopt;
  int rounded = static_cast<int>(std::floor(v + 0.5));
  if (rounded < 0 || rounded > 100) throw ParseError("confidence out of range [0,100]: " + std::string(s));
  return rounded;
}

}  // namespace detail

/// Extracts a judgment from a free-text reply.
///
/// Lines starting with the confidence or reason prefix are metadata; every
/// other line is a candidate answer line. The first candidate line holding a
/// label from the task vocabulary (matched case- and width-insensitively)
/// decides the label; two distinct labels on that line are ambiguous.
/// Confidence percents are rounded half-up; the reason runs to end of reply.
inline ModelJudgment parse_judgment(std::string_view raw_reply, PromptTask task, std::string model_id = {},
                                    const PromptLanguage& lang = PromptLanguage::english()) {
  ModelJudgment j;
  j.model_id = std::move(model_id);
  j.raw = std::string(raw_reply);

  const std::string folded = fold_width(raw_reply);
  const auto aliases = detail::label_aliases(task, lang);
  const auto conf_key = detail::fold_key(trim(lang.confidence_prefix));
  const auto reason_key = detail::fold_key(trim(lang.reason_prefix));
  auto strip_colon = [](std::string_view k) {
    while (!k.empty() && (k.back() == ':' || k.back() == ' ')) k.remove_suffix(1);
    return std::string(k);
  };
  const std::string conf_word = strip_colon(conf_key), reason_word = strip_colon(reason_key);

  auto lines = split_lines(folded);
  bool label_done = false;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = trim(lines[li]);
    std::string lower = to_lower_ascii(line);
    auto after_colon = [&](std::string_view l, std::size_t word_len) {
      auto rest = l.substr(word_len);
      rest = trim(rest);
      if (!rest.empty() && rest.front() == ':') rest.remove_prefix(1);
      return trim(rest);
    };
    if (!conf_word.empty() && lower.rfind(conf_word, 0) == 0) {
      if (!j.confidence) j.confidence = detail::parse_percent(after_colon(line, conf_word.size()));
      continue;
    }
    if (!reason_word.empty() && lower.rfind(reason_word, 0) == 0) {
      if (!j.reason) {
        std::string reason(after_colon(line, reason_word.size()));
        for (std::size_t k = li + 1; k < lines.size(); ++k) {
          reason += "\n";
          reason += lines[k];
        }
        j.reason = std::string(trim(reason));
      }
      break;
    }
    if (label_done) continue;
    auto found = detail::labels_on_line(lower, aliases);
    if (found.empty()) continue;
    if (found.size() > 1) throw AmbiguousLabel(std::string(line));
    if (task == PromptTask::Filtration) j.relevance = static_cast<Relevance>(found.front());
    else j.direction = static_cast<Direction>(found.front());
    label_done = true;
  }
  if (!label_done) throw NoLabelFound(j.raw);
  return j;
}

}  // namespace psi
