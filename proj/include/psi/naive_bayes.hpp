#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psi/common.hpp"
#include "psi/io.hpp"

namespace psi {

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

/// LexiconMatch scans raw text for lexicon entries, leftmost-longest and
/// non-overlapping, and emits only matched entries. External looks up
/// pre-tokenized text by comment id.
class Tokenizer {
 public:
  enum class Mode { LexiconMatch, External };

  static Tokenizer lexicon(std::vector<std::string> words) {
    Tokenizer t;
    t.mode_ = Mode::LexiconMatch;
    for (auto& w : words)
      if (!w.empty()) t.lexicon_.push_back(std::move(w));
    std::sort(t.lexicon_.begin(), t.lexicon_.end());
    t.lexicon_.erase(std::unique(t.lexicon_.begin(), t.lexicon_.end()), t.lexicon_.end());
    return t;
  }

  /// JSONL `{id, tokens: [...]}`.
  static Tokenizer external(const fs::path& path) {
    Tokenizer t;
    t.mode_ = Mode::External;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
      try {
        t.external_[obj.at("id").get<std::string>()] = obj.at("tokens").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ParseError(e.what(), line);
      }
    });
    return t;
  }

  static Tokenizer external(std::unordered_map<std::string, std::vector<std::string>> table) {
    Tokenizer t;
    t.mode_ = Mode::External;
    t.external_ = std::move(table);
    return t;
  }

  Mode mode() const { return mode_; }
  const std::vector<std::string>& lexicon_words() const { return lexicon_; }

  std::vector<std::string> tokenize(std::string_view text, std::string_view id = {}) const {
    if (mode_ == Mode::External) {
      auto it = external_.find(std::string(id));
      if (it == external_.end()) throw ValidationError("no pre-tokenized entry for id \"" + std::string(id) + "\"");
      return it->second;
    }
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
      const std::string* best = nullptr;
      for (const auto& w : lexicon_)
        if (w.size() <= text.size() - i && text.compare(i, w.size(), w) == 0 && (!best || w.size() > best->size()))
          best = &w;
      if (best) {
        out.push_back(*best);
        i += best->size();
      } else {
        ++i;
      }
    }
    return out;
  }

 private:
  Mode mode_ = Mode::LexiconMatch;
  std::vector<std::string> lexicon_;
  std::unordered_map<std::string, std::vector<std::string>> external_;
};

inline std::vector<std::string> tokenize(std::string_view text, const Tokenizer& tokenizer, std::string_view id = {}) {
  return tokenizer.tokenize(text, id);
}

/// Newline-delimited UTF-8 words; blank lines and duplicates ignored.
inline std::vector<std::string> load_vocabulary(const fs::path& path) {
  std::vector<std::string> words;
  std::set<std::string> seen;
  auto content = read_file(path);
  for (auto line : split_lines(content)) {
    auto w = std::string(trim(line));
    if (!w.empty() && seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

// ---------------------------------------------------------------------------
// Multinomial Naive Bayes
// ---------------------------------------------------------------------------

enum class NbFeatures { Counts, Presence };

struct NbModel {
  std::vector<std::string> labels;
  std::vector<double> log_priors;                     // per label
  std::vector<std::vector<double>> log_likelihoods;   // [label][vocab word]
  std::vector<std::string> vocab;
  double alpha = 1.0;
  NbFeatures features = NbFeatures::Counts;

  std::size_t vocab_index(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? npos : it->second;
  }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  void build_index() {
    index_.clear();
    for (std::size_t i = 0; i < vocab.size(); ++i) index_.emplace(vocab[i], i);
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct NbDocument {
  std::vector<std::string> tokens;
  std::string label;
};

struct NbPrediction {
  std::string label;
  std::vector<double> log_posterior;  // unnormalized, aligned with model.labels
};

/// Trains with add-alpha smoothing:
///   log_prior(c)        = log(N_c / N)
///   log_likelihood(w|c) = log((count(w,c) + alpha) / (tokens_in(c) + alpha * |vocab|))
/// Only in-vocabulary tokens are counted. When `label_order` is empty the
/// labels are sorted; otherwise every listed label must occur in `data`.
inline NbModel nb_train(const std::vector<NbDocument>& data, std::vector<std::string> vocab, double alpha,
                        std::vector<std::string> label_order = {}, NbFeatures features = NbFeatures::Counts) {
  if (data.empty()) throw PreconditionError("nb_train: empty training set");
  if (!(alpha > 0.0)) throw PreconditionError("nb_train: alpha must be positive");

  std::map<std::string, std::size_t> doc_count;
  for (const auto& d : data) ++doc_count[d.label];
  if (label_order.empty()) {
    for (const auto& [label, _] : doc_count) label_order.push_back(label);
  } else {
    for (const auto& l : label_order)
      if (!doc_count.count(l)) throw PreconditionError("nb_train: label \"" + l + "\" has no documents");
    for (const auto& [label, _] : doc_count)
      if (std::find(label_order.begin(), label_order.end(), label) == label_order.end())
        throw PreconditionError("nb_train: label \"" + label + "\" missing from label order");
  }

  NbModel m;
  m.labels = label_order;
  m.vocab = std::move(vocab);
  m.alpha = alpha;
  m.features = features;
  m.build_index();

  const std::size_t L = m.labels.size(), V = m.vocab.size();
  std::vector<std::vector<double>> counts(L, std::vector<double>(V, 0.0));
  std::vector<double> totals(L, 0.0);
  std::map<std::string, std::size_t> label_idx;
  for (std::size_t c = 0; c < L; ++c) label_idx[m.labels[c]] = c;

  for (const auto& d : data) {
    auto c = label_idx.at(d.label);
    std::set<std::size_t> seen;
    for (const auto& t : d.tokens) {
      auto w = m.vocab_index(t);
      if (w == NbModel::npos) continue;
      if (features == NbFeatures::Presence && !seen.insert(w).second) continue;
      counts[c][w] += 1.0;
      totals[c] += 1.0;
    }
  }

  const double n = static_cast<double>(data.size());
  for (std::size_t c = 0; c < L; ++c) {
    m.log_priors.push_back(std::log(static_cast<double>(doc_count[m.labels[c]]) / n));
    const double denom = totals[c] + alpha * static_cast<double>(V);
    std::vector<double> ll(V);
    for (std::size_t w = 0; w < V; ++w) ll[w] = std::log((counts[c][w] + alpha) / denom);
    m.log_likelihoods.push_back(std::move(ll));
  }
  return m;
}

/// Argmax of log_prior + sum of in-vocabulary token log-likelihoods.
/// Out-of-vocabulary tokens are ignored. Scores within rounding distance of
/// each other count as tied, and ties go to the earlier label.
inline NbPrediction nb_predict(const NbModel& model, const std::vector<std::string>& tokens) {
  NbPrediction p;
  p.log_posterior = model.log_priors;
  std::set<std::size_t> seen;
  for (const auto& t : tokens) {
    auto w = model.vocab_index(t);
    if (w == NbModel::npos) continue;
    if (model.features == NbFeatures::Presence && !seen.insert(w).second) continue;
    for (std::size_t c = 0; c < model.labels.size(); ++c) p.log_posterior[c] += model.log_likelihoods[c][w];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.log_posterior.size(); ++c)
    if (p.log_posterior[c] - p.log_posterior[best] > 1e-12 * std::max(1.0, std::abs(p.log_posterior[best]))) best = c;
  p.label = model.labels.at(best);
  return p;
}

}  // namespace psi
