#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "psi/common.hpp"
#include "psi/io.hpp"

namespace psi {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
};

struct EvalReport {
  std::vector<std::string> labels;  // sorted union of gold and predicted labels
  std::map<std::string, ClassScores> per_label;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][pred], indexed like `labels`
  std::size_t n = 0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;

  json to_json() const {
    json per = json::object();
    for (const auto& [l, s] : per_label)
      per[l] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    return json{{"n", n},          {"weighted_f1", weighted_f1}, {"accuracy", accuracy},
                {"labels", labels}, {"per_label", per},          {"confusion", confusion}};
  }
};

/// Per-class F1 = 2PR/(P+R), taken as 0 when P+R = 0, averaged with weights
/// proportional to gold support.
inline EvalReport weighted_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
  if (gold.size() != pred.size()) throw PreconditionError("weighted_f1: gold and pred lengths differ");
  if (gold.empty()) throw PreconditionError("weighted_f1: empty input");

  EvalReport r;
  r.n = gold.size();
  std::set<std::string> all(gold.begin(), gold.end());
  all.insert(pred.begin(), pred.end());
  r.labels.assign(all.begin(), all.end());
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < r.labels.size(); ++i) idx[r.labels[i]] = i;

  const std::size_t L = r.labels.size();
  r.confusion.assign(L, std::vector<std::size_t>(L, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++r.confusion[idx[gold[i]]][idx[pred[i]]];
    if (gold[i] == pred[i]) ++correct;
  }

  for (std::size_t c = 0; c < L; ++c) {
    std::size_t tp = r.confusion[c][c], gold_c = 0, pred_c = 0;
    for (std::size_t k = 0; k < L; ++k) {
      gold_c += r.confusion[c][k];
      pred_c += r.confusion[k][c];
    }
    ClassScores s;
    s.support = gold_c;
    s.precision = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    s.recall = gold_c ? static_cast<double>(tp) / static_cast<double>(gold_c) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    r.weighted_f1 += static_cast<double>(gold_c) / static_cast<double>(r.n) * s.f1;
    r.per_label[r.labels[c]] = s;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  return r;
}

}  // namespace psi
