#include "intnet/metrics.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

namespace intnet {

const char* to_string(OovCategory c) {
  switch (c) {
    case OovCategory::IV: return "IV";
    case OovCategory::OOTV: return "OOTV";
    case OovCategory::OOEV: return "OOEV";
    case OovCategory::OOBV: return "OOBV";
  }
  return "?";
}

OovCategory oov_category(const std::string& word,
                         const std::unordered_set<std::string>& train_vocab,
                         const std::unordered_set<std::string>& embedding_vocab) {
  const bool in_train = train_vocab.count(word) > 0;
  const bool in_emb = embedding_vocab.count(word) > 0;
  if (in_train && in_emb) return OovCategory::IV;
  if (in_emb) return OovCategory::OOTV;
  if (in_train) return OovCategory::OOEV;
  return OovCategory::OOBV;
}

double CategoryScore::precision() const {
  return predicted == 0 ? 0.0
                        : static_cast<double>(correct) /
                              static_cast<double>(predicted);
}
double CategoryScore::recall() const {
  return gold == 0 ? 0.0
                   : static_cast<double>(correct) / static_cast<double>(gold);
}
double CategoryScore::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2 * p * r / (p + r);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["token_accuracy"] = token_accuracy;
  j["repair_count"] = repair_count;
  if (!categories.empty()) {
    nlohmann::json cats;
    for (const auto& [name, score] : categories) {
      cats[name] = {{"gold", score.gold},
                    {"predicted", score.predicted},
                    {"correct", score.correct},
                    {"precision", score.precision()},
                    {"recall", score.recall()},
                    {"f1", score.f1()}};
    }
    j["categories"] = cats;
  }
  return j.dump(2);
}

namespace {

OovCategory entity_category(const Span& span,
                            const std::vector<std::string>& tokens,
                            const EvalVocab& vocab) {
  if (vocab.attribution == EntityAttribution::first_word) {
    return oov_category(tokens.at(span.start), *vocab.train_words,
                        *vocab.embedding_words);
  }
  // rarest word decides; enum order matches the rarity order
  OovCategory worst = OovCategory::IV;
  for (std::size_t t = span.start; t <= span.end; ++t) {
    const OovCategory c = oov_category(tokens.at(t), *vocab.train_words,
                                       *vocab.embedding_words);
    if (static_cast<int>(c) > static_cast<int>(worst)) worst = c;
  }
  return worst;
}

}  // namespace

double token_accuracy(const std::vector<std::vector<std::string>>& pred,
                      const std::vector<std::vector<std::string>>& gold) {
  if (pred.size() != gold.size()) {
    throw ContractError("token_accuracy: sentence count mismatch");
  }
  std::size_t total = 0, match = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gold[s].size()) {
      throw ContractError("token_accuracy: sentence length mismatch");
    }
    for (std::size_t t = 0; t < pred[s].size(); ++t) {
      ++total;
      if (pred[s][t] == gold[s][t]) ++match;
    }
  }
  if (total == 0) throw ContractError("token_accuracy: empty corpus");
  return static_cast<double>(match) / static_cast<double>(total);
}

EvalReport evaluate_sequences(
    const std::vector<std::vector<std::string>>& pred,
    const std::vector<std::vector<std::string>>& gold, TaskKind task,
    const std::vector<std::vector<std::string>>* tokens,
    const EvalVocab* vocab) {
  EvalReport report;
  report.token_accuracy = token_accuracy(pred, gold);
  if (task == TaskKind::pos) return report;

  const bool with_categories = tokens != nullptr && vocab != nullptr &&
                               vocab->train_words != nullptr &&
                               vocab->embedding_words != nullptr;
  if (with_categories) {
    for (auto c : {OovCategory::IV, OovCategory::OOTV, OovCategory::OOEV,
                   OovCategory::OOBV}) {
      report.categories[to_string(c)] = CategoryScore{};
    }
  }

  std::size_t gold_total = 0, pred_total = 0, correct_total = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    auto pe = from_bioes(pred[s]);
    auto ge = from_bioes(gold[s]);
    report.repair_count += pe.repairs;
    std::set<Span> gold_set(ge.spans.begin(), ge.spans.end());
    gold_total += ge.spans.size();
    pred_total += pe.spans.size();
    std::size_t correct = 0;
    for (const auto& span : pe.spans) {
      if (gold_set.count(span)) ++correct;
    }
    correct_total += correct;

    if (with_categories) {
      const auto& toks = tokens->at(s);
      std::set<Span> pred_set(pe.spans.begin(), pe.spans.end());
      for (const auto& span : ge.spans) {
        auto& cat = report.categories[to_string(entity_category(span, toks, *vocab))];
        ++cat.gold;
        if (pred_set.count(span)) ++cat.correct;
      }
      for (const auto& span : pe.spans) {
        ++report.categories[to_string(entity_category(span, toks, *vocab))].predicted;
      }
    }
  }

  report.precision = pred_total == 0 ? 0.0
                                     : static_cast<double>(correct_total) /
                                           static_cast<double>(pred_total);
  report.recall = gold_total == 0 ? 0.0
                                  : static_cast<double>(correct_total) /
                                        static_cast<double>(gold_total);
  report.f1 = report.precision + report.recall == 0.0
                  ? 0.0
                  : 2 * report.precision * report.recall /
                        (report.precision + report.recall);
  return report;
}

double primary_metric(const EvalReport& report, TaskKind task) {
  return task == TaskKind::pos ? report.token_accuracy : report.f1;
}

}  // namespace intnet
