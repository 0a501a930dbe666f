#pragma once

#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "intnet/data.hpp"

namespace intnet {

enum class OovCategory { IV, OOTV, OOEV, OOBV };
const char* to_string(OovCategory c);

// IV: in training and embedding vocabulary; OOTV: embeddings only;
// OOEV: training only; OOBV: neither.
OovCategory oov_category(const std::string& word,
                         const std::unordered_set<std::string>& train_vocab,
                         const std::unordered_set<std::string>& embedding_vocab);

// How an entity inherits a category from its words.
enum class EntityAttribution {
  rarest,      // rarest word decides: OOBV > OOEV > OOTV > IV
  first_word,
};

struct CategoryScore {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
  double precision() const;
  double recall() const;
  double f1() const;
};

struct EvalReport {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double token_accuracy = 0;
  std::size_t repair_count = 0;
  std::map<std::string, CategoryScore> categories;  // IV/OOTV/OOEV/OOBV
  std::string to_json() const;
};

struct EvalVocab {
  const std::unordered_set<std::string>* train_words = nullptr;
  const std::unordered_set<std::string>* embedding_words = nullptr;
  EntityAttribution attribution = EntityAttribution::rarest;
};

// Micro-averaged exact-span P/R/F1 (via from_bioes on both sides) plus token
// accuracy. For POS only token accuracy is meaningful. Length mismatches are
// contract errors; `tokens` and `vocab` enable the per-category breakdown.
EvalReport evaluate_sequences(
    const std::vector<std::vector<std::string>>& pred,
    const std::vector<std::vector<std::string>>& gold, TaskKind task,
    const std::vector<std::vector<std::string>>* tokens = nullptr,
    const EvalVocab* vocab = nullptr);

double token_accuracy(const std::vector<std::vector<std::string>>& pred,
                      const std::vector<std::vector<std::string>>& gold);

// The dev-selection metric: entity F1 for NER/chunking, accuracy for POS.
double primary_metric(const EvalReport& report, TaskKind task);

}  // namespace intnet
