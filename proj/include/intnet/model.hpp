#pragma once

#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "intnet/autodiff.hpp"
#include "intnet/crf.hpp"
#include "intnet/data.hpp"
#include "intnet/encoders.hpp"
#include "intnet/lstm.hpp"
#include "intnet/metrics.hpp"
#include "intnet/vocab.hpp"

namespace intnet {

struct ModelSpec {
  EncoderConfig encoder;
  std::size_t lstm_hidden = 256;
  std::size_t word_dim = 100;
  bool use_word_embeddings = true;
  bool use_stop = true;
};

// Per-token LSTM input size: pretrained word vector (when enabled)
// concatenated with the character encoding z.
std::size_t token_input_dim(const ModelSpec& spec);

// Sentence model: [word vector ; z] per token, bidirectional LSTM, CRF.
// Dropout sits on the encoder's character embeddings, on the LSTM inputs and
// on the LSTM outputs feeding the CRF projection.
class TaggerModel {
 public:
  TaggerModel(ModelSpec spec, TaskKind task, CharVocab char_vocab,
              WordVocab word_vocab, TagSet tags, std::uint64_t init_seed,
              const EmbeddingTable* pretrained);

  // Derives vocabularies from the corpus. The word vocabulary holds every
  // training token plus dev/test tokens that have a pretrained vector;
  // training words missing from the file get fresh uniform vectors.
  static std::unique_ptr<TaggerModel> build(const ModelSpec& spec,
                                            const Corpus& corpus,
                                            const EmbeddingTable* pretrained,
                                            std::uint64_t seed);

  std::vector<ad::NodePtr> token_inputs(const std::vector<std::string>& tokens,
                                        ad::Mode mode, ad::Scalar dropout_rate,
                                        RngState* rng);
  ad::NodePtr sentence_nll(const std::vector<std::string>& tokens,
                           const std::vector<int>& tag_ids, ad::Mode mode,
                           ad::Scalar dropout_rate, RngState* rng);
  std::vector<std::string> predict(const std::vector<std::string>& tokens);
  ad::NodePtr encode_word(const std::string& word, ad::Mode mode);

  const ModelSpec& spec() const { return spec_; }
  TaskKind task() const { return task_; }
  const TagSet& tags() const { return tags_; }
  const CharVocab& char_vocab() const { return char_vocab_; }
  const WordVocab& word_vocab() const { return word_vocab_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }
  CharEncoder* encoder() { return encoder_.get(); }
  const CrfParams& crf() const { return crf_; }

  std::vector<int> tag_ids(const std::vector<std::string>& labels) const;

  const std::unordered_set<std::string>& train_words() const {
    return train_words_;
  }
  const std::unordered_set<std::string>& embedding_words() const {
    return embedding_words_;
  }
  void set_vocab_sets(std::unordered_set<std::string> train_words,
                      std::unordered_set<std::string> embedding_words);

  // Versioned checkpoint: magic, JSON header (config, vocabularies, tensor
  // manifest), then raw little-endian float64 payload.
  void save(const std::string& path) const;
  static std::unique_ptr<TaggerModel> load(const std::string& path);

  struct Snapshot {
    std::vector<std::vector<ad::Scalar>> values;
    std::vector<std::vector<ad::Scalar>> bn_mean, bn_var;
    std::vector<std::uint64_t> bn_updates;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& snap);

 private:
  ModelSpec spec_;
  TaskKind task_;
  CharVocab char_vocab_;
  WordVocab word_vocab_;
  TagSet tags_;
  ad::ParamStore store_;
  std::unique_ptr<CharEncoder> encoder_;
  ad::NodePtr word_table_;
  LstmCell fwd_, bwd_;
  CrfParams crf_;
  std::unordered_set<std::string> train_words_, embedding_words_;
};

// Top-k candidate words by cosine similarity of the character encodings z,
// query excluded, ties broken lexicographically. Zero-norm encodings are
// skipped and reported in `excluded`.
struct NeighborList {
  std::vector<std::pair<std::string, double>> neighbors;
  std::vector<std::string> excluded;
};
NeighborList nearest_neighbors(TaggerModel& model, const std::string& query,
                               const std::vector<std::string>& candidates,
                               std::size_t k);

}  // namespace intnet
