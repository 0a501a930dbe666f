#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "intnet/autodiff.hpp"
#include "intnet/rng.hpp"
#include "intnet/vocab.hpp"

namespace intnet {

enum class TaskKind { ner, pos, chunk };
TaskKind task_from_string(const std::string& s);
const char* to_string(TaskKind task);

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::string origin_file;
  std::size_t line_begin = 0;  // 1-based, inclusive
  std::size_t line_end = 0;
};

// Whitespace-separated columns, blank line = sentence boundary, lines
// starting with -DOCSTART- skipped, CRLF tolerated. Surface forms are never
// modified. Throws ParseError (with the line number) on ragged rows and an
// Error when the file holds no sentences.
std::vector<TaggedSentence> read_conll(const std::string& path,
                                       std::size_t token_column,
                                       std::size_t label_column);

// Label-free variant for tagging raw token files; an empty stream is fine.
std::vector<std::vector<std::string>> read_token_sentences(
    std::istream& in, std::size_t token_column);

void write_conll(std::ostream& out, const std::vector<TaggedSentence>& sentences);

// ------- tagging schemes -------

struct Span {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  auto operator<=>(const Span&) const = default;
};

// IOB1/IOB2 to BIOES. An I- tag that cannot continue the previous span (IOB1
// style) is first repaired to B-. Span boundaries are preserved exactly;
// malformed prefixes raise ParseError.
std::vector<std::string> to_bioes(const std::vector<std::string>& labels);

// Total span extraction from possibly inconsistent BIOES output. Stray I-/E-
// open a new span, an unterminated span closes at its last token; every such
// resolution increments `repairs`.
struct SpanExtraction {
  std::vector<Span> spans;
  std::size_t repairs = 0;
};
SpanExtraction from_bioes(const std::vector<std::string>& labels);

bool bioes_consistent(const std::vector<std::string>& labels);

// Renders a span layout of length n as IOB2 labels (test/tool helper).
std::vector<std::string> spans_to_iob2(const std::vector<Span>& spans,
                                       std::size_t n);

// ------- pretrained embeddings -------

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<ad::Scalar>> vectors;
  std::vector<ad::Scalar> unknown_vector;

  bool contains(const std::string& word) const {
    return vectors.count(word) > 0;
  }
  // Never fails; unseen words fall back to unknown_vector.
  const std::vector<ad::Scalar>& lookup(const std::string& word) const;
};

// Text format: one entry per line, word then `dim` floats; an optional
// "count dim" header line is auto-detected. Words are kept verbatim
// (case-sensitive). Dimension mismatches raise ParseError with the line.
EmbeddingTable load_embeddings(const std::string& path,
                               std::size_t expected_dim, RngState& rng);

// ------- batching -------

// Shuffled index batches; the final short batch is kept. Identical rng state
// gives identical composition.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                   std::size_t batch_size,
                                                   RngState& rng);

// ------- corpus -------

struct Corpus {
  std::vector<TaggedSentence> train, dev, test;
  CharVocab char_vocab;                        // built from train only
  std::vector<std::string> tag_labels;         // closed over all splits
  TaskKind task = TaskKind::ner;
  std::unordered_set<std::string> train_words;
};

struct CorpusPaths {
  std::string train, dev, test;  // dev/test may be empty
  std::size_t token_column = 0;
  std::size_t label_column = 1;
};

// Loads the splits, converts NER/chunking labels to BIOES when they are not
// already in that scheme, builds the character vocabulary from the training
// split and closes the tag set over all splits.
Corpus load_corpus(const CorpusPaths& paths, TaskKind task);

// JSON report: sentence/token counts, tag histogram, and OOV rates against
// an optional embedding vocabulary.
std::string corpus_stats_json(const Corpus& corpus,
                              const EmbeddingTable* embeddings);

}  // namespace intnet
