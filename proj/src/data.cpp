#include "intnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace intnet {

using ad::Scalar;

TaskKind task_from_string(const std::string& s) {
  if (s == "ner") return TaskKind::ner;
  if (s == "pos") return TaskKind::pos;
  if (s == "chunk") return TaskKind::chunk;
  throw ConfigError("unknown task kind: " + s);
}

const char* to_string(TaskKind task) {
  switch (task) {
    case TaskKind::ner: return "ner";
    case TaskKind::pos: return "pos";
    case TaskKind::chunk: return "chunk";
  }
  return "?";
}

namespace {

std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_docstart(const std::string& line) {
  return line.rfind("-DOCSTART-", 0) == 0;
}

}  // namespace

std::vector<TaggedSentence> read_conll(const std::string& path,
                                       std::size_t token_column,
                                       std::size_t label_column) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  const std::size_t need = std::max(token_column, label_column) + 1;

  std::vector<TaggedSentence> sentences;
  TaggedSentence cur;
  cur.origin_file = path;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      cur.line_end = line_no - 1;
      sentences.push_back(cur);
    }
    cur.tokens.clear();
    cur.labels.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto cols = split_columns(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (is_docstart(line)) continue;
    if (cols.size() < need) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": expected at least " << need
          << " columns, got " << cols.size();
      throw ParseError(msg.str());
    }
    if (cur.tokens.empty()) cur.line_begin = line_no;
    cur.tokens.push_back(cols[token_column]);
    cur.labels.push_back(cols[label_column]);
  }
  ++line_no;
  flush();
  if (sentences.empty()) throw Error("empty corpus: " + path);
  return sentences;
}

std::vector<std::vector<std::string>> read_token_sentences(
    std::istream& in, std::size_t token_column) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> cur;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto cols = split_columns(line);
    if (cols.empty()) {
      if (!cur.empty()) sentences.push_back(std::move(cur));
      cur = {};
      continue;
    }
    if (is_docstart(line)) continue;
    if (cols.size() <= token_column) {
      std::ostringstream msg;
      msg << "line " << line_no << ": expected at least " << token_column + 1
          << " columns, got " << cols.size();
      throw ParseError(msg.str());
    }
    cur.push_back(cols[token_column]);
  }
  if (!cur.empty()) sentences.push_back(std::move(cur));
  return sentences;
}

void write_conll(std::ostream& out,
                 const std::vector<TaggedSentence>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out << s.tokens[i];
      if (i < s.labels.size()) out << ' ' << s.labels[i];
      out << '\n';
    }
    out << '\n';
  }
}

namespace {

struct LabelParts {
  char prefix;       // 'O', 'B', 'I', 'E', 'S'
  std::string type;  // empty for O
};

// Strict parse for scheme conversion: only B-/I-/O are valid input.
LabelParts parse_iob(const std::string& label, std::size_t position) {
  if (label == "O") return {'O', ""};
  if (label.size() >= 3 && (label[0] == 'B' || label[0] == 'I') &&
      label[1] == '-') {
    return {label[0], label.substr(2)};
  }
  std::ostringstream msg;
  msg << "malformed IOB label '" << label << "' at position " << position;
  throw ParseError(msg.str());
}

// Total parse for span extraction; anything unrecognized reads as outside.
bool parse_bioes(const std::string& label, LabelParts& out) {
  if (label == "O") {
    out = {'O', ""};
    return true;
  }
  if (label.size() >= 3 && label[1] == '-' &&
      (label[0] == 'B' || label[0] == 'I' || label[0] == 'E' ||
       label[0] == 'S')) {
    out = {label[0], label.substr(2)};
    return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> to_bioes(const std::vector<std::string>& labels) {
  const std::size_t n = labels.size();
  std::vector<LabelParts> parts(n);
  for (std::size_t i = 0; i < n; ++i) parts[i] = parse_iob(labels[i], i);

  // IOB1 repair: an I- that does not continue a same-type span starts one.
  for (std::size_t i = 0; i < n; ++i) {
    if (parts[i].prefix != 'I') continue;
    const bool continues = i > 0 && parts[i - 1].prefix != 'O' &&
                           parts[i - 1].type == parts[i].type;
    if (!continues) parts[i].prefix = 'B';
  }

  std::vector<std::string> out(n, "O");
  std::size_t i = 0;
  while (i < n) {
    if (parts[i].prefix != 'B') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n && parts[j].prefix == 'I') ++j;
    const std::string& type = parts[i].type;
    if (j - i == 1) {
      out[i] = "S-" + type;
    } else {
      out[i] = "B-" + type;
      for (std::size_t t = i + 1; t + 1 < j; ++t) out[t] = "I-" + type;
      out[j - 1] = "E-" + type;
    }
    i = j;
  }
  return out;
}

SpanExtraction from_bioes(const std::vector<std::string>& labels) {
  SpanExtraction out;
  bool open = false;
  std::string open_type;
  std::size_t open_start = 0;

  auto close_at = [&](std::size_t end) {
    out.spans.push_back(Span{open_type, open_start, end});
    open = false;
  };

  for (std::size_t t = 0; t < labels.size(); ++t) {
    LabelParts p;
    if (!parse_bioes(labels[t], p)) {
      p = {'O', ""};
      ++out.repairs;
    }
    switch (p.prefix) {
      case 'O':
        if (open) {
          close_at(t - 1);
          ++out.repairs;
        }
        break;
      case 'B':
        if (open) {
          close_at(t - 1);
          ++out.repairs;
        }
        open = true;
        open_type = p.type;
        open_start = t;
        break;
      case 'S':
        if (open) {
          close_at(t - 1);
          ++out.repairs;
        }
        out.spans.push_back(Span{p.type, t, t});
        break;
      case 'I':
        if (open && open_type == p.type) break;  // extend
        if (open) {
          close_at(t - 1);
          ++out.repairs;
        }
        open = true;  // stray I- starts a span
        open_type = p.type;
        open_start = t;
        ++out.repairs;
        break;
      case 'E':
        if (open && open_type == p.type) {
          close_at(t);
          break;
        }
        if (open) {
          close_at(t - 1);
          ++out.repairs;
        }
        out.spans.push_back(Span{p.type, t, t});  // stray E- is a unit span
        ++out.repairs;
        break;
    }
  }
  if (open) {
    close_at(labels.size() - 1);
    ++out.repairs;
  }
  return out;
}

bool bioes_consistent(const std::vector<std::string>& labels) {
  return from_bioes(labels).repairs == 0;
}

std::vector<std::string> spans_to_iob2(const std::vector<Span>& spans,
                                       std::size_t n) {
  std::vector<std::string> labels(n, "O");
  for (const auto& s : spans) {
    labels.at(s.start) = "B-" + s.type;
    for (std::size_t t = s.start + 1; t <= s.end; ++t) {
      labels.at(t) = "I-" + s.type;
    }
  }
  return labels;
}

const std::vector<Scalar>& EmbeddingTable::lookup(const std::string& word) const {
  auto it = vectors.find(word);
  return it == vectors.end() ? unknown_vector : it->second;
}

namespace {

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

Scalar parse_float(const std::string& tok, const std::string& path,
                   std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    std::ostringstream msg;
    msg << path << ":" << line_no << ": bad float '" << tok << "'";
    throw ParseError(msg.str());
  }
  return static_cast<Scalar>(v);
}

}  // namespace

EmbeddingTable load_embeddings(const std::string& path,
                               std::size_t expected_dim, RngState& rng) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file: " + path);
  if (expected_dim == 0) throw ConfigError("embedding dimension must be positive");

  EmbeddingTable table;
  table.dim = expected_dim;
  const Scalar bound = std::sqrt(Scalar(3) / static_cast<Scalar>(expected_dim));
  table.unknown_vector.resize(expected_dim);
  for (auto& x : table.unknown_vector) x = rng.uniform(-bound, bound);

  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto cols = split_columns(line);
    if (cols.empty()) continue;
    if (first) {
      first = false;
      if (cols.size() == 2 && all_digits(cols[0]) && all_digits(cols[1])) {
        // "count dim" header
        const std::size_t dim = std::strtoull(cols[1].c_str(), nullptr, 10);
        if (dim != expected_dim) {
          std::ostringstream msg;
          msg << path << ":" << line_no << ": header dimension " << dim
              << " does not match expected " << expected_dim;
          throw ParseError(msg.str());
        }
        continue;
      }
    }
    if (cols.size() != expected_dim + 1) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": expected " << expected_dim
          << " values for word '" << cols[0] << "', got " << cols.size() - 1;
      throw ParseError(msg.str());
    }
    std::vector<Scalar> v(expected_dim);
    for (std::size_t i = 0; i < expected_dim; ++i) {
      v[i] = parse_float(cols[i + 1], path, line_no);
    }
    table.vectors[cols[0]] = std::move(v);
  }
  return table;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                   std::size_t batch_size,
                                                   RngState& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  for (std::size_t i = count; i-- > 1;) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(order[i], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    const std::size_t end = std::min(count, i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

Corpus load_corpus(const CorpusPaths& paths, TaskKind task) {
  Corpus corpus;
  corpus.task = task;
  corpus.train = read_conll(paths.train, paths.token_column, paths.label_column);
  if (!paths.dev.empty()) {
    corpus.dev = read_conll(paths.dev, paths.token_column, paths.label_column);
  }
  if (!paths.test.empty()) {
    corpus.test = read_conll(paths.test, paths.token_column, paths.label_column);
  }

  if (task != TaskKind::pos) {
    // Corpora already in BIOES are taken as-is; anything else goes through
    // the IOB repair + conversion. The decision is made on the training split
    // and applied uniformly.
    bool already_bioes = true;
    for (const auto& s : corpus.train) {
      if (!bioes_consistent(s.labels)) {
        already_bioes = false;
        break;
      }
    }
    if (!already_bioes) {
      for (auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
        for (auto& s : *split) s.labels = to_bioes(s.labels);
      }
    }
  }

  std::vector<std::string> train_tokens;
  for (const auto& s : corpus.train) {
    for (const auto& t : s.tokens) {
      train_tokens.push_back(t);
      corpus.train_words.insert(t);
    }
  }
  corpus.char_vocab = CharVocab::build(train_tokens);

  std::unordered_set<std::string> seen;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& s : *split) {
      for (const auto& label : s.labels) {
        if (seen.insert(label).second) corpus.tag_labels.push_back(label);
      }
    }
  }
  return corpus;
}

std::string corpus_stats_json(const Corpus& corpus,
                              const EmbeddingTable* embeddings) {
  nlohmann::json j;
  auto split_stats = [](const std::vector<TaggedSentence>& split) {
    std::size_t tokens = 0;
    for (const auto& s : split) tokens += s.tokens.size();
    return nlohmann::json{{"sentences", split.size()}, {"tokens", tokens}};
  };
  j["task"] = to_string(corpus.task);
  j["train"] = split_stats(corpus.train);
  j["dev"] = split_stats(corpus.dev);
  j["test"] = split_stats(corpus.test);

  std::map<std::string, std::size_t> hist;
  for (const auto& s : corpus.train) {
    for (const auto& label : s.labels) ++hist[label];
  }
  j["tag_histogram"] = hist;
  j["characters"] = corpus.char_vocab.size();

  auto oov_rate = [&](const std::vector<TaggedSentence>& split,
                      bool vs_embeddings) -> double {
    std::size_t total = 0, oov = 0;
    for (const auto& s : split) {
      for (const auto& t : s.tokens) {
        ++total;
        const bool known = vs_embeddings ? embeddings->contains(t)
                                         : corpus.train_words.count(t) > 0;
        if (!known) ++oov;
      }
    }
    return total == 0 ? 0.0 : static_cast<double>(oov) / static_cast<double>(total);
  };
  nlohmann::json oov;
  oov["dev_vs_train"] = oov_rate(corpus.dev, false);
  oov["test_vs_train"] = oov_rate(corpus.test, false);
  if (embeddings != nullptr) {
    oov["train_vs_embeddings"] = oov_rate(corpus.train, true);
    oov["dev_vs_embeddings"] = oov_rate(corpus.dev, true);
    oov["test_vs_embeddings"] = oov_rate(corpus.test, true);
  }
  j["oov_rates"] = oov;
  return j.dump(2);
}

}  // namespace intnet
