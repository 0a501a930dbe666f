#include "intnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "intnet/serialize.hpp"

namespace intnet {

using ad::Mode;
using ad::NodePtr;
using ad::Scalar;

nlohmann::json to_json(const EncoderConfig& c) {
  return nlohmann::json{{"kind", to_string(c.kind)},
                        {"d_char", c.d_char},
                        {"kernel_sizes", c.kernel_sizes},
                        {"m0", c.m0},
                        {"m_block", c.m_block},
                        {"layers", c.layers},
                        {"bottleneck_multiplier", c.bottleneck_multiplier},
                        {"char_lstm_hidden", c.char_lstm_hidden},
                        {"char_cnn_filters", c.char_cnn_filters},
                        {"char_cnn_kernel", c.char_cnn_kernel}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.kind = encoder_kind_from_string(j.value("kind", std::string("intnet")));
  c.d_char = j.value("d_char", c.d_char);
  c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
  c.m0 = j.value("m0", c.m0);
  c.m_block = j.value("m_block", c.m_block);
  c.layers = j.value("layers", c.layers);
  c.bottleneck_multiplier = j.value("bottleneck_multiplier", c.bottleneck_multiplier);
  c.char_lstm_hidden = j.value("char_lstm_hidden", c.char_lstm_hidden);
  c.char_cnn_filters = j.value("char_cnn_filters", c.char_cnn_filters);
  c.char_cnn_kernel = j.value("char_cnn_kernel", c.char_cnn_kernel);
  return c;
}

nlohmann::json to_json(const ModelSpec& spec) {
  return nlohmann::json{{"encoder", to_json(spec.encoder)},
                        {"lstm_hidden", spec.lstm_hidden},
                        {"word_dim", spec.word_dim},
                        {"use_word_embeddings", spec.use_word_embeddings},
                        {"use_stop", spec.use_stop}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  if (j.contains("encoder")) spec.encoder = encoder_config_from_json(j["encoder"]);
  spec.lstm_hidden = j.value("lstm_hidden", spec.lstm_hidden);
  spec.word_dim = j.value("word_dim", spec.word_dim);
  spec.use_word_embeddings = j.value("use_word_embeddings", spec.use_word_embeddings);
  spec.use_stop = j.value("use_stop", spec.use_stop);
  return spec;
}

std::size_t token_input_dim(const ModelSpec& spec) {
  std::size_t d = encoder_output_dim(spec.encoder);
  if (spec.use_word_embeddings) d += spec.word_dim;
  return d;
}

TaggerModel::TaggerModel(ModelSpec spec, TaskKind task, CharVocab char_vocab,
                         WordVocab word_vocab, TagSet tags,
                         std::uint64_t init_seed,
                         const EmbeddingTable* pretrained)
    : spec_(std::move(spec)),
      task_(task),
      char_vocab_(std::move(char_vocab)),
      word_vocab_(std::move(word_vocab)),
      tags_(std::move(tags)) {
  spec_.encoder.validate();
  if (spec_.encoder.kind == EncoderKind::none && !spec_.use_word_embeddings) {
    throw ConfigError("model needs word embeddings or a character encoder");
  }
  if (spec_.use_word_embeddings && spec_.word_dim == 0) {
    throw ConfigError("word_dim must be positive");
  }
  if (spec_.lstm_hidden == 0) {
    throw ConfigError("lstm hidden size must be positive");
  }
  if (tags_.size() == 0) throw ConfigError("empty tag set");
  if (pretrained != nullptr && spec_.use_word_embeddings &&
      pretrained->dim != spec_.word_dim) {
    throw ConfigError("embedding file dimension does not match word_dim");
  }

  RngState rng = RngState(init_seed).split("init");
  encoder_ = make_encoder(spec_.encoder, store_, char_vocab_.size(), rng);
  if (spec_.use_word_embeddings) {
    const std::size_t V = word_vocab_.size();
    const std::size_t D = spec_.word_dim;
    const Scalar bound = std::sqrt(Scalar(3) / static_cast<Scalar>(D));
    std::vector<Scalar> table(D * V);
    for (std::size_t c = 0; c < V; ++c) {
      const std::vector<Scalar>* vec = nullptr;
      if (pretrained != nullptr) {
        auto it = pretrained->vectors.find(word_vocab_.words[c]);
        if (it != pretrained->vectors.end()) vec = &it->second;
      }
      if (vec != nullptr) {
        for (std::size_t r = 0; r < D; ++r) table[r * V + c] = (*vec)[r];
      } else {
        for (std::size_t r = 0; r < D; ++r) {
          table[r * V + c] = rng.uniform(-bound, bound);
        }
      }
    }
    word_table_ = store_.add("word_table", {D, V}, std::move(table));
  }
  const std::size_t d_in = token_input_dim(spec_);
  fwd_ = make_lstm_cell(store_, "lstm.fwd", d_in, spec_.lstm_hidden, rng);
  bwd_ = make_lstm_cell(store_, "lstm.bwd", d_in, spec_.lstm_hidden, rng);
  crf_ = make_crf(store_, "crf", tags_.size(), 2 * spec_.lstm_hidden, rng,
                  spec_.use_stop);
}

std::unique_ptr<TaggerModel> TaggerModel::build(const ModelSpec& spec,
                                                const Corpus& corpus,
                                                const EmbeddingTable* pretrained,
                                                std::uint64_t seed) {
  WordVocab wv;
  for (const auto& s : corpus.train) {
    for (const auto& tok : s.tokens) wv.add(tok);
  }
  if (pretrained != nullptr && spec.use_word_embeddings) {
    for (const auto* split : {&corpus.dev, &corpus.test}) {
      for (const auto& s : *split) {
        for (const auto& tok : s.tokens) {
          if (pretrained->contains(tok)) wv.add(tok);
        }
      }
    }
  }
  auto model = std::make_unique<TaggerModel>(
      spec, corpus.task, corpus.char_vocab, std::move(wv),
      TagSet::from(corpus.tag_labels), seed, pretrained);
  std::unordered_set<std::string> emb;
  if (pretrained != nullptr) {
    emb.reserve(pretrained->vectors.size());
    for (const auto& [w, v] : pretrained->vectors) emb.insert(w);
  }
  model->set_vocab_sets(corpus.train_words, std::move(emb));
  return model;
}

void TaggerModel::set_vocab_sets(std::unordered_set<std::string> train_words,
                                 std::unordered_set<std::string> embedding_words) {
  train_words_ = std::move(train_words);
  embedding_words_ = std::move(embedding_words);
}

std::vector<NodePtr> TaggerModel::token_inputs(
    const std::vector<std::string>& tokens, Mode mode, Scalar dropout_rate,
    RngState* rng) {
  if (tokens.empty()) throw ContractError("empty sentence");
  std::vector<NodePtr> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    std::vector<NodePtr> parts;
    if (word_table_) {
      parts.push_back(ad::column(word_table_, word_vocab_.lookup(tok)));
    }
    if (encoder_) {
      const auto ids = char_vocab_.encode(tok);
      parts.push_back(
          encoder_->encode(ids, DropoutSpec{mode, dropout_rate, rng}));
    }
    NodePtr x = parts.size() == 1 ? parts[0] : ad::concat_vec(parts);
    out.push_back(ad::dropout(x, dropout_rate, mode, rng));
  }
  return out;
}

std::vector<int> TaggerModel::tag_ids(
    const std::vector<std::string>& labels) const {
  std::vector<int> ids;
  ids.reserve(labels.size());
  for (const auto& label : labels) {
    ids.push_back(static_cast<int>(tags_.lookup(label)));
  }
  return ids;
}

NodePtr TaggerModel::sentence_nll(const std::vector<std::string>& tokens,
                                  const std::vector<int>& ids, Mode mode,
                                  Scalar dropout_rate, RngState* rng) {
  if (ids.size() != tokens.size()) {
    throw ContractError("sentence_nll: token/label count mismatch");
  }
  auto inputs = token_inputs(tokens, mode, dropout_rate, rng);
  auto bi = bilstm_forward(inputs, fwd_, bwd_);
  std::vector<NodePtr> h;
  h.reserve(bi.concat.size());
  for (const auto& ht : bi.concat) {
    h.push_back(ad::dropout(ht, dropout_rate, mode, rng));
  }
  return crf_nll(h, ids, crf_);
}

std::vector<std::string> TaggerModel::predict(
    const std::vector<std::string>& tokens) {
  auto inputs = token_inputs(tokens, Mode::eval, 0, nullptr);
  auto bi = bilstm_forward(inputs, fwd_, bwd_);
  auto path = viterbi(std::span<const NodePtr>(bi.concat), crf_);
  std::vector<std::string> labels;
  labels.reserve(path.tags.size());
  for (int y : path.tags) {
    labels.push_back(tags_.labels[static_cast<std::size_t>(y)]);
  }
  return labels;
}

NodePtr TaggerModel::encode_word(const std::string& word, Mode mode) {
  if (!encoder_) {
    throw ConfigError("model was built without a character encoder");
  }
  const auto ids = char_vocab_.encode(word);
  return encoder_->encode(ids, DropoutSpec{mode, 0, nullptr});
}

TaggerModel::Snapshot TaggerModel::snapshot() const {
  Snapshot snap;
  for (const auto& p : store_.all()) snap.values.push_back(p.tensor->value);
  for (const auto& [name, st] : store_.state()) {
    snap.bn_mean.push_back(st->running_mean);
    snap.bn_var.push_back(st->running_var);
    snap.bn_updates.push_back(st->updates);
  }
  return snap;
}

void TaggerModel::restore(const Snapshot& snap) {
  const auto& params = store_.all();
  if (snap.values.size() != params.size() ||
      snap.bn_mean.size() != store_.state().size()) {
    throw ContractError("snapshot does not match this model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].tensor->value = snap.values[i];
  }
  for (std::size_t i = 0; i < store_.state().size(); ++i) {
    auto* st = store_.state()[i].second;
    st->running_mean = snap.bn_mean[i];
    st->running_var = snap.bn_var[i];
    st->updates = snap.bn_updates[i];
  }
}

namespace {

constexpr char kMagic[] = "INTNETCKPT1\n";
constexpr std::size_t kMagicLen = 12;

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(double));
}

double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(double));
  return v;
}

std::vector<std::string> sorted(const std::unordered_set<std::string>& s) {
  std::vector<std::string> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

void TaggerModel::save(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());

  nlohmann::json header;
  header["format"] = "intnet-checkpoint";
  header["version"] = 1;
  header["task"] = to_string(task_);
  header["spec"] = to_json(spec_);
  header["char_vocab"] = char_vocab_.chars;
  header["word_vocab"] = word_vocab_.words;
  header["tags"] = tags_.labels;
  header["train_words"] = sorted(train_words_);
  header["embedding_words"] = sorted(embedding_words_);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& prm : store_.all()) {
    params.push_back({{"name", prm.name}, {"shape", prm.tensor->shape}});
  }
  header["params"] = params;
  nlohmann::json state = nlohmann::json::array();
  for (const auto& [name, st] : store_.state()) {
    state.push_back({{"name", name},
                     {"channels", st->running_mean.size()},
                     {"updates", st->updates}});
  }
  header["state"] = state;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(kMagic, kMagicLen);
  const std::uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& prm : store_.all()) {
    for (Scalar v : prm.tensor->value) write_f64(out, static_cast<double>(v));
  }
  for (const auto& [name, st] : store_.state()) {
    for (Scalar v : st->running_mean) write_f64(out, static_cast<double>(v));
    for (Scalar v : st->running_var) write_f64(out, static_cast<double>(v));
  }
  if (!out) throw Error("failed while writing checkpoint: " + path);
}

std::unique_ptr<TaggerModel> TaggerModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw ParseError("not an intnet checkpoint: " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint header: " + std::string(e.what()));
  }
  if (header.value("version", 0) != 1) {
    throw ParseError("unsupported checkpoint version");
  }

  ModelSpec spec = model_spec_from_json(header.at("spec"));
  TaskKind task = task_from_string(header.at("task").get<std::string>());
  CharVocab cv = CharVocab::from_list(
      header.at("char_vocab").get<std::vector<std::string>>());
  WordVocab wv = WordVocab::from_list(
      header.at("word_vocab").get<std::vector<std::string>>());
  TagSet tags =
      TagSet::from(header.at("tags").get<std::vector<std::string>>());

  auto model = std::make_unique<TaggerModel>(spec, task, std::move(cv),
                                             std::move(wv), std::move(tags),
                                             0, nullptr);

  const auto& manifest = header.at("params");
  const auto& params = model->store_.all();
  if (manifest.size() != params.size()) {
    throw ParseError("checkpoint parameter manifest does not match model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("shape").get<ad::Shape>() != params[i].tensor->shape) {
      throw ParseError("checkpoint tensor mismatch at " + params[i].name);
    }
    for (auto& v : params[i].tensor->value) {
      v = static_cast<Scalar>(read_f64(in));
    }
  }
  const auto& state_manifest = header.at("state");
  if (state_manifest.size() != model->store_.state().size()) {
    throw ParseError("checkpoint state manifest does not match model");
  }
  for (std::size_t i = 0; i < state_manifest.size(); ++i) {
    auto* st = model->store_.state()[i].second;
    if (state_manifest[i].at("channels").get<std::size_t>() !=
        st->running_mean.size()) {
      throw ParseError("checkpoint state mismatch at " +
                       model->store_.state()[i].first);
    }
    for (auto& v : st->running_mean) v = static_cast<Scalar>(read_f64(in));
    for (auto& v : st->running_var) v = static_cast<Scalar>(read_f64(in));
    st->updates = state_manifest[i].at("updates").get<std::uint64_t>();
  }
  if (!in) throw ParseError("truncated checkpoint payload: " + path);

  std::unordered_set<std::string> train_words, emb_words;
  for (const auto& w : header.value("train_words", std::vector<std::string>{})) {
    train_words.insert(w);
  }
  for (const auto& w :
       header.value("embedding_words", std::vector<std::string>{})) {
    emb_words.insert(w);
  }
  model->set_vocab_sets(std::move(train_words), std::move(emb_words));
  return model;
}

NeighborList nearest_neighbors(TaggerModel& model, const std::string& query,
                               const std::vector<std::string>& candidates,
                               std::size_t k) {
  if (k == 0) throw ConfigError("nearest_neighbors: k must be >= 1");
  NeighborList out;
  auto encode = [&](const std::string& w) {
    return model.encode_word(w, Mode::eval)->value;
  };
  auto norm = [](const std::vector<Scalar>& v) {
    double n = 0;
    for (Scalar x : v) n += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(n);
  };
  const auto qv = encode(query);
  const double qn = norm(qv);
  if (qn == 0) {
    out.excluded.push_back(query);
    return out;
  }
  std::vector<std::pair<double, std::string>> scored;
  std::unordered_set<std::string> seen;
  for (const auto& w : candidates) {
    if (w == query || !seen.insert(w).second) continue;
    const auto cv = encode(w);
    const double cn = norm(cv);
    if (cn == 0) {
      out.excluded.push_back(w);
      continue;
    }
    double dot = 0;
    for (std::size_t i = 0; i < cv.size(); ++i) {
      dot += static_cast<double>(qv[i]) * static_cast<double>(cv[i]);
    }
    scored.emplace_back(dot / (qn * cn), w);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) {
    out.neighbors.emplace_back(scored[i].second, scored[i].first);
  }
  return out;
}

}  // namespace intnet
