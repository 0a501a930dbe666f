#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "intnet/config.hpp"
#include "intnet/gradcheck.hpp"
#include "intnet/model.hpp"
#include "intnet/serialize.hpp"
#include "intnet/train.hpp"

namespace fs = std::filesystem;
using namespace intnet;

namespace {

// Exit codes: 0 success, 1 user/config error, 2 numeric failure.
constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kNumericError = 2;

void apply_encoder_flag(ExperimentConfig& cfg, const std::string& flag) {
  auto& e = cfg.model.encoder;
  if (flag == "intnet5") {
    e.kind = EncoderKind::intnet;
    e.layers = 5;
  } else if (flag == "intnet9") {
    e.kind = EncoderKind::intnet;
    e.layers = 9;
  } else if (flag == "charlstm") {
    e.kind = EncoderKind::char_lstm;
  } else if (flag == "charcnn") {
    e.kind = EncoderKind::char_cnn;
  } else if (flag == "none") {
    e.kind = EncoderKind::none;
  } else {
    throw ConfigError("unknown --encoder value: " + flag);
  }
}

fs::path resolve_run_dir(const std::string& output_dir) {
  fs::path out(output_dir);
  const char* root = std::getenv("INTNET_RUN_ROOT");
  if (root != nullptr && *root != '\0' && out.is_relative()) {
    out = fs::path(root) / out;
  }
  return out;
}

std::vector<std::string> read_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word list: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

int run_train(const std::string& config_path, const std::string& encoder_flag,
              std::size_t seeds) {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
  if (!encoder_flag.empty()) apply_encoder_flag(cfg, encoder_flag);
  cfg.validate();
  if (seeds == 0) throw ConfigError("--seeds must be at least 1");

  Corpus corpus = load_corpus(cfg.data, cfg.task);
  EmbeddingTable embeddings;
  const bool have_embeddings = !cfg.embeddings_path.empty();
  if (have_embeddings) {
    RngState emb_rng = RngState(cfg.train.seed).split("embeddings");
    embeddings = load_embeddings(cfg.embeddings_path, cfg.model.word_dim, emb_rng);
  }

  const fs::path base_dir = resolve_run_dir(cfg.output_dir);
  bool any_diverged = false;
  for (std::size_t i = 0; i < seeds; ++i) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.train.seed = cfg.train.seed + i;
    const fs::path run_dir =
        seeds == 1 ? base_dir
                   : base_dir / ("seed-" + std::to_string(run_cfg.train.seed));
    fs::create_directories(run_dir);
    run_cfg.output_dir = run_dir.string();

    auto model = TaggerModel::build(run_cfg.model, corpus,
                                    have_embeddings ? &embeddings : nullptr,
                                    run_cfg.train.seed);
    std::cerr << "training (seed " << run_cfg.train.seed << ", "
              << model->params().value_count() << " parameters)\n";
    TrainResult result = train_model(*model, corpus, run_cfg.train, &std::cerr);

    {
      std::ofstream out(run_dir / "resolved-config.json");
      out << run_cfg.to_json() << '\n';
    }
    {
      std::ofstream out(run_dir / "history.jsonl");
      for (const auto& log : result.history) out << log.to_json() << '\n';
    }
    model->save((run_dir / "checkpoint.intnet").string());
    std::cerr << "stopped: " << result.stop_reason << " (best epoch "
              << result.best_epoch << ", dev metric " << result.best_metric
              << ")\n";
    if (result.diverged) any_diverged = true;
  }
  if (any_diverged) {
    std::cerr << "error: training diverged; wrote the last good checkpoint\n";
    return kNumericError;
  }
  return kOk;
}

int run_eval(const std::string& checkpoint, const std::string& data_path,
             const std::string& format, std::size_t token_column,
             std::size_t label_column) {
  auto model = TaggerModel::load(checkpoint);
  auto sentences = read_conll(data_path, token_column, label_column);
  if (model->task() != TaskKind::pos) {
    bool already = true;
    for (const auto& s : sentences) {
      if (!bioes_consistent(s.labels)) {
        already = false;
        break;
      }
    }
    if (!already) {
      for (auto& s : sentences) s.labels = to_bioes(s.labels);
    }
  }
  for (const auto& s : sentences) {
    for (const auto& label : s.labels) {
      if (!model->tags().contains(label)) {
        throw ConfigError("tag-set mismatch: label '" + label +
                          "' is not in the checkpoint tag set");
      }
    }
  }

  std::vector<std::vector<std::string>> pred, gold, tokens;
  for (const auto& s : sentences) {
    pred.push_back(model->predict(s.tokens));
    gold.push_back(s.labels);
    tokens.push_back(s.tokens);
  }
  EvalVocab vocab;
  vocab.train_words = &model->train_words();
  vocab.embedding_words = &model->embedding_words();
  EvalReport report =
      evaluate_sequences(pred, gold, model->task(), &tokens, &vocab);

  if (format == "conll") {
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      for (std::size_t t = 0; t < sentences[s].tokens.size(); ++t) {
        std::cout << sentences[s].tokens[t] << ' ' << gold[s][t] << ' '
                  << pred[s][t] << '\n';
      }
      std::cout << '\n';
    }
  } else {
    std::cout << report.to_json() << '\n';
  }
  return kOk;
}

int run_tag(const std::string& checkpoint, const std::string& data_path,
            std::size_t token_column) {
  auto model = TaggerModel::load(checkpoint);
  std::ifstream file;
  std::istream* in = &std::cin;
  if (data_path != "-") {
    file.open(data_path);
    if (!file) throw Error("cannot open input: " + data_path);
    in = &file;
  }

  std::vector<std::string> sentence;
  auto emit = [&] {
    if (sentence.empty()) return;
    auto labels = model->predict(sentence);
    for (std::size_t t = 0; t < sentence.size(); ++t) {
      std::cout << sentence[t] << ' ' << labels[t] << '\n';
    }
    std::cout << '\n' << std::flush;  // one sentence at a time
    sentence.clear();
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("-DOCSTART-", 0) == 0) continue;
    std::vector<std::string> cols;
    {
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) cols.push_back(line.substr(i, j - i));
        i = j;
      }
    }
    if (cols.empty()) {
      emit();
      continue;
    }
    if (cols.size() <= token_column) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": missing token column");
    }
    sentence.push_back(cols[token_column]);
  }
  emit();
  return kOk;
}

int run_probe(const std::string& checkpoint, const std::string& words_path,
              std::size_t k, const std::vector<std::string>& queries,
              bool dump_z) {
  auto model = TaggerModel::load(checkpoint);
  auto words = read_word_list(words_path);

  if (dump_z) {
    char buf[64];
    for (const auto& w : words) {
      auto z = model->encode_word(w, ad::Mode::eval);
      std::cout << w << '\t';
      for (std::size_t i = 0; i < z->size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6g", static_cast<double>(z->value[i]));
        if (i) std::cout << ' ';
        std::cout << buf;
      }
      std::cout << '\n';
    }
    return kOk;
  }

  const std::vector<std::string>& qs = queries.empty() ? words : queries;
  char buf[64];
  for (const auto& q : qs) {
    auto result = nearest_neighbors(*model, q, words, k);
    for (const auto& skipped : result.excluded) {
      std::cerr << "warning: zero-norm encoding for '" << skipped
                << "', excluded\n";
    }
    std::cout << q;
    for (const auto& [word, cosine] : result.neighbors) {
      std::snprintf(buf, sizeof(buf), "%.6f", cosine);
      std::cout << '\t' << word << ' ' << buf;
    }
    std::cout << '\n';
  }
  return kOk;
}

int run_gradcheck(std::uint64_t seed) {
  auto results = run_gradcheck_suite(seed);
  ad::Scalar worst = 0;
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-24s %12.3e  (threshold %.0e)  %s\n", r.name.c_str(),
                static_cast<double>(r.error), static_cast<double>(r.threshold),
                r.pass() ? "pass" : "FAIL");
    worst = std::max(worst, r.error);
    ok = ok && r.pass();
  }
  std::printf("worst relative error: %.3e\n", static_cast<double>(worst));
  return ok ? kOk : kNumericError;
}

int run_stats(const std::string& config_path) {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
  cfg.validate();
  Corpus corpus = load_corpus(cfg.data, cfg.task);
  EmbeddingTable embeddings;
  const EmbeddingTable* emb = nullptr;
  if (!cfg.embeddings_path.empty()) {
    RngState rng = RngState(cfg.train.seed).split("embeddings");
    embeddings = load_embeddings(cfg.embeddings_path, cfg.model.word_dim, rng);
    emb = &embeddings;
  }
  std::cout << corpus_stats_json(corpus, emb) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intnet: character-to-word encoders with a BiLSTM-CRF tagger"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, data_path = "-", format = "json";
  std::string encoder_flag, words_path;
  std::size_t token_column = 0, label_column = 1, k = 5, seeds = 1;
  std::uint64_t gc_seed = 42;
  std::vector<std::string> queries;
  bool dump_z = false;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "experiment config file")->required();
  train->add_option("--encoder", encoder_flag,
                    "override the encoder: intnet5|intnet9|charlstm|charcnn|none");
  train->add_option("--seeds", seeds, "number of consecutive seeds to run");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labeled data");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data_path, "CoNLL file with gold labels")->required();
  eval->add_option("--format", format, "json|conll")
      ->check(CLI::IsMember({"json", "conll"}));
  eval->add_option("--token-column", token_column, "token column index");
  eval->add_option("--label-column", label_column, "label column index");

  auto* tag = app.add_subcommand("tag", "tag raw tokens (one per line)");
  tag->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  tag->add_option("--data", data_path, "token file, or - for stdin");
  tag->add_option("--token-column", token_column, "token column index");

  auto* probe = app.add_subcommand("probe", "character-encoder neighbor probes");
  probe->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  probe->add_option("--words", words_path, "candidate word list")->required();
  probe->add_option("--k", k, "neighbors per query");
  probe->add_option("--query", queries, "query word (repeatable)");
  probe->add_flag("--dump-z", dump_z, "dump z vectors instead of neighbors");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of every operation");
  gradcheck->add_option("--seed", gc_seed, "fixture seed");

  auto* stats = app.add_subcommand("stats", "corpus statistics as JSON");
  stats->add_option("--config", config_path, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (train->parsed()) return run_train(config_path, encoder_flag, seeds);
    if (eval->parsed()) {
      return run_eval(checkpoint, data_path, format, token_column, label_column);
    }
    if (tag->parsed()) return run_tag(checkpoint, data_path, token_column);
    if (probe->parsed()) {
      if (!dump_z && k == 0) {
        std::cerr << "usage error: --k must be at least 1\n";
        return kUserError;
      }
      return run_probe(checkpoint, words_path, k, queries, dump_z);
    }
    if (gradcheck->parsed()) return run_gradcheck(gc_seed);
    if (stats->parsed()) return run_stats(config_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }
  return kUserError;
}
