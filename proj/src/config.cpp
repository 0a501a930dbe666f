#include "intnet/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "intnet/serialize.hpp"

namespace intnet {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct KeyValue {
  std::string section, key, value;
  std::size_t line;
};

std::vector<KeyValue> parse_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  std::vector<KeyValue> out;
  std::string section, line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected key = value");
    }
    out.push_back(KeyValue{section, trim(line.substr(0, eq)),
                           trim(line.substr(eq + 1)), line_no});
  }
  return out;
}

bool parse_bool(const KeyValue& kv, const std::string& path) {
  if (kv.value == "true" || kv.value == "1" || kv.value == "yes") return true;
  if (kv.value == "false" || kv.value == "0" || kv.value == "no") return false;
  throw ParseError(path + ":" + std::to_string(kv.line) + ": bad boolean '" +
                   kv.value + "'");
}

std::uint64_t parse_uint(const KeyValue& kv, const std::string& path) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(kv.value.c_str(), &end, 10);
  if (end == kv.value.c_str() || *end != '\0') {
    throw ParseError(path + ":" + std::to_string(kv.line) + ": bad integer '" +
                     kv.value + "'");
  }
  return v;
}

double parse_double(const KeyValue& kv, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(kv.value.c_str(), &end);
  if (end == kv.value.c_str() || *end != '\0') {
    throw ParseError(path + ":" + std::to_string(kv.line) + ": bad number '" +
                     kv.value + "'");
  }
  return v;
}

std::vector<std::size_t> parse_size_list(const KeyValue& kv,
                                         const std::string& path) {
  std::vector<std::size_t> out;
  std::stringstream ss(kv.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    KeyValue sub{kv.section, kv.key, item, kv.line};
    out.push_back(static_cast<std::size_t>(parse_uint(sub, path)));
  }
  if (out.empty()) {
    throw ParseError(path + ":" + std::to_string(kv.line) + ": empty list");
  }
  return out;
}

std::string resolve_path(const std::filesystem::path& base,
                         const std::string& value) {
  if (value.empty()) return value;
  std::filesystem::path p(value);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (base / p).lexically_normal().string();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  ExperimentConfig cfg;
  const std::filesystem::path base =
      std::filesystem::absolute(std::filesystem::path(path)).parent_path();

  for (const auto& kv : parse_ini(path)) {
    const std::string where = kv.section + "." + kv.key;
    if (kv.section == "data") {
      if (kv.key == "train") cfg.data.train = resolve_path(base, kv.value);
      else if (kv.key == "dev") cfg.data.dev = resolve_path(base, kv.value);
      else if (kv.key == "test") cfg.data.test = resolve_path(base, kv.value);
      else if (kv.key == "token_column") cfg.data.token_column = parse_uint(kv, path);
      else if (kv.key == "label_column") cfg.data.label_column = parse_uint(kv, path);
      else if (kv.key == "task") cfg.task = task_from_string(kv.value);
      else if (kv.key == "embeddings") cfg.embeddings_path = resolve_path(base, kv.value);
      else if (kv.key == "embedding_dim") cfg.model.word_dim = parse_uint(kv, path);
      else throw ConfigError("unknown config key: " + where);
    } else if (kv.section == "encoder") {
      auto& e = cfg.model.encoder;
      if (kv.key == "kind") e.kind = encoder_kind_from_string(kv.value);
      else if (kv.key == "d_char") e.d_char = parse_uint(kv, path);
      else if (kv.key == "kernel_sizes") e.kernel_sizes = parse_size_list(kv, path);
      else if (kv.key == "m0") e.m0 = parse_uint(kv, path);
      else if (kv.key == "m_block") e.m_block = parse_uint(kv, path);
      else if (kv.key == "layers") e.layers = parse_uint(kv, path);
      else if (kv.key == "bottleneck_multiplier") e.bottleneck_multiplier = parse_uint(kv, path);
      else if (kv.key == "char_lstm_hidden") e.char_lstm_hidden = parse_uint(kv, path);
      else if (kv.key == "char_cnn_filters") e.char_cnn_filters = parse_uint(kv, path);
      else if (kv.key == "char_cnn_kernel") e.char_cnn_kernel = parse_uint(kv, path);
      else throw ConfigError("unknown config key: " + where);
    } else if (kv.section == "tagger") {
      if (kv.key == "hidden") cfg.model.lstm_hidden = parse_uint(kv, path);
      else if (kv.key == "use_word_embeddings") cfg.model.use_word_embeddings = parse_bool(kv, path);
      else if (kv.key == "use_stop") cfg.model.use_stop = parse_bool(kv, path);
      else throw ConfigError("unknown config key: " + where);
    } else if (kv.section == "train") {
      auto& t = cfg.train;
      if (kv.key == "eta0") t.eta0 = parse_double(kv, path);
      else if (kv.key == "rho") t.rho = parse_double(kv, path);
      else if (kv.key == "momentum") t.momentum = parse_double(kv, path);
      else if (kv.key == "batch_size") t.batch_size = parse_uint(kv, path);
      else if (kv.key == "clip_norm") t.clip_norm = parse_double(kv, path);
      else if (kv.key == "clip_mode") {
        if (kv.value == "norm") t.clip_by_value = false;
        else if (kv.value == "value") t.clip_by_value = true;
        else throw ConfigError("clip_mode must be norm or value");
      }
      else if (kv.key == "dropout") t.dropout = parse_double(kv, path);
      else if (kv.key == "max_epochs") t.max_epochs = parse_uint(kv, path);
      else if (kv.key == "patience") t.patience = parse_uint(kv, path);
      else if (kv.key == "seed") t.seed = parse_uint(kv, path);
      else throw ConfigError("unknown config key: " + where);
    } else if (kv.section == "output") {
      if (kv.key == "dir") cfg.output_dir = kv.value;
      else throw ConfigError("unknown config key: " + where);
    } else {
      throw ConfigError("unknown config section: [" + kv.section + "]");
    }
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (data.train.empty()) throw ConfigError("config: data.train is required");
  model.encoder.validate();
  train.validate();
  if (model.use_word_embeddings && model.word_dim == 0) {
    throw ConfigError("config: embedding_dim must be positive");
  }
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["data"] = {{"train", data.train},
               {"dev", data.dev},
               {"test", data.test},
               {"token_column", data.token_column},
               {"label_column", data.label_column},
               {"task", to_string(task)},
               {"embeddings", embeddings_path}};
  j["model"] = intnet::to_json(model);
  j["train"] = {{"eta0", train.eta0},
                {"rho", train.rho},
                {"momentum", train.momentum},
                {"batch_size", train.batch_size},
                {"clip_norm", train.clip_norm},
                {"clip_mode", train.clip_by_value ? "value" : "norm"},
                {"dropout", train.dropout},
                {"max_epochs", train.max_epochs},
                {"patience", train.patience},
                {"seed", train.seed}};
  j["output_dir"] = output_dir;
  return j.dump(2);
}

}  // namespace intnet
