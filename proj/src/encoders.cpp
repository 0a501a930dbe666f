#include "intnet/encoders.hpp"

#include <cmath>

namespace intnet {

using ad::Act;
using ad::Mode;
using ad::NodePtr;
using ad::Scalar;

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "intnet") return EncoderKind::intnet;
  if (s == "char_lstm" || s == "charlstm") return EncoderKind::char_lstm;
  if (s == "char_cnn" || s == "charcnn") return EncoderKind::char_cnn;
  if (s == "none") return EncoderKind::none;
  throw ConfigError("unknown encoder kind: " + s);
}

const char* to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::intnet: return "intnet";
    case EncoderKind::char_lstm: return "char_lstm";
    case EncoderKind::char_cnn: return "char_cnn";
    case EncoderKind::none: return "none";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (kind == EncoderKind::none) return;
  if (d_char == 0) throw ConfigError("encoder: d_char must be positive");
  switch (kind) {
    case EncoderKind::intnet:
      if (kernel_sizes.empty()) {
        throw ConfigError("intnet: kernel_sizes must be non-empty");
      }
      for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
        if (kernel_sizes[i] == 0) {
          throw ConfigError("intnet: kernel sizes must be positive");
        }
        for (std::size_t j = i + 1; j < kernel_sizes.size(); ++j) {
          if (kernel_sizes[i] == kernel_sizes[j]) {
            throw ConfigError("intnet: kernel sizes must be unique");
          }
        }
      }
      if (layers < 3 || layers % 2 == 0) {
        throw ConfigError("intnet: layers must be odd and >= 3");
      }
      if (m0 == 0 || m_block == 0 || bottleneck_multiplier == 0) {
        throw ConfigError("intnet: filter counts must be positive");
      }
      break;
    case EncoderKind::char_lstm:
      if (char_lstm_hidden == 0) {
        throw ConfigError("char_lstm: hidden size must be positive");
      }
      break;
    case EncoderKind::char_cnn:
      if (char_cnn_filters == 0 || char_cnn_kernel == 0) {
        throw ConfigError("char_cnn: filters and kernel must be positive");
      }
      break;
    case EncoderKind::none:
      break;
  }
}

std::size_t encoder_output_dim(const EncoderConfig& config) {
  config.validate();
  switch (config.kind) {
    case EncoderKind::intnet: {
      const std::size_t h = config.num_kernels();
      return config.m0 * h + config.m_block * h * config.num_blocks();
    }
    case EncoderKind::char_lstm:
      return 2 * config.char_lstm_hidden;
    case EncoderKind::char_cnn:
      return config.char_cnn_filters;
    case EncoderKind::none:
      return 0;
  }
  return 0;
}

NodePtr embed_chars(std::span<const std::size_t> ids, const NodePtr& table) {
  if (ids.empty()) throw EmptyWordError("embed_chars: empty word");
  return ad::gather_columns(table,
                            std::vector<std::size_t>(ids.begin(), ids.end()));
}

std::vector<Scalar> embedding_init(std::size_t dim, std::size_t count,
                                   RngState& rng) {
  const Scalar bound = std::sqrt(Scalar(3) / static_cast<Scalar>(dim));
  std::vector<Scalar> v(dim * count);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

namespace {

// Same weight init as deep residual nets: zero-mean normal scaled by fan-in.
std::vector<Scalar> he_normal(std::size_t cout, std::size_t cin, std::size_t k,
                              RngState& rng) {
  const Scalar stddev = std::sqrt(Scalar(2) / static_cast<Scalar>(cin * k));
  std::vector<Scalar> v(cout * cin * k);
  for (auto& x : v) x = rng.normal() * stddev;
  return v;
}

}  // namespace

IntnetEncoder::IntnetEncoder(const EncoderConfig& config, ad::ParamStore& store,
                             std::size_t char_vocab_size, RngState& rng)
    : cfg_(config) {
  cfg_.validate();
  table_ = store.add("char_encoder.table", {cfg_.d_char, char_vocab_size},
                     embedding_init(cfg_.d_char, char_vocab_size, rng));
  for (std::size_t k : cfg_.kernel_sizes) {
    const std::string base = "char_encoder.initial.k" + std::to_string(k);
    KernelConv c;
    c.weight = store.add(base + ".weight", {cfg_.m0, cfg_.d_char, k},
                         he_normal(cfg_.m0, cfg_.d_char, k, rng));
    c.bias = store.add(base + ".bias", {cfg_.m0},
                       std::vector<Scalar>(cfg_.m0, 0));
    initial_.push_back(std::move(c));
  }

  const std::size_t h = cfg_.num_kernels();
  const std::size_t p0 = cfg_.m0 * h;
  const std::size_t p = cfg_.m_block * h;
  const std::size_t bneck = cfg_.bottleneck_multiplier * cfg_.m_block * h;
  for (std::size_t j = 0; j < cfg_.num_blocks(); ++j) {
    const std::size_t carry = p0 + j * p;
    const std::string base = "char_encoder.block" + std::to_string(j + 1);
    auto block = std::make_unique<Block>();
    block->bn_in_gamma =
        store.add(base + ".bn_in.gamma", {carry}, std::vector<Scalar>(carry, 1));
    block->bn_in_beta =
        store.add(base + ".bn_in.beta", {carry}, std::vector<Scalar>(carry, 0));
    block->bn_in_state = std::make_unique<ad::BatchNormState>(carry);
    store.register_state(base + ".bn_in.stats", block->bn_in_state.get());
    block->bottleneck_weight =
        store.add(base + ".bottleneck.weight", {bneck, carry, 1},
                  he_normal(bneck, carry, 1, rng));
    for (std::size_t k : cfg_.kernel_sizes) {
      const std::string kb = base + ".k" + std::to_string(k);
      Branch branch;
      branch.bn_gamma =
          store.add(kb + ".bn.gamma", {bneck}, std::vector<Scalar>(bneck, 1));
      branch.bn_beta =
          store.add(kb + ".bn.beta", {bneck}, std::vector<Scalar>(bneck, 0));
      branch.bn_state = std::make_unique<ad::BatchNormState>(bneck);
      store.register_state(kb + ".bn.stats", branch.bn_state.get());
      branch.conv.weight = store.add(kb + ".weight", {cfg_.m_block, bneck, k},
                                     he_normal(cfg_.m_block, bneck, k, rng));
      branch.conv.bias = store.add(kb + ".bias", {cfg_.m_block},
                                   std::vector<Scalar>(cfg_.m_block, 0));
      block->branches.push_back(std::move(branch));
    }
    blocks_.push_back(std::move(block));
  }
}

std::size_t IntnetEncoder::output_dim() const {
  return encoder_output_dim(cfg_);
}

NodePtr IntnetEncoder::initial_conv(const NodePtr& chars) {
  std::vector<NodePtr> maps;
  maps.reserve(initial_.size());
  for (const auto& c : initial_) {
    maps.push_back(ad::relu(ad::conv1d(chars, c.weight, c.bias)));
  }
  return ad::concat_channels(maps);
}

NodePtr IntnetEncoder::conv_block(std::size_t block_index, const NodePtr& carry,
                                  Mode mode) {
  Block& b = *blocks_.at(block_index);
  NodePtr a = ad::batch_norm(carry, b.bn_in_gamma, b.bn_in_beta,
                             *b.bn_in_state, mode);
  a = ad::relu(a);
  const std::size_t bneck = b.bottleneck_weight->shape[0];
  a = ad::conv1d(a, b.bottleneck_weight, ad::zeros({bneck}));
  std::vector<NodePtr> maps;
  maps.reserve(b.branches.size());
  for (auto& branch : b.branches) {
    NodePtr m = ad::batch_norm(a, branch.bn_gamma, branch.bn_beta,
                               *branch.bn_state, mode);
    m = ad::relu(m);
    maps.push_back(ad::conv1d(m, branch.conv.weight, branch.conv.bias));
  }
  return ad::concat_channels(maps);
}

IntnetEncoder::Parts IntnetEncoder::encode_parts(
    std::span<const std::size_t> char_ids, const DropoutSpec& drop) {
  NodePtr chars = embed_chars(char_ids, table_);
  chars = ad::dropout(chars, drop.rate, drop.mode, drop.rng);
  Parts parts;
  parts.g0 = initial_conv(chars);
  std::vector<NodePtr> layer_outputs{parts.g0};
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    NodePtr carry = ad::concat_channels(layer_outputs);
    NodePtr out = conv_block(j, carry, drop.mode);
    parts.block_outputs.push_back(out);
    layer_outputs.push_back(out);
  }
  parts.features = ad::concat_channels(layer_outputs);
  parts.z = ad::max_over_time(parts.features, char_ids.size());
  return parts;
}

NodePtr IntnetEncoder::encode(std::span<const std::size_t> char_ids,
                              const DropoutSpec& drop) {
  return encode_parts(char_ids, drop).z;
}

CharLstmEncoder::CharLstmEncoder(const EncoderConfig& config,
                                 ad::ParamStore& store,
                                 std::size_t char_vocab_size, RngState& rng)
    : cfg_(config) {
  cfg_.validate();
  table_ = store.add("char_encoder.table", {cfg_.d_char, char_vocab_size},
                     embedding_init(cfg_.d_char, char_vocab_size, rng));
  fwd_ = make_lstm_cell(store, "char_encoder.fwd", cfg_.d_char,
                        cfg_.char_lstm_hidden, rng);
  bwd_ = make_lstm_cell(store, "char_encoder.bwd", cfg_.d_char,
                        cfg_.char_lstm_hidden, rng);
}

std::size_t CharLstmEncoder::output_dim() const {
  return 2 * cfg_.char_lstm_hidden;
}

NodePtr CharLstmEncoder::encode(std::span<const std::size_t> char_ids,
                                const DropoutSpec& drop) {
  NodePtr chars = embed_chars(char_ids, table_);
  chars = ad::dropout(chars, drop.rate, drop.mode, drop.rng);
  const std::size_t n = char_ids.size();
  std::vector<NodePtr> steps(n);
  for (std::size_t t = 0; t < n; ++t) steps[t] = ad::column(chars, t);

  NodePtr h = ad::zeros({cfg_.char_lstm_hidden});
  NodePtr c = ad::zeros({cfg_.char_lstm_hidden});
  for (std::size_t t = 0; t < n; ++t) {
    auto step = lstm_step(steps[t], h, c, fwd_);
    h = step.h;
    c = step.c;
  }
  NodePtr h_fwd = h;
  h = ad::zeros({cfg_.char_lstm_hidden});
  c = ad::zeros({cfg_.char_lstm_hidden});
  for (std::size_t t = n; t-- > 0;) {
    auto step = lstm_step(steps[t], h, c, bwd_);
    h = step.h;
    c = step.c;
  }
  return ad::concat_vec({h_fwd, h});
}

CharCnnEncoder::CharCnnEncoder(const EncoderConfig& config,
                               ad::ParamStore& store,
                               std::size_t char_vocab_size, RngState& rng)
    : cfg_(config) {
  cfg_.validate();
  table_ = store.add("char_encoder.table", {cfg_.d_char, char_vocab_size},
                     embedding_init(cfg_.d_char, char_vocab_size, rng));
  weight_ = store.add(
      "char_encoder.conv.weight",
      {cfg_.char_cnn_filters, cfg_.d_char, cfg_.char_cnn_kernel},
      he_normal(cfg_.char_cnn_filters, cfg_.d_char, cfg_.char_cnn_kernel, rng));
  bias_ = store.add("char_encoder.conv.bias", {cfg_.char_cnn_filters},
                    std::vector<Scalar>(cfg_.char_cnn_filters, 0));
}

std::size_t CharCnnEncoder::output_dim() const { return cfg_.char_cnn_filters; }

NodePtr CharCnnEncoder::encode(std::span<const std::size_t> char_ids,
                               const DropoutSpec& drop) {
  NodePtr chars = embed_chars(char_ids, table_);
  chars = ad::dropout(chars, drop.rate, drop.mode, drop.rng);
  NodePtr maps = ad::relu(ad::conv1d(chars, weight_, bias_));
  return ad::max_over_time(maps, char_ids.size());
}

std::unique_ptr<CharEncoder> make_encoder(const EncoderConfig& config,
                                          ad::ParamStore& store,
                                          std::size_t char_vocab_size,
                                          RngState& rng) {
  config.validate();
  switch (config.kind) {
    case EncoderKind::intnet:
      return std::make_unique<IntnetEncoder>(config, store, char_vocab_size, rng);
    case EncoderKind::char_lstm:
      return std::make_unique<CharLstmEncoder>(config, store, char_vocab_size,
                                               rng);
    case EncoderKind::char_cnn:
      return std::make_unique<CharCnnEncoder>(config, store, char_vocab_size,
                                              rng);
    case EncoderKind::none:
      return nullptr;
  }
  return nullptr;
}

}  // namespace intnet
