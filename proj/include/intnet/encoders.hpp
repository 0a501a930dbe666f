#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "intnet/autodiff.hpp"
#include "intnet/lstm.hpp"
#include "intnet/rng.hpp"
#include "intnet/vocab.hpp"

namespace intnet {

enum class EncoderKind { intnet, char_lstm, char_cnn, none };

EncoderKind encoder_kind_from_string(const std::string& s);
const char* to_string(EncoderKind kind);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::intnet;
  std::size_t d_char = 32;
  std::vector<std::size_t> kernel_sizes = {3, 4, 5};
  std::size_t m0 = 32;       // filters per kernel, initial layer
  std::size_t m_block = 16;  // filters per kernel inside each block
  std::size_t layers = 5;    // L; (L-1)/2 blocks
  std::size_t bottleneck_multiplier = 4;
  std::size_t char_lstm_hidden = 25;  // per direction
  std::size_t char_cnn_filters = 30;
  std::size_t char_cnn_kernel = 3;

  std::size_t num_kernels() const { return kernel_sizes.size(); }
  std::size_t num_blocks() const { return (layers - 1) / 2; }
  void validate() const;  // throws ConfigError
};

// Dimension of z for a valid config, without building any parameters. Always
// equal to the size produced by the matching encoder; never depends on word
// length.
std::size_t encoder_output_dim(const EncoderConfig& config);

// Dropout applied to the character embeddings (the encoder input); there is
// no dropout inside the convolutional stack.
struct DropoutSpec {
  ad::Mode mode = ad::Mode::eval;
  ad::Scalar rate = 0;
  RngState* rng = nullptr;
};

// Embedding columns for a character id sequence: d_char x n.
ad::NodePtr embed_chars(std::span<const std::size_t> ids,
                        const ad::NodePtr& table);

// Uniform init range used for embedding tables.
std::vector<ad::Scalar> embedding_init(std::size_t dim, std::size_t count,
                                       RngState& rng);

class CharEncoder {
 public:
  virtual ~CharEncoder() = default;
  // Fixed-size word representation z for one word.
  virtual ad::NodePtr encode(std::span<const std::size_t> char_ids,
                             const DropoutSpec& drop) = 0;
  virtual std::size_t output_dim() const = 0;
  virtual const ad::NodePtr& char_table() const = 0;
};

// Funnel-shaped wide convolutional encoder: multi-kernel initial convolution,
// then (L-1)/2 blocks that each see the concatenation of the initial layer
// and all previous block outputs, with a max-over-time readout across every
// alternate layer's feature maps.
class IntnetEncoder final : public CharEncoder {
 public:
  IntnetEncoder(const EncoderConfig& config, ad::ParamStore& store,
                std::size_t char_vocab_size, RngState& rng);

  ad::NodePtr encode(std::span<const std::size_t> char_ids,
                     const DropoutSpec& drop) override;
  std::size_t output_dim() const override;
  const ad::NodePtr& char_table() const override { return table_; }

  // Layer-level entry points, also used by the dimension and ablation tests.
  ad::NodePtr initial_conv(const ad::NodePtr& chars);
  ad::NodePtr conv_block(std::size_t block_index, const ad::NodePtr& carry,
                         ad::Mode mode);

  struct Parts {
    ad::NodePtr g0;
    std::vector<ad::NodePtr> block_outputs;
    ad::NodePtr features;  // concat of g0 and every block output
    ad::NodePtr z;
  };
  Parts encode_parts(std::span<const std::size_t> char_ids,
                     const DropoutSpec& drop);

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct KernelConv {
    ad::NodePtr weight, bias;
  };
  struct Branch {
    ad::NodePtr bn_gamma, bn_beta;
    std::unique_ptr<ad::BatchNormState> bn_state;
    KernelConv conv;
  };
  struct Block {
    ad::NodePtr bn_in_gamma, bn_in_beta;
    std::unique_ptr<ad::BatchNormState> bn_in_state;
    // bias-free: its output goes straight into the branch batch-norms,
    // which cancel any constant shift
    ad::NodePtr bottleneck_weight;
    std::vector<Branch> branches;
  };

  EncoderConfig cfg_;
  ad::NodePtr table_;
  std::vector<KernelConv> initial_;
  std::vector<std::unique_ptr<Block>> blocks_;
};

// Bidirectional character LSTM; z is [final forward state ; final backward
// state].
class CharLstmEncoder final : public CharEncoder {
 public:
  CharLstmEncoder(const EncoderConfig& config, ad::ParamStore& store,
                  std::size_t char_vocab_size, RngState& rng);
  ad::NodePtr encode(std::span<const std::size_t> char_ids,
                     const DropoutSpec& drop) override;
  std::size_t output_dim() const override;
  const ad::NodePtr& char_table() const override { return table_; }

 private:
  EncoderConfig cfg_;
  ad::NodePtr table_;
  LstmCell fwd_, bwd_;
};

// Shallow baseline: one convolution, ReLU, max over time.
class CharCnnEncoder final : public CharEncoder {
 public:
  CharCnnEncoder(const EncoderConfig& config, ad::ParamStore& store,
                 std::size_t char_vocab_size, RngState& rng);
  ad::NodePtr encode(std::span<const std::size_t> char_ids,
                     const DropoutSpec& drop) override;
  std::size_t output_dim() const override;
  const ad::NodePtr& char_table() const override { return table_; }

 private:
  EncoderConfig cfg_;
  ad::NodePtr table_;
  ad::NodePtr weight_, bias_;
};

// Builds the configured encoder; returns nullptr for EncoderKind::none.
std::unique_ptr<CharEncoder> make_encoder(const EncoderConfig& config,
                                          ad::ParamStore& store,
                                          std::size_t char_vocab_size,
                                          RngState& rng);

}  // namespace intnet
