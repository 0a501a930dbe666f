#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "intnet/encoders.hpp"

using namespace intnet;
using ad::Mode;
using ad::NodePtr;
using ad::Scalar;

namespace {

EncoderConfig tiny_intnet() {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::intnet;
  cfg.d_char = 4;
  cfg.kernel_sizes = {2, 3};
  cfg.m0 = 2;
  cfg.m_block = 2;
  cfg.layers = 5;
  cfg.bottleneck_multiplier = 2;
  return cfg;
}

DropoutSpec no_dropout() { return DropoutSpec{Mode::train, 0, nullptr}; }

}  // namespace

TEST_CASE("output_dim arithmetic") {
  EncoderConfig c;
  c.kind = EncoderKind::intnet;

  SUBCASE("smallest case") {
    c.kernel_sizes = {3};
    c.m0 = 1;
    c.m_block = 1;
    c.layers = 3;
    CHECK(encoder_output_dim(c) == 2);
  }
  SUBCASE("defaults") {
    CHECK(encoder_output_dim(c) == 192);  // 32*3 + 16*3*2
    c.layers = 9;
    CHECK(encoder_output_dim(c) == 288);  // 32*3 + 16*3*4
  }
  SUBCASE("baselines") {
    c.kind = EncoderKind::char_cnn;
    CHECK(encoder_output_dim(c) == 30);
    c.kind = EncoderKind::char_lstm;
    CHECK(encoder_output_dim(c) == 50);
    c.kind = EncoderKind::none;
    CHECK(encoder_output_dim(c) == 0);
  }
  SUBCASE("invalid configs are rejected") {
    c.layers = 4;  // even
    CHECK_THROWS_AS(encoder_output_dim(c), ConfigError);
    c.layers = 1;
    CHECK_THROWS_AS(encoder_output_dim(c), ConfigError);
    c.layers = 5;
    c.kernel_sizes = {};
    CHECK_THROWS_AS(encoder_output_dim(c), ConfigError);
  }
}

TEST_CASE("embed_chars") {
  RngState rng(1);
  CharVocab vocab = CharVocab::build({"ab"});
  ad::ParamStore store;
  auto table = store.add("table", {32, vocab.size()},
                         embedding_init(32, vocab.size(), rng));

  auto ids = vocab.encode("ab");
  auto emb = embed_chars(ids, table);
  CHECK(emb->shape == ad::Shape{32, 2});

  // unseen characters map to the UNKNOWN column
  auto unseen = vocab.encode("\xce\xbb");  // lambda
  CHECK(unseen.size() == 1);
  CHECK(unseen[0] == CharVocab::kUnknown);
  auto emb_unseen = embed_chars(unseen, table);
  for (std::size_t r = 0; r < 32; ++r) {
    CHECK(emb_unseen->value[r] == table->value[r * vocab.size() + 1]);
  }

  CHECK_THROWS_AS(vocab.encode(""), EmptyWordError);
}

TEST_CASE("embedding init range follows sqrt(3/d)") {
  RngState rng(2);
  auto values = embedding_init(3, 50, rng);  // sqrt(3/3) = 1
  for (Scalar v : values) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  bool one_outside_half = false;
  for (Scalar v : values) one_outside_half |= std::abs(v) > 0.5;
  CHECK(one_outside_half);  // actually spans the range
}

TEST_CASE("initial_conv shape and identity behaviour") {
  SUBCASE("defaults give 96 channels") {
    RngState rng(3);
    ad::ParamStore store;
    EncoderConfig cfg;  // d_char 32, kernels {3,4,5}, m0 32
    IntnetEncoder enc(cfg, store, 10, rng);
    auto chars = ad::leaf({32, 4}, std::vector<Scalar>(32 * 4, 0.1));
    auto g0 = enc.initial_conv(chars);
    CHECK(g0->shape == ad::Shape{96, 4});
  }
  SUBCASE("single identity kernel reproduces ReLU of the input row") {
    RngState rng(4);
    ad::ParamStore store;
    EncoderConfig cfg;
    cfg.d_char = 1;
    cfg.kernel_sizes = {1};
    cfg.m0 = 1;
    cfg.layers = 3;
    cfg.m_block = 1;
    IntnetEncoder enc(cfg, store, 4, rng);
    store.find("char_encoder.initial.k1.weight")->value = {1.0};
    store.find("char_encoder.initial.k1.bias")->value = {0.0};
    auto chars = ad::leaf({1, 5}, {0.5, -0.25, 2, -3, 1});
    auto g0 = enc.initial_conv(chars);
    CHECK(g0->value == std::vector<Scalar>{0.5, 0, 2, 0, 1});
  }
  SUBCASE("single-character word keeps length 1") {
    RngState rng(5);
    ad::ParamStore store;
    IntnetEncoder enc(EncoderConfig{}, store, 8, rng);
    auto chars = ad::leaf({32, 1}, std::vector<Scalar>(32, 0.3));
    CHECK(enc.initial_conv(chars)->shape == ad::Shape{96, 1});
  }
}

TEST_CASE("conv_block shapes and zero fixed point") {
  RngState rng(6);
  ad::ParamStore store;
  EncoderConfig cfg;  // defaults: bottleneck 4*16*3 = 192, block output 48
  IntnetEncoder enc(cfg, store, 10, rng);

  auto carry = ad::leaf({96, 3}, std::vector<Scalar>(96 * 3, 0.2));
  auto out = enc.conv_block(0, carry, Mode::train);
  CHECK(out->shape == ad::Shape{48, 3});

  for (std::size_t n = 1; n <= 4; ++n) {
    auto c = ad::leaf({96, n}, std::vector<Scalar>(96 * n, 0.1));
    CHECK(enc.conv_block(0, c, Mode::train)->shape == ad::Shape{48, n});
  }

  // zero carry, zero biases: BN(0)=0, ReLU 0, conv 0
  auto zero = ad::zeros({96, 3});
  auto zout = enc.conv_block(0, zero, Mode::train);
  for (Scalar v : zout->value) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("intnet encode dimensions follow p0 + p*(L-1)/2") {
  RngState rng(7);
  {
    ad::ParamStore store;
    IntnetEncoder enc(EncoderConfig{}, store, 30, rng);  // IntNet-5 defaults
    CHECK(enc.output_dim() == 192);
    auto z = enc.encode(std::vector<std::size_t>{2, 3, 4, 5}, no_dropout());
    CHECK(z->shape == ad::Shape{192});
  }
  {
    ad::ParamStore store;
    EncoderConfig cfg;
    cfg.layers = 9;
    IntnetEncoder enc(cfg, store, 30, rng);  // IntNet-9
    CHECK(enc.output_dim() == 288);
    auto z = enc.encode(std::vector<std::size_t>{2, 3}, no_dropout());
    CHECK(z->shape == ad::Shape{288});
  }
}

TEST_CASE("z dimension is independent of word length") {
  RngState rng(8);
  ad::ParamStore store;
  IntnetEncoder enc(tiny_intnet(), store, 40, rng);
  const std::size_t u = enc.output_dim();
  RngState idgen(13);
  for (std::size_t len = 1; len <= 30; ++len) {
    std::vector<std::size_t> ids(len);
    for (auto& i : ids) i = 2 + idgen.next_below(38);
    CHECK(enc.encode(ids, no_dropout())->size() == u);
  }
}

TEST_CASE("output_dim agrees with the forward pass over random configs") {
  RngState rng(10);
  for (int rep = 0; rep < 100; ++rep) {
    EncoderConfig cfg;
    const std::size_t pick = rng.next_below(3);
    cfg.kind = pick == 0   ? EncoderKind::intnet
               : pick == 1 ? EncoderKind::char_lstm
                           : EncoderKind::char_cnn;
    cfg.d_char = 1 + rng.next_below(6);
    cfg.m0 = 1 + rng.next_below(4);
    cfg.m_block = 1 + rng.next_below(3);
    cfg.layers = 3 + 2 * rng.next_below(3);
    cfg.bottleneck_multiplier = 1 + rng.next_below(4);
    cfg.char_lstm_hidden = 1 + rng.next_below(8);
    cfg.char_cnn_filters = 1 + rng.next_below(10);
    cfg.char_cnn_kernel = 1 + rng.next_below(5);
    cfg.kernel_sizes.clear();
    const std::size_t nk = 1 + rng.next_below(3);
    for (std::size_t i = 0; i < nk; ++i) {
      std::size_t k = 1 + rng.next_below(5);
      while (std::find(cfg.kernel_sizes.begin(), cfg.kernel_sizes.end(), k) !=
             cfg.kernel_sizes.end()) {
        k = 1 + rng.next_below(5);
      }
      cfg.kernel_sizes.push_back(k);
    }

    ad::ParamStore store;
    auto enc = make_encoder(cfg, store, 12, rng);
    REQUIRE(enc != nullptr);
    std::vector<std::size_t> ids(1 + rng.next_below(9));
    for (auto& i : ids) i = rng.next_below(12);
    auto z = enc->encode(ids, no_dropout());
    CHECK(z->size() == encoder_output_dim(cfg));
    CHECK(z->size() == enc->output_dim());
  }
}

TEST_CASE("information flows from the initial layer to the readout") {
  RngState rng(12);
  ad::ParamStore store;
  IntnetEncoder enc(tiny_intnet(), store, 20, rng);
  std::vector<std::size_t> ids{2, 5, 7, 3};
  auto parts = enc.encode_parts(ids, no_dropout());

  // re-pool with g0 zeroed out of the final concatenation
  std::vector<NodePtr> layers;
  layers.push_back(ad::zeros(parts.g0->shape));
  for (const auto& b : parts.block_outputs) layers.push_back(b);
  auto ablated =
      ad::max_over_time(ad::concat_channels(layers), ids.size());
  bool differs = false;
  for (std::size_t i = 0; i < ablated->size(); ++i) {
    differs |= ablated->value[i] != parts.z->value[i];
  }
  CHECK(differs);
}

TEST_CASE("no character preprocessing: case and digits are preserved") {
  RngState rng(14);
  std::vector<std::string> tokens{"Obama", "obama", "2018"};
  CharVocab vocab = CharVocab::build(tokens);
  CHECK(vocab.lookup("O") != vocab.lookup("o"));
  CHECK(vocab.index.count("2") == 1);
  CHECK(vocab.index.count("8") == 1);

  ad::ParamStore store;
  IntnetEncoder enc(tiny_intnet(), store, vocab.size(), rng);
  auto z_upper = enc.encode(vocab.encode("Obama"), no_dropout());
  auto z_lower = enc.encode(vocab.encode("obama"), no_dropout());
  bool differs = false;
  for (std::size_t i = 0; i < z_upper->size(); ++i) {
    differs |= z_upper->value[i] != z_lower->value[i];
  }
  CHECK(differs);
}

TEST_CASE("char_lstm encoder") {
  RngState rng(15);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::char_lstm;
  cfg.d_char = 4;
  cfg.char_lstm_hidden = 25;
  ad::ParamStore store;
  CharLstmEncoder enc(cfg, store, 10, rng);
  CHECK(enc.output_dim() == 50);

  SUBCASE("single character word: both directions run the same single step") {
    // with tied weights the two final states coincide exactly
    for (const char* name : {"w_zi", "w_zf", "w_zo", "w_zc", "w_hi", "w_hf",
                             "w_ho", "w_hc", "w_ci", "w_cf", "w_co", "b_i",
                             "b_f", "b_o", "b_c"}) {
      store.find(std::string("char_encoder.bwd.") + name)->value =
          store.find(std::string("char_encoder.fwd.") + name)->value;
    }
    auto z = enc.encode(std::vector<std::size_t>{3}, no_dropout());
    REQUIRE(z->size() == 50);
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(z->value[i] == z->value[25 + i]);
    }
  }
  SUBCASE("all-zero weights give a zero encoding") {
    for (const auto& p : store.all()) {
      std::fill(p.tensor->value.begin(), p.tensor->value.end(), Scalar(0));
    }
    auto z = enc.encode(std::vector<std::size_t>{1, 2, 3}, no_dropout());
    for (Scalar v : z->value) CHECK(v == doctest::Approx(0.0));
  }
}

TEST_CASE("char_cnn encoder") {
  RngState rng(16);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::char_cnn;
  cfg.d_char = 3;
  cfg.char_cnn_filters = 30;
  cfg.char_cnn_kernel = 3;
  ad::ParamStore store;
  CharCnnEncoder enc(cfg, store, 10, rng);
  CHECK(enc.output_dim() == 30);

  SUBCASE("words shorter than the kernel still encode") {
    CHECK(enc.encode(std::vector<std::size_t>{2}, no_dropout())->size() == 30);
  }
  SUBCASE("a row-picking filter pools that embedding row") {
    EncoderConfig small = cfg;
    small.char_cnn_filters = 1;
    small.char_cnn_kernel = 1;
    ad::ParamStore s2;
    RngState rng2(17);
    CharCnnEncoder picker(small, s2, 6, rng2);
    auto table = s2.find("char_encoder.table");
    // row 1 of the table holds the values the filter picks out
    for (std::size_t v = 0; v < 6; ++v) {
      table->value[0 * 6 + v] = -1.0;
      table->value[1 * 6 + v] = 0.1 * static_cast<Scalar>(v + 1);
      table->value[2 * 6 + v] = -2.0;
    }
    s2.find("char_encoder.conv.weight")->value = {0, 1, 0};
    s2.find("char_encoder.conv.bias")->value = {0};
    auto z = picker.encode(std::vector<std::size_t>{2, 4, 3}, no_dropout());
    CHECK(z->value[0] == doctest::Approx(0.5));  // max of row-1 entries 3,5,4
  }
}

TEST_CASE("encoder dropout hits the character embeddings only in train mode") {
  RngState rng(18);
  ad::ParamStore store;
  IntnetEncoder enc(tiny_intnet(), store, 10, rng);
  std::vector<std::size_t> ids{2, 3, 4};
  RngState drop(99);
  auto z_train = enc.encode(ids, DropoutSpec{Mode::train, 0.5, &drop});
  auto z_eval = enc.encode(ids, DropoutSpec{Mode::eval, 0.5, nullptr});
  CHECK(z_eval->size() == z_train->size());
  bool differs = false;
  for (std::size_t i = 0; i < z_eval->size(); ++i) {
    differs |= z_eval->value[i] != z_train->value[i];
  }
  CHECK(differs);
}

TEST_CASE("encoder forward gradients agree with finite differences") {
  RngState rng(19);
  ad::ParamStore store;
  EncoderConfig cfg = tiny_intnet();
  IntnetEncoder enc(cfg, store, 8, rng);
  std::vector<std::size_t> ids{2, 4, 3};
  std::vector<NodePtr> params;
  for (const auto& p : store.all()) params.push_back(p.tensor);
  const Scalar err = ad::grad_check(
      [&] {
        auto z = enc.encode(ids, no_dropout());
        std::vector<Scalar> w(z->size());
        for (std::size_t i = 0; i < w.size(); ++i) {
          w[i] = 0.1 + 0.05 * static_cast<Scalar>(i % 5);
        }
        return ad::sum(ad::mul(z, ad::leaf(z->shape, w)));
      },
      params, 1e-5);
  CHECK(err < 1e-5);  // tiny random net; the curated suite enforces 1e-6
}
