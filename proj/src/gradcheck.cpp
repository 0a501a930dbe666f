#include "intnet/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "intnet/crf.hpp"
#include "intnet/encoders.hpp"
#include "intnet/lstm.hpp"
#include "intnet/model.hpp"

namespace intnet {

using ad::Act;
using ad::Mode;
using ad::NodePtr;
using ad::Scalar;
using ad::Shape;

namespace {

constexpr Scalar kOpThreshold = 1e-6;
constexpr Scalar kCrfThreshold = 1e-8;
constexpr Scalar kEndToEndThreshold = 1e-4;
constexpr Scalar kEps = 1e-5;

std::vector<Scalar> rand_vals(std::size_t n, RngState& rng, Scalar lo = -1,
                              Scalar hi = 1) {
  std::vector<Scalar> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

NodePtr rand_leaf(Shape shape, RngState& rng, Scalar lo = -1, Scalar hi = 1) {
  return ad::leaf(shape, rand_vals(ad::numel(shape), rng, lo, hi));
}

// magnitude in [0.2, 1]: safely away from the ReLU kink under eps = 1e-5
NodePtr rand_leaf_off_kink(Shape shape, RngState& rng) {
  std::vector<Scalar> v(ad::numel(shape));
  for (auto& x : v) {
    const Scalar mag = rng.uniform(0.2, 1.0);
    x = rng.next_double() < 0.5 ? -mag : mag;
  }
  return ad::leaf(std::move(shape), std::move(v));
}

// Weighted scalar readout so every output element gets a distinct adjoint.
NodePtr spread(const NodePtr& x) {
  std::vector<Scalar> w(x->size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 0.25 + 0.37 * static_cast<Scalar>(i % 7) -
           0.11 * static_cast<Scalar>(i % 3);
  }
  return ad::sum(ad::mul(x, ad::leaf(x->shape, std::move(w))));
}

struct Check {
  std::string name;
  std::function<NodePtr()> f;
  std::vector<NodePtr> params;
  Scalar threshold = kOpThreshold;
};

// Retries seeds until one keeps the fixture's values clear of ReLU/max-pool
// kinks; `attempt` must build the fixture for the seed and run its forward.
std::uint64_t find_kink_free_seed(
    std::uint64_t start, const std::function<void(std::uint64_t)>& attempt) {
  for (std::uint64_t s = start; s < start + 64; ++s) {
    ad::KinkMonitor monitor;
    ad::set_kink_monitor(&monitor);
    try {
      attempt(s);
    } catch (...) {
      ad::set_kink_monitor(nullptr);
      throw;
    }
    ad::set_kink_monitor(nullptr);
    if (monitor.min_relu_abs > 1e-3 && monitor.min_max_gap > 1e-3) return s;
  }
  throw NumericError("gradcheck: no kink-free fixture seed found");
}

struct EndToEndFixture {
  std::unique_ptr<TaggerModel> model;
  std::vector<std::string> tokens{"Word", "word2", "x-y"};
  std::vector<int> ids{0, 2, 1};

  explicit EndToEndFixture(std::uint64_t seed) {
    ModelSpec spec;
    spec.encoder.kind = EncoderKind::intnet;
    spec.encoder.d_char = 6;
    spec.encoder.kernel_sizes = {3, 4, 5};
    spec.encoder.m0 = 4;
    spec.encoder.m_block = 2;
    spec.encoder.layers = 5;
    spec.lstm_hidden = 8;
    spec.word_dim = 4;
    spec.use_word_embeddings = true;

    std::vector<std::string> toks = tokens;
    CharVocab cv = CharVocab::build(toks);
    WordVocab wv;
    for (const auto& t : toks) wv.add(t);
    TagSet tags = TagSet::from({"A", "B", "C"});
    model = std::make_unique<TaggerModel>(spec, TaskKind::pos, std::move(cv),
                                          std::move(wv), std::move(tags), seed,
                                          nullptr);
  }

  NodePtr loss() {
    return model->sentence_nll(tokens, ids, Mode::train, 0, nullptr);
  }
};

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed) {
  RngState rng(seed);
  std::vector<Check> checks;

  {
    auto a = rand_leaf({5}, rng), b = rand_leaf({5}, rng);
    checks.push_back({"add", [=] { return spread(ad::add(a, b)); }, {a, b}});
  }
  {
    auto a = rand_leaf({4}, rng), b = rand_leaf({4}, rng), c = rand_leaf({4}, rng);
    checks.push_back(
        {"add_n", [=] { return spread(ad::add_n({a, b, c})); }, {a, b, c}});
  }
  {
    auto a = rand_leaf({5}, rng), b = rand_leaf({5}, rng);
    checks.push_back({"sub", [=] { return spread(ad::sub(a, b)); }, {a, b}});
  }
  {
    auto a = rand_leaf({5}, rng), b = rand_leaf({5}, rng);
    checks.push_back({"mul", [=] { return spread(ad::mul(a, b)); }, {a, b}});
  }
  {
    auto a = rand_leaf({5}, rng);
    checks.push_back({"scale", [=] { return spread(ad::scale(a, 1.7)); }, {a}});
  }
  {
    auto a = rand_leaf({6}, rng);
    checks.push_back({"sum", [=] { return ad::sum(a); }, {a}});
  }
  {
    auto w = rand_leaf({4, 3}, rng);
    auto x = rand_leaf({3}, rng);
    checks.push_back({"matvec", [=] { return spread(ad::matvec(w, x)); }, {w, x}});
  }
  {
    auto w = rand_leaf({4, 3}, rng);
    auto x = rand_leaf({3}, rng);
    auto b = rand_leaf({4}, rng);
    checks.push_back(
        {"affine", [=] { return spread(ad::affine(w, x, b)); }, {w, x, b}});
  }
  for (std::size_t k : {std::size_t(1), std::size_t(3), std::size_t(4),
                        std::size_t(5)}) {
    const std::size_t T = k == 5 ? 4 : 5;  // k > T exercises the padding edges
    auto x = rand_leaf({3, T}, rng);
    auto w = rand_leaf({2, 3, k}, rng);
    auto b = rand_leaf({2}, rng);
    checks.push_back({"conv1d_k" + std::to_string(k),
                      [=] { return spread(ad::conv1d(x, w, b)); },
                      {x, w, b}});
  }
  {
    auto x = rand_leaf_off_kink({6}, rng);
    checks.push_back({"relu", [=] { return spread(ad::relu(x)); }, {x}});
  }
  {
    auto x = rand_leaf({6}, rng);
    checks.push_back(
        {"sigmoid",
         [=] { return spread(ad::activation(x, Act::sigmoid)); },
         {x}});
  }
  {
    auto x = rand_leaf({6}, rng);
    checks.push_back(
        {"tanh", [=] { return spread(ad::activation(x, Act::tanh)); }, {x}});
  }
  {
    auto x = rand_leaf({2, 4}, rng);
    auto gamma = rand_leaf({2}, rng, 0.5, 1.5);
    auto beta = rand_leaf({2}, rng, -0.5, 0.5);
    auto state = std::make_shared<ad::BatchNormState>(2);
    checks.push_back({"batch_norm_train",
                      [=] {
                        return spread(ad::batch_norm(x, gamma, beta, *state,
                                                     Mode::train));
                      },
                      {x, gamma, beta}});
    auto state2 = std::make_shared<ad::BatchNormState>(2);
    ad::batch_norm(x, gamma, beta, *state2, Mode::train);  // warm the stats
    checks.push_back({"batch_norm_eval",
                      [=] {
                        return spread(ad::batch_norm(x, gamma, beta, *state2,
                                                     Mode::eval));
                      },
                      {x, gamma, beta}});
  }
  {
    auto a = rand_leaf({1, 3}, rng), b = rand_leaf({2, 3}, rng);
    checks.push_back(
        {"concat_channels",
         [=] { return spread(ad::concat_channels({a, b})); },
         {a, b}});
  }
  {
    auto a = rand_leaf({2}, rng), b = rand_leaf({3}, rng);
    checks.push_back(
        {"concat_vec", [=] { return spread(ad::concat_vec({a, b})); }, {a, b}});
  }
  {
    auto x = ad::leaf({2, 5}, {0.1, 0.9, 0.5, 0.3, -0.4,
                               -0.2, 0.2, 0.7, 0.4, 0.95});
    checks.push_back(
        {"max_over_time",
         [=] { return spread(ad::max_over_time(x, 4)); },
         {x}});
  }
  {
    auto x = rand_leaf({8}, rng);
    checks.push_back({"dropout",
                      [=] {
                        RngState r(321);
                        return spread(ad::dropout(x, 0.4, Mode::train, &r));
                      },
                      {x}});
  }
  {
    auto table = rand_leaf({3, 5}, rng);
    const std::vector<std::size_t> cols{1, 0, 3, 1};  // repeat accumulates
    checks.push_back(
        {"gather_columns",
         [=] { return spread(ad::gather_columns(table, cols)); },
         {table}});
  }
  {
    auto m = rand_leaf({3, 4}, rng);
    checks.push_back({"column", [=] { return spread(ad::column(m, 2)); }, {m}});
    checks.push_back({"at2d", [=] { return ad::at2d(m, 1, 3); }, {m}});
    checks.push_back(
        {"slice2d", [=] { return spread(ad::slice2d(m, 1, 3, 0, 2)); }, {m}});
    checks.push_back(
        {"reshape", [=] { return spread(ad::reshape(m, {12})); }, {m}});
  }
  {
    auto v = rand_leaf({3}, rng);
    checks.push_back(
        {"broadcast_cols",
         [=] { return spread(ad::broadcast_cols(v, 4)); },
         {v}});
    checks.push_back({"pick", [=] { return ad::pick(v, 1); }, {v}});
    checks.push_back({"logsumexp", [=] { return ad::logsumexp(v); }, {v}});
  }
  {
    auto m = rand_leaf({3, 4}, rng);
    checks.push_back(
        {"logsumexp_cols",
         [=] { return spread(ad::logsumexp_cols(m)); },
         {m}});
  }
  {
    auto z = rand_leaf({3}, rng);
    auto h0 = rand_leaf({4}, rng);
    auto c0 = rand_leaf({4}, rng);
    auto cell = std::make_shared<LstmCell>();
    cell->input_dim = 3;
    cell->hidden_dim = 4;
    std::vector<NodePtr> params{z, h0, c0};
    auto mat = [&](NodePtr& slot, std::size_t r, std::size_t c) {
      slot = rand_leaf({r, c}, rng);
      params.push_back(slot);
    };
    mat(cell->w_zi, 4, 3); mat(cell->w_zf, 4, 3); mat(cell->w_zo, 4, 3);
    mat(cell->w_zc, 4, 3); mat(cell->w_hi, 4, 4); mat(cell->w_hf, 4, 4);
    mat(cell->w_ho, 4, 4); mat(cell->w_hc, 4, 4); mat(cell->w_ci, 4, 4);
    mat(cell->w_cf, 4, 4); mat(cell->w_co, 4, 4);
    auto vecp = [&](NodePtr& slot) {
      slot = rand_leaf({4}, rng, -0.3, 0.3);
      params.push_back(slot);
    };
    vecp(cell->b_i); vecp(cell->b_f); vecp(cell->b_o); vecp(cell->b_c);
    checks.push_back({"lstm_step",
                      [=] {
                        auto step = lstm_step(z, h0, c0, *cell);
                        return spread(ad::concat_vec({step.h, step.c}));
                      },
                      params});
  }
  {
    const std::size_t K = 3, T = 4, H2 = 6;
    auto crf = std::make_shared<CrfParams>();
    crf->num_tags = K;
    crf->use_stop = true;
    crf->emission = rand_leaf({K, H2}, rng);
    crf->transitions = rand_leaf({K + 2, K + 2}, rng);
    std::vector<NodePtr> h;
    for (std::size_t t = 0; t < T; ++t) h.push_back(rand_leaf({H2}, rng));
    std::vector<NodePtr> params{crf->emission, crf->transitions};
    params.insert(params.end(), h.begin(), h.end());
    const std::vector<int> y{0, 2, 1, 2};
    checks.push_back({"crf_score",
                      [=] {
                        auto e = crf_emissions(h, *crf);
                        return crf_score(e, y, *crf);
                      },
                      params});
    checks.push_back({"crf_log_partition",
                      [=] {
                        auto e = crf_emissions(h, *crf);
                        return crf_log_partition(e, *crf);
                      },
                      params});
    checks.push_back({"crf_nll",
                      [=] { return crf_nll(h, y, *crf); },
                      params, kCrfThreshold});
  }
  {
    // conv -> relu -> max -> affine chain, re-seeded off the kinks
    struct ChainFixture {
      NodePtr x, w, b, w2, b2;
      explicit ChainFixture(std::uint64_t s) {
        RngState r(s);
        x = rand_leaf({2, 6}, r);
        w = rand_leaf({3, 2, 3}, r);
        b = rand_leaf({3}, r, -0.2, 0.2);
        w2 = rand_leaf({2, 3}, r);
        b2 = rand_leaf({2}, r);
      }
      NodePtr loss() {
        auto m = ad::max_over_time(ad::relu(ad::conv1d(x, w, b)), 5);
        return spread(ad::affine(w2, m, b2));
      }
    };
    auto probe = [](std::uint64_t s) { ChainFixture(s).loss(); };
    const std::uint64_t s = find_kink_free_seed(rng.next_u64(), probe);
    auto fix = std::make_shared<ChainFixture>(s);
    checks.push_back({"conv_relu_max_affine",
                      [=] { return fix->loss(); },
                      {fix->x, fix->w, fix->b, fix->w2, fix->b2}});
  }
  {
    struct IntnetFixture {
      ad::ParamStore store;
      std::unique_ptr<IntnetEncoder> enc;
      std::vector<std::size_t> ids{2, 4, 3, 2, 5};
      explicit IntnetFixture(std::uint64_t s) {
        EncoderConfig cfg;
        cfg.kind = EncoderKind::intnet;
        cfg.d_char = 4;
        cfg.kernel_sizes = {2, 3};
        cfg.m0 = 2;
        cfg.m_block = 2;
        cfg.layers = 5;
        cfg.bottleneck_multiplier = 2;
        RngState r(s);
        enc = std::make_unique<IntnetEncoder>(cfg, store, 6, r);
      }
      NodePtr loss() {
        return spread(enc->encode(ids, DropoutSpec{Mode::train, 0, nullptr}));
      }
    };
    auto probe = [](std::uint64_t s) { IntnetFixture(s).loss(); };
    const std::uint64_t s = find_kink_free_seed(rng.next_u64(), probe);
    auto fix = std::make_shared<IntnetFixture>(s);
    std::vector<NodePtr> params;
    for (const auto& p : fix->store.all()) params.push_back(p.tensor);
    checks.push_back(
        {"intnet_forward", [=] { return fix->loss(); }, params});
  }
  {
    ad::ParamStore store;
    EncoderConfig cfg;
    cfg.kind = EncoderKind::char_lstm;
    cfg.d_char = 3;
    cfg.char_lstm_hidden = 3;
    RngState r(rng.next_u64());
    auto enc = std::make_shared<CharLstmEncoder>(cfg, store, 6, r);
    std::vector<NodePtr> params;
    for (const auto& p : store.all()) params.push_back(p.tensor);
    const std::vector<std::size_t> ids{1, 3, 2};
    checks.push_back(
        {"charlstm_forward",
         [=] {
           return spread(enc->encode(ids, DropoutSpec{Mode::train, 0, nullptr}));
         },
         params});
  }
  {
    struct CnnFixture {
      ad::ParamStore store;
      std::unique_ptr<CharCnnEncoder> enc;
      std::vector<std::size_t> ids{1, 3, 2, 4};
      explicit CnnFixture(std::uint64_t s) {
        EncoderConfig cfg;
        cfg.kind = EncoderKind::char_cnn;
        cfg.d_char = 4;
        cfg.char_cnn_filters = 3;
        cfg.char_cnn_kernel = 3;
        RngState r(s);
        enc = std::make_unique<CharCnnEncoder>(cfg, store, 6, r);
      }
      NodePtr loss() {
        return spread(enc->encode(ids, DropoutSpec{Mode::train, 0, nullptr}));
      }
    };
    auto probe = [](std::uint64_t s) { CnnFixture(s).loss(); };
    const std::uint64_t s = find_kink_free_seed(rng.next_u64(), probe);
    auto fix = std::make_shared<CnnFixture>(s);
    std::vector<NodePtr> params;
    for (const auto& p : fix->store.all()) params.push_back(p.tensor);
    checks.push_back(
        {"charcnn_forward", [=] { return fix->loss(); }, params});
  }
  {
    auto probe = [](std::uint64_t s) { EndToEndFixture(s).loss(); };
    const std::uint64_t s = find_kink_free_seed(seed + 1000, probe);
    auto fix = std::make_shared<EndToEndFixture>(s);
    std::vector<NodePtr> params;
    for (const auto& p : fix->model->params().all()) params.push_back(p.tensor);
    checks.push_back({"end_to_end_nll",
                      [=] { return fix->loss(); },
                      params, kEndToEndThreshold});
  }

  std::vector<GradCheckEntry> results;
  results.reserve(checks.size());
  for (auto& check : checks) {
    GradCheckEntry entry;
    entry.name = check.name;
    entry.threshold = check.threshold;
    entry.error = ad::grad_check(check.f, check.params, kEps);
    results.push_back(std::move(entry));
  }
  return results;
}

}  // namespace intnet
