// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 8 needs user-supplied data and prints SKIP without it.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "intnet/config.hpp"
#include "intnet/gradcheck.hpp"
#include "intnet/model.hpp"
#include "intnet/train.hpp"
#include "test_util.hpp"

using namespace intnet;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = INTNET_FIXTURE_DIR;
const std::string kCli = INTNET_CLI_PATH;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Skipped : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- criterion 1: gradient correctness ----
std::string criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  auto results = run_gradcheck_suite(42);
  ad::Scalar worst_op = 0, end_to_end = 0;
  for (const auto& r : results) {
    require(r.pass(), fmt("%s error %.3e exceeds %.0e", r.name.c_str(),
                          double(r.error), double(r.threshold)));
    if (r.name == "end_to_end_nll") {
      end_to_end = r.error;
    } else {
      worst_op = std::max(worst_op, r.error);
    }
  }
  const double secs = seconds_since(t0);
  require(worst_op < 1e-6, "per-op error reached 1e-6");
  require(end_to_end < 1e-4, "end-to-end error reached 1e-4");
  require(secs < 60.0, fmt("runtime %.1fs exceeds 1 minute", secs));
  return fmt("%zu checks, worst per-op %.2e, end-to-end %.2e, %.1fs",
             results.size(), double(worst_op), double(end_to_end), secs);
}

// ---- criterion 2: CRF oracle equivalence ----
std::string criterion_crf_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  RngState rng(2024);
  double worst_gap = 0, worst_mass = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t K = 1 + rng.next_below(4);
    const std::size_t T = 1 + rng.next_below(6);
    ScoreMatrix e(T, std::vector<ad::Scalar>(K));
    for (auto& row : e) {
      for (auto& v : row) v = rng.normal();
    }
    std::vector<ad::Scalar> trans((K + 2) * (K + 2));
    for (auto& v : trans) v = rng.normal();

    CrfParams crf;
    crf.num_tags = K;
    crf.use_stop = true;
    crf.transitions = ad::leaf({K + 2, K + 2}, trans);
    std::vector<ad::Scalar> eye(K * K, 0);
    for (std::size_t i = 0; i < K; ++i) eye[i * K + i] = 1;
    crf.emission = ad::leaf({K, K}, eye);
    std::vector<ad::NodePtr> nodes;
    for (const auto& row : e) nodes.push_back(ad::leaf({K}, row));

    const double dp = crf_log_partition(nodes, crf)->scalar();
    const double bf = brute_force_partition(e, trans, K);
    worst_gap = std::max(worst_gap, std::abs(dp - bf));
    require(std::abs(dp - bf) < 1e-10,
            fmt("partition gap %.3e at K=%zu T=%zu", std::abs(dp - bf), K, T));

    auto v = viterbi(e, trans, K);
    auto b = brute_force_best(e, trans, K);
    require(v.score == b.score, "viterbi score differs from brute force");
    require(v.score == path_score(e, trans, v.tags, K),
            "viterbi score does not match its own path");

    double mass = 0;
    std::vector<int> tags(T, 0);
    while (true) {
      mass += std::exp(path_score(e, trans, tags, K) - bf);
      std::size_t p = T;
      bool done = true;
      while (p-- > 0) {
        if (static_cast<std::size_t>(++tags[p]) < K) {
          done = false;
          break;
        }
        tags[p] = 0;
      }
      if (done) break;
    }
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    require(std::abs(mass - 1.0) < 1e-9,
            fmt("probability mass %.12f differs from 1", mass));
  }
  const double secs = seconds_since(t0);
  require(secs < 10.0, fmt("runtime %.1fs exceeds 10 seconds", secs));
  return fmt("200 instances, worst partition gap %.1e, worst mass error %.1e, "
             "%.1fs",
             worst_gap, worst_mass, secs);
}

// ---- criterion 3: dimension arithmetic ----
std::string criterion_dimensions() {
  EncoderConfig five;  // defaults: m0=32, m_block=16, kernels {3,4,5}, L=5
  require(encoder_output_dim(five) == 192, "output_dim(IntNet-5) != 192");
  EncoderConfig nine = five;
  nine.layers = 9;
  require(encoder_output_dim(nine) == 288, "output_dim(IntNet-9) != 288");

  RngState rng(7);
  for (const auto* cfg : {&five, &nine}) {
    ad::ParamStore store;
    IntnetEncoder enc(*cfg, store, 20, rng);
    for (std::size_t len : {std::size_t(1), std::size_t(9)}) {
      std::vector<std::size_t> ids(len, 2);
      for (std::size_t i = 0; i < len; ++i) ids[i] = 2 + (i % 17);
      auto z = enc.encode(ids, DropoutSpec{ad::Mode::train, 0, nullptr});
      require(z->size() == encoder_output_dim(*cfg),
              "constructed forward pass disagrees with output_dim");
    }
  }
  return "IntNet-5 -> 192, IntNet-9 -> 288, forward passes agree";
}

// ---- criterion 4: overfitting sanity ----
std::string criterion_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = ExperimentConfig::from_file(kFixtures + "/toy.conf");
  cfg.validate();
  require(cfg.model.encoder.kind == EncoderKind::intnet &&
              cfg.model.encoder.layers == 5 && cfg.model.encoder.m0 == 32 &&
              cfg.model.encoder.m_block == 16,
          "toy config is not the full IntNet-5");
  require(cfg.train.max_epochs <= 200, "toy config exceeds 200 epochs");

  Corpus corpus = load_corpus(cfg.data, cfg.task);
  require(corpus.train.size() == 32, "fixture must hold 32 sentences");
  RngState emb_rng = RngState(cfg.train.seed).split("embeddings");
  EmbeddingTable emb =
      load_embeddings(cfg.embeddings_path, cfg.model.word_dim, emb_rng);
  auto model = TaggerModel::build(cfg.model, corpus, &emb, cfg.train.seed);
  TrainResult result = train_model(*model, corpus, cfg.train, nullptr);
  require(!result.diverged, "training diverged");

  std::vector<std::vector<std::string>> pred, gold;
  for (const auto& s : corpus.train) {
    pred.push_back(model->predict(s.tokens));
    gold.push_back(s.labels);
  }
  auto report = evaluate_sequences(pred, gold, cfg.task);
  require(report.token_accuracy == 1.0,
          fmt("train token accuracy %.4f != 1.0", report.token_accuracy));
  require(report.f1 == 1.0, fmt("train entity F1 %.4f != 1.0", report.f1));

  // early stopping returned the best-dev checkpoint
  double best = -1;
  std::size_t argmax = 0;
  for (const auto& log : result.history) {
    if (log.dev_metric > best) {
      best = log.dev_metric;
      argmax = log.epoch;
    }
  }
  require(result.best_epoch == argmax && result.best_metric == best,
          "returned checkpoint is not the best-dev epoch");
  const double secs = seconds_since(t0);
  require(secs < 600.0, fmt("runtime %.0fs exceeds 10 minutes", secs));
  return fmt("accuracy 1.0, F1 1.0 after %zu epochs (best %zu), %.0fs",
             result.history.size(), result.best_epoch, secs);
}

// ---- criterion 5: optimizer unit values ----
std::string criterion_optimizer() {
  TrainConfig tc;
  require(std::abs(lr_at(0, tc) - 0.01) < 1e-12, "lr_at(0) != 0.01");
  require(std::abs(lr_at(20, tc) - 0.005) < 1e-12, "lr_at(20) != 0.005");

  ad::ParamStore store;
  auto p = store.add("p", {2}, {0, 0});
  p->grad = {8, 6};  // norm 10
  const double factor = clip_gradients(store, 5.0);
  require(std::abs(factor - 0.5) < 1e-12, "clip factor at norm 10 != 0.5");

  ad::ParamStore store2;
  auto q = store2.add("q", {1}, {0.0});
  SgdMomentum opt;
  const double lr = 0.01, g = 0.7;
  double velocity = 0;
  for (int i = 0; i < 400; ++i) {
    const double before = q->value[0];
    q->grad = {g};
    opt.step(store2, lr, 0.9);
    velocity = q->value[0] - before;
  }
  require(std::abs(velocity - (-10.0 * lr * g)) < 1e-12,
          fmt("velocity limit %.15f != %.15f", velocity, -10.0 * lr * g));
  return "lr schedule, clip factor and momentum limit all within 1e-12";
}

// ---- criterion 6: BIOES correctness ----
std::string criterion_bioes() {
  RngState rng(606);
  for (int rep = 0; rep < 10000; ++rep) {
    auto layout = testutil::random_layout(rng);
    const bool iob1 = rng.next_double() < 0.5;
    auto labels = iob1 ? testutil::spans_to_iob1(layout.spans, layout.length)
                       : spans_to_iob2(layout.spans, layout.length);
    auto bioes = to_bioes(labels);
    require(bioes_consistent(bioes), "converter output failed the validator");
    auto extracted = from_bioes(bioes);
    require(extracted.repairs == 0, "round trip needed repairs");
    require(testutil::sorted_spans(extracted.spans) ==
                testutil::sorted_spans(layout.spans),
            "round trip changed the span set");
  }
  return "10000 random layouts round-trip exactly and validate clean";
}

// ---- criterion 7: determinism of cmd_train ----
std::string criterion_determinism() {
  const fs::path root =
      fs::temp_directory_path() /
      ("intnet_accept_det_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path run_dir = root / "runs" / "toy-fast";
  const std::string base_cmd = "INTNET_RUN_ROOT='" + root.string() + "' '" +
                               kCli + "' train --config '" + kFixtures +
                               "/toy_fast.conf' >/dev/null 2>&1";
  require(std::system(base_cmd.c_str()) == 0, "first training run failed");
  const std::string history1 = slurp(run_dir / "history.jsonl");
  const std::string ckpt1 = slurp(run_dir / "checkpoint.intnet");
  require(!history1.empty() && !ckpt1.empty(), "first run wrote no artifacts");
  require(std::system(base_cmd.c_str()) == 0, "second training run failed");
  const bool same_history = slurp(run_dir / "history.jsonl") == history1;
  const bool same_ckpt = slurp(run_dir / "checkpoint.intnet") == ckpt1;
  fs::remove_all(root);
  require(same_history, "history.jsonl differs between identical runs");
  require(same_ckpt, "checkpoint differs between identical runs");
  return fmt("two runs, %zu-byte checkpoints bit-identical", ckpt1.size());
}

// ---- criterion 8: directional replication (optional, user-supplied data) --
std::string criterion_directional() {
  const char* train_path = std::getenv("INTNET_C8_TRAIN");
  const char* dev_path = std::getenv("INTNET_C8_DEV");
  const char* emb_path = std::getenv("INTNET_C8_EMB");
  if (train_path == nullptr || dev_path == nullptr || emb_path == nullptr) {
    throw Skipped(
        "long-running; set INTNET_C8_TRAIN, INTNET_C8_DEV and INTNET_C8_EMB "
        "(CoNLL-2003 splits and 100-dim embeddings) to run");
  }
  const char* dim_env = std::getenv("INTNET_C8_DIM");
  const std::size_t dim = dim_env ? std::strtoull(dim_env, nullptr, 10) : 100;

  CorpusPaths paths;
  paths.train = train_path;
  paths.dev = dev_path;
  Corpus corpus = load_corpus(paths, TaskKind::ner);

  // fixed 10% subsample of the training split
  RngState sub_rng(1234);
  std::vector<std::size_t> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i-- > 1;) {
    std::swap(order[i], order[sub_rng.next_below(i + 1)]);
  }
  const std::size_t keep = (corpus.train.size() + 9) / 10;
  std::vector<TaggedSentence> subset;
  for (std::size_t i = 0; i < keep; ++i) subset.push_back(corpus.train[order[i]]);
  corpus.train = std::move(subset);
  std::vector<std::string> tokens;
  corpus.train_words.clear();
  for (const auto& s : corpus.train) {
    for (const auto& t : s.tokens) {
      tokens.push_back(t);
      corpus.train_words.insert(t);
    }
  }
  corpus.char_vocab = CharVocab::build(tokens);

  RngState emb_rng = RngState(1).split("embeddings");
  EmbeddingTable emb = load_embeddings(emb_path, dim, emb_rng);

  TrainConfig tc;
  tc.max_epochs = 20;
  tc.patience = 20;
  tc.seed = 1;

  auto run_one = [&](EncoderKind kind) {
    ModelSpec spec;
    spec.encoder.kind = kind;
    spec.word_dim = dim;
    auto model = TaggerModel::build(spec, corpus, &emb, tc.seed);
    TrainResult r = train_model(*model, corpus, tc, &std::cerr);
    return r.best_metric;
  };
  const double f1_intnet = run_one(EncoderKind::intnet);
  const double f1_baseline = run_one(EncoderKind::none);
  require(f1_intnet > f1_baseline,
          fmt("IntNet-5 dev F1 %.4f does not exceed baseline %.4f", f1_intnet,
              f1_baseline));
  return fmt("IntNet-5 dev F1 %.4f > word-only baseline %.4f", f1_intnet,
             f1_baseline);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", criterion_gradients},
      {2, "CRF oracle equivalence", criterion_crf_oracle},
      {3, "dimension arithmetic", criterion_dimensions},
      {4, "overfitting sanity", criterion_overfit},
      {5, "optimizer unit values", criterion_optimizer},
      {6, "BIOES correctness", criterion_bioes},
      {7, "training determinism", criterion_determinism},
      {8, "directional replication", criterion_directional},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    try {
      const std::string detail = c.run();
      std::printf("PASS  criterion %d (%s): %s\n", c.id, c.title,
                  detail.c_str());
    } catch (const Skipped& s) {
      std::printf("SKIP  criterion %d (%s): %s\n", c.id, c.title, s.what());
    } catch (const std::exception& e) {
      std::printf("FAIL  criterion %d (%s): %s\n", c.id, c.title, e.what());
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures;
}
