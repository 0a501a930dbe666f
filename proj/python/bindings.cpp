#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "intnet/crf.hpp"
#include "intnet/data.hpp"
#include "intnet/encoders.hpp"
#include "intnet/gradcheck.hpp"
#include "intnet/metrics.hpp"
#include "intnet/model.hpp"
#include "intnet/train.hpp"

namespace py = pybind11;
using namespace intnet;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

ScoreMatrix to_scores(const Matrix& emissions) {
  if (emissions.ndim() != 2) {
    throw py::value_error("emissions must be a T x K matrix");
  }
  const auto T = static_cast<std::size_t>(emissions.shape(0));
  const auto K = static_cast<std::size_t>(emissions.shape(1));
  ScoreMatrix out(T, std::vector<ad::Scalar>(K));
  auto view = emissions.unchecked<2>();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) out[t][k] = view(t, k);
  }
  return out;
}

std::vector<ad::Scalar> to_transitions(const Matrix& transitions,
                                       std::size_t K) {
  if (transitions.ndim() != 2 ||
      static_cast<std::size_t>(transitions.shape(0)) != K + 2 ||
      static_cast<std::size_t>(transitions.shape(1)) != K + 2) {
    throw py::value_error("transitions must be (K+2) x (K+2)");
  }
  std::vector<ad::Scalar> out((K + 2) * (K + 2));
  auto view = transitions.unchecked<2>();
  for (std::size_t i = 0; i < K + 2; ++i) {
    for (std::size_t j = 0; j < K + 2; ++j) out[i * (K + 2) + j] = view(i, j);
  }
  return out;
}

CrfParams value_crf(const ScoreMatrix& e, const std::vector<ad::Scalar>& trans,
                    bool use_stop) {
  const std::size_t K = e.empty() ? 0 : e[0].size();
  CrfParams crf;
  crf.num_tags = K;
  crf.use_stop = use_stop;
  crf.transitions = ad::leaf({K + 2, K + 2}, trans);
  std::vector<ad::Scalar> eye(K * K, 0);
  for (std::size_t i = 0; i < K; ++i) eye[i * K + i] = 1;
  crf.emission = ad::leaf({K, K}, eye);
  return crf;
}

py::array_t<double> to_array(const std::vector<ad::Scalar>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  auto buf = out.mutable_unchecked<1>();
  for (std::size_t i = 0; i < v.size(); ++i) buf(i) = v[i];
  return out;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["token_accuracy"] = r.token_accuracy;
  d["repair_count"] = r.repair_count;
  py::dict cats;
  for (const auto& [name, score] : r.categories) {
    py::dict c;
    c["gold"] = score.gold;
    c["predicted"] = score.predicted;
    c["correct"] = score.correct;
    c["precision"] = score.precision();
    c["recall"] = score.recall();
    c["f1"] = score.f1();
    cats[name.c_str()] = c;
  }
  if (!r.categories.empty()) d["categories"] = cats;
  return d;
}

// Thin handle over a loaded checkpoint.
class Tagger {
 public:
  explicit Tagger(const std::string& path) : model_(TaggerModel::load(path)) {}

  std::vector<std::string> tag(const std::vector<std::string>& tokens) {
    return model_->predict(tokens);
  }
  py::array_t<double> encode(const std::string& word) {
    return to_array(model_->encode_word(word, ad::Mode::eval)->value);
  }
  std::vector<std::pair<std::string, double>> neighbors(
      const std::string& query, const std::vector<std::string>& candidates,
      std::size_t k) {
    return nearest_neighbors(*model_, query, candidates, k).neighbors;
  }
  std::vector<std::string> labels() const { return model_->tags().labels; }
  std::string task() const { return to_string(model_->task()); }

 private:
  std::unique_ptr<TaggerModel> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Character-to-word encoders (IntNet, char-LSTM, char-CNN) with a "
      "BiLSTM-CRF sequence tagger";

  py::register_exception<Error>(m, "IntnetError", PyExc_RuntimeError);

  // tagging schemes
  m.def("to_bioes", &to_bioes, py::arg("labels"),
        "Convert IOB1/IOB2 labels to BIOES.");
  m.def(
      "from_bioes",
      [](const std::vector<std::string>& labels) {
        auto r = from_bioes(labels);
        std::vector<std::tuple<std::string, std::size_t, std::size_t>> spans;
        for (const auto& s : r.spans) spans.emplace_back(s.type, s.start, s.end);
        return py::make_tuple(spans, r.repairs);
      },
      py::arg("labels"),
      "Extract (type, start, end) spans; returns (spans, repair_count).");
  m.def("bioes_consistent", &bioes_consistent, py::arg("labels"));

  // linear-chain CRF on raw score matrices
  m.def(
      "crf_log_partition",
      [](const Matrix& emissions, const Matrix& transitions, bool use_stop) {
        auto e = to_scores(emissions);
        const std::size_t K = e.empty() ? 0 : e[0].size();
        auto trans = to_transitions(transitions, K);
        auto crf = value_crf(e, trans, use_stop);
        std::vector<ad::NodePtr> nodes;
        for (const auto& row : e) nodes.push_back(ad::leaf({K}, row));
        return static_cast<double>(crf_log_partition(nodes, crf)->scalar());
      },
      py::arg("emissions"), py::arg("transitions"), py::arg("use_stop") = true,
      "log sum over all tag sequences; transitions are (K+2)x(K+2) with "
      "START=K, STOP=K+1.");
  m.def(
      "crf_viterbi",
      [](const Matrix& emissions, const Matrix& transitions, bool use_stop) {
        auto e = to_scores(emissions);
        const std::size_t K = e.empty() ? 0 : e[0].size();
        auto path = viterbi(e, to_transitions(transitions, K), K, use_stop);
        return py::make_tuple(path.tags, static_cast<double>(path.score));
      },
      py::arg("emissions"), py::arg("transitions"), py::arg("use_stop") = true,
      "Best tag sequence and its score.");
  m.def(
      "crf_brute_force_partition",
      [](const Matrix& emissions, const Matrix& transitions, bool use_stop) {
        auto e = to_scores(emissions);
        const std::size_t K = e.empty() ? 0 : e[0].size();
        return static_cast<double>(
            brute_force_partition(e, to_transitions(transitions, K), K,
                                  use_stop));
      },
      py::arg("emissions"), py::arg("transitions"), py::arg("use_stop") = true,
      "Exhaustive-enumeration reference for crf_log_partition (K^T <= 1e6).");

  // metrics
  m.def(
      "entity_f1",
      [](const std::vector<std::vector<std::string>>& pred,
         const std::vector<std::vector<std::string>>& gold) {
        return report_to_dict(evaluate_sequences(pred, gold, TaskKind::ner));
      },
      py::arg("pred"), py::arg("gold"),
      "Exact-span micro P/R/F1 plus token accuracy.");
  m.def(
      "token_accuracy",
      [](const std::vector<std::vector<std::string>>& pred,
         const std::vector<std::vector<std::string>>& gold) {
        return token_accuracy(pred, gold);
      },
      py::arg("pred"), py::arg("gold"));

  // optimizer arithmetic
  m.def(
      "lr_at",
      [](std::size_t t, double eta0, double rho) {
        TrainConfig tc;
        tc.eta0 = eta0;
        tc.rho = rho;
        return lr_at(t, tc);
      },
      py::arg("t"), py::arg("eta0") = 0.01, py::arg("rho") = 0.05);
  m.def(
      "clip_factor",
      [](double total_norm, double clip_norm) {
        return total_norm > clip_norm ? clip_norm / total_norm : 1.0;
      },
      py::arg("total_norm"), py::arg("clip_norm") = 5.0);

  // encoder configuration and probing
  py::enum_<EncoderKind>(m, "EncoderKind")
      .value("intnet", EncoderKind::intnet)
      .value("char_lstm", EncoderKind::char_lstm)
      .value("char_cnn", EncoderKind::char_cnn)
      .value("none", EncoderKind::none);
  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("kind", &EncoderConfig::kind)
      .def_readwrite("d_char", &EncoderConfig::d_char)
      .def_readwrite("kernel_sizes", &EncoderConfig::kernel_sizes)
      .def_readwrite("m0", &EncoderConfig::m0)
      .def_readwrite("m_block", &EncoderConfig::m_block)
      .def_readwrite("layers", &EncoderConfig::layers)
      .def_readwrite("bottleneck_multiplier",
                     &EncoderConfig::bottleneck_multiplier)
      .def_readwrite("char_lstm_hidden", &EncoderConfig::char_lstm_hidden)
      .def_readwrite("char_cnn_filters", &EncoderConfig::char_cnn_filters)
      .def_readwrite("char_cnn_kernel", &EncoderConfig::char_cnn_kernel);
  m.def("encoder_output_dim", &encoder_output_dim, py::arg("config"),
        "Dimension of z for a config, independent of word length.");
  m.def(
      "encode_word",
      [](const std::string& word, const EncoderConfig& config,
         std::uint64_t seed) {
        CharVocab vocab = CharVocab::build({word});
        ad::ParamStore store;
        RngState rng = RngState(seed).split("init");
        auto enc = make_encoder(config, store, vocab.size(), rng);
        if (!enc) throw py::value_error("encoder kind 'none' has no encoding");
        auto ids = vocab.encode(word);
        // train-mode batch statistics: no running averages exist yet
        auto z = enc->encode(ids, DropoutSpec{ad::Mode::train, 0, nullptr});
        return to_array(z->value);
      },
      py::arg("word"), py::arg("config") = EncoderConfig{},
      py::arg("seed") = std::uint64_t{1},
      "z for one word under a freshly seeded random encoder (deterministic "
      "per seed).");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        std::vector<std::tuple<std::string, double, double>> out;
        for (const auto& r : run_gradcheck_suite(seed)) {
          out.emplace_back(r.name, static_cast<double>(r.error),
                           static_cast<double>(r.threshold));
        }
        return out;
      },
      py::arg("seed") = std::uint64_t{42},
      "Finite-difference results as (name, error, threshold) tuples.");

  py::class_<Tagger>(m, "Tagger")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("tag", &Tagger::tag, py::arg("tokens"),
           "Predicted labels for one tokenized sentence.")
      .def("encode", &Tagger::encode, py::arg("word"),
           "Character encoding z for a word.")
      .def("neighbors", &Tagger::neighbors, py::arg("query"),
           py::arg("candidates"), py::arg("k") = 5)
      .def_property_readonly("labels", &Tagger::labels)
      .def_property_readonly("task", &Tagger::task);
}
