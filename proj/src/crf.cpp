#include "intnet/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "intnet/lstm.hpp"

namespace intnet {

using ad::NodePtr;
using ad::Scalar;

TagSet TagSet::from(std::vector<std::string> labels) {
  TagSet t;
  t.labels = std::move(labels);
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    if (t.index.count(t.labels[i])) {
      throw ContractError("duplicate tag label: " + t.labels[i]);
    }
    t.index[t.labels[i]] = i;
  }
  return t;
}

std::size_t TagSet::lookup(const std::string& label) const {
  auto it = index.find(label);
  if (it == index.end()) throw ContractError("unknown tag: " + label);
  return it->second;
}

CrfParams make_crf(ad::ParamStore& store, const std::string& prefix,
                   std::size_t num_tags, std::size_t hidden2, RngState& rng,
                   bool use_stop) {
  if (num_tags == 0) throw ConfigError("crf: empty tag set");
  CrfParams crf;
  crf.num_tags = num_tags;
  crf.use_stop = use_stop;
  crf.emission = store.add(prefix + ".emission", {num_tags, hidden2},
                           glorot_uniform(num_tags, hidden2, rng));
  const std::size_t n = num_tags + 2;
  crf.transitions =
      store.add(prefix + ".transitions", {n, n}, std::vector<Scalar>(n * n, 0));
  return crf;
}

std::vector<NodePtr> crf_emissions(std::span<const ad::NodePtr> h,
                                   const CrfParams& crf) {
  std::vector<NodePtr> out;
  out.reserve(h.size());
  for (const auto& ht : h) out.push_back(ad::matvec(crf.emission, ht));
  return out;
}

namespace {

void check_tags(std::span<const ad::NodePtr> emissions,
                std::span<const int> tags, std::size_t K) {
  if (emissions.empty()) throw ContractError("crf: empty sequence");
  if (tags.size() != emissions.size()) {
    throw ContractError("crf: tag/position count mismatch");
  }
  for (int y : tags) {
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw ContractError("crf: unknown tag index");
    }
  }
}

}  // namespace

NodePtr crf_score(std::span<const ad::NodePtr> emissions,
                  std::span<const int> tags, const CrfParams& crf) {
  const std::size_t K = crf.num_tags;
  check_tags(emissions, tags, K);
  const auto& A = crf.transitions;
  NodePtr s = ad::at2d(A, crf.start_index(), static_cast<std::size_t>(tags[0]));
  s = ad::add(s, ad::pick(emissions[0], static_cast<std::size_t>(tags[0])));
  for (std::size_t t = 1; t < emissions.size(); ++t) {
    s = ad::add(s, ad::at2d(A, static_cast<std::size_t>(tags[t - 1]),
                            static_cast<std::size_t>(tags[t])));
    s = ad::add(s, ad::pick(emissions[t], static_cast<std::size_t>(tags[t])));
  }
  if (crf.use_stop) {
    s = ad::add(s, ad::at2d(A, static_cast<std::size_t>(tags.back()),
                            crf.stop_index()));
  }
  return s;
}

NodePtr crf_log_partition(std::span<const ad::NodePtr> emissions,
                          const CrfParams& crf) {
  if (emissions.empty()) throw ContractError("crf: empty sequence");
  const std::size_t K = crf.num_tags;
  const auto& A = crf.transitions;
  NodePtr inner = ad::slice2d(A, 0, K, 0, K);
  NodePtr start_row = ad::reshape(ad::slice2d(A, K, K + 1, 0, K), {K});
  NodePtr alpha = ad::add(start_row, emissions[0]);
  for (std::size_t t = 1; t < emissions.size(); ++t) {
    NodePtr m = ad::add(ad::broadcast_cols(alpha, K), inner);
    alpha = ad::add(ad::logsumexp_cols(m), emissions[t]);
  }
  if (crf.use_stop) {
    NodePtr stop_col = ad::reshape(ad::slice2d(A, 0, K, K + 1, K + 2), {K});
    alpha = ad::add(alpha, stop_col);
  }
  return ad::logsumexp(alpha);
}

NodePtr crf_nll_from_scores(std::span<const ad::NodePtr> emissions,
                            std::span<const int> tags, const CrfParams& crf) {
  return ad::sub(crf_log_partition(emissions, crf),
                 crf_score(emissions, tags, crf));
}

NodePtr crf_nll(std::span<const ad::NodePtr> h, std::span<const int> tags,
                const CrfParams& crf) {
  auto emissions = crf_emissions(h, crf);
  return crf_nll_from_scores(emissions, tags, crf);
}

ScoreMatrix plain_emissions(std::span<const ad::NodePtr> h,
                            const CrfParams& crf) {
  const std::size_t K = crf.num_tags;
  const std::size_t D = crf.emission->shape[1];
  ScoreMatrix e(h.size(), std::vector<Scalar>(K, 0));
  for (std::size_t t = 0; t < h.size(); ++t) {
    if (h[t]->shape != ad::Shape{D}) {
      throw DimensionError("plain_emissions: hidden dimension mismatch");
    }
    for (std::size_t y = 0; y < K; ++y) {
      const Scalar* row = crf.emission->value.data() + y * D;
      Scalar acc = 0;
      for (std::size_t j = 0; j < D; ++j) acc += row[j] * h[t]->value[j];
      e[t][y] = acc;
    }
  }
  return e;
}

namespace {

struct TransView {
  const std::vector<Scalar>& v;
  std::size_t K;
  Scalar inner(std::size_t i, std::size_t j) const { return v[i * (K + 2) + j]; }
  Scalar start(std::size_t j) const { return v[K * (K + 2) + j]; }
  Scalar stop(std::size_t i) const { return v[i * (K + 2) + K + 1]; }
};

void check_instance(const ScoreMatrix& emissions,
                    const std::vector<Scalar>& transitions, std::size_t K) {
  if (emissions.empty()) throw ContractError("crf: empty sequence");
  if (K == 0) throw ContractError("crf: empty tag set");
  if (transitions.size() != (K + 2) * (K + 2)) {
    throw DimensionError("crf: transition matrix must be (K+2) x (K+2)");
  }
  for (const auto& row : emissions) {
    if (row.size() != K) throw DimensionError("crf: emission row size mismatch");
  }
}

std::size_t enumeration_size(std::size_t K, std::size_t T) {
  std::size_t n = 1;
  for (std::size_t t = 0; t < T; ++t) {
    if (n > 1000000 / K) {
      throw OracleSizeError("brute force: K^T exceeds 1e6 sequences");
    }
    n *= K;
  }
  return n;
}

template <typename Fn>
void for_each_path(std::size_t K, std::size_t T, Fn&& fn) {
  std::vector<int> tags(T, 0);
  while (true) {
    fn(tags);
    std::size_t p = T;
    while (p-- > 0) {
      if (static_cast<std::size_t>(++tags[p]) < K) break;
      tags[p] = 0;
      if (p == 0) return;
    }
  }
}

}  // namespace

Scalar path_score(const ScoreMatrix& emissions,
                  const std::vector<Scalar>& transitions,
                  std::span<const int> tags, std::size_t K, bool use_stop) {
  check_instance(emissions, transitions, K);
  if (tags.size() != emissions.size()) {
    throw ContractError("path_score: tag/position count mismatch");
  }
  TransView A{transitions, K};
  Scalar s = A.start(static_cast<std::size_t>(tags[0]));
  s += emissions[0][static_cast<std::size_t>(tags[0])];
  for (std::size_t t = 1; t < tags.size(); ++t) {
    s += A.inner(static_cast<std::size_t>(tags[t - 1]),
                 static_cast<std::size_t>(tags[t]));
    s += emissions[t][static_cast<std::size_t>(tags[t])];
  }
  if (use_stop) s += A.stop(static_cast<std::size_t>(tags.back()));
  return s;
}

DecodedPath viterbi(const ScoreMatrix& emissions,
                    const std::vector<Scalar>& transitions, std::size_t K,
                    bool use_stop) {
  check_instance(emissions, transitions, K);
  TransView A{transitions, K};
  const std::size_t T = emissions.size();
  std::vector<std::vector<Scalar>> alpha(T, std::vector<Scalar>(K));
  std::vector<std::vector<std::size_t>> back(T, std::vector<std::size_t>(K, 0));
  for (std::size_t j = 0; j < K; ++j) {
    Scalar s = A.start(j);
    s += emissions[0][j];
    alpha[0][j] = s;
  }
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      std::size_t best_i = 0;
      Scalar best = alpha[t - 1][0] + A.inner(0, j);
      for (std::size_t i = 1; i < K; ++i) {
        const Scalar cand = alpha[t - 1][i] + A.inner(i, j);
        if (cand > best) {  // ties keep the lowest previous index
          best = cand;
          best_i = i;
        }
      }
      back[t][j] = best_i;
      best += emissions[t][j];
      alpha[t][j] = best;
    }
  }
  std::size_t best_j = 0;
  Scalar best = alpha[T - 1][0] + (use_stop ? A.stop(0) : Scalar(0));
  for (std::size_t j = 1; j < K; ++j) {
    const Scalar cand = alpha[T - 1][j] + (use_stop ? A.stop(j) : Scalar(0));
    if (cand > best) {
      best = cand;
      best_j = j;
    }
  }
  DecodedPath out;
  out.score = best;
  out.tags.assign(T, 0);
  out.tags[T - 1] = static_cast<int>(best_j);
  for (std::size_t t = T - 1; t-- > 0;) {
    best_j = back[t + 1][best_j];
    out.tags[t] = static_cast<int>(best_j);
  }
  return out;
}

DecodedPath viterbi(std::span<const ad::NodePtr> h, const CrfParams& crf) {
  return viterbi(plain_emissions(h, crf), crf.transitions->value, crf.num_tags,
                 crf.use_stop);
}

Scalar brute_force_partition(const ScoreMatrix& emissions,
                             const std::vector<Scalar>& transitions,
                             std::size_t K, bool use_stop) {
  check_instance(emissions, transitions, K);
  const std::size_t T = emissions.size();
  enumeration_size(K, T);
  std::vector<Scalar> scores;
  for_each_path(K, T, [&](const std::vector<int>& tags) {
    scores.push_back(path_score(emissions, transitions, tags, K, use_stop));
  });
  const Scalar mx = *std::max_element(scores.begin(), scores.end());
  Scalar s = 0;
  for (Scalar x : scores) s += std::exp(x - mx);
  return mx + std::log(s);
}

DecodedPath brute_force_best(const ScoreMatrix& emissions,
                             const std::vector<Scalar>& transitions,
                             std::size_t K, bool use_stop) {
  check_instance(emissions, transitions, K);
  const std::size_t T = emissions.size();
  enumeration_size(K, T);
  DecodedPath best;
  best.score = -std::numeric_limits<Scalar>::infinity();
  for_each_path(K, T, [&](const std::vector<int>& tags) {
    const Scalar s = path_score(emissions, transitions, tags, K, use_stop);
    if (s > best.score) {
      best.score = s;
      best.tags = tags;
    }
  });
  return best;
}

Scalar brute_force_partition(std::span<const ad::NodePtr> h,
                             const CrfParams& crf) {
  return brute_force_partition(plain_emissions(h, crf),
                               crf.transitions->value, crf.num_tags,
                               crf.use_stop);
}

DecodedPath brute_force_best(std::span<const ad::NodePtr> h,
                             const CrfParams& crf) {
  return brute_force_best(plain_emissions(h, crf), crf.transitions->value,
                          crf.num_tags, crf.use_stop);
}

}  // namespace intnet
