#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "intnet/autodiff.hpp"
#include "intnet/rng.hpp"

namespace intnet {

// Ordered tag inventory.
struct TagSet {
  std::vector<std::string> labels;
  std::unordered_map<std::string, std::size_t> index;

  static TagSet from(std::vector<std::string> labels);
  std::size_t lookup(const std::string& label) const;  // throws on unknown
  bool contains(const std::string& label) const { return index.count(label) > 0; }
  std::size_t size() const { return labels.size(); }
};

// Linear-chain CRF parameters. `transitions` is (K+2) x (K+2) with the
// virtual START tag at row K and STOP at column K+1. Entries into START and
// out of STOP are never read, which realizes their -inf masking; everything
// that is read is trainable.
struct CrfParams {
  ad::NodePtr emission;     // K x 2H tag vectors w_y (no bias)
  ad::NodePtr transitions;  // (K+2) x (K+2)
  std::size_t num_tags = 0;
  bool use_stop = true;

  std::size_t start_index() const { return num_tags; }
  std::size_t stop_index() const { return num_tags + 1; }
};

CrfParams make_crf(ad::ParamStore& store, const std::string& prefix,
                   std::size_t num_tags, std::size_t hidden2, RngState& rng,
                   bool use_stop = true);

// Per-position tag scores w_y . h_t as K-vectors.
std::vector<ad::NodePtr> crf_emissions(std::span<const ad::NodePtr> h,
                                       const CrfParams& crf);

// f(h, y): sum of emissions along y plus START->y_1, the chain transitions,
// and y_T->STOP. All variants accumulate the terms in the same left-to-right
// order so the Viterbi score and the scored path agree bit for bit.
ad::NodePtr crf_score(std::span<const ad::NodePtr> emissions,
                      std::span<const int> tags, const CrfParams& crf);

// log sum over all tag sequences of exp f(h, y'), via the forward algorithm
// with log-sum-exp stabilization; differentiable.
ad::NodePtr crf_log_partition(std::span<const ad::NodePtr> emissions,
                              const CrfParams& crf);

// Negative log likelihood: log_partition - score. Nonnegative.
ad::NodePtr crf_nll_from_scores(std::span<const ad::NodePtr> emissions,
                                std::span<const int> tags, const CrfParams& crf);
ad::NodePtr crf_nll(std::span<const ad::NodePtr> h, std::span<const int> tags,
                    const CrfParams& crf);

// ------- value-level decoding and enumeration oracles -------

using ScoreMatrix = std::vector<std::vector<ad::Scalar>>;  // [T][K]

// Emission values computed with plain loops (no tape); used by decoding.
ScoreMatrix plain_emissions(std::span<const ad::NodePtr> h, const CrfParams& crf);

struct DecodedPath {
  std::vector<int> tags;
  ad::Scalar score = 0;
};

// Max-score path with deterministic tie-breaking (lowest tag index wins at
// every backpointer). The returned score equals crf_score of the returned
// sequence exactly.
DecodedPath viterbi(const ScoreMatrix& emissions,
                    const std::vector<ad::Scalar>& transitions, std::size_t K,
                    bool use_stop = true);
DecodedPath viterbi(std::span<const ad::NodePtr> h, const CrfParams& crf);

// Exhaustive enumeration over all K^T sequences; requires K^T <= 1e6.
ad::Scalar brute_force_partition(const ScoreMatrix& emissions,
                                 const std::vector<ad::Scalar>& transitions,
                                 std::size_t K, bool use_stop = true);
DecodedPath brute_force_best(const ScoreMatrix& emissions,
                             const std::vector<ad::Scalar>& transitions,
                             std::size_t K, bool use_stop = true);
ad::Scalar brute_force_partition(std::span<const ad::NodePtr> h,
                                 const CrfParams& crf);
DecodedPath brute_force_best(std::span<const ad::NodePtr> h,
                             const CrfParams& crf);

// Path score over raw values, same accumulation order as crf_score.
ad::Scalar path_score(const ScoreMatrix& emissions,
                      const std::vector<ad::Scalar>& transitions,
                      std::span<const int> tags, std::size_t K,
                      bool use_stop = true);

}  // namespace intnet
