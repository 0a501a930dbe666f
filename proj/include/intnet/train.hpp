#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "intnet/metrics.hpp"
#include "intnet/model.hpp"

namespace intnet {

struct TrainConfig {
  double eta0 = 0.01;
  double rho = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 10;
  double clip_norm = 5.0;
  bool clip_by_value = false;  // clamp each element to +-clip_norm instead
  double dropout = 0.5;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  void validate() const;  // throws ConfigError
};

// eta0 / (1 + rho * t); t counts completed epochs, so epoch 1 trains at eta0.
double lr_at(std::size_t t, const TrainConfig& config);

// Scales every gradient by clip_norm/g when the global L2 norm g exceeds
// clip_norm; returns the factor applied (1.0 when nothing was clipped).
// Non-finite gradients raise NumericError. In by-value mode elements are
// clamped to [-clip_norm, clip_norm] and the factor is always 1.0.
ad::Scalar clip_gradients(ad::ParamStore& params, ad::Scalar clip_norm,
                          bool by_value = false);

// Classical (heavy-ball) momentum: v <- momentum*v - lr*grad; theta += v.
// Velocities persist across steps; gradients are zeroed after the update.
class SgdMomentum {
 public:
  void step(ad::ParamStore& params, ad::Scalar lr, ad::Scalar momentum);

 private:
  std::vector<std::vector<ad::Scalar>> velocity_;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double train_loss = 0;  // mean NLL per sentence
  std::optional<EvalReport> dev;
  double dev_metric = 0;
  std::string to_json() const;  // one line, no timestamps
};

struct TrainResult {
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;  // 0 when no dev split was available
  double best_metric = 0;
  bool diverged = false;
  std::string stop_reason;  // "max_epochs", "early_stop", "diverged"
};

// One training run: per epoch shuffle + batch, summed sentence NLLs per
// batch, backward, clip, momentum step, then a dev evaluation. Keeps the
// best-dev snapshot and restores it into the model before returning; stops
// after `patience` epochs without dev improvement. On divergence the last
// good snapshot is restored and the result is flagged.
TrainResult train_model(TaggerModel& model, const Corpus& corpus,
                        const TrainConfig& config,
                        std::ostream* progress = nullptr);

}  // namespace intnet
