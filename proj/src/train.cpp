#include "intnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"

namespace intnet {

using ad::NodePtr;
using ad::Scalar;

void TrainConfig::validate() const {
  if (eta0 <= 0) throw ConfigError("train: eta0 must be positive");
  if (rho < 0) throw ConfigError("train: rho must be nonnegative");
  if (momentum < 0 || momentum >= 1) {
    throw ConfigError("train: momentum must be in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (clip_norm <= 0) throw ConfigError("train: clip_norm must be positive");
  if (dropout < 0 || dropout >= 1) {
    throw ConfigError("train: dropout must be in [0, 1)");
  }
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("train: patience must be >= 1");
}

double lr_at(std::size_t t, const TrainConfig& config) {
  return config.eta0 / (1.0 + config.rho * static_cast<double>(t));
}

Scalar clip_gradients(ad::ParamStore& params, Scalar clip_norm, bool by_value) {
  Scalar sq = 0;
  for (const auto& p : params.all()) {
    for (Scalar g : p.tensor->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("training diverged: non-finite gradient in " + p.name);
      }
      sq += g * g;
    }
  }
  if (by_value) {
    for (const auto& p : params.all()) {
      for (auto& g : p.tensor->grad) {
        g = std::clamp(g, -clip_norm, clip_norm);
      }
    }
    return 1.0;
  }
  const Scalar norm = std::sqrt(sq);
  if (norm <= clip_norm) return 1.0;
  const Scalar factor = clip_norm / norm;
  for (const auto& p : params.all()) {
    for (auto& g : p.tensor->grad) g *= factor;
  }
  return factor;
}

void SgdMomentum::step(ad::ParamStore& params, Scalar lr, Scalar momentum) {
  const auto& all = params.all();
  if (velocity_.size() != all.size()) {
    velocity_.clear();
    for (const auto& p : all) {
      velocity_.emplace_back(p.tensor->size(), Scalar(0));
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& v = velocity_[i];
    auto& value = all[i].tensor->value;
    auto& grad = all[i].tensor->grad;
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum * v[j] - lr * grad[j];
      value[j] += v[j];
      grad[j] = 0;
    }
  }
}

std::string EpochLog::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["train_loss"] = train_loss;
  if (dev.has_value()) {
    j["dev_precision"] = dev->precision;
    j["dev_recall"] = dev->recall;
    j["dev_f1"] = dev->f1;
    j["dev_accuracy"] = dev->token_accuracy;
    j["dev_metric"] = dev_metric;
  }
  return j.dump();
}

TrainResult train_model(TaggerModel& model, const Corpus& corpus,
                        const TrainConfig& config, std::ostream* progress) {
  config.validate();
  if (corpus.train.empty()) throw ConfigError("train: empty training split");

  RngState shuffle_rng = RngState(config.seed).split("shuffle");
  RngState dropout_rng = RngState(config.seed).split("dropout");

  std::vector<std::vector<int>> train_ids;
  train_ids.reserve(corpus.train.size());
  for (const auto& s : corpus.train) train_ids.push_back(model.tag_ids(s.labels));

  std::vector<std::vector<std::string>> dev_gold;
  for (const auto& s : corpus.dev) dev_gold.push_back(s.labels);

  SgdMomentum optimizer;
  TrainResult result;
  TaggerModel::Snapshot best = model.snapshot();
  double best_metric = -1;
  std::size_t best_epoch = 0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = lr_at(epoch - 1, config);
    double loss_sum = 0;
    bool diverged = false;

    auto batches =
        make_batches(corpus.train.size(), config.batch_size, shuffle_rng);
    try {
      for (const auto& batch : batches) {
        std::vector<NodePtr> losses;
        losses.reserve(batch.size());
        for (std::size_t idx : batch) {
          losses.push_back(model.sentence_nll(
              corpus.train[idx].tokens, train_ids[idx], ad::Mode::train,
              static_cast<Scalar>(config.dropout), &dropout_rng));
        }
        NodePtr total = losses.size() == 1 ? losses[0] : ad::add_n(losses);
        const double batch_loss = static_cast<double>(total->scalar());
        if (!std::isfinite(batch_loss)) {
          diverged = true;
          break;
        }
        loss_sum += batch_loss;
        ad::backward(total);
        clip_gradients(model.params(), static_cast<Scalar>(config.clip_norm),
                       config.clip_by_value);
        optimizer.step(model.params(), static_cast<Scalar>(lr),
                       static_cast<Scalar>(config.momentum));
      }
    } catch (const NumericError&) {
      diverged = true;
    }
    if (diverged) {
      result.diverged = true;
      result.stop_reason = "diverged";
      break;
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(corpus.train.size());

    if (!corpus.dev.empty()) {
      std::vector<std::vector<std::string>> pred;
      pred.reserve(corpus.dev.size());
      for (const auto& s : corpus.dev) pred.push_back(model.predict(s.tokens));
      log.dev = evaluate_sequences(pred, dev_gold, corpus.task);
      log.dev_metric = primary_metric(*log.dev, corpus.task);
    }
    result.history.push_back(log);
    if (progress != nullptr) {
      (*progress) << "epoch " << epoch << " lr " << lr << " loss "
                  << log.train_loss;
      if (log.dev.has_value()) (*progress) << " dev " << log.dev_metric;
      (*progress) << '\n';
    }

    if (corpus.dev.empty()) {
      // no selection signal: keep the latest state
      best = model.snapshot();
      best_epoch = epoch;
      continue;
    }
    if (log.dev_metric > best_metric) {
      best_metric = log.dev_metric;
      best_epoch = epoch;
      best = model.snapshot();
      stale = 0;
    } else {
      ++stale;
      if (stale >= config.patience) {
        result.stop_reason = "early_stop";
        break;
      }
    }
  }

  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  model.restore(best);
  result.best_epoch = best_epoch;
  result.best_metric = best_metric < 0 ? 0 : best_metric;
  return result;
}

}  // namespace intnet
