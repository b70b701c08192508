#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "cspeech/nn/optim.hpp"
#include "json.hpp"

namespace cspeech::nn {

struct TrainingConfig {
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  int batch_size = 8;
  int max_epochs = 50;
  int patience = 4;     // epochs without validation improvement before stopping
  long max_steps = 0;   // optimizer steps; 0 means unbounded
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  bool restore_best = true;

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate}, {"weight_decay", weight_decay}, {"batch_size", batch_size},
            {"max_epochs", max_epochs},       {"patience", patience},         {"max_steps", max_steps},
            {"seed", seed},                   {"clip_norm", clip_norm},       {"restore_best", restore_best}};
  }

  static TrainingConfig from_json(const nlohmann::json& j) { return from_json(j, TrainingConfig()); }

  static TrainingConfig from_json(const nlohmann::json& j, TrainingConfig base) {
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.max_epochs = j.value("max_epochs", base.max_epochs);
    base.patience = j.value("patience", base.patience);
    base.max_steps = j.value("max_steps", base.max_steps);
    base.seed = j.value("seed", base.seed);
    base.clip_norm = j.value("clip_norm", base.clip_norm);
    base.restore_best = j.value("restore_best", base.restore_best);
    if (base.batch_size <= 0 || base.max_epochs <= 0 || base.patience <= 0 || base.learning_rate <= 0)
      throw ConfigError("training config: batch_size, max_epochs, patience and learning_rate must be positive");
    return base;
  }
};

struct TrainingLog {
  std::vector<double> train_losses;       // mean per-example loss per epoch
  std::vector<double> validation_losses;  // one entry per completed epoch
  long steps = 0;
  bool stopped_early = false;
  int best_epoch = -1;

  nlohmann::json to_json() const {
    return {{"train_losses", train_losses}, {"validation_losses", validation_losses}, {"steps", steps},
            {"stopped_early", stopped_early}, {"best_epoch", best_epoch}};
  }
};

// Mini-batch training with per-epoch validation and early stopping.
//   example_loss(i)      -> scalar Tensor for training example i
//   validation_loss()    -> mean validation loss (called without a graph)
// Training order is reshuffled every epoch from `config.seed`.
template <class ExampleLoss, class ValidationLoss>
TrainingLog train_loop(const ParameterList& params, size_t train_size, ExampleLoss&& example_loss,
                       ValidationLoss&& validation_loss, const TrainingConfig& config,
                       const std::function<void(int, double, double)>& on_epoch = {}) {
  if (train_size == 0) throw ConfigError("empty training set");
  AdamW optimizer(params, {.learning_rate = config.learning_rate,
                           .weight_decay = config.weight_decay,
                           .clip_norm = config.clip_norm});
  EarlyStopping stopper(config.patience);
  TrainingLog log;
  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(train_size);
  std::iota(order.begin(), order.end(), 0);
  auto best = snapshot(params);
  bool budget_spent = false;
  for (int epoch = 0; epoch < config.max_epochs && !budget_spent; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      for (size_t k = start; k < end; ++k) {
        Tensor loss = example_loss(order[k]);
        epoch_loss += loss.item();
        loss.backward();
      }
      seen += end - start;
      optimizer.step(static_cast<double>(end - start));
      ++log.steps;
      if (config.max_steps > 0 && log.steps >= config.max_steps) {
        budget_spent = true;
        break;
      }
    }
    double val;
    {
      NoGradGuard guard;
      val = validation_loss();
    }
    log.train_losses.push_back(epoch_loss / static_cast<double>(std::max<size_t>(seen, 1)));
    log.validation_losses.push_back(val);
    const bool stop = stopper.update(val);
    if (stopper.improved_last()) {
      best = snapshot(params);
      log.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(epoch, log.train_losses.back(), val);
    if (stop) {
      log.stopped_early = true;
      break;
    }
  }
  if (config.restore_best && log.best_epoch >= 0) {
    ParameterList mutable_params = params;
    restore(mutable_params, best);
  }
  return log;
}

}  // namespace cspeech::nn
