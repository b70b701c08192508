#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cspeech/nn/layers.hpp"

namespace cspeech::nn {

// AdamW with decoupled weight decay and optional global-norm clipping.
class AdamW {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // <= 0 disables clipping
  };

  AdamW(ParameterList params, Options options) : params_(std::move(params)), options_(options) {
    for (auto& [name, t] : params_) {
      first_.emplace_back(t.size(), 0.0);
      second_.emplace_back(t.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  // Applies one update. `grad_scale` divides accumulated gradients, e.g. by
  // the mini-batch size when per-example losses were summed.
  void step(double grad_scale = 1.0) {
    ++step_count_;
    double norm_sq = 0.0;
    for (auto& [name, t] : params_)
      for (float g : t.grad()) norm_sq += (g / grad_scale) * (g / grad_scale);
    double clip = 1.0;
    if (options_.clip_norm > 0.0) {
      const double norm = std::sqrt(norm_sq);
      if (norm > options_.clip_norm) clip = options_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_count_));
    for (size_t p = 0; p < params_.size(); ++p) {
      auto& t = params_[p].second;
      auto& values = t.values();
      auto& grads = t.grad();
      for (size_t i = 0; i < values.size(); ++i) {
        const double g = grads[i] / grad_scale * clip;
        first_[p][i] = options_.beta1 * first_[p][i] + (1.0 - options_.beta1) * g;
        second_[p][i] = options_.beta2 * second_[p][i] + (1.0 - options_.beta2) * g * g;
        const double mhat = first_[p][i] / bc1;
        const double vhat = second_[p][i] / bc2;
        double v = values[i];
        v -= options_.learning_rate * options_.weight_decay * v;
        v -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
        values[i] = static_cast<float>(v);
      }
    }
    zero_grad();
  }

  long step_count() const { return step_count_; }

 private:
  ParameterList params_;
  Options options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  long step_count_ = 0;
};

// Tracks validation loss across epochs and signals a stop after `patience`
// consecutive epochs without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when training should stop after recording this epoch.
  bool update(double validation_loss) {
    if (validation_loss < best_) {
      best_ = validation_loss;
      stale_ = 0;
      improved_ = true;
    } else {
      ++stale_;
      improved_ = false;
    }
    return stale_ >= patience_;
  }

  bool improved_last() const { return improved_; }
  double best() const { return best_; }
  int stale_epochs() const { return stale_; }

 private:
  int patience_;
  int stale_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

// Deep copy of parameter values between two lists with matching names.
inline void copy_parameter_values(const ParameterList& from, ParameterList& to) {
  for (auto& [name, dst] : to) {
    for (const auto& [src_name, src] : from) {
      if (src_name == name) {
        if (src.size() != dst.size()) throw DimensionError("parameter shape mismatch for " + name);
        dst.values() = src.values();
        break;
      }
    }
  }
}

inline std::vector<std::vector<float>> snapshot(const ParameterList& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t.values());
  return out;
}

inline void restore(ParameterList& params, const std::vector<std::vector<float>>& saved) {
  for (size_t i = 0; i < params.size(); ++i) params[i].second.values() = saved[i];
}

}  // namespace cspeech::nn
