#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "cspeech/error.hpp"
#include "cspeech/nn/ops.hpp"

namespace cspeech::values {

// Level weights of the multi-level value classifier (L1, L2, L3).
struct MultiTaskWeights {
  double l1 = 0.23;
  double l2 = 0.33;
  double l3 = 0.44;

  void validate() const {
    if (std::abs(l1 + l2 + l3 - 1.0) > 1e-9) throw ConfigError("multi-task weights must sum to 1");
    if (l1 < 0 || l2 < 0 || l3 < 0) throw ConfigError("multi-task weights must be non-negative");
  }
};

using Matrix = std::vector<std::vector<double>>;

// Mean binary cross-entropy of sigmoid(logits) over batch and classes.
inline double mean_bce(const Matrix& logits, const Matrix& labels) {
  if (logits.size() != labels.size() || logits.empty()) throw DimensionError("bce: batch size mismatch");
  double total = 0.0;
  size_t count = 0;
  for (size_t b = 0; b < logits.size(); ++b) {
    if (logits[b].size() != labels[b].size()) throw DimensionError("bce: class count mismatch");
    for (size_t c = 0; c < logits[b].size(); ++c) {
      const double x = logits[b][c], y = labels[b][c];
      if (y != 0.0 && y != 1.0) throw DimensionError("bce: labels must be binary");
      total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
      ++count;
    }
  }
  if (count == 0) throw DimensionError("bce: no classes");
  return total / static_cast<double>(count);
}

inline double multitask_loss(const Matrix& logits_l1, const Matrix& logits_l2, const Matrix& logits_l3,
                             const Matrix& labels_l1, const Matrix& labels_l2, const Matrix& labels_l3,
                             const MultiTaskWeights& weights = {}) {
  weights.validate();
  return weights.l1 * mean_bce(logits_l1, labels_l1) + weights.l2 * mean_bce(logits_l2, labels_l2) +
         weights.l3 * mean_bce(logits_l3, labels_l3);
}

// How D(x, y) is read in the quadruple objective. The distance reading
// (1 - cosine) is the default; the similarity reading is kept for
// comparison experiments.
enum class DistanceConvention { kCosineDistance, kCosineSimilarity };

struct QuadrupleLossParams {
  double alpha = 2.0;
  double beta = 1.0;
  double margin = 1.0;
  DistanceConvention convention = DistanceConvention::kCosineDistance;
};

inline double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double cosine(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("cosine: dimension mismatch");
  const double nx = norm(x), ny = norm(y);
  if (nx == 0.0 || ny == 0.0) throw NumericError("cosine: zero-norm vector");
  double dot = 0.0;
  for (size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  return dot / (nx * ny);
}

namespace detail {

inline double measure(std::span<const double> x, std::span<const double> y, DistanceConvention c) {
  const double cs = cosine(x, y);
  return c == DistanceConvention::kCosineDistance ? 1.0 - cs : cs;
}

// d measure(x, y) / dx
inline std::vector<double> measure_grad(std::span<const double> x, std::span<const double> y, DistanceConvention c) {
  const double nx = norm(x), ny = norm(y), cs = cosine(x, y);
  const double sign = c == DistanceConvention::kCosineDistance ? -1.0 : 1.0;
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) g[i] = sign * (y[i] / (nx * ny) - cs * x[i] / (nx * nx));
  return g;
}

}  // namespace detail

// L = alpha [D(a,p) - D(a,easy)] + beta [D(hard,a) - D(hard,p)] + margin
inline double quadruple_loss(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> easy_negative, std::span<const double> hard_negative,
                             const QuadrupleLossParams& params = {}) {
  using detail::measure;
  const auto c = params.convention;
  return params.alpha * (measure(anchor, positive, c) - measure(anchor, easy_negative, c)) +
         params.beta * (measure(hard_negative, anchor, c) - measure(hard_negative, positive, c)) + params.margin;
}

// Gradients of quadruple_loss w.r.t. (anchor, positive, easy, hard).
inline std::array<std::vector<double>, 4> quadruple_loss_gradient(std::span<const double> a,
                                                                  std::span<const double> p,
                                                                  std::span<const double> easy,
                                                                  std::span<const double> hard,
                                                                  const QuadrupleLossParams& params = {}) {
  using detail::measure_grad;
  const auto c = params.convention;
  const size_t n = a.size();
  if (p.size() != n || easy.size() != n || hard.size() != n) throw DimensionError("quadruple loss: dimension mismatch");
  std::array<std::vector<double>, 4> g;
  for (auto& v : g) v.assign(n, 0.0);
  const auto d_ap_a = measure_grad(a, p, c), d_ap_p = measure_grad(p, a, c);
  const auto d_ae_a = measure_grad(a, easy, c), d_ae_e = measure_grad(easy, a, c);
  const auto d_ha_h = measure_grad(hard, a, c), d_ha_a = measure_grad(a, hard, c);
  const auto d_hp_h = measure_grad(hard, p, c), d_hp_p = measure_grad(p, hard, c);
  for (size_t i = 0; i < n; ++i) {
    g[0][i] = params.alpha * (d_ap_a[i] - d_ae_a[i]) + params.beta * d_ha_a[i];
    g[1][i] = params.alpha * d_ap_p[i] - params.beta * d_hp_p[i];
    g[2][i] = -params.alpha * d_ae_e[i];
    g[3][i] = params.beta * (d_ha_h[i] - d_hp_h[i]);
  }
  return g;
}

// The same objective on autograd tensors ([1,d] each), used for training.
inline nn::Tensor quadruple_loss(const nn::Tensor& anchor, const nn::Tensor& positive, const nn::Tensor& easy_negative,
                                 const nn::Tensor& hard_negative, const QuadrupleLossParams& params = {}) {
  const float sign = params.convention == DistanceConvention::kCosineDistance ? -1.0f : 1.0f;
  // With distances 1 - cos the constant terms cancel inside each bracket.
  const float a = static_cast<float>(params.alpha) * sign;
  const float b = static_cast<float>(params.beta) * sign;
  auto terms = std::vector<nn::Tensor>{nn::cosine_similarity(anchor, positive),
                                       nn::cosine_similarity(anchor, easy_negative),
                                       nn::cosine_similarity(hard_negative, anchor),
                                       nn::cosine_similarity(hard_negative, positive)};
  return nn::add_scalar(nn::weighted_sum(terms, {a, -a, b, -b}), static_cast<float>(params.margin));
}

}  // namespace cspeech::values
