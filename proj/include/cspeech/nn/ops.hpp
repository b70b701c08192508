#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cspeech/nn/tensor.hpp"

namespace cspeech::nn {

using detail::accumulate;
using detail::make_result;
using detail::make_result_multi;

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

// [n,k] x [k,m] -> [n,m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<float> out(static_cast<size_t>(n) * m, 0.0f);
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int i = 0; i < n; ++i) {
    float* orow = out.data() + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const float s = av[static_cast<size_t>(i) * k + p];
      if (s == 0.0f) continue;
      const float* brow = bv + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += s * brow[j];
    }
  }
  return make_result(n, m, std::move(out), {a, b}, [a, b, n, k, m](Node& self) {
    const float* g = self.grad.data();
    if (a.requires_grad()) {
      auto* an = a.node();
      an->ensure_grad();
      const float* bv = b.values().data();
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          float acc = 0.0f;
          const float* grow = g + static_cast<size_t>(i) * m;
          const float* brow = bv + static_cast<size_t>(p) * m;
          for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
          an->grad[static_cast<size_t>(i) * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      auto* bn = b.node();
      bn->ensure_grad();
      const float* av = a.values().data();
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const float s = av[static_cast<size_t>(i) * k + p];
          if (s == 0.0f) continue;
          const float* grow = g + static_cast<size_t>(i) * m;
          float* brow = bn->grad.data() + static_cast<size_t>(p) * m;
          for (int j = 0; j < m; ++j) brow[j] += s * grow[j];
        }
    }
  });
}

// [n,k] x [m,k]^T -> [n,m]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
  const int n = a.rows(), k = a.cols(), m = b.rows();
  std::vector<float> out(static_cast<size_t>(n) * m, 0.0f);
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      float acc = 0.0f;
      const float* arow = av + static_cast<size_t>(i) * k;
      const float* brow = bv + static_cast<size_t>(j) * k;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[static_cast<size_t>(i) * m + j] = acc;
    }
  return make_result(n, m, std::move(out), {a, b}, [a, b, n, k, m](Node& self) {
    const float* g = self.grad.data();
    const float* av = a.values().data();
    const float* bv = b.values().data();
    if (a.requires_grad()) {
      auto* an = a.node();
      an->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const float s = g[static_cast<size_t>(i) * m + j];
          if (s == 0.0f) continue;
          float* arow = an->grad.data() + static_cast<size_t>(i) * k;
          const float* brow = bv + static_cast<size_t>(j) * k;
          for (int p = 0; p < k; ++p) arow[p] += s * brow[p];
        }
    }
    if (b.requires_grad()) {
      auto* bn = b.node();
      bn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const float s = g[static_cast<size_t>(i) * m + j];
          if (s == 0.0f) continue;
          float* brow = bn->grad.data() + static_cast<size_t>(j) * k;
          const float* arow = av + static_cast<size_t>(i) * k;
          for (int p = 0; p < k; ++p) brow[p] += s * arow[p];
        }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(*a.node(), self.grad);
    accumulate(*b.node(), self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(*a.node(), self.grad);
    if (b.requires_grad()) {
      auto* bn = b.node();
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
}

// Adds a [1,m] row vector to every row of a [n,m] matrix.
inline Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw DimensionError("add_row: bias shape");
  const int n = a.rows(), m = a.cols();
  std::vector<float> out(a.values());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(i) * m + j] += bias.values()[j];
  return make_result(n, m, std::move(out), {a, bias}, [a, bias, n, m](Node& self) {
    accumulate(*a.node(), self.grad);
    if (bias.requires_grad()) {
      auto* bn = bias.node();
      bn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) bn->grad[j] += self.grad[static_cast<size_t>(i) * m + j];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) {
      auto* an = a.node();
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * b.values()[i];
    }
    if (b.requires_grad()) {
      auto* bn = b.node();
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * a.values()[i];
    }
  });
}

inline Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.values());
  for (auto& v : out) v *= s;
  return make_result(a.rows(), a.cols(), std::move(out), {a}, [a, s](Node& self) {
    auto* an = a.node();
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
  });
}

inline Tensor add_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.values());
  for (auto& v : out) v += s;
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [a](Node& self) { accumulate(*a.node(), self.grad); });
}

inline Tensor relu(const Tensor& a) {
  std::vector<float> out(a.values());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  return make_result(a.rows(), a.cols(), std::move(out), {a}, [a](Node& self) {
    auto* an = a.node();
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (a.values()[i] > 0.0f) an->grad[i] += self.grad[i];
  });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<float> out(a.values());
  for (auto& v : out) v = std::tanh(v);
  auto result = make_result(a.rows(), a.cols(), out, {a}, [a, out](Node& self) {
    auto* an = a.node();
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * (1.0f - out[i] * out[i]);
  });
  return result;
}

inline float sigmoid_scalar(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

// Row-wise layer normalization with learned gain and bias ([1,m] each).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f) {
  const int n = x.rows(), m = x.cols();
  if (gain.cols() != m || bias.cols() != m) throw DimensionError("layer_norm: parameter width");
  std::vector<float> out(x.size());
  std::vector<float> xhat(x.size());
  std::vector<float> inv_std(n);
  for (int i = 0; i < n; ++i) {
    const float* row = x.values().data() + static_cast<size_t>(i) * m;
    float mean = 0.0f;
    for (int j = 0; j < m; ++j) mean += row[j];
    mean /= m;
    float var = 0.0f;
    for (int j = 0; j < m; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= m;
    inv_std[i] = 1.0f / std::sqrt(var + eps);
    for (int j = 0; j < m; ++j) {
      const size_t idx = static_cast<size_t>(i) * m + j;
      xhat[idx] = (row[j] - mean) * inv_std[i];
      out[idx] = xhat[idx] * gain.values()[j] + bias.values()[j];
    }
  }
  return make_result(n, m, std::move(out), {x, gain, bias},
                     [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n, m](Node& self) {
                       const float* g = self.grad.data();
                       if (gain.requires_grad() || bias.requires_grad()) {
                         auto* gn = gain.node();
                         auto* bn = bias.node();
                         gn->ensure_grad();
                         bn->ensure_grad();
                         for (int i = 0; i < n; ++i)
                           for (int j = 0; j < m; ++j) {
                             const size_t idx = static_cast<size_t>(i) * m + j;
                             gn->grad[j] += g[idx] * xhat[idx];
                             bn->grad[j] += g[idx];
                           }
                       }
                       if (x.requires_grad()) {
                         auto* xn = x.node();
                         xn->ensure_grad();
                         for (int i = 0; i < n; ++i) {
                           float sum_dy = 0.0f, sum_dy_xhat = 0.0f;
                           for (int j = 0; j < m; ++j) {
                             const size_t idx = static_cast<size_t>(i) * m + j;
                             const float dy = g[idx] * gain.values()[j];
                             sum_dy += dy;
                             sum_dy_xhat += dy * xhat[idx];
                           }
                           for (int j = 0; j < m; ++j) {
                             const size_t idx = static_cast<size_t>(i) * m + j;
                             const float dy = g[idx] * gain.values()[j];
                             xn->grad[idx] += inv_std[i] / m * (m * dy - sum_dy - xhat[idx] * sum_dy_xhat);
                           }
                         }
                       }
                     });
}

// Row-wise softmax. With `causal`, entry (i,j) for j>i is excluded.
inline Tensor softmax_rows(const Tensor& x, bool causal = false) {
  const int n = x.rows(), m = x.cols();
  std::vector<float> out(x.size(), 0.0f);
  for (int i = 0; i < n; ++i) {
    const int limit = causal ? std::min(m, i + 1) : m;
    const float* row = x.values().data() + static_cast<size_t>(i) * m;
    float* orow = out.data() + static_cast<size_t>(i) * m;
    float mx = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < limit; ++j) mx = std::max(mx, row[j]);
    float sum = 0.0f;
    for (int j = 0; j < limit; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < limit; ++j) orow[j] /= sum;
  }
  return make_result(n, m, out, {x}, [x, out, n, m](Node& self) {
    auto* xn = x.node();
    xn->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const size_t base = static_cast<size_t>(i) * m;
      float dot = 0.0f;
      for (int j = 0; j < m; ++j) dot += self.grad[base + j] * out[base + j];
      for (int j = 0; j < m; ++j) xn->grad[base + j] += out[base + j] * (self.grad[base + j] - dot);
    }
  });
}

// Gathers rows of `table` ([V,d]) for the given ids -> [ids.size(), d].
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const int d = table.cols();
  const int v = table.rows();
  std::vector<float> out(ids.size() * static_cast<size_t>(d));
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) throw DimensionError("embedding: token id out of range");
    std::copy_n(table.values().data() + static_cast<size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return make_result(static_cast<int>(ids.size()), d, std::move(out), {table},
                     [table, ids_copy, d](Node& self) {
                       auto* tn = table.node();
                       tn->ensure_grad();
                       for (size_t i = 0; i < ids_copy.size(); ++i) {
                         float* trow = tn->grad.data() + static_cast<size_t>(ids_copy[i]) * d;
                         const float* g = self.grad.data() + i * d;
                         for (int j = 0; j < d; ++j) trow[j] += g[j];
                       }
                     });
}

inline Tensor slice_cols(const Tensor& x, int start, int width) {
  const int n = x.rows(), m = x.cols();
  if (start < 0 || start + width > m) throw DimensionError("slice_cols: out of range");
  std::vector<float> out(static_cast<size_t>(n) * width);
  for (int i = 0; i < n; ++i)
    std::copy_n(x.values().data() + static_cast<size_t>(i) * m + start, width,
                out.data() + static_cast<size_t>(i) * width);
  return make_result(n, width, std::move(out), {x}, [x, start, width, n, m](Node& self) {
    auto* xn = x.node();
    xn->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < width; ++j)
        xn->grad[static_cast<size_t>(i) * m + start + j] += self.grad[static_cast<size_t>(i) * width + j];
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int n = parts[0].rows();
  int m = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row mismatch");
    m += p.cols();
  }
  std::vector<float> out(static_cast<size_t>(n) * m);
  int offset = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < n; ++i)
      std::copy_n(p.values().data() + static_cast<size_t>(i) * p.cols(), p.cols(),
                  out.data() + static_cast<size_t>(i) * m + offset);
    offset += p.cols();
  }
  return make_result_multi(n, m, std::move(out), parts, [parts, n, m](Node& self) {
    int offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        auto* pn = p.node();
        pn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < p.cols(); ++j)
            pn->grad[static_cast<size_t>(i) * p.cols() + j] += self.grad[static_cast<size_t>(i) * m + offset + j];
      }
      offset += p.cols();
    }
  });
}

inline Tensor select_rows(const Tensor& x, std::span<const int> indices) {
  const int m = x.cols();
  std::vector<float> out(indices.size() * static_cast<size_t>(m));
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= x.rows()) throw DimensionError("select_rows: index out of range");
    std::copy_n(x.values().data() + static_cast<size_t>(indices[i]) * m, m, out.data() + i * m);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_result(static_cast<int>(idx.size()), m, std::move(out), {x}, [x, idx, m](Node& self) {
    auto* xn = x.node();
    xn->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < m; ++j) xn->grad[static_cast<size_t>(idx[i]) * m + j] += self.grad[i * m + j];
  });
}

inline Tensor row_of(const Tensor& x, int r) {
  const int idx[1] = {r};
  return select_rows(x, idx);
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const int m = parts[0].cols();
  int n = 0;
  for (const auto& p : parts) {
    if (p.cols() != m) throw DimensionError("concat_rows: column mismatch");
    n += p.rows();
  }
  std::vector<float> out;
  out.reserve(static_cast<size_t>(n) * m);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result_multi(n, m, std::move(out), parts, [parts](Node& self) {
    size_t offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad())
        accumulate(*p.node(), std::span<const float>(self.grad.data() + offset, p.size()));
      offset += p.size();
    }
  });
}

inline Tensor mean_rows(const Tensor& x) {
  const int n = x.rows(), m = x.cols();
  std::vector<float> out(m, 0.0f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[j] += x.values()[static_cast<size_t>(i) * m + j];
  for (auto& v : out) v /= static_cast<float>(n);
  return make_result(1, m, std::move(out), {x}, [x, n, m](Node& self) {
    auto* xn = x.node();
    xn->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) xn->grad[static_cast<size_t>(i) * m + j] += self.grad[j] / static_cast<float>(n);
  });
}

inline Tensor sum_all(const Tensor& x) {
  float s = 0.0f;
  for (float v : x.values()) s += v;
  return make_result(1, 1, {s}, {x}, [x](Node& self) {
    auto* xn = x.node();
    xn->ensure_grad();
    for (auto& g : xn->grad) g += self.grad[0];
  });
}

// Sum of scalar tensors with per-term weights.
inline Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<float>& weights) {
  if (terms.size() != weights.size()) throw DimensionError("weighted_sum: arity mismatch");
  float s = 0.0f;
  for (size_t i = 0; i < terms.size(); ++i) s += weights[i] * terms[i].item();
  return make_result_multi(1, 1, {s}, terms, [terms, weights](Node& self) {
    for (size_t i = 0; i < terms.size(); ++i)
      if (terms[i].requires_grad()) {
        const float d = weights[i] * self.grad[0];
        accumulate(*terms[i].node(), std::span<const float>(&d, 1));
      }
  });
}

// Mean binary cross-entropy with logits over every element.
inline Tensor bce_with_logits(const Tensor& logits, std::span<const float> labels) {
  if (labels.size() != logits.size()) throw DimensionError("bce_with_logits: label count mismatch");
  const size_t count = labels.size();
  double total = 0.0;
  for (size_t i = 0; i < count; ++i) {
    const double x = logits.values()[i];
    // max(x,0) - x*y + log(1 + exp(-|x|))
    total += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
  }
  std::vector<float> y(labels.begin(), labels.end());
  return make_result(1, 1, {static_cast<float>(total / count)}, {logits}, [logits, y, count](Node& self) {
    auto* ln = logits.node();
    ln->ensure_grad();
    for (size_t i = 0; i < count; ++i)
      ln->grad[i] += self.grad[0] * (sigmoid_scalar(logits.values()[i]) - y[i]) / static_cast<float>(count);
  });
}

// Summed token cross-entropy over rows; rows whose target is negative are
// skipped. Returns the sum so callers control normalization.
inline Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets) {
  const int n = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != n) throw DimensionError("cross_entropy: target count mismatch");
  std::vector<float> probs(logits.size());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.values().data() + static_cast<size_t>(i) * v;
    float* prow = probs.data() + static_cast<size_t>(i) * v;
    float mx = *std::max_element(row, row + v);
    double sum = 0.0;
    for (int j = 0; j < v; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (int j = 0; j < v; ++j) prow[j] = static_cast<float>(prow[j] / sum);
    if (targets[i] >= 0) {
      if (targets[i] >= v) throw DimensionError("cross_entropy: target out of range");
      total += -(row[targets[i]] - mx - std::log(sum));
    }
  }
  std::vector<int> t(targets.begin(), targets.end());
  return make_result(1, 1, {static_cast<float>(total)}, {logits}, [logits, probs, t, n, v](Node& self) {
    auto* ln = logits.node();
    ln->ensure_grad();
    const float g = self.grad[0];
    for (int i = 0; i < n; ++i) {
      if (t[i] < 0) continue;
      const size_t base = static_cast<size_t>(i) * v;
      for (int j = 0; j < v; ++j) ln->grad[base + j] += g * probs[base + j];
      ln->grad[base + t[i]] -= g;
    }
  });
}

// Cosine similarity of two [1,d] vectors as a [1,1] tensor.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_similarity");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a.values()[i]) * b.values()[i];
    na += static_cast<double>(a.values()[i]) * a.values()[i];
    nb += static_cast<double>(b.values()[i]) * b.values()[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero-norm vector");
  const double norm_a = std::sqrt(na), norm_b = std::sqrt(nb);
  const double cos = dot / (norm_a * norm_b);
  return make_result(1, 1, {static_cast<float>(cos)}, {a, b}, [a, b, norm_a, norm_b, cos](Node& self) {
    const double g = self.grad[0];
    for (int side = 0; side < 2; ++side) {
      const Tensor& x = side == 0 ? a : b;
      const Tensor& y = side == 0 ? b : a;
      const double nx = side == 0 ? norm_a : norm_b;
      const double ny = side == 0 ? norm_b : norm_a;
      if (!x.requires_grad()) continue;
      auto* xn = x.node();
      xn->ensure_grad();
      for (size_t i = 0; i < x.size(); ++i) {
        const double d = y.values()[i] / (nx * ny) - cos * x.values()[i] / (nx * nx);
        xn->grad[i] += static_cast<float>(g * d);
      }
    }
  });
}

}  // namespace cspeech::nn
