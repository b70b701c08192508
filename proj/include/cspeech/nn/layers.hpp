#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cspeech/nn/ops.hpp"

namespace cspeech::nn {

// Portable draws from a 64-bit engine. The std distributions are
// implementation-defined, which would make checkpoints platform-dependent.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline size_t uniform_index(std::mt19937_64& rng, size_t n) {
  return static_cast<size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

template <class T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_index(rng, i)]);
}

inline Tensor make_parameter(int rows, int cols, std::mt19937_64& rng, double bound) {
  Tensor t(rows, cols, 0.0f, true);
  for (auto& v : t.values()) v = static_cast<float>(uniform(rng, -bound, bound));
  return t;
}

// Named view over a model's trainable tensors; names are stable across runs
// and key the checkpoint format.
using ParameterList = std::vector<std::pair<std::string, Tensor>>;

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng)
      : weight_(make_parameter(in, out, rng, std::sqrt(6.0 / (in + out)))), bias_(1, out, 0.0f, true) {}

  Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight_), bias_); }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight_);
    out.emplace_back(prefix + ".bias", bias_);
  }

  int in_features() const { return weight_.rows(); }
  int out_features() const { return weight_.cols(); }
  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim) : gain_(1, dim, 1.0f, true), bias_(1, dim, 0.0f, true) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain_, bias_); }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gain", gain_);
    out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  Tensor gain_;
  Tensor bias_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(int vocab, int dim, std::mt19937_64& rng) : table_(make_parameter(vocab, dim, rng, 0.1)) {}

  Tensor operator()(std::span<const int> ids) const { return embedding(table_, ids); }

  void collect(ParameterList& out, const std::string& prefix) const { out.emplace_back(prefix + ".table", table_); }

  int vocab_size() const { return table_.rows(); }
  int dim() const { return table_.cols(); }
  const Tensor& table() const { return table_; }

 private:
  Tensor table_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads, std::mt19937_64& rng)
      : heads_(heads), query_(dim, dim, rng), key_(dim, dim, rng), value_(dim, dim, rng), output_(dim, dim, rng) {
    if (heads <= 0 || dim % heads != 0) throw DimensionError("attention: dim must be divisible by heads");
  }

  // `queries` is [n,d]; `memory` is [m,d]. Causal masking requires n == m.
  Tensor operator()(const Tensor& queries, const Tensor& memory, bool causal = false) const {
    const Tensor q = query_(queries);
    const Tensor k = key_(memory);
    const Tensor v = value_(memory);
    const int head_dim = q.cols() / heads_;
    const float inv = 1.0f / std::sqrt(static_cast<float>(head_dim));
    std::vector<Tensor> outputs;
    outputs.reserve(heads_);
    for (int h = 0; h < heads_; ++h) {
      const Tensor qh = slice_cols(q, h * head_dim, head_dim);
      const Tensor kh = slice_cols(k, h * head_dim, head_dim);
      const Tensor vh = slice_cols(v, h * head_dim, head_dim);
      const Tensor weights = softmax_rows(scale(matmul_nt(qh, kh), inv), causal);
      outputs.push_back(matmul(weights, vh));
    }
    return output_(heads_ == 1 ? outputs[0] : concat_cols(outputs));
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    query_.collect(out, prefix + ".query");
    key_.collect(out, prefix + ".key");
    value_.collect(out, prefix + ".value");
    output_.collect(out, prefix + ".output");
  }

 private:
  int heads_ = 1;
  Linear query_, key_, value_, output_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(int dim, int hidden, std::mt19937_64& rng) : in_(dim, hidden, rng), out_(hidden, dim, rng) {}

  Tensor operator()(const Tensor& x) const { return out_(relu(in_(x))); }

  void collect(ParameterList& out, const std::string& prefix) const {
    in_.collect(out, prefix + ".in");
    out_.collect(out, prefix + ".out");
  }

 private:
  Linear in_, out_;
};

// Residual placement of layer normalization. The two settings behave as
// distinct encoder families for ensembling.
enum class NormPlacement { kPost, kPre };

class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(int dim, int heads, int hidden, NormPlacement norm, std::mt19937_64& rng)
      : norm_placement_(norm), attention_(dim, heads, rng), ffn_(dim, hidden, rng), norm1_(dim), norm2_(dim) {}

  Tensor operator()(const Tensor& x) const {
    if (norm_placement_ == NormPlacement::kPre) {
      const Tensor n1 = norm1_(x);
      const Tensor h = add(x, attention_(n1, n1));
      return add(h, ffn_(norm2_(h)));
    }
    const Tensor h = norm1_(add(x, attention_(x, x)));
    return norm2_(add(h, ffn_(h)));
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    attention_.collect(out, prefix + ".attention");
    ffn_.collect(out, prefix + ".ffn");
    norm1_.collect(out, prefix + ".norm1");
    norm2_.collect(out, prefix + ".norm2");
  }

 private:
  NormPlacement norm_placement_ = NormPlacement::kPost;
  MultiHeadAttention attention_;
  FeedForward ffn_;
  LayerNorm norm1_, norm2_;
};

class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(int dim, int heads, int hidden, std::mt19937_64& rng)
      : self_attention_(dim, heads, rng),
        cross_attention_(dim, heads, rng),
        ffn_(dim, hidden, rng),
        norm1_(dim),
        norm2_(dim),
        norm3_(dim) {}

  Tensor operator()(const Tensor& x, const Tensor& memory) const {
    const Tensor h1 = norm1_(add(x, self_attention_(x, x, true)));
    const Tensor h2 = norm2_(add(h1, cross_attention_(h1, memory)));
    return norm3_(add(h2, ffn_(h2)));
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    self_attention_.collect(out, prefix + ".self_attention");
    cross_attention_.collect(out, prefix + ".cross_attention");
    ffn_.collect(out, prefix + ".ffn");
    norm1_.collect(out, prefix + ".norm1");
    norm2_.collect(out, prefix + ".norm2");
    norm3_.collect(out, prefix + ".norm3");
  }

 private:
  MultiHeadAttention self_attention_, cross_attention_;
  FeedForward ffn_;
  LayerNorm norm1_, norm2_, norm3_;
};

}  // namespace cspeech::nn
