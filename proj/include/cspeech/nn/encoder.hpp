#pragma once

#include <algorithm>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cspeech/nn/layers.hpp"
#include "cspeech/nn/vocab.hpp"
#include "json.hpp"

namespace cspeech::nn {

// Architecture of a bidirectional text encoder. Parsed from strings such as
//   "post-norm:dim=32,layers=1,heads=4,hidden=64,max_len=64"
// where the family prefix selects residual normalization placement and the
// remaining keys override defaults.
struct EncoderSpec {
  NormPlacement family = NormPlacement::kPost;
  int dim = 32;
  int layers = 1;
  int heads = 4;
  int hidden = 64;
  int max_len = 128;

  static EncoderSpec parse(const std::string& text) {
    EncoderSpec spec;
    std::string family = text, rest;
    if (auto colon = text.find(':'); colon != std::string::npos) {
      family = text.substr(0, colon);
      rest = text.substr(colon + 1);
    }
    if (family == "post-norm") {
      spec.family = NormPlacement::kPost;
    } else if (family == "pre-norm") {
      spec.family = NormPlacement::kPre;
    } else {
      throw ConfigError("unknown encoder family '" + family + "' (expected post-norm or pre-norm)");
    }
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("encoder spec entry without '=': " + item);
      const std::string key = item.substr(0, eq);
      int value = 0;
      try {
        value = std::stoi(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("encoder spec value is not an integer: " + item);
      }
      if (value <= 0) throw ConfigError("encoder spec value must be positive: " + item);
      if (key == "dim") spec.dim = value;
      else if (key == "layers") spec.layers = value;
      else if (key == "heads") spec.heads = value;
      else if (key == "hidden") spec.hidden = value;
      else if (key == "max_len") spec.max_len = value;
      else throw ConfigError("unknown encoder spec key: " + key);
    }
    if (spec.dim % spec.heads != 0) throw ConfigError("encoder dim must be divisible by heads");
    return spec;
  }

  std::string str() const {
    return std::string(family == NormPlacement::kPost ? "post-norm" : "pre-norm") + ":dim=" + std::to_string(dim) +
           ",layers=" + std::to_string(layers) + ",heads=" + std::to_string(heads) +
           ",hidden=" + std::to_string(hidden) + ",max_len=" + std::to_string(max_len);
  }
};

// Token + position embeddings, a stack of self-attention layers, and a
// first-token pooler (dense + tanh).
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const EncoderSpec& spec, int vocab_size, std::mt19937_64& rng)
      : spec_(spec),
        tokens_(vocab_size, spec.dim, rng),
        positions_(spec.max_len, spec.dim, rng),
        pooler_(spec.dim, spec.dim, rng) {
    for (int i = 0; i < spec.layers; ++i) layers_.emplace_back(spec.dim, spec.heads, spec.hidden, spec.family, rng);
    if (spec.family == NormPlacement::kPre) final_norm_ = LayerNorm(spec.dim);
  }

  // Contextual states, one row per input id. Sequences longer than max_len
  // are cut at the tail.
  Tensor encode(std::vector<int> ids) const {
    if (ids.empty()) ids.push_back(Vocabulary::kUnkId);
    if (static_cast<int>(ids.size()) > spec_.max_len) ids.resize(static_cast<size_t>(spec_.max_len));
    std::vector<int> pos(ids.size());
    for (size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Tensor h = add(tokens_(ids), positions_(pos));
    for (const auto& layer : layers_) h = layer(h);
    if (spec_.family == NormPlacement::kPre) h = final_norm_(h);
    return h;
  }

  Tensor pool(const Tensor& states) const { return nn::tanh(pooler_(row_of(states, 0))); }

  Tensor pooled(std::vector<int> ids) const { return pool(encode(std::move(ids))); }

  void collect(ParameterList& out, const std::string& prefix) const {
    tokens_.collect(out, prefix + ".tokens");
    positions_.collect(out, prefix + ".positions");
    for (size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, prefix + ".layer" + std::to_string(i));
    if (spec_.family == NormPlacement::kPre) final_norm_.collect(out, prefix + ".final_norm");
    pooler_.collect(out, prefix + ".pooler");
  }

  const EncoderSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }

 private:
  EncoderSpec spec_;
  Embedding tokens_;
  Embedding positions_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
  Linear pooler_;
};

}  // namespace cspeech::nn
