#pragma once

// Counter-argument type detection over (hate, counter) pairs and the
// four-variant majority ensemble.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "cspeech/argtype/keywords.hpp"
#include "cspeech/nn/checkpoint.hpp"
#include "cspeech/nn/encoder.hpp"
#include "cspeech/nn/train.hpp"

namespace cspeech::argtype {

namespace fs = std::filesystem;
using nn::Tensor;

inline constexpr int kTypeCount = 6;

inline const std::array<std::string, kTypeCount>& type_names() {
  static const std::array<std::string, kTypeCount> names = {"denouncing", "facts",    "humor",
                                                            "hypocrisy",  "positive", "question"};
  return names;
}

inline int type_index(const std::string& name) {
  const auto& n = type_names();
  for (int i = 0; i < kTypeCount; ++i)
    if (n[i] == to_lower(name)) return i;
  throw SchemaError("unknown argument type '" + name + "'");
}

// Humor is detected but not carried into the annotations.
inline bool is_annotation_type(int index) { return type_names()[index] != "humor"; }

struct ArgTypeLabel {
  std::array<double, kTypeCount> probabilities{};
  std::array<int, kTypeCount> decisions{};

  std::vector<std::string> positive_types() const {
    std::vector<std::string> out;
    for (int i = 0; i < kTypeCount; ++i)
      if (decisions[i]) out.push_back(type_names()[i]);
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (int i = 0; i < kTypeCount; ++i)
      j[type_names()[i]] = {{"prob", probabilities[i]}, {"decision", decisions[i]}};
    return j;
  }
};

struct LabeledPair {
  std::string hate;
  std::string counter;
  std::array<float, kTypeCount> labels{};
  std::optional<Topic> topic;
};

inline std::vector<LabeledPair> read_labeled_pairs(std::istream& in) {
  std::vector<LabeledPair> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(where + ": " + e.what());
    }
    LabeledPair p;
    p.hate = cspeech::detail::require_text(cspeech::detail::require_string(j, "hate", where), where + " hate");
    p.counter = cspeech::detail::require_text(cspeech::detail::require_string(j, "counter", where), where + " counter");
    const auto& labels = cspeech::detail::require_field(j, "labels", where);
    if (!labels.is_array()) throw SchemaError(where + ": 'labels' must be an array");
    for (const auto& l : labels) {
      if (!l.is_string()) throw SchemaError(where + ": labels must be strings");
      p.labels[type_index(l.get<std::string>())] = 1.0f;
    }
    if (j.contains("topic")) p.topic = require_topic(j["topic"].get<std::string>(), where);
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<LabeledPair> load_labeled_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pair file " + path.string());
  return read_labeled_pairs(in);
}

inline std::string type_token(int i) { return "<type:" + type_names()[i] + ">"; }

// Model text tokens with #MASK# kept as a single unit.
inline std::vector<std::string> model_tokens(std::string_view text) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t hit = text.find(kMaskToken, start);
    for (auto& t : tokenize(text.substr(start, hit == std::string_view::npos ? std::string_view::npos : hit - start)))
      out.push_back(std::move(t));
    if (hit == std::string_view::npos) break;
    out.emplace_back(kMaskToken);
    start = hit + kMaskToken.size();
  }
  return out;
}

inline nn::Vocabulary build_argtype_vocabulary(const std::vector<std::string>& texts) {
  std::map<std::string, int> counts;
  for (const auto& t : texts)
    for (const auto& tok : model_tokens(t)) ++counts[tok];
  nn::Vocabulary vocab;
  for (int i = 0; i < kTypeCount; ++i) vocab.add(type_token(i));
  vocab.add(std::string(kMaskToken));
  std::vector<std::pair<std::string, int>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : sorted) vocab.add(tok);
  return vocab;
}

// [6 type tokens] <s> hate <sep> <sep> counter </s>, with hate and counter
// cut at their tails to fit max_len.
struct PairEncoding {
  std::vector<int> ids;

  static PairEncoding build(const nn::Vocabulary& vocab, const std::string& hate, const std::string& counter,
                            int max_len) {
    constexpr int kFixed = kTypeCount + 4;
    if (max_len <= kFixed) throw ConfigError("argtype encoder max_len too small for the pair layout");
    auto encode = [&](const std::string& text) {
      std::vector<int> ids;
      for (const auto& tok : model_tokens(text)) ids.push_back(vocab.id(tok));
      return ids;
    };
    auto h = encode(hate), c = encode(counter);
    const size_t budget = static_cast<size_t>(max_len - kFixed);
    if (h.size() + c.size() > budget) {
      const size_t keep_h = std::min(h.size(), std::max(budget / 2, budget - std::min(c.size(), budget)));
      h.resize(keep_h);
      c.resize(std::min(c.size(), budget - keep_h));
    }
    PairEncoding e;
    for (int i = 0; i < kTypeCount; ++i) e.ids.push_back(vocab.require(type_token(i)));
    e.ids.push_back(nn::Vocabulary::kBosId);
    e.ids.insert(e.ids.end(), h.begin(), h.end());
    e.ids.push_back(nn::Vocabulary::kSepId);
    e.ids.push_back(nn::Vocabulary::kSepId);
    e.ids.insert(e.ids.end(), c.begin(), c.end());
    e.ids.push_back(nn::Vocabulary::kEosId);
    return e;
  }
};

struct Variant {
  bool masked = false;
  nn::EncoderSpec encoder;

  std::string name() const { return std::string(masked ? "masked" : "non_masked") + "/" + encoder.str(); }
};

// Encoder over the pair; the six type positions and <s> go through two
// 4-head self-attention layers, and each type position feeds its own
// linear head.
class ArgTypeModel {
 public:
  static constexpr int kAttentionLayers = 2;
  static constexpr int kAttentionHeads = 4;

  ArgTypeModel(Variant variant, nn::Vocabulary vocab, TopicKeywordSet keywords, std::uint64_t seed)
      : variant_(std::move(variant)), vocab_(std::move(vocab)), keywords_(std::move(keywords)) {
    std::mt19937_64 rng(seed);
    const int d = variant_.encoder.dim;
    if (d % kAttentionHeads != 0) throw ConfigError("argtype encoder dim must be divisible by 4");
    encoder_ = nn::TextEncoder(variant_.encoder, vocab_.size(), rng);
    for (int l = 0; l < kAttentionLayers; ++l) {
      attention_.emplace_back(d, kAttentionHeads, rng);
      norms_.emplace_back(d);
    }
    for (int i = 0; i < kTypeCount; ++i) heads_.emplace_back(d, 1, rng);
  }

  // What the encoder sees: masked variants substitute topic keywords first.
  std::pair<std::string, std::string> prepare(const std::string& hate, const std::string& counter,
                                              std::optional<Topic> topic) const {
    if (!variant_.masked) return {hate, counter};
    return {mask_text(hate, keywords_, topic), mask_text(counter, keywords_, topic)};
  }

  std::vector<int> encode(const std::string& hate, const std::string& counter, std::optional<Topic> topic) const {
    const auto [h, c] = prepare(hate, counter, topic);
    return PairEncoding::build(vocab_, h, c, variant_.encoder.max_len).ids;
  }

  // [1, 6] logits.
  Tensor logits(const std::vector<int>& ids) const {
    const Tensor states = encoder_.encode(ids);
    std::vector<int> rows(kTypeCount + 1);
    for (int i = 0; i <= kTypeCount; ++i) rows[i] = i;
    Tensor x = nn::select_rows(states, rows);
    for (int l = 0; l < kAttentionLayers; ++l) x = norms_[l](nn::add(x, attention_[l](x, x)));
    std::vector<Tensor> out;
    for (int i = 0; i < kTypeCount; ++i) out.push_back(heads_[i](nn::row_of(x, i)));
    return nn::concat_cols(out);
  }

  Tensor loss(const LabeledPair& p) const {
    return nn::bce_with_logits(logits(encode(p.hate, p.counter, p.topic)), p.labels);
  }

  nn::TrainingLog train(const std::vector<LabeledPair>& train_set, const std::vector<LabeledPair>& validation,
                        const nn::TrainingConfig& cfg) {
    if (validation.empty()) throw ConfigError("argtype training needs a validation set");
    config_ = cfg;
    std::vector<std::vector<int>> train_ids, val_ids;
    for (const auto& p : train_set) train_ids.push_back(encode(p.hate, p.counter, p.topic));
    for (const auto& p : validation) val_ids.push_back(encode(p.hate, p.counter, p.topic));
    log_ = nn::train_loop(
        parameters(), train_set.size(),
        [&](size_t i) { return nn::bce_with_logits(logits(train_ids[i]), train_set[i].labels); },
        [&] {
          double total = 0.0;
          for (size_t i = 0; i < validation.size(); ++i)
            total += nn::bce_with_logits(logits(val_ids[i]), validation[i].labels).item();
          return total / static_cast<double>(validation.size());
        },
        cfg);
    trained_ = true;
    return log_;
  }

  ArgTypeLabel predict(const std::string& hate, const std::string& counter,
                       std::optional<Topic> topic = std::nullopt) const {
    if (!trained_) throw StateError("argtype model is not trained");
    nn::NoGradGuard guard;
    const Tensor z = logits(encode(hate, counter, topic));
    ArgTypeLabel out;
    for (int i = 0; i < kTypeCount; ++i) {
      out.probabilities[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(z.at(0, i))));
      out.decisions[i] = out.probabilities[i] >= threshold_ ? 1 : 0;
    }
    return out;
  }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    encoder_.collect(p, "encoder");
    for (int l = 0; l < kAttentionLayers; ++l) {
      attention_[l].collect(p, "type_attention" + std::to_string(l));
      norms_[l].collect(p, "type_norm" + std::to_string(l));
    }
    for (int i = 0; i < kTypeCount; ++i) heads_[i].collect(p, "head_" + type_names()[i]);
    return p;
  }

  void save(const fs::path& dir) const {
    nn::save_weights(dir / "weights.bin", parameters());
    nn::write_json(dir / "vocab.json", vocab_.to_json());
    nn::write_json(dir / "metadata.json", {{"model_type", "argtype"},
                                           {"masked", variant_.masked},
                                           {"encoder", variant_.encoder.str()},
                                           {"threshold", threshold_},
                                           {"types", type_names()},
                                           {"keywords", keywords_.to_json()},
                                           {"training_config", config_.to_json()},
                                           {"training_log", log_.to_json()}});
  }

  static ArgTypeModel load(const fs::path& dir) {
    const auto meta = nn::read_json(dir / "metadata.json");
    if (meta.value("model_type", "") != "argtype") throw ConfigError(dir.string() + ": not an argtype checkpoint");
    ArgTypeModel m({meta.at("masked").get<bool>(), nn::EncoderSpec::parse(meta.at("encoder"))},
                   nn::Vocabulary::from_json(nn::read_json(dir / "vocab.json")),
                   TopicKeywordSet::from_json(meta.at("keywords")), 0);
    auto params = m.parameters();
    nn::load_weights(dir / "weights.bin", params);
    m.threshold_ = meta.at("threshold");
    m.trained_ = true;
    return m;
  }

  const Variant& variant() const { return variant_; }
  bool trained() const { return trained_; }
  const nn::TrainingLog& log() const { return log_; }

 private:
  Variant variant_;
  nn::Vocabulary vocab_;
  TopicKeywordSet keywords_;
  nn::TextEncoder encoder_;
  std::vector<nn::MultiHeadAttention> attention_;
  std::vector<nn::LayerNorm> norms_;
  std::vector<nn::Linear> heads_;
  double threshold_ = 0.5;
  bool trained_ = false;
  nn::TrainingConfig config_;
  nn::TrainingLog log_;
};

// Per type: positive on 3 or 4 votes; on a 2-2 split positive iff the mean
// member probability exceeds 0.5.
inline ArgTypeLabel majority_vote(const std::vector<ArgTypeLabel>& members) {
  if (members.size() != 4) throw StateError("argtype ensemble needs all four variants");
  ArgTypeLabel out;
  for (int i = 0; i < kTypeCount; ++i) {
    int votes = 0;
    double prob = 0.0;
    for (const auto& m : members) {
      votes += m.decisions[i];
      prob += m.probabilities[i];
    }
    prob /= 4.0;
    out.probabilities[i] = prob;
    out.decisions[i] = votes >= 3 || (votes == 2 && prob > 0.5) ? 1 : 0;
  }
  return out;
}

inline ArgTypeLabel ensemble_predict(const std::string& hate, const std::string& counter,
                                     const std::vector<const ArgTypeModel*>& models,
                                     std::optional<Topic> topic = std::nullopt) {
  if (models.size() != 4) throw StateError("argtype ensemble needs all four variants");
  std::vector<ArgTypeLabel> preds;
  for (const auto* m : models) {
    if (!m || !m->trained()) throw StateError("argtype ensemble member is not trained");
    preds.push_back(m->predict(hate, counter, topic));
  }
  return majority_vote(preds);
}

}  // namespace cspeech::argtype
