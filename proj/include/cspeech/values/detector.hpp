#pragma once

// The three human-value detectors (multi-level classifier, descriptor
// entailment, embedding similarity) and their majority ensemble.

#include <algorithm>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cspeech/nn/checkpoint.hpp"
#include "cspeech/nn/encoder.hpp"
#include "cspeech/nn/train.hpp"
#include "cspeech/taxonomy.hpp"
#include "cspeech/values/losses.hpp"

namespace cspeech::values {

namespace fs = std::filesystem;
using nn::Tensor;

inline constexpr double kDefaultThreshold = 0.5;

struct ValuePrediction {
  std::vector<std::string> labels;
  std::vector<double> probabilities;
  std::vector<int> decisions;

  std::set<std::string> positive_labels() const {
    std::set<std::string> out;
    for (size_t i = 0; i < labels.size(); ++i)
      if (decisions[i]) out.insert(labels[i]);
    return out;
  }

  nlohmann::json to_json(const std::string& text) const {
    nlohmann::json l2 = nlohmann::json::object();
    for (size_t i = 0; i < labels.size(); ++i) l2[labels[i]] = {{"prob", probabilities[i]}, {"decision", decisions[i]}};
    return {{"text", text}, {"l2", l2}};
  }
};

class ValuePredictor {
 public:
  virtual ~ValuePredictor() = default;
  virtual ValuePrediction predict(const std::string& argument) const = 0;
  virtual bool trained() const = 0;
  virtual std::string kind() const = 0;
};

// Vocabulary over every argument and descriptor the value models will see.
inline nn::Vocabulary build_value_vocabulary(const ValueTaxonomy& tax, const std::vector<std::string>& texts) {
  std::vector<std::string> all = texts;
  for (const auto& d : tax.descriptors()) all.push_back(d.text);
  return nn::Vocabulary::build(all);
}

inline std::vector<int> encode_single(const nn::Vocabulary& vocab, const std::string& text) {
  std::vector<int> ids{nn::Vocabulary::kBosId};
  for (int id : vocab.encode(text)) ids.push_back(id);
  ids.push_back(nn::Vocabulary::kEosId);
  return ids;
}

// <s> first <sep> <sep> second </s>
inline std::vector<int> encode_pair(const nn::Vocabulary& vocab, const std::string& first, const std::string& second) {
  std::vector<int> ids{nn::Vocabulary::kBosId};
  for (int id : vocab.encode(first)) ids.push_back(id);
  ids.push_back(nn::Vocabulary::kSepId);
  ids.push_back(nn::Vocabulary::kSepId);
  for (int id : vocab.encode(second)) ids.push_back(id);
  ids.push_back(nn::Vocabulary::kEosId);
  return ids;
}

namespace detail {

inline nlohmann::json base_metadata(const std::string& type, const ValueTaxonomy& tax, double threshold,
                                    const nn::EncoderSpec& spec, const nn::TrainingConfig& cfg) {
  return {{"model_type", type},
          {"taxonomy_hash", tax.hash()},
          {"threshold", threshold},
          {"encoder", spec.str()},
          {"training_config", cfg.to_json()}};
}

inline nlohmann::json read_metadata(const fs::path& dir, const std::string& type, const ValueTaxonomy& tax) {
  auto meta = nn::read_json(dir / "metadata.json");
  if (meta.value("model_type", "") != type)
    throw ConfigError(dir.string() + ": expected a " + type + " checkpoint, found " + meta.value("model_type", "?"));
  if (meta.value("taxonomy_hash", "") != tax.hash())
    throw ConfigError(dir.string() + ": checkpoint was trained on a different taxonomy");
  return meta;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// Encoder + one linear head per hierarchy level, trained on the weighted
// sum of per-level mean BCE.
class MultiLevelClassifier final : public ValuePredictor {
 public:
  MultiLevelClassifier(std::shared_ptr<const ValueTaxonomy> tax, nn::Vocabulary vocab, const nn::EncoderSpec& spec,
                       std::uint64_t seed, MultiTaskWeights weights = {})
      : tax_(std::move(tax)), vocab_(std::move(vocab)), weights_(weights) {
    weights_.validate();
    std::mt19937_64 rng(seed);
    encoder_ = nn::TextEncoder(spec, vocab_.size(), rng);
    head_l1_ = nn::Linear(spec.dim, tax_->l1_count(), rng);
    head_l2_ = nn::Linear(spec.dim, tax_->l2_count(), rng);
    head_l3_ = nn::Linear(spec.dim, tax_->l3_count(), rng);
  }

  struct Targets {
    std::vector<float> l1, l2, l3;
  };

  // L1 targets come from the argument's own L1 labels when present, else
  // every value under a gold category.
  Targets targets(const LabeledArgument& arg) const {
    Targets t{std::vector<float>(tax_->l1_count(), 0.0f), std::vector<float>(tax_->l2_count(), 0.0f),
              std::vector<float>(tax_->l3_count(), 0.0f)};
    for (int l2 : gold_l2_ids(arg, *tax_)) {
      t.l2[l2] = 1.0f;
      t.l3[tax_->l3_of_l2(l2)] = 1.0f;
      if (arg.l1_labels.empty())
        for (int l1 : tax_->l1s_of_l2(l2)) t.l1[l1] = 1.0f;
    }
    for (const auto& name : arg.l1_labels) {
      auto id = tax_->find_l1(name);
      if (!id) throw SchemaError("argument L1 label '" + name + "' is not in the taxonomy");
      t.l1[*id] = 1.0f;
    }
    return t;
  }

  Tensor loss(const LabeledArgument& arg) const {
    const auto t = targets(arg);
    const Tensor pooled = encoder_.pooled(encode_single(vocab_, arg.text));
    return nn::weighted_sum({nn::bce_with_logits(head_l1_(pooled), t.l1), nn::bce_with_logits(head_l2_(pooled), t.l2),
                             nn::bce_with_logits(head_l3_(pooled), t.l3)},
                            {static_cast<float>(weights_.l1), static_cast<float>(weights_.l2),
                             static_cast<float>(weights_.l3)});
  }

  nn::TrainingLog train(const std::vector<LabeledArgument>& train_set, const std::vector<LabeledArgument>& validation,
                        const nn::TrainingConfig& cfg) {
    if (validation.empty()) throw ConfigError("classifier training needs a validation set");
    config_ = cfg;
    log_ = nn::train_loop(
        parameters(), train_set.size(), [&](size_t i) { return loss(train_set[i]); },
        [&] {
          double total = 0.0;
          for (const auto& a : validation) total += loss(a).item();
          return total / static_cast<double>(validation.size());
        },
        cfg);
    trained_ = true;
    return log_;
  }

  // Sigmoid probabilities for every L2 category.
  std::vector<double> l2_probabilities(const std::string& text) const {
    nn::NoGradGuard guard;
    const Tensor logits = head_l2_(encoder_.pooled(encode_single(vocab_, text)));
    std::vector<double> p;
    for (float v : logits.values()) p.push_back(detail::sigmoid(v));
    return p;
  }

  ValuePrediction predict(const std::string& argument) const override {
    if (!trained_) throw StateError("multi-level classifier is not trained");
    const auto p = l2_probabilities(argument);
    ValuePrediction out;
    for (int l2 : tax_->target_l2()) {
      out.labels.push_back(tax_->l2_name(l2));
      out.probabilities.push_back(p[l2]);
      out.decisions.push_back(p[l2] >= threshold_ ? 1 : 0);
    }
    return out;
  }

  bool trained() const override { return trained_; }
  std::string kind() const override { return "classification"; }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    encoder_.collect(p, "encoder");
    head_l1_.collect(p, "head_l1");
    head_l2_.collect(p, "head_l2");
    head_l3_.collect(p, "head_l3");
    return p;
  }

  void save(const fs::path& dir) const {
    nn::save_weights(dir / "weights.bin", parameters());
    nn::write_json(dir / "vocab.json", vocab_.to_json());
    auto meta = detail::base_metadata(kind(), *tax_, threshold_, encoder_.spec(), config_);
    meta["weights"] = {weights_.l1, weights_.l2, weights_.l3};
    meta["training_log"] = log_.to_json();
    nn::write_json(dir / "metadata.json", meta);
  }

  static MultiLevelClassifier load(const fs::path& dir, std::shared_ptr<const ValueTaxonomy> tax) {
    const auto meta = detail::read_metadata(dir, "classification", *tax);
    const auto w = meta.at("weights");
    MultiLevelClassifier m(tax, nn::Vocabulary::from_json(nn::read_json(dir / "vocab.json")),
                           nn::EncoderSpec::parse(meta.at("encoder")), 0,
                           {w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
    auto params = m.parameters();
    nn::load_weights(dir / "weights.bin", params);
    m.threshold_ = meta.at("threshold");
    m.trained_ = true;
    return m;
  }

  void set_threshold(double t) { threshold_ = t; }
  const nn::TrainingLog& log() const { return log_; }

 private:
  std::shared_ptr<const ValueTaxonomy> tax_;
  nn::Vocabulary vocab_;
  MultiTaskWeights weights_;
  nn::TextEncoder encoder_;
  nn::Linear head_l1_, head_l2_, head_l3_;
  double threshold_ = kDefaultThreshold;
  bool trained_ = false;
  nn::TrainingConfig config_;
  nn::TrainingLog log_;
};

// Category decision = any child descriptor at or above threshold; the
// category probability is the maximum child probability.
inline ValuePrediction aggregate_entailment(const std::vector<double>& descriptor_probs, const ValueTaxonomy& tax,
                                            const std::vector<int>& target_l2, double threshold = kDefaultThreshold) {
  if (static_cast<int>(descriptor_probs.size()) != tax.descriptor_count())
    throw DimensionError("entailment aggregation: one probability per descriptor expected");
  ValuePrediction out;
  for (int l2 : target_l2) {
    double best = 0.0;
    for (int d : tax.descriptors_of_l2(l2)) best = std::max(best, descriptor_probs[d]);
    out.labels.push_back(tax.l2_name(l2));
    out.probabilities.push_back(best);
    out.decisions.push_back(best >= threshold ? 1 : 0);
  }
  return out;
}

// Scores (argument, descriptor) pairs with a single logit over the pooled
// encoding of the concatenated pair.
class EntailmentModel final : public ValuePredictor {
 public:
  EntailmentModel(std::shared_ptr<const ValueTaxonomy> tax, nn::Vocabulary vocab, const nn::EncoderSpec& spec,
                  std::uint64_t seed)
      : tax_(std::move(tax)), vocab_(std::move(vocab)) {
    std::mt19937_64 rng(seed);
    encoder_ = nn::TextEncoder(spec, vocab_.size(), rng);
    head_ = nn::Linear(spec.dim, 1, rng);
  }

  // Starts from previously trained weights (e.g. an NLI-tuned encoder with
  // the same vocabulary and architecture).
  void initialize_from(const fs::path& weights_file) {
    auto params = parameters();
    nn::load_weights(weights_file, params);
  }

  Tensor logit(const std::string& argument, int descriptor) const {
    return head_(encoder_.pooled(encode_pair(vocab_, argument, tax_->descriptor(descriptor).text)));
  }

  Tensor loss(const EntailmentPair& pair) const {
    const float y = static_cast<float>(pair.label);
    return nn::bce_with_logits(logit(pair.argument, pair.descriptor), std::span<const float>(&y, 1));
  }

  nn::TrainingLog train(const std::vector<EntailmentPair>& train_set, const std::vector<EntailmentPair>& validation,
                        const nn::TrainingConfig& cfg) {
    if (validation.empty()) throw ConfigError("entailment training needs a validation set");
    config_ = cfg;
    log_ = nn::train_loop(
        parameters(), train_set.size(), [&](size_t i) { return loss(train_set[i]); },
        [&] {
          double total = 0.0;
          for (const auto& p : validation) total += loss(p).item();
          return total / static_cast<double>(validation.size());
        },
        cfg);
    trained_ = true;
    return log_;
  }

  std::vector<double> descriptor_probabilities(const std::string& argument) const {
    if (!trained_) throw StateError("entailment model is not trained");
    nn::NoGradGuard guard;
    std::vector<double> p(tax_->descriptor_count());
    for (int d = 0; d < tax_->descriptor_count(); ++d) p[d] = detail::sigmoid(logit(argument, d).item());
    return p;
  }

  ValuePrediction predict(const std::string& argument) const override {
    return aggregate_entailment(descriptor_probabilities(argument), *tax_, tax_->target_l2(), threshold_);
  }

  bool trained() const override { return trained_; }
  std::string kind() const override { return "entailment"; }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    encoder_.collect(p, "encoder");
    head_.collect(p, "head");
    return p;
  }

  void save(const fs::path& dir) const {
    nn::save_weights(dir / "weights.bin", parameters());
    nn::write_json(dir / "vocab.json", vocab_.to_json());
    auto meta = detail::base_metadata(kind(), *tax_, threshold_, encoder_.spec(), config_);
    meta["training_log"] = log_.to_json();
    nn::write_json(dir / "metadata.json", meta);
  }

  static EntailmentModel load(const fs::path& dir, std::shared_ptr<const ValueTaxonomy> tax) {
    const auto meta = detail::read_metadata(dir, "entailment", *tax);
    EntailmentModel m(tax, nn::Vocabulary::from_json(nn::read_json(dir / "vocab.json")),
                      nn::EncoderSpec::parse(meta.at("encoder")), 0);
    auto params = m.parameters();
    nn::load_weights(dir / "weights.bin", params);
    m.threshold_ = meta.at("threshold");
    m.trained_ = true;
    return m;
  }

  void set_threshold(double t) { threshold_ = t; }

 private:
  std::shared_ptr<const ValueTaxonomy> tax_;
  nn::Vocabulary vocab_;
  nn::TextEncoder encoder_;
  nn::Linear head_;
  double threshold_ = kDefaultThreshold;
  bool trained_ = false;
  nn::TrainingConfig config_;
  nn::TrainingLog log_;
};

using Vector = std::vector<float>;

inline Vector unit(Vector v) {
  double n = 0.0;
  for (float x : v) n += static_cast<double>(x) * x;
  if (n == 0.0) throw NumericError("cannot normalize a zero vector");
  const float inv = static_cast<float>(1.0 / std::sqrt(n));
  for (auto& x : v) x *= inv;
  return v;
}

inline double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm vector");
  return dot / std::sqrt(na * nb);
}

// Step 1 of the similarity model: descriptor embeddings learned with the
// quadruple objective. Centroids are computed once after training and are
// immutable afterwards.
class DescriptorEmbedder {
 public:
  DescriptorEmbedder(std::shared_ptr<const ValueTaxonomy> tax, nn::Vocabulary vocab, const nn::EncoderSpec& spec,
                     std::uint64_t seed, QuadrupleLossParams loss_params = {})
      : tax_(std::move(tax)), vocab_(std::move(vocab)), loss_params_(loss_params) {
    std::mt19937_64 rng(seed);
    encoder_ = nn::TextEncoder(spec, vocab_.size(), rng);
  }

  Tensor embed(const std::string& text) const { return encoder_.pooled(encode_single(vocab_, text)); }

  Tensor loss(const Quadruple& q) const {
    auto text = [&](int d) { return tax_->descriptor(d).text; };
    return quadruple_loss(embed(text(q.anchor)), embed(text(q.positive)), embed(text(q.easy_negative)),
                          embed(text(q.hard_negative)), loss_params_);
  }

  nn::TrainingLog train(const QuadrupleSet& data, const nn::TrainingConfig& cfg) {
    if (data.train.empty()) throw ConfigError("descriptor embedder: empty training set");
    if (data.validation.empty()) throw ConfigError("descriptor embedder: empty validation set");
    if (!centroids_.empty()) throw StateError("descriptor centroids are frozen; train a new embedder instead");
    log_ = nn::train_loop(
        parameters(), data.train.size(), [&](size_t i) { return loss(data.train[i]); },
        [&] {
          double total = 0.0;
          for (const auto& q : data.validation) total += loss(q).item();
          return total / static_cast<double>(data.validation.size());
        },
        cfg);
    freeze();
    return log_;
  }

  // Embeds every descriptor and fixes the unit-norm centroids.
  void freeze() {
    nn::NoGradGuard guard;
    centroids_.clear();
    for (const auto& d : tax_->descriptors()) centroids_.push_back(unit(embed(d.text).values()));
  }

  const std::vector<Vector>& centroids() const {
    if (centroids_.empty()) throw StateError("descriptor embedder is not trained");
    return centroids_;
  }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    encoder_.collect(p, "encoder");
    return p;
  }

  const nn::Vocabulary& vocabulary() const { return vocab_; }
  const nn::EncoderSpec& spec() const { return encoder_.spec(); }
  const nn::TrainingLog& log() const { return log_; }

 private:
  std::shared_ptr<const ValueTaxonomy> tax_;
  nn::Vocabulary vocab_;
  QuadrupleLossParams loss_params_;
  nn::TextEncoder encoder_;
  std::vector<Vector> centroids_;
  nn::TrainingLog log_;
};

// Step 2: maps argument text into the centroid space through three
// fully-connected layers over the pooled encoding.
class ArgumentEmbedder {
 public:
  ArgumentEmbedder(nn::Vocabulary vocab, const nn::EncoderSpec& spec, int output_dim, std::uint64_t seed)
      : vocab_(std::move(vocab)) {
    std::mt19937_64 rng(seed);
    encoder_ = nn::TextEncoder(spec, vocab_.size(), rng);
    const int hidden = spec.dim * 2;
    fc1_ = nn::Linear(spec.dim, hidden, rng);
    fc2_ = nn::Linear(hidden, hidden, rng);
    fc3_ = nn::Linear(hidden, output_dim, rng);
  }

  Tensor embed(const std::string& text) const {
    return fc3_(nn::relu(fc2_(nn::relu(fc1_(encoder_.pooled(encode_single(vocab_, text)))))));
  }

  int output_dim() const { return fc3_.out_features(); }

  // Positive pairs: cosine distance to the centroid. Negative pairs: the
  // positive part of the cosine similarity.
  static Tensor pair_loss(const Tensor& embedding, const Vector& centroid, int label) {
    const Tensor c(1, static_cast<int>(centroid.size()), centroid);
    const Tensor cs = nn::cosine_similarity(embedding, c);
    return label == 1 ? nn::add_scalar(nn::scale(cs, -1.0f), 1.0f) : nn::relu(cs);
  }

  nn::TrainingLog train(const std::vector<SimilarityPair>& train_set, const std::vector<SimilarityPair>& validation,
                        const std::vector<Vector>& centroids, const nn::TrainingConfig& cfg) {
    if (validation.empty()) throw ConfigError("argument embedder: empty validation set");
    for (const auto& c : centroids)
      if (static_cast<int>(c.size()) != output_dim())
        throw ConfigError("argument embedder output dimension does not match the centroids");
    auto loss = [&](const SimilarityPair& p) { return pair_loss(embed(p.argument), centroids.at(p.descriptor), p.label); };
    log_ = nn::train_loop(
        parameters(), train_set.size(), [&](size_t i) { return loss(train_set[i]); },
        [&] {
          double total = 0.0;
          for (const auto& p : validation) total += loss(p).item();
          return total / static_cast<double>(validation.size());
        },
        cfg);
    trained_ = true;
    return log_;
  }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    encoder_.collect(p, "encoder");
    fc1_.collect(p, "fc1");
    fc2_.collect(p, "fc2");
    fc3_.collect(p, "fc3");
    return p;
  }

  // Copies encoder weights from the descriptor embedder (same vocabulary
  // and architecture) before training.
  void initialize_encoder(const DescriptorEmbedder& from) {
    auto mine = parameters();
    nn::copy_parameter_values(from.parameters(), mine);
  }

  const nn::Vocabulary& vocabulary() const { return vocab_; }
  const nn::EncoderSpec& spec() const { return encoder_.spec(); }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  const nn::TrainingLog& log() const { return log_; }

 private:
  nn::Vocabulary vocab_;
  nn::TextEncoder encoder_;
  nn::Linear fc1_, fc2_, fc3_;
  bool trained_ = false;
  nn::TrainingLog log_;
};

// Fixed descriptor centroids plus the argument embedder. Prediction is
// single-label: the category of the most similar descriptor.
class SimilarityModel final : public ValuePredictor {
 public:
  SimilarityModel(std::shared_ptr<const ValueTaxonomy> tax, std::vector<Vector> centroids, ArgumentEmbedder embedder)
      : tax_(std::move(tax)), centroids_(std::move(centroids)), embedder_(std::move(embedder)) {
    if (static_cast<int>(centroids_.size()) != tax_->descriptor_count())
      throw DimensionError("similarity model: one centroid per descriptor expected");
    for (const auto& c : centroids_)
      if (static_cast<int>(c.size()) != embedder_.output_dim())
        throw DimensionError("similarity model: centroid dimension mismatch");
  }

  Vector embed(const std::string& argument) const {
    nn::NoGradGuard guard;
    return embedder_.embed(argument).values();
  }

  // Index of the target-category descriptor most similar to `embedding`,
  // with its cosine similarity.
  std::pair<int, double> best_descriptor(const Vector& embedding) const {
    const auto targets = tax_->target_l2();
    int best = -1;
    double best_sim = -2.0;
    for (int l2 : targets)
      for (int d : tax_->descriptors_of_l2(l2)) {
        const double s = cosine(embedding, centroids_[d]);
        if (s > best_sim || (s == best_sim && d < best)) {
          best_sim = s;
          best = d;
        }
      }
    return {best, best_sim};
  }

  ValuePrediction predict_embedding(const Vector& embedding) const {
    const auto [best, sim] = best_descriptor(embedding);
    const int winner = tax_->l2_of_descriptor(best);
    ValuePrediction out;
    for (int l2 : tax_->target_l2()) {
      out.labels.push_back(tax_->l2_name(l2));
      const bool hit = l2 == winner;
      out.probabilities.push_back(hit ? (sim + 1.0) / 2.0 : 0.0);
      out.decisions.push_back(hit ? 1 : 0);
    }
    return out;
  }

  ValuePrediction predict(const std::string& argument) const override {
    if (!embedder_.trained()) throw StateError("similarity model is not trained");
    return predict_embedding(embed(argument));
  }

  bool trained() const override { return embedder_.trained(); }
  std::string kind() const override { return "similarity"; }

  const std::vector<Vector>& centroids() const { return centroids_; }
  const ArgumentEmbedder& embedder() const { return embedder_; }

  void save(const fs::path& dir) const {
    nn::save_weights(dir / "weights.bin", embedder_.parameters());
    std::vector<float> flat;
    for (const auto& c : centroids_) flat.insert(flat.end(), c.begin(), c.end());
    nn::Tensor table(static_cast<int>(centroids_.size()), embedder_.output_dim(), flat);
    nn::save_weights(dir / "centroids.bin", {{"centroids", table}});
    nn::write_json(dir / "vocab.json", embedder_.vocabulary().to_json());
    auto meta = detail::base_metadata(kind(), *tax_, kDefaultThreshold, embedder_.spec(), config_);
    meta["output_dim"] = embedder_.output_dim();
    meta["training_log"] = embedder_.log().to_json();
    nn::write_json(dir / "metadata.json", meta);
  }

  static SimilarityModel load(const fs::path& dir, std::shared_ptr<const ValueTaxonomy> tax) {
    const auto meta = detail::read_metadata(dir, "similarity", *tax);
    const int out_dim = meta.at("output_dim");
    ArgumentEmbedder emb(nn::Vocabulary::from_json(nn::read_json(dir / "vocab.json")),
                         nn::EncoderSpec::parse(meta.at("encoder")), out_dim, 0);
    auto params = emb.parameters();
    nn::load_weights(dir / "weights.bin", params);
    emb.mark_trained();
    nn::ParameterList table{{"centroids", nn::Tensor(tax->descriptor_count(), out_dim)}};
    nn::load_weights(dir / "centroids.bin", table);
    std::vector<Vector> centroids;
    for (int d = 0; d < tax->descriptor_count(); ++d) {
      auto r = table[0].second.row(d);
      centroids.emplace_back(r.begin(), r.end());
    }
    return SimilarityModel(tax, std::move(centroids), std::move(emb));
  }

  void set_training_config(const nn::TrainingConfig& cfg) { config_ = cfg; }

 private:
  std::shared_ptr<const ValueTaxonomy> tax_;
  std::vector<Vector> centroids_;
  ArgumentEmbedder embedder_;
  nn::TrainingConfig config_;
};

// Per-category majority over member decisions (>= 2 of 3). The ensemble
// probability is the mean member probability.
inline ValuePrediction majority_vote(const std::vector<ValuePrediction>& members, int min_votes) {
  if (members.empty()) throw DimensionError("majority vote over no members");
  ValuePrediction out;
  out.labels = members[0].labels;
  for (size_t c = 0; c < out.labels.size(); ++c) {
    int votes = 0;
    double prob = 0.0;
    for (const auto& m : members) {
      if (m.labels != out.labels) throw DimensionError("ensemble members disagree on label order");
      votes += m.decisions[c];
      prob += m.probabilities[c];
    }
    out.probabilities.push_back(prob / static_cast<double>(members.size()));
    out.decisions.push_back(votes >= min_votes ? 1 : 0);
  }
  return out;
}

inline ValuePrediction ensemble_predict(const std::string& argument,
                                        const std::vector<const ValuePredictor*>& models) {
  if (models.size() != 3) throw ConfigError("value ensemble expects exactly three models");
  for (const auto* m : models)
    if (!m || !m->trained()) throw StateError("value ensemble member is not trained");
  std::vector<ValuePrediction> preds;
  for (const auto* m : models) preds.push_back(m->predict(argument));
  return majority_vote(preds, 2);
}

}  // namespace cspeech::values
