#pragma once

// Silver-standard annotation of dialogue corpora with the four feature
// families, plus the per-side feature distribution report.

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "cspeech/argtype/detector.hpp"
#include "cspeech/corpus.hpp"
#include "cspeech/csv.hpp"
#include "cspeech/features.hpp"
#include "cspeech/nn/checkpoint.hpp"
#include "cspeech/nn/encoder.hpp"
#include "cspeech/nn/train.hpp"
#include "cspeech/values/detector.hpp"

namespace cspeech {

// A classifier over one side of a turn. Scheme ports may return the raw
// six-way labels; they are merged during annotation.
class ClassifierPort {
 public:
  virtual ~ClassifierPort() = default;
  virtual std::string name() const = 0;
  virtual Family family() const = 0;
  virtual std::set<std::string> predict(const std::string& text) const = 0;
  virtual nlohmann::json describe() const { return {{"name", name()}, {"family", family_name(family())}}; }
};

// Argument types need both sides of the turn.
class PairPort {
 public:
  virtual ~PairPort() = default;
  virtual std::string name() const = 0;
  virtual std::set<std::string> predict(const std::string& hate, const std::string& counter, Topic topic) const = 0;
  virtual nlohmann::json describe() const { return {{"name", name()}, {"family", family_name(Family::kArgType)}}; }
};

class ValueEnsemblePort final : public ClassifierPort {
 public:
  explicit ValueEnsemblePort(std::vector<const values::ValuePredictor*> members) : members_(std::move(members)) {}
  std::string name() const override { return "value-ensemble"; }
  Family family() const override { return Family::kHumVal; }
  std::set<std::string> predict(const std::string& text) const override {
    // Hierarchies without the six feature categories yield no codes for the
    // categories they do not share.
    std::set<std::string> out;
    for (const auto& label : values::ensemble_predict(text, members_).positive_labels()) {
      const auto code = FeatureVocabulary::value_code(label);
      if (FeatureVocabulary::standard().contains(code)) out.insert(code);
    }
    return out;
  }

 private:
  std::vector<const values::ValuePredictor*> members_;
};

class ArgTypeEnsemblePort final : public PairPort {
 public:
  explicit ArgTypeEnsemblePort(std::vector<const argtype::ArgTypeModel*> members) : members_(std::move(members)) {}
  std::string name() const override { return "argtype-ensemble"; }
  std::set<std::string> predict(const std::string& hate, const std::string& counter, Topic topic) const override {
    const auto label = argtype::ensemble_predict(hate, counter, members_, topic);
    std::set<std::string> out;
    for (int i = 0; i < argtype::kTypeCount; ++i)
      if (label.decisions[i] && argtype::is_annotation_type(i)) out.insert(argtype::type_names()[i]);
    return out;
  }

 private:
  std::vector<const argtype::ArgTypeModel*> members_;
};

// Always answers with the same labels; for smoke runs and tests.
class FixedPort final : public ClassifierPort {
 public:
  FixedPort(Family family, std::set<std::string> labels) : family_(family), labels_(std::move(labels)) {}
  std::string name() const override { return "fixed-" + family_name(family_); }
  Family family() const override { return family_; }
  std::set<std::string> predict(const std::string&) const override { return labels_; }

 private:
  Family family_;
  std::set<std::string> labels_;
};

class FixedPairPort final : public PairPort {
 public:
  explicit FixedPairPort(std::set<std::string> labels) : labels_(std::move(labels)) {}
  std::string name() const override { return "fixed-argType"; }
  std::set<std::string> predict(const std::string&, const std::string&, Topic) const override { return labels_; }

 private:
  std::set<std::string> labels_;
};

// Generic single-label baseline: encoder, one linear layer, softmax over the
// family's codes (or raw labels for the scheme family).
class SingleLabelClassifier final : public ClassifierPort {
 public:
  SingleLabelClassifier(Family family, std::vector<std::string> labels, nn::Vocabulary vocab,
                        const nn::EncoderSpec& spec, std::uint64_t seed)
      : family_(family), labels_(std::move(labels)), vocab_(std::move(vocab)) {
    if (labels_.size() < 2) throw ConfigError("single-label classifier needs at least two labels");
    std::mt19937_64 rng(seed);
    encoder_ = nn::TextEncoder(spec, vocab_.size(), rng);
    head_ = nn::Linear(spec.dim, static_cast<int>(labels_.size()), rng);
  }

  std::string name() const override { return "baseline-" + family_name(family_); }
  Family family() const override { return family_; }

  nn::Tensor logits(const std::string& text) const { return head_(encoder_.pooled(values::encode_single(vocab_, text))); }

  int label_index(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw SchemaError("label '" + label + "' is not one of the classifier's labels");
    return static_cast<int>(it - labels_.begin());
  }

  nn::TrainingLog train(const std::vector<std::pair<std::string, std::string>>& train_set,
                        const std::vector<std::pair<std::string, std::string>>& validation,
                        const nn::TrainingConfig& cfg) {
    if (validation.empty()) throw ConfigError("classifier training needs a validation set");
    auto loss = [&](const std::pair<std::string, std::string>& ex) {
      const int target = label_index(ex.second);
      return nn::cross_entropy_sum(logits(ex.first), std::span<const int>(&target, 1));
    };
    config_ = cfg;
    log_ = nn::train_loop(
        parameters(), train_set.size(), [&](size_t i) { return loss(train_set[i]); },
        [&] {
          double total = 0.0;
          for (const auto& ex : validation) total += loss(ex).item();
          return total / static_cast<double>(validation.size());
        },
        cfg);
    trained_ = true;
    return log_;
  }

  std::set<std::string> predict(const std::string& text) const override {
    if (!trained_) throw StateError(name() + " is not trained");
    nn::NoGradGuard guard;
    const auto z = logits(text);
    int best = 0;
    for (int i = 1; i < z.cols(); ++i)
      if (z.at(0, i) > z.at(0, best)) best = i;
    return {labels_[best]};
  }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    encoder_.collect(p, "encoder");
    head_.collect(p, "head");
    return p;
  }

  nlohmann::json describe() const override {
    return {{"name", name()}, {"family", family_name(family_)}, {"encoder", encoder_.spec().str()}};
  }

  void save(const std::filesystem::path& dir) const {
    nn::save_weights(dir / "weights.bin", parameters());
    nn::write_json(dir / "vocab.json", vocab_.to_json());
    nn::write_json(dir / "metadata.json", {{"model_type", "single_label"},
                                           {"family", family_name(family_)},
                                           {"labels", labels_},
                                           {"encoder", encoder_.spec().str()},
                                           {"training_config", config_.to_json()},
                                           {"training_log", log_.to_json()}});
  }

  static SingleLabelClassifier load(const std::filesystem::path& dir) {
    const auto meta = nn::read_json(dir / "metadata.json");
    if (meta.value("model_type", "") != "single_label")
      throw ConfigError(dir.string() + ": not a single-label classifier checkpoint");
    auto family = parse_family(meta.at("family").get<std::string>());
    if (!family) throw ConfigError(dir.string() + ": unknown family");
    SingleLabelClassifier m(*family, meta.at("labels").get<std::vector<std::string>>(),
                            nn::Vocabulary::from_json(nn::read_json(dir / "vocab.json")),
                            nn::EncoderSpec::parse(meta.at("encoder")), 0);
    auto params = m.parameters();
    nn::load_weights(dir / "weights.bin", params);
    m.trained_ = true;
    return m;
  }

 private:
  Family family_;
  std::vector<std::string> labels_;
  nn::Vocabulary vocab_;
  nn::TextEncoder encoder_;
  nn::Linear head_;
  bool trained_ = false;
  nn::TrainingConfig config_;
  nn::TrainingLog log_;
};

// Reads {"text": str, "label": str} lines.
inline std::vector<std::pair<std::string, std::string>> load_single_label_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(where + ": " + e.what());
    }
    out.emplace_back(detail::require_string(j, "text", where), detail::require_string(j, "label", where));
  }
  return out;
}

struct AnnotatedTurn {
  Turn turn;
  std::set<std::string> hate_features;
  std::set<std::string> counter_features;
  std::optional<std::string> error;

  bool operator==(const AnnotatedTurn&) const = default;
};

struct AnnotatedDialogue {
  std::string dialogue_id;
  Topic topic = Topic::kMuslims;
  std::vector<AnnotatedTurn> turns;

  bool operator==(const AnnotatedDialogue&) const = default;
};

struct AnnotatedCorpus {
  std::vector<AnnotatedDialogue> dialogues;
  nlohmann::json metadata = nlohmann::json::object();

  size_t turn_count() const {
    size_t n = 0;
    for (const auto& d : dialogues) n += d.turns.size();
    return n;
  }

  size_t error_count() const {
    size_t n = 0;
    for (const auto& d : dialogues)
      for (const auto& t : d.turns) n += t.error.has_value();
    return n;
  }

  DialogueCorpus plain() const {
    DialogueCorpus c;
    for (const auto& d : dialogues) {
      Dialogue p{d.dialogue_id, d.topic, {}};
      for (const auto& t : d.turns) p.turns.push_back(t.turn);
      c.dialogues.push_back(std::move(p));
    }
    return c;
  }
};

struct AnnotationPorts {
  const ClassifierPort* big5 = nullptr;
  const ClassifierPort* humval = nullptr;
  const ClassifierPort* scheme = nullptr;
  const PairPort* argtype = nullptr;
};

namespace detail {

inline std::set<std::string> checked_codes(const ClassifierPort& port, const std::string& text) {
  const auto& vocab = FeatureVocabulary::standard();
  std::set<std::string> out;
  for (const auto& raw : port.predict(text)) {
    const std::string code = port.family() == Family::kScheme && !vocab.contains(raw) ? merge_scheme_labels(raw) : raw;
    if (vocab.family_of(code) != port.family())
      throw SchemaError(port.name() + " returned '" + raw + "', not a " + family_name(port.family()) + " code");
    out.insert(code);
  }
  if ((port.family() == Family::kBig5 || port.family() == Family::kScheme) && out.size() != 1)
    throw SchemaError(port.name() + " must return exactly one label, got " + std::to_string(out.size()));
  return out;
}

// Side-local: each text port sees one side of the turn only.
inline AnnotatedTurn annotate_turn(const Turn& turn, const AnnotationPorts& ports) {
  AnnotatedTurn out{turn, {}, {}, std::nullopt};
  try {
    for (const ClassifierPort* port : {ports.big5, ports.humval, ports.scheme}) {
      if (!port) continue;
      for (auto& c : checked_codes(*port, turn.hate_text)) out.hate_features.insert(c);
      for (auto& c : checked_codes(*port, turn.counter_text)) out.counter_features.insert(c);
    }
    if (ports.argtype) {
      const auto& vocab = FeatureVocabulary::standard();
      for (const auto& c : ports.argtype->predict(turn.hate_text, turn.counter_text, turn.topic)) {
        if (vocab.family_of(c) != Family::kArgType) throw SchemaError("argtype port returned '" + c + "'");
        out.counter_features.insert(c);
      }
    }
  } catch (const std::exception& e) {
    out.hate_features.clear();
    out.counter_features.clear();
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

// Every turn is kept; a port failure empties that turn's features and
// records the error. Dialogues are split across `workers` threads; output
// order and content do not depend on the worker count.
inline AnnotatedCorpus annotate_corpus(const DialogueCorpus& corpus, const AnnotationPorts& ports, int workers = 1) {
  AnnotatedCorpus out;
  out.dialogues.resize(corpus.dialogues.size());
  auto run = [&](size_t begin, size_t step) {
    for (size_t i = begin; i < corpus.dialogues.size(); i += step) {
      const auto& d = corpus.dialogues[i];
      AnnotatedDialogue a{d.dialogue_id, d.topic, {}};
      for (const auto& t : d.turns) a.turns.push_back(detail::annotate_turn(t, ports));
      out.dialogues[i] = std::move(a);
    }
  };
  workers = std::max(1, workers);
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, static_cast<size_t>(w), static_cast<size_t>(workers));
    for (auto& t : pool) t.join();
  }
  nlohmann::json described = nlohmann::json::object();
  if (ports.big5) described["big5"] = ports.big5->describe();
  if (ports.humval) described["humVal"] = ports.humval->describe();
  if (ports.scheme) described["argSch"] = ports.scheme->describe();
  if (ports.argtype) described["argType"] = ports.argtype->describe();
  out.metadata = {{"ports", described}, {"turns", out.turn_count()}, {"errors", out.error_count()}};
  return out;
}

inline nlohmann::json annotated_dialogue_to_json(const AnnotatedDialogue& d) {
  const auto& vocab = FeatureVocabulary::standard();
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : d.turns) {
    nlohmann::json j = {{"hate", t.turn.hate_text},
                        {"counter", t.turn.counter_text},
                        {"hate_features", vocab.canonical_order(t.hate_features)},
                        {"counter_features", vocab.canonical_order(t.counter_features)}};
    if (t.error) j["error"] = *t.error;
    turns.push_back(std::move(j));
  }
  return {{"dialogue_id", d.dialogue_id}, {"topic", std::string(topic_name(d.topic))}, {"turns", std::move(turns)}};
}

inline void write_annotated_corpus(std::ostream& out, const AnnotatedCorpus& corpus) {
  for (const auto& d : corpus.dialogues) out << annotated_dialogue_to_json(d).dump() << '\n';
}

inline void save_annotated_corpus(const std::filesystem::path& path, const AnnotatedCorpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_annotated_corpus(out, corpus);
}

inline AnnotatedCorpus read_annotated_corpus(std::istream& in) {
  const auto& vocab = FeatureVocabulary::standard();
  AnnotatedCorpus corpus;
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
    AnnotatedDialogue d;
    d.dialogue_id = detail::require_string(j, "dialogue_id", where);
    d.topic = require_topic(detail::require_string(j, "topic", where), where);
    for (const auto& t : detail::require_field(j, "turns", where)) {
      AnnotatedTurn a;
      a.turn = {static_cast<int>(d.turns.size()), detail::require_string(t, "hate", where),
                detail::require_string(t, "counter", where), d.topic};
      auto codes = [&](const char* key) {
        std::set<std::string> s;
        for (const auto& c : detail::require_field(t, key, where)) {
          const auto code = c.get<std::string>();
          if (!vocab.contains(code)) throw SchemaError(where + ": unknown control code '" + code + "'");
          s.insert(code);
        }
        return s;
      };
      a.hate_features = codes("hate_features");
      a.counter_features = codes("counter_features");
      if (t.contains("error")) a.error = t["error"].get<std::string>();
      d.turns.push_back(std::move(a));
    }
    corpus.dialogues.push_back(std::move(d));
  }
  if (corpus.dialogues.empty()) throw EmptyCorpusError("annotated corpus contains no dialogues");
  return corpus;
}

inline AnnotatedCorpus load_annotated_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open annotated corpus " + path.string());
  return read_annotated_corpus(in);
}

struct DistributionRow {
  Family family;
  std::string code;
  std::string side;  // "hate" or "counter"
  long count = 0;
  double proportion = 0.0;
};

// Per family and side, each code's share of that family's labels. Turns with
// errors are skipped; argument types exist on the counter side only.
inline std::vector<DistributionRow> feature_distribution_report(const AnnotatedCorpus& corpus) {
  const auto& vocab = FeatureVocabulary::standard();
  std::map<std::pair<std::string, std::string>, long> counts;
  for (const auto& d : corpus.dialogues)
    for (const auto& t : d.turns) {
      if (t.error) continue;
      for (const auto& c : t.hate_features) ++counts[{"hate", c}];
      for (const auto& c : t.counter_features) ++counts[{"counter", c}];
    }
  std::vector<DistributionRow> rows;
  for (Family f : kAllFamilies)
    for (const std::string side : {"hate", "counter"}) {
      if (f == Family::kArgType && side == "hate") continue;
      long total = 0;
      for (const auto& c : vocab.codes(f)) total += counts[{side, c}];
      for (const auto& c : vocab.codes(f)) {
        const long n = counts[{side, c}];
        rows.push_back({f, c, side, n, total > 0 ? static_cast<double>(n) / static_cast<double>(total) : 0.0});
      }
    }
  return rows;
}

inline void write_distribution_csv(std::ostream& out, const std::vector<DistributionRow>& rows) {
  csv::write_row(out, {"family", "code", "side", "count", "proportion"});
  for (const auto& r : rows) {
    char prop[32];
    std::snprintf(prop, sizeof prop, "%.6f", r.proportion);
    csv::write_row(out, {family_name(r.family), r.code, r.side, std::to_string(r.count), prop});
  }
}

}  // namespace cspeech
