#pragma once

// Command-line front end. Every command reads one JSON config (plus flag
// overrides) and writes into a run directory:
//   config.json    effective config
//   manifest.json  config hash, seeds, versions, completed commands
//   artifacts/     outputs
//   logs/          one log per command

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cspeech/annotator.hpp"
#include "cspeech/argtype/detector.hpp"
#include "cspeech/argtype/keywords.hpp"
#include "cspeech/corpus.hpp"
#include "cspeech/eval/classification.hpp"
#include "cspeech/eval/grid.hpp"
#include "cspeech/eval/humeval.hpp"
#include "cspeech/generator.hpp"
#include "cspeech/taxonomy.hpp"
#include "cspeech/values/detector.hpp"
#include "json.hpp"

namespace cspeech::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { kSuccess = 0, kUsageError = 1, kRuntimeError = 2 };

// Seed streams derived from the master seed.
enum SeedStream : std::uint64_t {
  kValuesClassifier = 1,
  kValuesEntailment,
  kValuesDescriptor,
  kValuesArgument,
  kValuesPairs,
  kValuesQuadruples,
  kValuesTraining,
  kArgTypeModels = 10,
  kArgTypeTraining = 19,
  kGeneratorInit = 20,
  kGeneratorTraining,
  kGeneratorSplit,
  kHumEval,
  kBaselineClassifier = 30,
};

inline json default_config() {
  const std::string enc = "dim=32,layers=1,heads=4,hidden=64,max_len=64";
  return {
      {"seed", 13},
      {"corpus", {{"path", nullptr}, {"format", "canonical"}}},
      {"taxonomy", {{"path", nullptr}, {"strict", false}}},
      {"values",
       {{"train", nullptr},
        {"validation", nullptr},
        {"encoders", {{"multilevel", "post-norm:" + enc}, {"entailment", "pre-norm:" + enc}, {"similarity", "post-norm:" + enc}}},
        {"quadruples", 702},
        {"quadruple_train_fraction", 0.9},
        {"negative_ratio", 1.0},
        {"loss", {{"alpha", 2.0}, {"beta", 1.0}, {"margin", 1.0}}},
        {"classifier_training", {{"learning_rate", 1e-5}, {"patience", 4}}},
        {"embedder_training", {{"learning_rate", 2e-5}, {"patience", 5}}}}},
      {"argtype",
       {{"train", nullptr},
        {"validation", nullptr},
        {"keywords", nullptr},
        {"keyword_max_count", 5},
        {"encoders", {"post-norm:" + enc, "pre-norm:" + enc}},
        {"training", {{"learning_rate", 1e-5}, {"patience", 4}}}}},
      {"classifier",
       {{"family", "big5"},
        {"train", nullptr},
        {"validation", nullptr},
        {"encoder", "post-norm:" + enc},
        {"training", {{"learning_rate", 1e-5}, {"patience", 4}}}}},
      {"annotation",
       {{"ports",
         {{"big5", {{"stub", {"openness"}}}},
          {"humVal", {{"stub", json::array()}}},
          {"argSch", {{"stub", {"Rule or Principle"}}}},
          {"argType", {{"stub", {"facts"}}}}}},
        {"workers", 1}}},
      {"generator",
       {{"annotated", nullptr},
        {"spec", "dim=32,layers=2,heads=4,hidden=64"},
        {"generation", GenerationConfig().to_json()},
        {"families", {"big5", "humVal", "argSch", "argType"}},
        {"validation_fraction", 0.1},
        {"training", {{"learning_rate", 1e-5}, {"patience", 4}}}}},
      {"grid", {{"rows", json::array()}, {"workers", 1}, {"validation_fraction", 0.1}, {"test_fraction", 0.1}}},
      {"humeval", {{"sample_size", 20}}}};
}

inline void merge_into(json& base, const json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key())) merge_into(base[it.key()], it.value());
    else base[it.key()] = it.value();
  }
}

// "a.b.c=value"; the value is parsed as JSON when possible, else kept as a
// string.
inline void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

inline const json& at_path(const json& config, const std::string& dotted) {
  const json* node = &config;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError(dotted + ": missing from config");
    node = &(*node)[part];
  }
  return *node;
}

inline std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return fingerprint(ss.str());
}

class Run {
 public:
  Run(json config, fs::path base_dir, fs::path run_dir, std::string command)
      : config_(std::move(config)), base_dir_(std::move(base_dir)), run_dir_(std::move(run_dir)),
        command_(std::move(command)) {
    fs::create_directories(artifacts());
    fs::create_directories(run_dir_ / "logs");
    log_.open(run_dir_ / "logs" / (command_ + ".log"), std::ios::trunc);
    std::ofstream(run_dir_ / "config.json") << config_.dump(2) << "\n";
  }

  const json& config() const { return config_; }
  fs::path artifacts() const { return run_dir_ / "artifacts"; }
  const fs::path& run_dir() const { return run_dir_; }
  std::string config_hash() const { return fingerprint(config_.dump()); }
  std::uint64_t master_seed() const { return config_.at("seed").get<std::uint64_t>(); }

  std::uint64_t seed(std::uint64_t stream) {
    const auto s = derive_seed(master_seed(), stream);
    seeds_[std::to_string(stream)] = s;
    return s;
  }

  // A configured input file that must exist. Relative paths are taken from
  // the config file's directory.
  fs::path input(const std::string& dotted) {
    const json& v = at_path(config_, dotted);
    if (!v.is_string()) throw ConfigError(dotted + ": path not set");
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = base_dir_ / p;
    if (!fs::exists(p)) throw ConfigError(dotted + ": file not found: " + p.string());
    inputs_[p.string()] = fs::is_directory(p) ? "directory" : file_fingerprint(p);
    return p;
  }

  // Configured path if set, else a default artifact path from an earlier
  // command of this run.
  fs::path input_or_artifact(const std::string& dotted, const fs::path& artifact) {
    const json& v = at_path(config_, dotted);
    if (v.is_string()) return input(dotted);
    const fs::path p = artifacts() / artifact;
    if (!fs::exists(p))
      throw ConfigError(dotted + ": not set and " + p.string() + " does not exist (run the producing command first)");
    inputs_[p.string()] = fs::is_directory(p) ? "directory" : file_fingerprint(p);
    return p;
  }

  void log(const std::string& line) {
    log_ << line << "\n";
    log_.flush();
  }

  void produced(const fs::path& p) { outputs_.push_back(fs::relative(p, run_dir_).string()); }

  bool completed_before() const {
    const auto manifest = read_manifest();
    const auto& cmds = manifest.value("commands", json::object());
    if (!cmds.contains(command_)) return false;
    const auto& entry = cmds.at(command_);
    if (entry.value("config_hash", "") != config_hash() || entry.value("status", "") != "completed") return false;
    for (const auto& a : entry.value("artifacts", json::array()))
      if (!fs::exists(run_dir_ / a.get<std::string>())) return false;
    const json inputs = entry.value("inputs", json::object());
    for (const auto& [path, print] : inputs.items()) {
      if (!fs::exists(path)) return false;
      if (print != "directory" && file_fingerprint(path) != print.get<std::string>()) return false;
    }
    return true;
  }

  void finish() {
    json manifest = read_manifest();
    manifest["config_hash"] = config_hash();
    manifest["master_seed"] = master_seed();
    manifest["versions"] = {{"cspeech", kVersion},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                            {"cli11", CLI11_VERSION},
                            {"compiler", __VERSION__}};
    if (!manifest.contains("commands")) manifest["commands"] = json::object();
    manifest["commands"][command_] = {{"status", "completed"},
                                      {"config_hash", config_hash()},
                                      {"seeds", seeds_},
                                      {"inputs", inputs_},
                                      {"artifacts", outputs_}};
    std::ofstream(run_dir_ / "manifest.json") << manifest.dump(2) << "\n";
  }

 private:
  json read_manifest() const {
    std::ifstream in(run_dir_ / "manifest.json");
    if (!in) return json::object();
    try {
      return json::parse(in);
    } catch (const json::parse_error&) {
      return json::object();
    }
  }

  json config_;
  fs::path base_dir_, run_dir_;
  std::string command_;
  std::ofstream log_;
  json seeds_ = json::object();
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

inline nn::TrainingConfig training_config(Run& run, const std::string& dotted, std::uint64_t stream) {
  auto cfg = nn::TrainingConfig::from_json(at_path(run.config(), dotted));
  cfg.seed = run.seed(stream);
  return cfg;
}

inline std::function<void(int, double, double)> epoch_logger(Run& run, const std::string& what) {
  return [&run, what](int epoch, double train, double val) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s epoch %d train_loss %.6f val_loss %.6f", what.c_str(), epoch, train, val);
    run.log(buf);
  };
}

inline DialogueCorpus load_corpus(Run& run) {
  const auto format_name = at_path(run.config(), "corpus.format").get<std::string>();
  const auto format = parse_corpus_format(format_name);
  if (!format) throw ConfigError("corpus.format: unknown format '" + format_name + "'");
  return load_dialogue_corpus(run.input("corpus.path"), *format);
}

inline std::shared_ptr<const ValueTaxonomy> load_taxonomy(Run& run) {
  const bool strict = at_path(run.config(), "taxonomy.strict").get<bool>();
  return std::make_shared<const ValueTaxonomy>(ValueTaxonomy::load(run.input("taxonomy.path"), {strict}));
}

// ---- commands ----

inline void cmd_ingest(Run& run) {
  const auto corpus = load_corpus(run);
  const auto out = run.artifacts() / "corpus.jsonl";
  save_dialogue_corpus(out, corpus);
  run.produced(out);
  json stats = {{"dialogues", corpus.dialogues.size()}, {"turns", corpus.turn_count()}, {"topics", json::object()}};
  for (const auto& d : corpus.dialogues) stats["topics"][std::string(topic_name(d.topic))] = stats["topics"].value(std::string(topic_name(d.topic)), 0) + 1;
  nn::write_json(run.artifacts() / "ingest.json", stats);
  run.produced(run.artifacts() / "ingest.json");
  run.log("ingested " + std::to_string(corpus.dialogues.size()) + " dialogues, " +
          std::to_string(corpus.turn_count()) + " turns");
}

inline void cmd_train_values(Run& run) {
  using namespace values;
  const auto tax = load_taxonomy(run);
  const auto train = load_labeled_arguments(run.input("values.train"));
  const auto val = load_labeled_arguments(run.input("values.validation"));
  if (train.empty() || val.empty()) throw EmptyCorpusError("value training needs non-empty train and validation files");
  const json& vc = at_path(run.config(), "values");
  std::vector<std::string> texts;
  for (const auto* set : {&train, &val})
    for (const auto& a : *set) texts.push_back(a.text);
  const auto vocab = build_value_vocabulary(*tax, texts);
  const auto cls_cfg = training_config(run, "values.classifier_training", kValuesTraining);
  const auto emb_cfg = training_config(run, "values.embedder_training", kValuesTraining);
  const fs::path dir = run.artifacts() / "values";

  MultiLevelClassifier multilevel(tax, vocab, nn::EncoderSpec::parse(vc.at("encoders").at("multilevel")),
                                  run.seed(kValuesClassifier));
  multilevel.train(train, val, cls_cfg);
  multilevel.save(dir / "multilevel");
  run.log("multilevel classifier trained");

  PairOptions pairs;
  pairs.negative_ratio = vc.at("negative_ratio");
  pairs.seed = run.seed(kValuesPairs);
  EntailmentModel entailment(tax, vocab, nn::EncoderSpec::parse(vc.at("encoders").at("entailment")),
                             run.seed(kValuesEntailment));
  const auto ent_train = build_entailment_pairs(train, *tax, pairs), ent_val = build_entailment_pairs(val, *tax, pairs);
  run.log("entailment pairs: " + std::to_string(ent_train.size()) + " train, " + std::to_string(ent_val.size()) +
          " validation");
  entailment.train(ent_train, ent_val, cls_cfg);
  entailment.save(dir / "entailment");

  QuadrupleOptions qopt;
  qopt.total = vc.at("quadruples");
  qopt.train_fraction = vc.at("quadruple_train_fraction");
  qopt.seed = run.seed(kValuesQuadruples);
  const auto quadruples = sample_quadruples(*tax, qopt);
  run.log("quadruples: " + std::to_string(quadruples.train.size()) + " train, " +
          std::to_string(quadruples.validation.size()) + " validation");
  QuadrupleLossParams loss;
  loss.alpha = vc.at("loss").at("alpha");
  loss.beta = vc.at("loss").at("beta");
  loss.margin = vc.at("loss").at("margin");
  const auto sim_spec = nn::EncoderSpec::parse(vc.at("encoders").at("similarity"));
  DescriptorEmbedder descriptors(tax, vocab, sim_spec, run.seed(kValuesDescriptor), loss);
  descriptors.train(quadruples, emb_cfg);
  ArgumentEmbedder arguments(vocab, sim_spec, sim_spec.dim, run.seed(kValuesArgument));
  arguments.initialize_encoder(descriptors);
  const auto sim_train = build_similarity_pairs(train, *tax, pairs), sim_val = build_similarity_pairs(val, *tax, pairs);
  run.log("similarity pairs: " + std::to_string(sim_train.size()) + " train, " + std::to_string(sim_val.size()) +
          " validation");
  arguments.train(sim_train, sim_val, descriptors.centroids(), emb_cfg);
  SimilarityModel similarity(tax, descriptors.centroids(), arguments);
  similarity.set_training_config(emb_cfg);
  similarity.save(dir / "similarity");

  // Validation macro-F1 of each member and of the ensemble over the target
  // categories.
  const auto targets = tax->target_l2();
  auto gold_row = [&](const LabeledArgument& a) {
    const auto gold = gold_l2_ids(a, *tax);
    std::vector<int> row;
    for (int l2 : targets) row.push_back(gold.count(l2) ? 1 : 0);
    return row;
  };
  std::vector<std::vector<int>> gold;
  std::map<std::string, std::vector<std::vector<int>>> predicted;
  const std::vector<const ValuePredictor*> members{&multilevel, &entailment, &similarity};
  for (const auto& a : val) {
    gold.push_back(gold_row(a));
    for (const auto* m : members) predicted[m->kind()].push_back(m->predict(a.text).decisions);
    predicted["ensemble"].push_back(ensemble_predict(a.text, members).decisions);
  }
  json report = json::object();
  for (const auto& [name, rows] : predicted) report[name] = {{"macro_f1", eval::macro_f1(gold, rows)}};
  nn::write_json(dir / "report.json", report);
  for (const char* sub : {"multilevel", "entailment", "similarity", "report.json"}) run.produced(dir / sub);
  run.log("validation macro-F1: " + report.dump());
}

inline void cmd_train_argtype(Run& run) {
  using namespace argtype;
  const auto train = load_labeled_pairs(run.input("argtype.train"));
  const auto val = load_labeled_pairs(run.input("argtype.validation"));
  if (train.empty() || val.empty()) throw EmptyCorpusError("argtype training needs non-empty train and validation files");
  const json& ac = at_path(run.config(), "argtype");
  TopicKeywordSet keywords;
  if (ac.at("keywords").is_string()) {
    keywords = load_keywords(run.input("argtype.keywords"));
  } else {
    std::vector<std::string> warnings;
    KeywordOptions opt;
    opt.max_count = ac.at("keyword_max_count");
    keywords = expand_keywords(curate_topic_keywords(load_corpus(run), LexiconTagger(), opt, &warnings),
                               BundledLexicon());
    for (const auto& w : warnings) run.log("warning: " + w);
  }
  const fs::path dir = run.artifacts() / "argtype";
  nn::write_json(dir / "keywords.json", keywords.to_json());
  run.produced(dir / "keywords.json");
  const auto encoders = ac.at("encoders").get<std::vector<std::string>>();
  if (encoders.size() != 2) throw ConfigError("argtype.encoders: exactly two encoder specs expected");
  std::vector<std::string> texts;
  for (const auto* set : {&train, &val})
    for (const auto& p : *set) {
      for (const auto& t : {p.hate, p.counter}) {
        texts.push_back(t);
        texts.push_back(mask_text(t, keywords, p.topic));
      }
    }
  const auto vocab = build_argtype_vocabulary(texts);
  const auto cfg = training_config(run, "argtype.training", kArgTypeTraining);
  std::vector<std::unique_ptr<ArgTypeModel>> models;
  int index = 0;
  for (bool masked : {false, true})
    for (const auto& enc : encoders) {
      Variant v{masked, nn::EncoderSpec::parse(enc)};
      auto m = std::make_unique<ArgTypeModel>(v, vocab, keywords, run.seed(kArgTypeModels + index));
      m->train(train, val, cfg);
      const fs::path sub = dir / ("member" + std::to_string(index));
      m->save(sub);
      run.produced(sub);
      run.log("trained " + v.name());
      models.push_back(std::move(m));
      ++index;
    }
  std::vector<const ArgTypeModel*> members;
  for (const auto& m : models) members.push_back(m.get());
  std::vector<std::vector<int>> gold, predicted;
  for (const auto& p : val) {
    std::vector<int> g;
    for (float l : p.labels) g.push_back(l > 0.5f ? 1 : 0);
    gold.push_back(g);
    const auto label = ensemble_predict(p.hate, p.counter, members, p.topic);
    predicted.emplace_back(label.decisions.begin(), label.decisions.end());
  }
  const json report = {{"ensemble", {{"macro_f1", eval::macro_f1(gold, predicted)}}}};
  nn::write_json(dir / "report.json", report);
  run.produced(dir / "report.json");
  run.log("validation macro-F1: " + report.dump());
}

inline void cmd_train_classifier(Run& run) {
  const json& cc = at_path(run.config(), "classifier");
  const auto family = parse_family(cc.at("family").get<std::string>());
  if (!family || (*family != Family::kBig5 && *family != Family::kScheme))
    throw ConfigError("classifier.family: must be big5 or argSch");
  const auto train = load_single_label_examples(run.input("classifier.train"));
  const auto val = load_single_label_examples(run.input("classifier.validation"));
  if (train.empty() || val.empty()) throw EmptyCorpusError("classifier training needs non-empty train and validation files");
  std::set<std::string> labels;
  std::vector<std::string> texts;
  for (const auto* set : {&train, &val})
    for (const auto& [text, label] : *set) {
      labels.insert(label);
      texts.push_back(text);
    }
  SingleLabelClassifier cls(*family, {labels.begin(), labels.end()}, nn::Vocabulary::build(texts),
                            nn::EncoderSpec::parse(cc.at("encoder")), run.seed(kBaselineClassifier));
  cls.train(train, val, training_config(run, "classifier.training", kBaselineClassifier));
  const fs::path dir = run.artifacts() / ("classifier_" + family_name(*family));
  cls.save(dir);
  run.produced(dir);
  run.log("trained " + cls.name() + " over " + std::to_string(labels.size()) + " labels");
}

// Owns whatever models the configured ports need.
struct LoadedPorts {
  std::vector<std::unique_ptr<ClassifierPort>> classifiers;
  std::unique_ptr<PairPort> pair;
  std::shared_ptr<const ValueTaxonomy> taxonomy;
  std::vector<std::unique_ptr<values::ValuePredictor>> value_models;
  std::vector<std::unique_ptr<argtype::ArgTypeModel>> argtype_models;
  AnnotationPorts ports;
  json description = json::object();
};

inline std::unique_ptr<LoadedPorts> load_ports(Run& run) {
  auto out = std::make_unique<LoadedPorts>();
  const json& ports = at_path(run.config(), "annotation.ports");
  for (Family f : kAllFamilies) {
    const std::string key = family_name(f);
    if (!ports.contains(key) || ports.at(key).is_null()) continue;
    const json& spec = ports.at(key);
    const std::string where = "annotation.ports." + key;
    if (spec.contains("stub")) {
      const auto labels = spec.at("stub").get<std::set<std::string>>();
      if (f == Family::kArgType) out->pair = std::make_unique<FixedPairPort>(labels);
      else out->classifiers.push_back(std::make_unique<FixedPort>(f, labels));
    } else if (spec.contains("checkpoint")) {
      const fs::path dir = run.input(where + ".checkpoint");
      if (f == Family::kHumVal) {
        out->taxonomy = load_taxonomy(run);
        out->value_models.push_back(
            std::make_unique<values::MultiLevelClassifier>(values::MultiLevelClassifier::load(dir / "multilevel", out->taxonomy)));
        out->value_models.push_back(
            std::make_unique<values::EntailmentModel>(values::EntailmentModel::load(dir / "entailment", out->taxonomy)));
        out->value_models.push_back(
            std::make_unique<values::SimilarityModel>(values::SimilarityModel::load(dir / "similarity", out->taxonomy)));
        std::vector<const values::ValuePredictor*> members;
        for (const auto& m : out->value_models) members.push_back(m.get());
        out->classifiers.push_back(std::make_unique<ValueEnsemblePort>(members));
      } else if (f == Family::kArgType) {
        for (int i = 0; i < 4; ++i)
          out->argtype_models.push_back(std::make_unique<argtype::ArgTypeModel>(
              argtype::ArgTypeModel::load(dir / ("member" + std::to_string(i)))));
        std::vector<const argtype::ArgTypeModel*> members;
        for (const auto& m : out->argtype_models) members.push_back(m.get());
        out->pair = std::make_unique<ArgTypeEnsemblePort>(members);
      } else {
        auto cls = std::make_unique<SingleLabelClassifier>(SingleLabelClassifier::load(dir));
        if (cls->family() != f) throw ConfigError(where + ": checkpoint is for family " + family_name(cls->family()));
        out->classifiers.push_back(std::move(cls));
      }
    } else {
      throw ConfigError(where + ": expected {\"stub\": [...]} or {\"checkpoint\": path}");
    }
  }
  for (const auto& c : out->classifiers) {
    switch (c->family()) {
      case Family::kBig5: out->ports.big5 = c.get(); break;
      case Family::kHumVal: out->ports.humval = c.get(); break;
      case Family::kScheme: out->ports.scheme = c.get(); break;
      case Family::kArgType: break;
    }
    out->description[family_name(c->family())] = c->describe();
  }
  out->ports.argtype = out->pair.get();
  if (out->pair) out->description["argType"] = out->pair->describe();
  return out;
}

inline void cmd_annotate(Run& run) {
  const auto corpus = load_corpus(run);
  const auto ports = load_ports(run);
  auto annotated = annotate_corpus(corpus, ports->ports, at_path(run.config(), "annotation.workers").get<int>());
  annotated.metadata = {{"ports", ports->description}, {"config_hash", run.config_hash()}};
  const auto out = run.artifacts() / "annotated.jsonl";
  save_annotated_corpus(out, annotated);
  run.produced(out);
  run.log("annotated " + std::to_string(annotated.turn_count()) + " turns, " +
          std::to_string(annotated.error_count()) + " with errors");
}

inline GenerationConfig generation_config(const Run& run) {
  auto g = GenerationConfig::from_json(at_path(run.config(), "generator.generation"));
  g.families = parse_families(at_path(run.config(), "generator.families").get<std::vector<std::string>>());
  return g;
}

inline void cmd_train_generator(Run& run) {
  const auto annotated = load_annotated_corpus(run.input_or_artifact("generator.annotated", "annotated.jsonl"));
  const auto examples = annotated_examples(annotated);
  const auto split = split_by_dialogue(examples, at_path(run.config(), "generator.validation_fraction").get<double>(),
                                       run.seed(kGeneratorSplit));
  if (split.validation.empty()) throw ConfigError("generator.validation_fraction: validation split is empty");
  const auto gen = generation_config(run);
  Generator generator(build_generator_vocabulary(split.train, gen.families),
                      Seq2SeqSpec::parse(at_path(run.config(), "generator.spec")), gen, run.seed(kGeneratorInit));
  size_t warned = 0;
  for (const auto& e : split.train) warned += !generator.batch(e).warnings.empty();
  if (warned) run.log("warning: " + std::to_string(warned) + " training examples were truncated");
  generator.train(split.train, split.validation, training_config(run, "generator.training", kGeneratorTraining),
                  epoch_logger(run, "generator"));
  const auto dir = run.artifacts() / "generator";
  generator.save(dir);
  run.produced(dir);
  run.log("generator (" + families_label(gen.families) + ") saved");
}

struct GenerateOptions {
  std::string input;   // JSONL of requests
  std::string output;  // JSONL of responses; default artifacts/generations.jsonl
  std::string checkpoint;
  int beam_width = 0;  // 0 keeps the checkpoint's setting
};

inline void cmd_generate(Run& run, const GenerateOptions& opt, std::ostream& out) {
  const fs::path ckpt = opt.checkpoint.empty() ? run.artifacts() / "generator" : fs::path(opt.checkpoint);
  if (!fs::exists(ckpt / "metadata.json")) throw ConfigError("generator checkpoint not found: " + ckpt.string());
  auto generator = Generator::load(ckpt);
  if (opt.beam_width > 0) generator.mutable_config().beam_width = opt.beam_width;
  if (opt.input.empty()) throw ConfigError("--input: a JSONL file of generation requests is required");
  std::ifstream in(opt.input);
  if (!in) throw ConfigError("--input: cannot open " + opt.input);
  const fs::path out_path = opt.output.empty() ? run.artifacts() / "generations.jsonl" : fs::path(opt.output);
  std::ofstream file(out_path);
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    if (normalize_whitespace(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("request line " + std::to_string(n + 1) + ": " + e.what());
    }
    const auto response = generator.generate(GenerationRequest::from_json(j)).to_json().dump();
    file << response << "\n";
    out << response << "\n";
    ++n;
  }
  run.produced(out_path);
  run.log("generated " + std::to_string(n) + " responses");
}

inline std::vector<int> parse_rows(const std::string& text) {
  std::vector<int> rows;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      rows.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("grid rows: '" + item + "' is not a row id");
    }
    eval::grid_row(rows.back());
  }
  return rows;
}

inline void cmd_eval_grid(Run& run) {
  const auto annotated = load_annotated_corpus(run.input_or_artifact("generator.annotated", "annotated.jsonl"));
  const json& gc = at_path(run.config(), "grid");
  const double val_share = gc.at("validation_fraction"), test_share = gc.at("test_fraction");
  if (val_share + test_share >= 1.0) throw ConfigError("grid: validation_fraction + test_fraction must be below 1");
  const auto examples = annotated_examples(annotated);
  const auto outer = split_by_dialogue(examples, test_share, run.seed(kGeneratorSplit));
  const auto inner = split_by_dialogue(outer.train, val_share / (1.0 - test_share), run.seed(kGeneratorSplit) + 1);
  if (inner.validation.empty() || outer.validation.empty())
    throw ConfigError("grid: validation or test split is empty; raise the fractions or use a larger corpus");
  eval::GridOptions options;
  options.spec = Seq2SeqSpec::parse(at_path(run.config(), "generator.spec"));
  options.generation = generation_config(run);
  options.training = training_config(run, "generator.training", kGeneratorTraining);
  options.seed = run.seed(kGeneratorInit);
  options.rows = gc.at("rows").get<std::vector<int>>();
  for (int id : options.rows) eval::grid_row(id);
  options.workers = gc.at("workers");
  const fs::path dir = run.artifacts() / "grid";
  options.output_dir = dir;
  run.log("grid split: " + std::to_string(inner.train.size()) + " train, " + std::to_string(inner.validation.size()) +
          " validation, " + std::to_string(outer.validation.size()) + " test examples");
  const auto result = eval::run_feature_grid(inner.train, inner.validation, outer.validation, options);
  std::ofstream csv(dir / "grid.csv");
  eval::write_grid_csv(csv, result.reports);
  json reports = json::array();
  for (const auto& r : result.reports) {
    reports.push_back(r.to_json());
    run.log("row " + std::to_string(r.id) + " " + r.features + (r.failed() ? " failed: " + *r.error : " done"));
  }
  nn::write_json(dir / "grid.json", reports);
  // Contexts alongside the generations for packet export.
  for (const auto& [id, items] : result.generations) {
    char name[32];
    std::snprintf(name, sizeof name, "row_%02d", id);
    std::ofstream g(dir / name / "items.jsonl");
    for (const auto& item : items) {
      json ctx = json::array();
      for (const auto& [h, c] : item.context) ctx.push_back({h, c});
      g << json{{"index", item.index}, {"context", ctx}, {"query", item.query}, {"reference", item.reference},
                {"response", item.response}}.dump()
        << "\n";
    }
  }
  run.produced(dir / "grid.csv");
  run.produced(dir / "grid.json");
}

inline eval::GridResult load_grid(const fs::path& dir) {
  if (!fs::exists(dir / "grid.json")) throw ConfigError("no grid results under " + dir.string() + " (run eval-grid first)");
  eval::GridResult result;
  for (const auto& j : nn::read_json(dir / "grid.json")) {
    eval::MetricReport r{j.at("id"), j.at("type"), j.at("features")};
    r.samples = j.at("samples");
    if (j.contains("error")) {
      r.error = j.at("error").get<std::string>();
    } else {
      r.bleu = j.at("bleu");
      r.rouge_l = j.at("rouge_l");
      r.perplexity = j.at("perplexity");
    }
    result.reports.push_back(r);
    char name[32];
    std::snprintf(name, sizeof name, "row_%02d", r.id);
    std::ifstream in(dir / name / "items.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto item = json::parse(line);
      eval::GeneratedItem g;
      g.index = item.at("index");
      for (const auto& c : item.at("context")) g.context.emplace_back(c[0], c[1]);
      g.query = item.at("query");
      g.reference = item.at("reference");
      g.response = item.at("response");
      result.generations[r.id].push_back(g);
    }
  }
  return result;
}

inline void cmd_export_humeval(Run& run) {
  const auto grid = load_grid(run.artifacts() / "grid");
  const auto packets = eval::export_human_eval_packets(grid.reports, grid.generations,
                                                       at_path(run.config(), "humeval.sample_size").get<size_t>(),
                                                       run.seed(kHumEval));
  for (const auto& w : packets.warnings) run.log("warning: " + w);
  const fs::path dir = run.artifacts() / "humeval";
  fs::create_directories(dir);
  std::ofstream packets_out(dir / "packets.csv"), key_out(dir / "blinding_key.csv");
  eval::write_packets_csv(packets_out, packets);
  eval::write_blinding_key_csv(key_out, packets);
  run.produced(dir / "packets.csv");
  run.produced(dir / "blinding_key.csv");
  run.log("exported " + std::to_string(packets.items.size()) + " items for " +
          std::to_string(packets.blinding_key.size()) + " variants");
}

inline void cmd_report(Run& run) {
  const auto annotated = load_annotated_corpus(run.input_or_artifact("generator.annotated", "annotated.jsonl"));
  const auto rows = feature_distribution_report(annotated);
  const auto out = run.artifacts() / "distribution.csv";
  std::ofstream csv(out);
  write_distribution_csv(csv, rows);
  run.produced(out);
  run.log("distribution over " + std::to_string(annotated.turn_count() - annotated.error_count()) + " turns");
}

// ---- entry point ----

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"ingest",          "train-values", "train-argtype",
                                                 "train-classifier", "annotate",     "train-generator",
                                                 "generate",        "eval-grid",    "report",
                                                 "export-humeval"};
  return names;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Counter-hate argument generation pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path, run_dir, rows, families;
  std::vector<std::string> overrides;
  int seed = -1, workers = 0;
  bool resume = false;
  GenerateOptions gen_opt;
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("-r,--run-dir", run_dir, "run directory")->required();
    sub->add_option("-s,--set", overrides, "override a config entry, e.g. grid.workers=2");
    sub->add_option("--seed", seed, "master seed");
    sub->add_flag("--resume", resume, "skip when this command already completed with the same config");
    subs[name] = sub;
  }
  subs["annotate"]->add_option("--workers", workers, "annotation threads");
  subs["eval-grid"]->add_option("--workers", workers, "rows trained in parallel");
  subs["eval-grid"]->add_option("--rows", rows, "comma-separated row ids (default all 16)");
  subs["train-generator"]->add_option("--families", families, "comma-separated families, or 'none'");
  subs["generate"]->add_option("--input", gen_opt.input, "JSONL generation requests")->required();
  subs["generate"]->add_option("--output", gen_opt.output, "JSONL responses");
  subs["generate"]->add_option("--checkpoint", gen_opt.checkpoint, "generator checkpoint directory");
  subs["generate"]->add_option("--beam-width", gen_opt.beam_width, "beam width");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }
  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    json config = default_config();
    fs::path base_dir = fs::current_path();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("--config: cannot open " + config_path);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("--config: " + std::string(e.what()));
      }
      merge_into(config, file);
      base_dir = fs::absolute(config_path).parent_path();
    }
    for (const auto& o : overrides) apply_override(config, o);
    if (seed >= 0) config["seed"] = seed;
    if (workers > 0) config[command == "annotate" ? "annotation" : "grid"]["workers"] = workers;
    if (!rows.empty()) config["grid"]["rows"] = parse_rows(rows);
    if (!families.empty()) {
      std::vector<std::string> names;
      if (families != "none") {
        std::stringstream ss(families);
        std::string f;
        while (std::getline(ss, f, ','))
          if (!f.empty()) names.push_back(f);
      }
      parse_families(names);
      config["generator"]["families"] = names;
    }
    Run run(config, base_dir, run_dir, command);
    if (resume && run.completed_before()) {
      out << command << ": already completed for this config, skipping\n";
      return kSuccess;
    }
    if (command == "ingest") cmd_ingest(run);
    else if (command == "train-values") cmd_train_values(run);
    else if (command == "train-argtype") cmd_train_argtype(run);
    else if (command == "train-classifier") cmd_train_classifier(run);
    else if (command == "annotate") cmd_annotate(run);
    else if (command == "train-generator") cmd_train_generator(run);
    else if (command == "generate") cmd_generate(run, gen_opt, out);
    else if (command == "eval-grid") cmd_eval_grid(run);
    else if (command == "report") cmd_report(run);
    else if (command == "export-humeval") cmd_export_humeval(run);
    run.finish();
    return kSuccess;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace cspeech::cli
