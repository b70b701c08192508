#pragma once

// Control-code conditioned encoder-decoder response generator.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cspeech/annotator.hpp"
#include "cspeech/corpus.hpp"
#include "cspeech/features.hpp"
#include "cspeech/nn/checkpoint.hpp"
#include "cspeech/nn/layers.hpp"
#include "cspeech/nn/train.hpp"
#include "cspeech/nn/vocab.hpp"
#include "cspeech/random.hpp"
#include "json.hpp"

namespace cspeech {

namespace fs = std::filesystem;

inline constexpr const char* kHateMarker = "<hate>";
inline constexpr const char* kCounterMarker = "<counter>";

struct CodePlacement {
  std::set<std::string> encoder_codes;  // only in the query
  std::set<std::string> decoder_codes;  // only in the response

  bool operator==(const CodePlacement&) const = default;
};

inline CodePlacement feature_delta(const std::set<std::string>& query, const std::set<std::string>& response) {
  const auto& vocab = FeatureVocabulary::standard();
  for (const auto* side : {&query, &response})
    for (const auto& c : *side) vocab.require_family(c);
  CodePlacement p;
  std::set_difference(query.begin(), query.end(), response.begin(), response.end(),
                      std::inserter(p.encoder_codes, p.encoder_codes.end()));
  std::set_difference(response.begin(), response.end(), query.begin(), query.end(),
                      std::inserter(p.decoder_codes, p.decoder_codes.end()));
  return p;
}

// A generation example with the silver features of its query and response.
struct AnnotatedExample {
  GenerationExample example;
  std::set<std::string> query_features;
  std::set<std::string> response_features;
};

// One example per turn. Turns whose annotation failed keep their place (so
// later contexts stay intact) and carry no features.
inline std::vector<AnnotatedExample> annotated_examples(const AnnotatedCorpus& corpus) {
  std::vector<AnnotatedExample> out;
  for (const auto& d : corpus.dialogues) {
    std::vector<std::pair<std::string, std::string>> context;
    for (const auto& t : d.turns) {
      out.push_back({{d.dialogue_id, t.turn.turn_index, context, t.turn.hate_text, t.turn.counter_text, d.topic},
                     t.hate_features,
                     t.counter_features});
      context.emplace_back(t.turn.hate_text, t.turn.counter_text);
    }
  }
  return out;
}

struct ExampleSplit {
  std::vector<AnnotatedExample> train;
  std::vector<AnnotatedExample> validation;
};

// Whole dialogues go to one side. The validation share is rounded to the
// nearest dialogue count.
inline ExampleSplit split_by_dialogue(const std::vector<AnnotatedExample>& examples, double validation_fraction,
                                      std::uint64_t seed) {
  if (validation_fraction < 0 || validation_fraction >= 1) throw ConfigError("validation fraction must be in [0,1)");
  std::vector<std::string> ids;
  for (const auto& e : examples)
    if (ids.empty() || ids.back() != e.example.dialogue_id) ids.push_back(e.example.dialogue_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  shuffle(ids, rng);
  const auto n_val = static_cast<size_t>(std::llround(validation_fraction * static_cast<double>(ids.size())));
  const std::set<std::string> val_ids(ids.begin(), ids.begin() + static_cast<long>(n_val));
  ExampleSplit split;
  for (const auto& e : examples) (val_ids.count(e.example.dialogue_id) ? split.validation : split.train).push_back(e);
  return split;
}

enum class CodePosition { kBeforeBos, kAfterBos };
enum class DecoderCodeMode { kDelta, kRaw };

struct GenerationConfig {
  std::set<Family> families;  // empty = baseline
  int beam_width = 5;
  int max_source_len = 512;
  int max_target_len = 64;
  int context_turns = -1;  // most recent turns kept; -1 keeps all
  CodePosition code_position = CodePosition::kBeforeBos;
  DecoderCodeMode decoder_codes = DecoderCodeMode::kDelta;

  void validate() const {
    if (beam_width < 1) throw ConfigError("beam width must be at least 1");
    if (max_source_len < 1 || max_target_len < 2) throw ConfigError("generator max lengths too small");
  }

  nlohmann::json to_json() const {
    std::vector<std::string> names;
    for (Family f : families) names.push_back(family_name(f));
    return {{"families", names},
            {"beam_width", beam_width},
            {"max_source_len", max_source_len},
            {"max_target_len", max_target_len},
            {"context_turns", context_turns},
            {"code_position", code_position == CodePosition::kBeforeBos ? "before_bos" : "after_bos"},
            {"decoder_codes", decoder_codes == DecoderCodeMode::kDelta ? "delta" : "raw"}};
  }

  static GenerationConfig from_json(const nlohmann::json& j) { return from_json(j, GenerationConfig()); }

  static GenerationConfig from_json(const nlohmann::json& j, GenerationConfig c) {
    if (j.contains("families")) c.families = parse_families(j.at("families").get<std::vector<std::string>>());
    c.beam_width = j.value("beam_width", c.beam_width);
    c.max_source_len = j.value("max_source_len", c.max_source_len);
    c.max_target_len = j.value("max_target_len", c.max_target_len);
    c.context_turns = j.value("context_turns", c.context_turns);
    if (j.contains("code_position")) {
      const auto s = j.at("code_position").get<std::string>();
      if (s == "before_bos") c.code_position = CodePosition::kBeforeBos;
      else if (s == "after_bos") c.code_position = CodePosition::kAfterBos;
      else throw ConfigError("code_position must be before_bos or after_bos");
    }
    if (j.contains("decoder_codes")) {
      const auto s = j.at("decoder_codes").get<std::string>();
      if (s == "delta") c.decoder_codes = DecoderCodeMode::kDelta;
      else if (s == "raw") c.decoder_codes = DecoderCodeMode::kRaw;
      else throw ConfigError("decoder_codes must be delta or raw");
    }
    c.validate();
    return c;
  }
};

// Word vocabulary shared by encoder and decoder: specials, role markers,
// corpus words, then one token per code of the active families.
inline nn::Vocabulary build_generator_vocabulary(const std::vector<AnnotatedExample>& examples,
                                                 const std::set<Family>& families) {
  std::vector<std::string> texts;
  for (const auto& e : examples) {
    for (const auto& [h, c] : e.example.context) {
      texts.push_back(h);
      texts.push_back(c);
    }
    texts.push_back(e.example.query);
    texts.push_back(e.example.response);
  }
  nn::Vocabulary vocab;
  vocab.add(kHateMarker);
  vocab.add(kCounterMarker);
  const auto words = nn::Vocabulary::build(texts);
  for (int i = 5; i < words.size(); ++i) vocab.add(words.token(i));
  for (Family f : kAllFamilies)
    if (families.count(f))
      for (const auto& code : FeatureVocabulary::standard().codes(f)) vocab.add(FeatureVocabulary::token(code));
  return vocab;
}

struct GeneratorBatch {
  std::vector<int> encoder_ids;
  std::vector<int> decoder_input;
  std::vector<int> targets;  // aligned with decoder_input; -1 where nothing is predicted
  int context_turns_used = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<int> code_ids(const std::set<std::string>& codes, const nn::Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& c : FeatureVocabulary::standard().canonical_order(codes))
    ids.push_back(vocab.require(FeatureVocabulary::token(c)));
  return ids;
}

inline std::vector<int> encoder_input(const std::vector<int>& codes,
                                      const std::vector<std::pair<std::string, std::string>>& context,
                                      const std::string& query, const nn::Vocabulary& vocab,
                                      const GenerationConfig& config, int* turns_used,
                                      std::vector<std::string>* warnings) {
  const int budget = config.max_source_len - static_cast<int>(codes.size());
  if (budget <= 0) throw ConfigError("encoder codes leave no room for the query");
  std::vector<int> query_ids = vocab.encode(query);
  std::vector<int> out = codes;
  *turns_used = 0;
  if (static_cast<int>(query_ids.size()) > budget) {
    if (warnings) warnings->push_back("query truncated from " + std::to_string(query_ids.size()) + " to " +
                                      std::to_string(budget) + " tokens");
    query_ids.resize(static_cast<size_t>(budget));
  } else {
    size_t first = 0;
    if (config.context_turns >= 0 && static_cast<size_t>(config.context_turns) < context.size())
      first = context.size() - static_cast<size_t>(config.context_turns);
    // Keep the longest suffix of turns that fits next to the query.
    std::vector<std::vector<int>> turns;
    int used = static_cast<int>(query_ids.size());
    for (size_t i = context.size(); i > first; --i) {
      std::vector<int> t{vocab.require(kHateMarker)};
      for (int id : vocab.encode(context[i - 1].first)) t.push_back(id);
      t.push_back(vocab.require(kCounterMarker));
      for (int id : vocab.encode(context[i - 1].second)) t.push_back(id);
      const int sep = turns.empty() ? 1 : 0;
      if (used + sep + static_cast<int>(t.size()) > budget) break;
      used += sep + static_cast<int>(t.size());
      turns.push_back(std::move(t));
    }
    for (auto it = turns.rbegin(); it != turns.rend(); ++it) out.insert(out.end(), it->begin(), it->end());
    if (!turns.empty()) out.push_back(nn::Vocabulary::kSepId);
    *turns_used = static_cast<int>(turns.size());
  }
  out.insert(out.end(), query_ids.begin(), query_ids.end());
  return out;
}

inline std::vector<int> decoder_prefix(const std::vector<int>& codes, CodePosition position) {
  std::vector<int> out;
  if (position == CodePosition::kAfterBos) out.push_back(nn::Vocabulary::kBosId);
  out.insert(out.end(), codes.begin(), codes.end());
  if (position == CodePosition::kBeforeBos) out.push_back(nn::Vocabulary::kBosId);
  return out;
}

}  // namespace detail

// Encoder: [codes][<hate> h <counter> c ...][<sep>][query]. The separator
// only appears when context survives truncation. Decoder input:
// [codes][BOS][response], targets [-1 per code][response][EOS].
inline GeneratorBatch build_training_batch(const GenerationExample& example, const CodePlacement& placement,
                                           const std::set<Family>& family_filter, const nn::Vocabulary& vocab,
                                           const GenerationConfig& config) {
  const auto& fv = FeatureVocabulary::standard();
  GeneratorBatch b;
  const auto enc_codes = detail::code_ids(fv.filter(placement.encoder_codes, family_filter), vocab);
  const auto dec_codes = detail::code_ids(fv.filter(placement.decoder_codes, family_filter), vocab);
  b.encoder_ids = detail::encoder_input(enc_codes, example.context, example.query, vocab, config,
                                        &b.context_turns_used, &b.warnings);
  b.decoder_input = detail::decoder_prefix(dec_codes, config.code_position);
  std::vector<int> response = vocab.encode(example.response);
  const int room = config.max_target_len - static_cast<int>(b.decoder_input.size());
  if (room < 0) throw ConfigError("decoder codes exceed the target length");
  if (static_cast<int>(response.size()) > room) {
    b.warnings.push_back("response truncated to " + std::to_string(room) + " tokens");
    response.resize(static_cast<size_t>(room));
  }
  b.targets.assign(dec_codes.size(), -1);
  b.targets.insert(b.targets.end(), response.begin(), response.end());
  b.targets.push_back(nn::Vocabulary::kEosId);
  b.decoder_input.insert(b.decoder_input.end(), response.begin(), response.end());
  return b;
}

inline GeneratorBatch build_training_batch(const AnnotatedExample& e, const nn::Vocabulary& vocab,
                                           const GenerationConfig& config) {
  const auto& fv = FeatureVocabulary::standard();
  const auto placement =
      feature_delta(fv.filter(e.query_features, config.families), fv.filter(e.response_features, config.families));
  return build_training_batch(e.example, placement, config.families, vocab, config);
}

// Encoder "dim=32,layers=2,heads=4,hidden=64"; all keys optional.
struct Seq2SeqSpec {
  int dim = 32;
  int layers = 2;
  int heads = 4;
  int hidden = 64;

  static Seq2SeqSpec parse(const std::string& text) {
    Seq2SeqSpec s;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("generator spec entry without '=': " + item);
      const std::string key = item.substr(0, eq);
      int value = 0;
      try {
        value = std::stoi(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("generator spec value is not an integer: " + item);
      }
      if (value <= 0) throw ConfigError("generator spec value must be positive: " + item);
      if (key == "dim") s.dim = value;
      else if (key == "layers") s.layers = value;
      else if (key == "heads") s.heads = value;
      else if (key == "hidden") s.hidden = value;
      else throw ConfigError("unknown generator spec key: " + key);
    }
    if (s.dim % s.heads != 0) throw ConfigError("generator dim must be divisible by heads");
    return s;
  }

  std::string str() const {
    return "dim=" + std::to_string(dim) + ",layers=" + std::to_string(layers) + ",heads=" + std::to_string(heads) +
           ",hidden=" + std::to_string(hidden);
  }
};

class Seq2SeqModel {
 public:
  Seq2SeqModel() = default;
  Seq2SeqModel(const Seq2SeqSpec& spec, int vocab_size, int max_source_len, int max_target_len, std::uint64_t seed)
      : spec_(spec) {
    std::mt19937_64 rng(seed);
    tokens_ = nn::Embedding(vocab_size, spec.dim, rng);
    source_positions_ = nn::Embedding(max_source_len, spec.dim, rng);
    target_positions_ = nn::Embedding(max_target_len, spec.dim, rng);
    for (int i = 0; i < spec.layers; ++i)
      encoder_.emplace_back(spec.dim, spec.heads, spec.hidden, nn::NormPlacement::kPost, rng);
    for (int i = 0; i < spec.layers; ++i) decoder_.emplace_back(spec.dim, spec.heads, spec.hidden, rng);
    output_ = nn::Linear(spec.dim, vocab_size, rng);
  }

  nn::Tensor encode(const std::vector<int>& ids) const {
    nn::Tensor h = nn::add(tokens_(ids), source_positions_(positions(ids.size(), source_positions_.vocab_size())));
    for (const auto& layer : encoder_) h = layer(h);
    return h;
  }

  // Next-token logits, one row per decoder input position.
  nn::Tensor decode(const nn::Tensor& memory, const std::vector<int>& ids) const {
    nn::Tensor h = nn::add(tokens_(ids), target_positions_(positions(ids.size(), target_positions_.vocab_size())));
    for (const auto& layer : decoder_) h = layer(h, memory);
    return output_(h);
  }

  nn::ParameterList parameters() const {
    nn::ParameterList p;
    tokens_.collect(p, "tokens");
    source_positions_.collect(p, "source_positions");
    target_positions_.collect(p, "target_positions");
    for (size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect(p, "encoder" + std::to_string(i));
    for (size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(p, "decoder" + std::to_string(i));
    output_.collect(p, "output");
    return p;
  }

  const Seq2SeqSpec& spec() const { return spec_; }

 private:
  static std::vector<int> positions(size_t n, int limit) {
    if (n == 0 || static_cast<int>(n) > limit)
      throw DimensionError("sequence length " + std::to_string(n) + " outside 1.." + std::to_string(limit));
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
  }

  Seq2SeqSpec spec_;
  nn::Embedding tokens_, source_positions_, target_positions_;
  std::vector<nn::EncoderLayer> encoder_;
  std::vector<nn::DecoderLayer> decoder_;
  nn::Linear output_;
};

struct GenerationRequest {
  std::vector<std::pair<std::string, std::string>> context;
  std::string query;
  std::set<std::string> codes;           // desired response features
  std::set<std::string> query_features;  // features of the query, if known

  // {"context": [[hate, counter] | {"hate":..,"counter":..}, ...], "query": str,
  //  "codes": [str], "query_features": [str]}
  static GenerationRequest from_json(const nlohmann::json& j) {
    GenerationRequest r;
    if (!j.contains("query") || !j.at("query").is_string()) throw SchemaError("generation request: missing 'query'");
    r.query = j.at("query").get<std::string>();
    for (const auto& c : j.value("context", nlohmann::json::array())) {
      if (c.is_array() && c.size() == 2) r.context.emplace_back(c[0].get<std::string>(), c[1].get<std::string>());
      else if (c.is_object()) r.context.emplace_back(c.at("hate").get<std::string>(), c.at("counter").get<std::string>());
      else throw SchemaError("generation request: context entries must be [hate, counter] pairs");
    }
    for (const auto& c : j.value("codes", nlohmann::json::array())) r.codes.insert(c.get<std::string>());
    for (const auto& c : j.value("query_features", nlohmann::json::array())) r.query_features.insert(c.get<std::string>());
    return r;
  }

  nlohmann::json to_json() const {
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& [h, c] : context) ctx.push_back({h, c});
    return {{"context", ctx}, {"query", query}, {"codes", codes}, {"query_features", query_features}};
  }
};

struct GenerationResult {
  std::string response;
  std::vector<int> tokens;          // generated ids without EOS
  std::vector<double> beam_scores;  // final beams, best first

  nlohmann::json to_json() const { return {{"response", response}, {"beam_scores", beam_scores}}; }
};

class Generator {
 public:
  Generator(nn::Vocabulary vocab, const Seq2SeqSpec& spec, GenerationConfig config, std::uint64_t seed)
      : vocab_(std::move(vocab)), config_(std::move(config)), seed_(seed) {
    config_.validate();
    for (Family f : config_.families)
      for (const auto& code : FeatureVocabulary::standard().codes(f)) vocab_.require(FeatureVocabulary::token(code));
    model_ = Seq2SeqModel(spec, vocab_.size(), config_.max_source_len, config_.max_target_len, seed);
  }

  GeneratorBatch batch(const AnnotatedExample& e) const { return build_training_batch(e, vocab_, config_); }

  // Summed cross-entropy over the batch targets.
  nn::Tensor target_loss(const GeneratorBatch& b) const {
    return nn::cross_entropy_sum(model_.decode(model_.encode(b.encoder_ids), b.decoder_input), b.targets);
  }

  static long target_count(const GeneratorBatch& b) {
    return std::count_if(b.targets.begin(), b.targets.end(), [](int t) { return t >= 0; });
  }

  // Token-weighted mean cross-entropy.
  double mean_loss(const std::vector<GeneratorBatch>& batches) const {
    if (batches.empty()) throw EmptyCorpusError("no batches to score");
    nn::NoGradGuard guard;
    double total = 0.0;
    long tokens = 0;
    for (const auto& b : batches) {
      total += target_loss(b).item();
      tokens += target_count(b);
    }
    return total / static_cast<double>(tokens);
  }

  nn::TrainingLog train(const std::vector<AnnotatedExample>& train, const std::vector<AnnotatedExample>& validation,
                        const nn::TrainingConfig& cfg, const std::function<void(int, double, double)>& on_epoch = {}) {
    std::vector<GeneratorBatch> train_batches, val_batches;
    for (const auto& e : train) train_batches.push_back(batch(e));
    for (const auto& e : validation) val_batches.push_back(batch(e));
    if (val_batches.empty()) throw ConfigError("generator training needs a validation set");
    log_ = nn::train_loop(
        model_.parameters(), train_batches.size(),
        [&](size_t i) {
          const auto& b = train_batches[i];
          return nn::scale(target_loss(b), 1.0f / static_cast<float>(target_count(b)));
        },
        [&] { return mean_loss(val_batches); }, cfg, on_epoch);
    training_config_ = cfg;
    return log_;
  }

  // Codes seeded into the decoder and the encoder for a request.
  CodePlacement placement_for(const GenerationRequest& r) const {
    const auto& fv = FeatureVocabulary::standard();
    for (const auto& c : r.codes)
      if (!config_.families.count(fv.require_family(c)))
        throw ConfigError("code '" + c + "' belongs to family " + family_name(fv.require_family(c)) +
                          " which this generator was not trained with");
    const auto query = fv.filter(r.query_features, config_.families);
    CodePlacement p = feature_delta(query, r.codes);
    if (config_.decoder_codes == DecoderCodeMode::kRaw) p.decoder_codes = r.codes;
    return p;
  }

  GenerationResult generate(const GenerationRequest& r) const { return generate(r, config_.beam_width); }

  GenerationResult generate(const GenerationRequest& r, int beam_width) const {
    if (beam_width < 1) throw ConfigError("beam width must be at least 1");
    nn::NoGradGuard guard;
    std::vector<int> prefix;
    const nn::Tensor memory = encode_request(r, &prefix);
    const int max_new = config_.max_target_len - static_cast<int>(prefix.size());
    struct Hyp {
      std::vector<int> tokens;
      double score = 0.0;
      bool done = false;
    };
    std::vector<Hyp> beams(1);
    for (int step = 0; step < max_new; ++step) {
      std::vector<Hyp> candidates;
      for (const auto& h : beams) {
        if (h.done) {
          candidates.push_back(h);
          continue;
        }
        const auto logp = next_log_probs(memory, prefix, h.tokens);
        std::vector<int> order;
        for (int id = 0; id < static_cast<int>(logp.size()); ++id)
          if (allowed(id)) order.push_back(id);
        const size_t k = std::min(order.size(), static_cast<size_t>(beam_width));
        std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                          [&](int a, int b) { return logp[a] != logp[b] ? logp[a] > logp[b] : a < b; });
        for (size_t i = 0; i < k; ++i) {
          Hyp next = h;
          next.score += logp[order[i]];
          if (order[i] == nn::Vocabulary::kEosId) next.done = true;
          else next.tokens.push_back(order[i]);
          candidates.push_back(std::move(next));
        }
      }
      std::stable_sort(candidates.begin(), candidates.end(),
                       [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
      if (candidates.size() > static_cast<size_t>(beam_width)) candidates.resize(static_cast<size_t>(beam_width));
      beams = std::move(candidates);
      if (std::all_of(beams.begin(), beams.end(), [](const Hyp& h) { return h.done; })) break;
    }
    GenerationResult result;
    result.tokens = beams.front().tokens;
    result.response = detokenize(result.tokens);
    for (const auto& h : beams) result.beam_scores.push_back(h.score);
    return result;
  }

  // Argmax decoding, kept separate from the beam search.
  std::vector<int> greedy(const GenerationRequest& r) const {
    nn::NoGradGuard guard;
    std::vector<int> prefix;
    const nn::Tensor memory = encode_request(r, &prefix);
    std::vector<int> out;
    while (static_cast<int>(prefix.size() + out.size()) < config_.max_target_len) {
      const auto logp = next_log_probs(memory, prefix, out);
      int best = -1;
      for (int id = 0; id < static_cast<int>(logp.size()); ++id)
        if (allowed(id) && (best < 0 || logp[id] > logp[best])) best = id;
      if (best == nn::Vocabulary::kEosId) break;
      out.push_back(best);
    }
    return out;
  }

  // Generated text with code and special tokens removed.
  std::string detokenize(const std::vector<int>& ids) const {
    std::vector<std::string> words;
    for (int id : ids)
      if (allowed(id) && id != nn::Vocabulary::kEosId) words.push_back(vocab_.token(id));
    return join(words, " ");
  }

  std::map<std::string, int> code_token_ids() const {
    std::map<std::string, int> out;
    for (Family f : config_.families)
      for (const auto& code : FeatureVocabulary::standard().codes(f))
        out[code] = vocab_.require(FeatureVocabulary::token(code));
    return out;
  }

  bool is_code_token(int id) const {
    const auto& t = vocab_.token(id);
    return t.size() > 2 && t.front() == '<' && t.back() == '>' &&
           FeatureVocabulary::standard().contains(t.substr(1, t.size() - 2));
  }

  void save(const fs::path& dir) const {
    nn::save_weights(dir / "weights.bin", model_.parameters());
    nn::write_json(dir / "vocab.json", vocab_.to_json());
    nn::write_json(dir / "codes.json", code_token_ids());
    nn::write_json(dir / "metadata.json", {{"model_type", "generator"},
                                           {"spec", model_.spec().str()},
                                           {"generation", config_.to_json()},
                                           {"seed", seed_},
                                           {"training_config", training_config_.to_json()},
                                           {"training_log", log_.to_json()}});
  }

  static Generator load(const fs::path& dir) {
    const auto meta = nn::read_json(dir / "metadata.json");
    if (meta.value("model_type", "") != "generator") throw ConfigError(dir.string() + ": not a generator checkpoint");
    Generator g(nn::Vocabulary::from_json(nn::read_json(dir / "vocab.json")), Seq2SeqSpec::parse(meta.at("spec")),
                GenerationConfig::from_json(meta.at("generation")), meta.at("seed").get<std::uint64_t>());
    const auto codes = nn::read_json(dir / "codes.json").get<std::map<std::string, int>>();
    if (codes != g.code_token_ids()) throw ConfigError(dir.string() + ": code map does not match the vocabulary");
    auto params = g.model_.parameters();
    nn::load_weights(dir / "weights.bin", params);
    g.training_config_ = nn::TrainingConfig::from_json(meta.at("training_config"));
    const auto& log = meta.at("training_log");
    g.log_.train_losses = log.at("train_losses").get<std::vector<double>>();
    g.log_.validation_losses = log.at("validation_losses").get<std::vector<double>>();
    g.log_.steps = log.at("steps");
    g.log_.stopped_early = log.at("stopped_early");
    g.log_.best_epoch = log.at("best_epoch");
    return g;
  }

  const nn::Vocabulary& vocabulary() const { return vocab_; }
  const GenerationConfig& config() const { return config_; }
  GenerationConfig& mutable_config() { return config_; }
  const nn::TrainingLog& log() const { return log_; }
  const Seq2SeqModel& model() const { return model_; }

 private:
  bool allowed(int id) const {
    if (id == nn::Vocabulary::kEosId) return true;
    if (id < 5) return false;
    const auto& t = vocab_.token(id);
    return t != kHateMarker && t != kCounterMarker && !is_code_token(id);
  }

  nn::Tensor encode_request(const GenerationRequest& r, std::vector<int>* prefix) const {
    const auto placement = placement_for(r);
    int used = 0;
    const auto enc = detail::encoder_input(detail::code_ids(placement.encoder_codes, vocab_), r.context, r.query,
                                           vocab_, config_, &used, nullptr);
    *prefix = detail::decoder_prefix(detail::code_ids(placement.decoder_codes, vocab_), config_.code_position);
    if (static_cast<int>(prefix->size()) >= config_.max_target_len)
      throw ConfigError("decoder codes exceed the target length");
    return model_.encode(enc);
  }

  std::vector<double> next_log_probs(const nn::Tensor& memory, const std::vector<int>& prefix,
                                     const std::vector<int>& generated) const {
    std::vector<int> ids = prefix;
    ids.insert(ids.end(), generated.begin(), generated.end());
    const nn::Tensor logits = model_.decode(memory, ids);
    const int v = logits.cols();
    const float* row = logits.values().data() + static_cast<size_t>(logits.rows() - 1) * v;
    const double mx = *std::max_element(row, row + v);
    double sum = 0.0;
    for (int j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(static_cast<size_t>(v));
    for (int j = 0; j < v; ++j) out[j] = row[j] - lse;
    return out;
  }

  nn::Vocabulary vocab_;
  GenerationConfig config_;
  std::uint64_t seed_ = 0;
  Seq2SeqModel model_;
  nn::TrainingConfig training_config_;
  nn::TrainingLog log_;
};

}  // namespace cspeech
