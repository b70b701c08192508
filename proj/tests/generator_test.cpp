#include <gtest/gtest.h>

#include "cspeech/generator.hpp"
#include "toy_generation.hpp"

namespace cspeech {
namespace {

const std::set<Family> kEvery(kAllFamilies.begin(), kAllFamilies.end());

TEST(FeatureDelta, Examples) {
  EXPECT_EQ(feature_delta({"openness", "facts"}, {"facts", "rule_or_principle"}),
            (CodePlacement{{"openness"}, {"rule_or_principle"}}));
  EXPECT_EQ(feature_delta({}, {}), CodePlacement{});
  EXPECT_EQ(feature_delta({"facts"}, {"facts"}), CodePlacement{});
  EXPECT_THROW(feature_delta({"facts"}, {"humor"}), SchemaError);
}

TEST(FeatureDelta, PartitionsTheUnionAgainstBruteForce) {
  const auto all = FeatureVocabulary::standard().all_codes();
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::set<std::string> q, r;
    for (const auto& c : all) {
      if (uniform01(rng) < 0.3) q.insert(c);
      if (uniform01(rng) < 0.3) r.insert(c);
    }
    const auto p = feature_delta(q, r);
    for (const auto& c : all) {
      const bool in_q = q.count(c), in_r = r.count(c);
      EXPECT_EQ(p.encoder_codes.count(c) == 1, in_q && !in_r);
      EXPECT_EQ(p.decoder_codes.count(c) == 1, in_r && !in_q);
    }
  }
}

struct Fixture {
  std::vector<AnnotatedExample> examples = toy::four_family_examples(20, 3);
  nn::Vocabulary vocab = build_generator_vocabulary(examples, kEvery);
};

std::vector<int> ids(const nn::Vocabulary& v, const std::vector<std::string>& tokens) {
  std::vector<int> out;
  for (const auto& t : tokens) out.push_back(v.require(t));
  return out;
}

TEST(TrainingBatch, QueryAloneWithoutContextOrCodes) {
  Fixture f;
  GenerationExample g;
  g.query = "they sing";
  g.response = "we sing";
  f.vocab.add("sing");
  f.vocab.add("we");
  GenerationConfig cfg;
  const auto b = build_training_batch(g, {}, kEvery, f.vocab, cfg);
  EXPECT_EQ(b.encoder_ids, f.vocab.encode("they sing"));
  const auto baseline = build_training_batch(g, {}, {}, f.vocab, cfg);
  EXPECT_EQ(b.encoder_ids, baseline.encoder_ids);
  EXPECT_EQ(b.decoder_input, (std::vector<int>{nn::Vocabulary::kBosId, f.vocab.id("we"), f.vocab.id("sing")}));
  EXPECT_EQ(b.targets, (std::vector<int>{f.vocab.id("we"), f.vocab.id("sing"), nn::Vocabulary::kEosId}));
}

TEST(TrainingBatch, CodesCanonicalOrderAndIgnoredTargets) {
  Fixture f;
  GenerationExample g;
  g.query = "they";
  g.response = "they";
  const CodePlacement p{{"facts", "openness"}, {"question", "achievement", "goal_means"}};
  GenerationConfig cfg;
  const auto b = build_training_batch(g, p, kEvery, f.vocab, cfg);
  EXPECT_EQ(b.encoder_ids, ids(f.vocab, {"<openness>", "<facts>", "they"}));
  EXPECT_EQ(b.decoder_input, ids(f.vocab, {"<achievement>", "<goal_means>", "<question>", "<s>", "they"}));
  EXPECT_EQ(b.targets, (std::vector<int>{-1, -1, -1, f.vocab.id("they"), nn::Vocabulary::kEosId}));
  cfg.code_position = CodePosition::kAfterBos;
  const auto after = build_training_batch(g, p, kEvery, f.vocab, cfg);
  EXPECT_EQ(after.decoder_input, ids(f.vocab, {"<s>", "<achievement>", "<goal_means>", "<question>", "they"}));
  EXPECT_EQ(after.targets, b.targets);
}

TEST(TrainingBatch, FamilyFilterDropsCodesBeforePlacement) {
  Fixture f;
  AnnotatedExample e;
  e.example.query = "they";
  e.example.response = "they";
  e.query_features = {"openness", "facts", "achievement"};
  e.response_features = {"goal_means", "question", "agreeableness"};
  GenerationConfig cfg;
  cfg.families = {Family::kScheme, Family::kBig5};
  const auto b = build_training_batch(e, f.vocab, cfg);
  EXPECT_EQ(b.encoder_ids, ids(f.vocab, {"<openness>", "they"}));
  EXPECT_EQ(b.decoder_input, ids(f.vocab, {"<agreeableness>", "<goal_means>", "<s>", "they"}));
}

TEST(TrainingBatch, MissingCodeTokenIsConfigError) {
  Fixture f;
  const auto baseline_vocab = build_generator_vocabulary(f.examples, {});
  GenerationConfig cfg;
  cfg.families = {Family::kBig5};
  EXPECT_THROW(build_training_batch(f.examples[0], baseline_vocab, cfg), ConfigError);
  EXPECT_THROW(Generator(baseline_vocab, {}, cfg, 1), ConfigError);
}

TEST(TrainingBatch, LengthAccountingWithoutTruncation) {
  Fixture f;
  GenerationConfig cfg;
  cfg.families = kEvery;
  for (const auto& e : f.examples) {
    const auto b = build_training_batch(e, f.vocab, cfg);
    const auto p = feature_delta(e.query_features, e.response_features);
    size_t expected = p.encoder_codes.size() + tokenize(e.example.query).size();
    for (const auto& [h, c] : e.example.context) expected += 2 + tokenize(h).size() + tokenize(c).size();
    if (!e.example.context.empty()) expected += 1;
    EXPECT_EQ(b.encoder_ids.size(), expected);
    EXPECT_EQ(b.decoder_input.size(), b.targets.size());
    EXPECT_TRUE(b.warnings.empty());
  }
}

TEST(TrainingBatch, TruncationDropsOldestTurnsAndKeepsQuery) {
  nn::Vocabulary vocab;
  vocab.add(kHateMarker);
  vocab.add(kCounterMarker);
  for (const char* w : {"a", "b", "c", "d", "q"}) vocab.add(w);
  GenerationExample g;
  g.context = {{"a a", "a"}, {"b b", "b"}, {"c", "c c"}};
  g.query = "q q";
  g.response = "d";
  GenerationConfig cfg;
  cfg.max_source_len = 2 + 1 + 5 + 5;  // query, separator, two turns
  auto b = build_training_batch(g, {}, {}, vocab, cfg);
  EXPECT_EQ(b.context_turns_used, 2);
  EXPECT_EQ(b.encoder_ids, ids(vocab, {"<hate>", "b", "b", "<counter>", "b", "<hate>", "c", "<counter>", "c", "c",
                                       "<sep>", "q", "q"}));
  cfg.context_turns = 1;
  b = build_training_batch(g, {}, {}, vocab, cfg);
  EXPECT_EQ(b.context_turns_used, 1);
  cfg.max_source_len = 1;
  b = build_training_batch(g, {}, {}, vocab, cfg);
  EXPECT_EQ(b.encoder_ids, ids(vocab, {"q"}));
  ASSERT_EQ(b.warnings.size(), 1u);
}

// Trained once and shared by the generation tests below.
struct TemplateModels {
  std::vector<toy::TemplateExample> train = toy::template_examples(300, 1);
  std::vector<toy::TemplateExample> val = toy::template_examples(60, 2);
  std::vector<toy::TemplateExample> test = toy::template_examples(100, 3);
  std::optional<Generator> coded, baseline;
  nn::TrainingLog coded_log;

  static nn::TrainingConfig training() {
    nn::TrainingConfig c;
    c.learning_rate = 3e-3;
    c.batch_size = 8;
    c.max_epochs = 8;
    c.patience = 8;
    c.seed = 5;
    return c;
  }

  static GenerationConfig generation(std::set<Family> families) {
    GenerationConfig g;
    g.families = std::move(families);
    g.max_source_len = 16;
    g.max_target_len = 16;
    return g;
  }

  TemplateModels() {
    const auto tr = toy::examples_of(train), va = toy::examples_of(val);
    const auto spec = Seq2SeqSpec::parse("dim=32,layers=2,heads=4,hidden=64");
    coded.emplace(build_generator_vocabulary(tr, {Family::kArgType}), spec, generation({Family::kArgType}), 9);
    coded_log = coded->train(tr, va, training());
    baseline.emplace(build_generator_vocabulary(tr, {}), spec, generation({}), 9);
    baseline->train(tr, va, training());
  }

  static TemplateModels& get() {
    static TemplateModels m;
    return m;
  }
};

GenerationRequest request_for(const toy::TemplateExample& t, bool with_code) {
  GenerationRequest r;
  r.query = t.example.example.query;
  if (with_code) r.codes = t.example.response_features;
  return r;
}

TEST(ToyGeneration, CodesSelectTemplates) {
  auto& m = TemplateModels::get();
  int coded = 0, uncoded = 0;
  for (const auto& t : m.test) {
    coded += toy::matches_template(m.coded->generate(request_for(t, true)).response, t.template_index);
    uncoded += toy::matches_template(m.baseline->generate(request_for(t, false)).response, t.template_index);
  }
  EXPECT_GE(coded, 90);
  EXPECT_LE(uncoded, 30);
}

TEST(ToyGeneration, ValidationLossFallsOverFirstEpochsAndCodesLowerPerplexity) {
  auto& m = TemplateModels::get();
  const auto& v = m.coded_log.validation_losses;
  ASSERT_GE(v.size(), 3u);
  EXPECT_LT(v[1], v[0]);
  EXPECT_LT(v[2], v[1]);
  std::vector<GeneratorBatch> coded_batches, baseline_batches;
  for (const auto& t : m.val) {
    coded_batches.push_back(m.coded->batch(t.example));
    baseline_batches.push_back(m.baseline->batch(t.example));
  }
  EXPECT_LE(std::exp(m.coded->mean_loss(coded_batches)), std::exp(m.baseline->mean_loss(baseline_batches)));
}

TEST(ToyGeneration, BeamWidthOneIsGreedy) {
  auto& m = TemplateModels::get();
  for (size_t i = 0; i < 20; ++i) {
    for (bool with_code : {true, false}) {
      const auto r = request_for(m.test[i], with_code);
      EXPECT_EQ(m.coded->generate(r, 1).tokens, m.coded->greedy(r));
    }
  }
}

TEST(ToyGeneration, DeterministicAndFreeOfCodeTokens) {
  auto& m = TemplateModels::get();
  for (size_t i = 0; i < 20; ++i) {
    const auto r = request_for(m.test[i], true);
    const auto a = m.coded->generate(r), b = m.coded->generate(r);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.beam_scores, b.beam_scores);
    EXPECT_FALSE(a.beam_scores.empty());
    for (int id : a.tokens) EXPECT_FALSE(m.coded->is_code_token(id));
    EXPECT_EQ(a.response.find('<'), std::string::npos);
  }
}

TEST(ToyGeneration, CodeChecksAtInference) {
  auto& m = TemplateModels::get();
  GenerationRequest r;
  r.query = "they sing";
  EXPECT_NO_THROW(m.baseline->generate(r));
  r.codes = {"openness"};
  EXPECT_THROW(m.coded->generate(r), ConfigError);
  EXPECT_THROW(m.baseline->generate(r), ConfigError);
  r.codes = {"humor"};
  EXPECT_THROW(m.coded->generate(r), SchemaError);
  // A desired code already present in the query cancels under delta mode.
  r.codes = {"facts"};
  r.query_features = {"facts"};
  EXPECT_TRUE(m.coded->placement_for(r).decoder_codes.empty());
  Generator raw = *m.coded;
  raw.mutable_config().decoder_codes = DecoderCodeMode::kRaw;
  EXPECT_EQ(raw.placement_for(r).decoder_codes, std::set<std::string>{"facts"});
}

TEST(ToyGeneration, CheckpointReproducesValidationLoss) {
  auto& m = TemplateModels::get();
  const auto dir = std::filesystem::temp_directory_path() / "cspeech_generator_ckpt";
  std::filesystem::remove_all(dir);
  m.coded->save(dir);
  const auto codes = nn::read_json(dir / "codes.json").get<std::map<std::string, int>>();
  EXPECT_EQ(codes.size(), 5u);
  const auto loaded = Generator::load(dir);
  std::vector<GeneratorBatch> batches;
  for (const auto& t : m.val) batches.push_back(loaded.batch(t.example));
  const auto& log = loaded.log();
  EXPECT_NEAR(loaded.mean_loss(batches), log.validation_losses[static_cast<size_t>(log.best_epoch)], 1e-5);
  EXPECT_EQ(loaded.generate(request_for(m.test[0], true)).tokens, m.coded->generate(request_for(m.test[0], true)).tokens);
}

TEST(GenerationRequest, JsonShapes) {
  const auto r = GenerationRequest::from_json(nlohmann::json::parse(
      R"({"context": [["h1", "c1"], {"hate": "h2", "counter": "c2"}], "query": "q", "codes": ["facts"]})"));
  ASSERT_EQ(r.context.size(), 2u);
  EXPECT_EQ(r.context[1].second, "c2");
  EXPECT_EQ(r.codes, std::set<std::string>{"facts"});
  EXPECT_THROW(GenerationRequest::from_json(nlohmann::json::parse(R"({"codes": []})")), SchemaError);
  const auto back = GenerationRequest::from_json(r.to_json());
  EXPECT_EQ(back.context, r.context);
  EXPECT_EQ((GenerationResult{"a b", {}, {-0.5}}).to_json().dump(), R"({"beam_scores":[-0.5],"response":"a b"})");
}

}  // namespace
}  // namespace cspeech
