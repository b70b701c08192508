// Acceptance checks. Prints one line per criterion and exits non-zero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>

#include "cspeech/argtype/detector.hpp"
#include "cspeech/eval/classification.hpp"
#include "cspeech/eval/grid.hpp"
#include "cspeech/eval/metrics.hpp"
#include "cspeech/values/detector.hpp"
#include "metric_fixture.hpp"
#include "oracles.hpp"
#include "toy.hpp"
#include "toy_generation.hpp"

using namespace cspeech;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kLossTol = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr double kMetricTol = 1e-4;
constexpr double kUniformPplTol = 0.02;
constexpr double kTemplateCoded = 0.90;
constexpr double kTemplateBaseline = 0.30;
constexpr double kDetectorF1 = 0.9;
constexpr long kDetectorSteps = 300;

// Collects failed conditions for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: got %.10g want %.10g (tol %g)", what.c_str(), got, want, tol);
      failures.push_back(buf);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

// ---- 1. losses ----

void loss_suite(Check& c) {
  using namespace values;
  using Vec = std::vector<double>;
  const Vec v = {0.6, 0.8};
  c.near(quadruple_loss(v, v, v, v), 1.0, kLossTol, "quadruple identical");
  c.near(quadruple_loss(Vec{1, 0}, Vec{1, 0}, Vec{0, 1}, Vec{0, 1}), -1.0, kLossTol, "quadruple case 2");
  c.near(quadruple_loss(Vec{1, 0}, Vec{0, 1}, Vec{1, 0}, Vec{1, 0}), 2.0, kLossTol, "quadruple case 3");

  std::mt19937_64 rng(101);
  double worst = 0;
  for (int point = 0; point < 10; ++point) {
    std::array<Vec, 4> x;
    for (auto& e : x) {
      e.resize(6);
      for (auto& xi : e) xi = nn::uniform(rng, -1, 1);
    }
    const auto grads = quadruple_loss_gradient(x[0], x[1], x[2], x[3]);
    for (int which = 0; which < 4; ++which)
      for (size_t i = 0; i < x[which].size(); ++i) {
        auto plus = x, minus = x;
        const double h = 1e-6;
        plus[which][i] += h;
        minus[which][i] -= h;
        const double numeric = (quadruple_loss(plus[0], plus[1], plus[2], plus[3]) -
                                quadruple_loss(minus[0], minus[1], minus[2], minus[3])) /
                               (2 * h);
        worst = std::max(worst, std::abs(grads[which][i] - numeric) / std::max(std::abs(numeric), 1e-3));
      }
  }
  c.expect(worst <= kGradRelTol, "gradient check worst relative error " + std::to_string(worst));
  char buf[64];
  std::snprintf(buf, sizeof buf, "grad rel err %.2e", worst);
  c.note(buf);

  const Matrix z1(3, Vec(4, 0.0)), z2(3, Vec(5, 0.0)), z3(3, Vec(2, 0.0));
  const Matrix y1 = {{1, 0, 1, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  const Matrix y2 = {{1, 0, 0, 0, 1}, {0, 1, 0, 0, 0}, {0, 0, 0, 0, 0}};
  const Matrix y3 = {{1, 0}, {0, 1}, {1, 1}};
  c.near(multitask_loss(z1, z2, z3, y1, y2, y3), std::log(2.0), kLossTol, "multitask ln 2");

  auto random_matrix = [&](size_t rows, size_t cols, bool binary) {
    Matrix m(rows, Vec(cols));
    for (auto& r : m)
      for (auto& e : r) e = binary ? static_cast<double>(nn::uniform_index(rng, 2)) : nn::uniform(rng, -3, 3);
    return m;
  };
  const auto x1 = random_matrix(4, 3, false), x2 = random_matrix(4, 5, false), x3 = random_matrix(4, 2, false);
  const auto t1 = random_matrix(4, 3, true), t2 = random_matrix(4, 5, true), t3 = random_matrix(4, 2, true);
  const double b1 = mean_bce(x1, t1), b2 = mean_bce(x2, t2), b3 = mean_bce(x3, t3);
  c.near(multitask_loss(x1, x2, x3, t1, t2, t3), 0.23 * b1 + 0.33 * b2 + 0.44 * b3, kLossTol, "multitask default weights");
  const MultiTaskWeights w{0.5, 0.25, 0.25};
  c.near(multitask_loss(x1, x2, x3, t1, t2, t3, w), 0.5 * b1 + 0.25 * b2 + 0.25 * b3, kLossTol,
         "multitask custom weights");
}

// ---- 2. set logic ----

values::ValuePrediction six_class(const std::vector<int>& decisions) {
  values::ValuePrediction p;
  p.labels = top_value_categories();
  for (int d : decisions) {
    p.decisions.push_back(d);
    p.probabilities.push_back(d ? 0.8 : 0.2);
  }
  return p;
}

void set_logic(Check& c) {
  const auto all = FeatureVocabulary::standard().all_codes();
  Rng rng(202);
  for (int trial = 0; trial < 2000; ++trial) {
    std::set<std::string> q, r;
    for (const auto& code : all) {
      if (uniform01(rng) < 0.3) q.insert(code);
      if (uniform01(rng) < 0.3) r.insert(code);
    }
    const auto p = feature_delta(q, r);
    for (const auto& code : all) {
      const bool in_q = q.count(code), in_r = r.count(code);
      c.expect((p.encoder_codes.count(code) == 1) == (in_q && !in_r), "delta encoder side " + code);
      c.expect((p.decoder_codes.count(code) == 1) == (in_r && !in_q), "delta decoder side " + code);
    }
  }

  // 2^3 value vote table per class.
  for (int pattern = 0; pattern < 8; ++pattern)
    for (int cls = 0; cls < 6; ++cls) {
      std::vector<values::ValuePrediction> members;
      int count = 0;
      for (int m = 0; m < 3; ++m) {
        std::vector<int> d(6, 0);
        d[cls] = (pattern >> m) & 1;
        count += d[cls];
        members.push_back(six_class(d));
      }
      c.expect(values::majority_vote(members, 2).decisions[cls] == (count >= 2 ? 1 : 0),
               "value vote pattern " + std::to_string(pattern));
    }

  // 2^4 argtype vote table, ties broken by mean probability > 0.5.
  for (int pattern = 0; pattern < 16; ++pattern)
    for (double prob : {0.2, 0.5, 0.7}) {
      std::vector<argtype::ArgTypeLabel> members;
      int count = 0;
      for (int m = 0; m < 4; ++m) {
        argtype::ArgTypeLabel l;
        l.decisions[0] = (pattern >> m) & 1;
        l.probabilities[0] = prob;
        count += l.decisions[0];
        members.push_back(l);
      }
      const int expected = count >= 3 ? 1 : (count == 2 ? (prob > 0.5 ? 1 : 0) : 0);
      c.expect(argtype::majority_vote(members).decisions[0] == expected, "argtype vote pattern " + std::to_string(pattern));
    }

  const std::map<std::string, std::string> table = {
      {"From Consequence", "from_consequence"},
      {"From Source Authority", "from_source_authority_knowledge"},
      {"From Source Knowledge", "from_source_authority_knowledge"},
      {"Goal from Means", "goal_means"},
      {"Means for Goal", "goal_means"},
      {"Rule or Principle", "rule_or_principle"}};
  for (const auto& [raw, code] : table) c.expect(merge_scheme_labels(raw) == code, "scheme merge " + raw);
  // Random label sets map to the union of their images.
  for (int trial = 0; trial < 200; ++trial) {
    std::set<std::string> raw, expected;
    for (const auto& [name, code] : table)
      if (uniform01(rng) < 0.4) {
        raw.insert(name);
        expected.insert(code);
      }
    std::set<std::string> got;
    for (const auto& name : raw) got.insert(merge_scheme_labels(name));
    c.expect(got == expected, "scheme merge set");
  }
}

// ---- 3. masking ----

void masking(Check& c) {
  using namespace argtype;
  const auto corpus = oracle::synthetic_keyword_corpus(200, 303);
  const LexiconTagger tagger;
  const auto got = curate_topic_keywords(corpus, tagger);
  auto expected = oracle::keywords(corpus, tagger, 5);
  for (auto it = expected.begin(); it != expected.end();) it = it->second.empty() ? expected.erase(it) : std::next(it);
  c.expect(got.keywords == expected, "curated keywords differ from the counting oracle");
  c.expect(got.size() > 0, "no keywords curated");
  for (const auto& d : corpus.dialogues) {
    const auto& text = d.turns[0].hate_text;
    c.expect(mask_text(text, got, d.topic) == oracle::mask(text, got.of(d.topic)), "mask mismatch: " + text);
  }
  TopicKeywordSet k = got;
  k.keywords[Topic::kJews].insert({"mask", "ask"});
  Rng rng(304);
  int broken = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = oracle::random_mask_input(rng);
    const auto once = mask_text(s, k);
    broken += mask_text(once, k) != once;
  }
  c.expect(broken == 0, std::to_string(broken) + " of 1000 strings not idempotent");
  c.note(std::to_string(got.size()) + " keywords");
}

// ---- 4. metrics ----

Generator flat_generator(int words) {
  nn::Vocabulary vocab;
  vocab.add(kHateMarker);
  vocab.add(kCounterMarker);
  for (int i = 0; i < words; ++i) vocab.add("w" + std::to_string(i));
  GenerationConfig cfg;
  cfg.max_source_len = 16;
  cfg.max_target_len = 16;
  Generator g(vocab, Seq2SeqSpec::parse("dim=16,layers=1,heads=2,hidden=16"), cfg, 3);
  for (auto& [name, t] : g.model().parameters())
    if (name.rfind("output.", 0) == 0) {
      auto& v = const_cast<nn::Tensor&>(t).values();
      std::fill(v.begin(), v.end(), 0.0f);
    }
  return g;
}

void metrics(Check& c) {
  using namespace eval;
  const std::vector<std::string> refs = {"the cat sat on the mat", "a quick brown fox jumps"};
  c.expect(corpus_bleu(refs, refs) == 100.0, "BLEU identity is not 100");
  c.expect(corpus_bleu({"x y z w", "u v"}, refs) == 0.0, "BLEU disjoint is not 0");
  c.expect(rouge_l(refs[0], refs[0]) == 1.0, "Rouge-L identity is not 1");
  c.expect(rouge_l("x y z", refs[0]) == 0.0, "Rouge-L disjoint is not 0");

  std::vector<std::string> hyp, ref;
  for (const auto& [h, r] : fixture::metric_pairs()) {
    hyp.push_back(h);
    ref.push_back(r);
  }
  c.near(corpus_bleu(hyp, ref), fixture::kBleu, kMetricTol, "BLEU fixture");
  c.near(mean_rouge_l(hyp, ref), fixture::kMeanRougeL, kMetricTol, "Rouge-L fixture");
  for (size_t i = 0; i < hyp.size(); ++i)
    c.near(rouge_l(hyp[i], ref[i]), fixture::rouge_l_per_pair()[i], kMetricTol, "Rouge-L pair " + std::to_string(i));

  const int words = 93;
  const auto g = flat_generator(words);
  Rng rng(404);
  std::vector<GeneratorBatch> batches;
  for (int i = 0; i < 200; ++i) {
    GenerationExample e;
    e.query = "w" + std::to_string(uniform_index(rng, words));
    for (int k = 0; k < 6; ++k) e.response += " w" + std::to_string(uniform_index(rng, words));
    batches.push_back(build_training_batch(e, {}, {}, g.vocabulary(), g.config()));
  }
  const double v = g.vocabulary().size(), ppl = perplexity(g, batches);
  c.near(ppl / v, 1.0, kUniformPplTol, "uniform PPL / V");
  char buf[64];
  std::snprintf(buf, sizeof buf, "uniform PPL %.2f, V %d", ppl, static_cast<int>(v));
  c.note(buf);
}

// ---- 5. data preparation ----

void quadruple_invariants(Check& c, const ValueTaxonomy& tax, const QuadrupleSet& set) {
  for (const auto* part : {&set.train, &set.validation})
    for (const auto& q : *part) {
      c.expect(q.anchor != q.positive, "anchor equals positive");
      c.expect(tax.l1_of_descriptor(q.anchor) == tax.l1_of_descriptor(q.positive), "positive L1");
      c.expect(tax.l2_of_descriptor(q.anchor) != tax.l2_of_descriptor(q.easy_negative), "easy negative L2");
      if (!q.hard_is_fallback) {
        c.expect(tax.l2_of_descriptor(q.anchor) == tax.l2_of_descriptor(q.hard_negative), "hard negative L2");
        c.expect(tax.l1_of_descriptor(q.anchor) != tax.l1_of_descriptor(q.hard_negative), "hard negative L1");
      }
    }
}

void pair_invariants(Check& c, const ValueTaxonomy& tax, const std::vector<LabeledArgument>& args,
                     const std::vector<EntailmentPair>& ent, const std::vector<SimilarityPair>& sim) {
  std::map<std::string, const LabeledArgument*> by_text;
  for (const auto& a : args) by_text[a.text] = &a;
  std::map<std::string, std::pair<int, int>> ent_counts, sim_counts;
  for (const auto& p : ent) {
    const auto gold = gold_l2_ids(*by_text.at(p.argument), tax);
    c.expect((gold.count(tax.l2_of_descriptor(p.descriptor)) > 0) == (p.label == 1), "entailment label");
    (p.label ? ent_counts[p.argument].first : ent_counts[p.argument].second)++;
  }
  for (const auto& p : sim) {
    const auto gold = gold_l2_ids(*by_text.at(p.argument), tax);
    c.expect((gold.count(tax.l2_of_descriptor(p.descriptor)) > 0) == (p.label == 1), "similarity label");
    (p.label ? sim_counts[p.argument].first : sim_counts[p.argument].second)++;
  }
  for (const auto& a : args) {
    int positives = 0;
    for (int l2 : gold_l2_ids(a, tax)) positives += static_cast<int>(tax.descriptors_of_l2(l2).size());
    c.expect(ent_counts[a.text].first == positives, "entailment positives cover gold descriptors");
    const auto [pos, neg] = sim_counts[a.text];
    if (pos > 0) c.expect(neg <= pos, "similarity negatives exceed positives");
  }
}

void data_prep(Check& c) {
  const auto tax = toy::taxonomy();
  const auto quads = sample_quadruples(tax, {.total = 100, .seed = 505});
  c.expect(quads.size() == 100, "toy quadruple total");
  c.expect(quads.train.size() == 90, "toy quadruple 90% split");
  quadruple_invariants(c, tax, quads);
  const auto again = sample_quadruples(tax, {.total = 100, .seed = 505});
  c.expect(again.train == quads.train && again.validation == quads.validation, "quadruples not deterministic");
  const auto args = toy::arguments_only(toy::value_arguments(tax, 80, 506));
  pair_invariants(c, tax, args, build_entailment_pairs(args, tax, {.seed = 507}),
                  build_similarity_pairs(args, tax, {.seed = 507}));

  const auto official = ValueTaxonomy::from_json(toy::official_shape_taxonomy_json(), ValueTaxonomy::LoadOptions(true));
  const auto full = sample_quadruples(official, {.seed = 508});
  c.expect(full.size() == 702 && full.train.size() == 632, "702 quadruples with 90% training on the full hierarchy");
  quadruple_invariants(c, official, full);

  const char* dir = std::getenv("CSPEECH_SEMEVAL_DIR");
  if (!dir) {
    c.note("SemEval pair counts SKIP (set CSPEECH_SEMEVAL_DIR)");
    return;
  }
  // Expects taxonomy.json, train.jsonl (validation-zhihu merged) and validation.jsonl.
  const fs::path root(dir);
  const auto semeval = ValueTaxonomy::load(root / "taxonomy.json", ValueTaxonomy::LoadOptions(true));
  const auto train = load_labeled_arguments(root / "train.jsonl");
  const auto val = load_labeled_arguments(root / "validation.jsonl");
  const PairOptions opt{.seed = 509};
  const auto et = build_entailment_pairs(train, semeval, opt).size(), ev = build_entailment_pairs(val, semeval, opt).size();
  const auto st = build_similarity_pairs(train, semeval, opt).size(), sv = build_similarity_pairs(val, semeval, opt).size();
  c.expect(et == 189312 && ev == 65900, "entailment pairs " + std::to_string(et) + "/" + std::to_string(ev));
  c.expect(st == 200059 && sv == 69607, "similarity pairs " + std::to_string(st) + "/" + std::to_string(sv));
  c.expect(sample_quadruples(semeval, {.seed = 508}).size() == 702, "SemEval quadruples");
  c.note("SemEval counts " + std::to_string(et) + "/" + std::to_string(ev) + " " + std::to_string(st) + "/" +
         std::to_string(sv));
}

// ---- 6. toy generation ----

void toy_generation(Check& c) {
  const auto train = toy::template_examples(300, 1), val = toy::template_examples(60, 2),
             test = toy::template_examples(100, 3);
  const auto tr = toy::examples_of(train), va = toy::examples_of(val);
  nn::TrainingConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 8;
  cfg.patience = 8;
  cfg.seed = 5;
  auto generation = [](std::set<Family> families) {
    GenerationConfig g;
    g.families = std::move(families);
    g.max_source_len = 16;
    g.max_target_len = 16;
    return g;
  };
  const auto spec = Seq2SeqSpec::parse("dim=32,layers=2,heads=4,hidden=64");
  Generator coded(build_generator_vocabulary(tr, {Family::kArgType}), spec, generation({Family::kArgType}), 9);
  coded.train(tr, va, cfg);
  Generator baseline(build_generator_vocabulary(tr, {}), spec, generation({}), 9);
  baseline.train(tr, va, cfg);

  int with_codes = 0, without = 0;
  for (const auto& t : test) {
    GenerationRequest r;
    r.query = t.example.example.query;
    without += toy::matches_template(baseline.generate(r).response, t.template_index);
    r.codes = t.example.response_features;
    with_codes += toy::matches_template(coded.generate(r).response, t.template_index);
  }
  const double acc_coded = with_codes / static_cast<double>(test.size());
  const double acc_base = without / static_cast<double>(test.size());
  c.expect(acc_coded >= kTemplateCoded, "template accuracy with codes " + std::to_string(acc_coded));
  c.expect(acc_base <= kTemplateBaseline, "template accuracy without codes " + std::to_string(acc_base));

  std::vector<GeneratorBatch> cb, bb;
  for (const auto& e : va) {
    cb.push_back(coded.batch(e));
    bb.push_back(baseline.batch(e));
  }
  const double ppl_coded = eval::perplexity(coded, cb), ppl_base = eval::perplexity(baseline, bb);
  c.expect(ppl_coded <= ppl_base, "coded validation PPL above baseline");
  char buf[128];
  std::snprintf(buf, sizeof buf, "acc %.2f/%.2f, val PPL %.3f vs %.3f", acc_coded, acc_base, ppl_coded, ppl_base);
  c.note(buf);
}

// ---- 7. detectors ----

nn::TrainingConfig step_config(std::uint64_t seed) {
  nn::TrainingConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 1000;
  cfg.patience = 1000;
  cfg.max_steps = kDetectorSteps;
  cfg.seed = seed;
  return cfg;
}

void detectors(Check& c) {
  const auto spec = nn::EncoderSpec::parse("post-norm:dim=32,layers=1,heads=4,hidden=64,max_len=32");
  {
    using namespace argtype;
    const auto train = toy::argtype_pairs(240, 701), val = toy::argtype_pairs(40, 702), test = toy::argtype_pairs(80, 703);
    std::vector<std::string> texts;
    for (const auto& p : train) {
      texts.push_back(p.hate);
      texts.push_back(p.counter);
    }
    ArgTypeModel m({false, spec}, build_argtype_vocabulary(texts), {}, 704);
    m.train(train, val, step_config(705));
    std::vector<std::vector<int>> gold, pred;
    for (const auto& p : test) {
      const auto out = m.predict(p.hate, p.counter, p.topic);
      gold.emplace_back(p.labels.begin(), p.labels.end());
      pred.emplace_back(out.decisions.begin(), out.decisions.end());
    }
    const double f1 = eval::macro_f1(gold, pred);
    c.expect(f1 >= kDetectorF1, "argtype macro-F1 " + std::to_string(f1));
    c.note("argtype F1 " + std::to_string(f1).substr(0, 5));
  }
  {
    using namespace values;
    auto tax = std::make_shared<const ValueTaxonomy>(toy::taxonomy());
    const auto train = toy::value_arguments(*tax, 200, 711), val = toy::value_arguments(*tax, 40, 712),
               test = toy::value_arguments(*tax, 60, 713);
    std::vector<std::string> texts;
    for (const auto& t : train) texts.push_back(t.argument.text);
    MultiLevelClassifier cls(tax, build_value_vocabulary(*tax, texts), spec, 714);
    cls.train(toy::arguments_only(train), toy::arguments_only(val), step_config(715));
    std::vector<std::vector<int>> gold, pred;
    for (const auto& t : test) {
      std::vector<int> row;
      for (int l2 : tax->target_l2()) row.push_back(tax->l2_name(l2) == t.argument.l2_labels[0] ? 1 : 0);
      gold.push_back(row);
      pred.push_back(cls.predict(t.argument.text).decisions);
    }
    const double f1 = eval::macro_f1(gold, pred);
    c.expect(f1 >= kDetectorF1, "value macro-F1 " + std::to_string(f1));
    c.note("value F1 " + std::to_string(f1).substr(0, 5));
  }
}

// ---- 8. grid ----

void grid(Check& c) {
  using namespace eval;
  const auto train = toy::four_family_examples(150, 1), val = toy::four_family_examples(20, 2),
             test = toy::four_family_examples(25, 3);
  GridOptions o;
  o.spec = Seq2SeqSpec::parse("dim=32,layers=1,heads=4,hidden=64");
  o.generation.max_source_len = 96;
  o.generation.max_target_len = 16;
  o.generation.beam_width = 2;
  o.training.learning_rate = 3e-3;
  o.training.max_epochs = 6;
  o.training.patience = 6;
  o.training.seed = 4;
  o.seed = 8;
  o.workers = 2;
  const fs::path dir = fs::temp_directory_path() / "cspeech_acceptance_grid";
  fs::remove_all(dir);
  o.output_dir = dir;
  const auto full = run_feature_grid(train, val, test, o);
  c.expect(full.reports.size() == 16, "grid emitted " + std::to_string(full.reports.size()) + " rows");
  std::set<std::uint64_t> seeds;
  std::set<std::string> training;
  for (const auto& r : full.reports) {
    c.expect(!r.failed(), "row " + std::to_string(r.id) + " failed");
    c.expect(r.samples == test.size(), "row " + std::to_string(r.id) + " evaluated a different test set");
    char name[32];
    std::snprintf(name, sizeof name, "row_%02d", r.id);
    const auto meta = nn::read_json(dir / name / "checkpoint" / "metadata.json");
    seeds.insert(meta.at("seed").get<std::uint64_t>());
    training.insert(meta.at("training_config").dump());
  }
  c.expect(seeds.size() == 1 && training.size() == 1, "rows used different seeds or training settings");

  o.rows = {1, 8};
  o.workers = 1;
  o.output_dir.reset();
  const auto rerun = run_feature_grid(train, val, test, o);
  c.expect(rerun.reports.size() == 2, "restricted rerun row count");
  for (const auto& r : rerun.reports) {
    const auto& ref = *std::find_if(full.reports.begin(), full.reports.end(), [&](auto& x) { return x.id == r.id; });
    c.expect(r.bleu == ref.bleu, "row " + std::to_string(r.id) + " BLEU differs on rerun");
    c.expect(r.rouge_l == ref.rouge_l, "row " + std::to_string(r.id) + " Rouge-L differs on rerun");
  }
  fs::remove_all(dir);
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "loss functions", 60, loss_suite},
      {2, "set logic", 60, set_logic},
      {3, "masking", 60, masking},
      {4, "metrics", 120, metrics},
      {5, "data preparation counts", 300, data_prep},
      {6, "toy generation", 600, toy_generation},
      {7, "toy detectors", 300, detectors},
      {8, "grid integrity", 600, grid},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > cr.budget_seconds) c.failures.push_back("over time budget");
    std::ostringstream line;
    line << (c.failures.empty() ? "PASS" : "FAIL") << " [" << cr.id << "] " << cr.name;
    char timing[64];
    std::snprintf(timing, sizeof timing, " (%.1fs / %.0fs)", seconds, cr.budget_seconds);
    line << timing;
    for (const auto& n : c.notes) line << "; " << n;
    if (!c.failures.empty()) {
      line << " -- " << c.failures.front();
      if (c.failures.size() > 1) line << " (+" << c.failures.size() - 1 << " more)";
      ++failed;
    }
    std::printf("%s\n", line.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
