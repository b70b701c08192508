#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cspeech/eval/classification.hpp"
#include "cspeech/values/detector.hpp"
#include "toy.hpp"

namespace cspeech::values {
namespace {

using Vec = std::vector<double>;

TEST(QuadrupleLoss, IdenticalVectorsLeaveOnlyTheMargin) {
  const Vec v = {0.6, 0.8};
  EXPECT_NEAR(quadruple_loss(v, v, v, v), 1.0, 1e-9);
}

TEST(QuadrupleLoss, HandComputedCases) {
  EXPECT_NEAR(quadruple_loss(Vec{1, 0}, Vec{1, 0}, Vec{0, 1}, Vec{0, 1}), -1.0, 1e-9);
  EXPECT_NEAR(quadruple_loss(Vec{1, 0}, Vec{0, 1}, Vec{1, 0}, Vec{1, 0}), 2.0, 1e-9);
}

TEST(QuadrupleLoss, SimilarityConventionFlipsTheSigns) {
  QuadrupleLossParams literal;
  literal.convention = DistanceConvention::kCosineSimilarity;
  // alpha (1 - 0) + beta (0 - 0) + 1
  EXPECT_NEAR(quadruple_loss(Vec{1, 0}, Vec{1, 0}, Vec{0, 1}, Vec{0, 1}, literal), 3.0, 1e-9);
}

TEST(QuadrupleLoss, ZeroVectorIsANumericError) {
  EXPECT_THROW(quadruple_loss(Vec{0, 0}, Vec{1, 0}, Vec{0, 1}, Vec{0, 1}), NumericError);
}

TEST(QuadrupleLoss, InvariantUnderPositiveRescaling) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<Vec, 4> v;
    for (auto& x : v) {
      x.resize(5);
      for (auto& e : x) e = nn::uniform(rng, -1, 1);
    }
    const double base = quadruple_loss(v[0], v[1], v[2], v[3]);
    auto scaled = v;
    const size_t which = nn::uniform_index(rng, 4);
    const double factor = nn::uniform(rng, 0.01, 100.0);
    for (auto& e : scaled[which]) e *= factor;
    EXPECT_NEAR(quadruple_loss(scaled[0], scaled[1], scaled[2], scaled[3]), base, 1e-9);
  }
}

TEST(QuadrupleLoss, AnalyticGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (auto convention : {DistanceConvention::kCosineDistance, DistanceConvention::kCosineSimilarity}) {
    QuadrupleLossParams params;
    params.convention = convention;
    for (int point = 0; point < 10; ++point) {
      std::array<Vec, 4> v;
      for (auto& x : v) {
        x.resize(6);
        for (auto& e : x) e = nn::uniform(rng, -1, 1);
      }
      const auto grads = quadruple_loss_gradient(v[0], v[1], v[2], v[3], params);
      for (int which = 0; which < 4; ++which)
        for (size_t i = 0; i < v[which].size(); ++i) {
          auto plus = v, minus = v;
          const double h = 1e-6;
          plus[which][i] += h;
          minus[which][i] -= h;
          const double numeric = (quadruple_loss(plus[0], plus[1], plus[2], plus[3], params) -
                                  quadruple_loss(minus[0], minus[1], minus[2], minus[3], params)) /
                                 (2 * h);
          const double analytic = grads[which][i];
          EXPECT_LE(std::abs(analytic - numeric), 1e-4 * std::max(std::abs(numeric), 1e-3))
              << "point " << point << " input " << which << " coord " << i;
        }
    }
  }
}

TEST(QuadrupleLoss, AutogradRouteAgreesWithClosedForm) {
  std::mt19937_64 rng(13);
  std::array<Vec, 4> v;
  std::array<nn::Tensor, 4> t;
  for (int k = 0; k < 4; ++k) {
    v[k].resize(4);
    std::vector<float> f(4);
    for (int i = 0; i < 4; ++i) f[i] = static_cast<float>(v[k][i] = nn::uniform(rng, -1, 1));
    t[k] = nn::Tensor(1, 4, f, true);
  }
  auto loss = quadruple_loss(t[0], t[1], t[2], t[3]);
  EXPECT_NEAR(loss.item(), quadruple_loss(v[0], v[1], v[2], v[3]), 1e-5);
  loss.backward();
  const auto grads = quadruple_loss_gradient(v[0], v[1], v[2], v[3]);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(t[k].grad()[i], grads[k][i], 1e-4);
}

TEST(MultiTaskLoss, ZeroLogitsGiveLn2) {
  const Matrix z1(3, Vec(4, 0.0)), z2(3, Vec(5, 0.0)), z3(3, Vec(2, 0.0));
  const Matrix y1 = {{1, 0, 1, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  const Matrix y2 = {{1, 0, 0, 0, 1}, {0, 1, 0, 0, 0}, {0, 0, 0, 0, 0}};
  const Matrix y3 = {{1, 0}, {0, 1}, {1, 1}};
  EXPECT_NEAR(multitask_loss(z1, z2, z3, y1, y2, y3), std::log(2.0), 1e-12);
}

TEST(MultiTaskLoss, PerfectPredictionsApproachZero) {
  const Matrix y = {{1, 0}, {0, 1}};
  const Matrix logits = {{40, -40}, {-40, 40}};
  EXPECT_LT(multitask_loss(logits, logits, logits, y, y, y), 1e-12);
}

TEST(MultiTaskLoss, LinearInTheWeights) {
  std::mt19937_64 rng(14);
  auto random_matrix = [&](size_t rows, size_t cols, bool binary) {
    Matrix m(rows, Vec(cols));
    for (auto& r : m)
      for (auto& e : r) e = binary ? static_cast<double>(nn::uniform_index(rng, 2)) : nn::uniform(rng, -3, 3);
    return m;
  };
  const auto x1 = random_matrix(4, 3, false), x2 = random_matrix(4, 5, false), x3 = random_matrix(4, 2, false);
  const auto y1 = random_matrix(4, 3, true), y2 = random_matrix(4, 5, true), y3 = random_matrix(4, 2, true);
  const double b1 = mean_bce(x1, y1), b2 = mean_bce(x2, y2), b3 = mean_bce(x3, y3);
  EXPECT_NEAR(multitask_loss(x1, x2, x3, y1, y2, y3, {1, 0, 0}), b1, 1e-12);
  EXPECT_NEAR(multitask_loss(x1, x2, x3, y1, y2, y3), 0.23 * b1 + 0.33 * b2 + 0.44 * b3, 1e-12);
  const MultiTaskWeights w{0.5, 0.25, 0.25};
  EXPECT_NEAR(multitask_loss(x1, x2, x3, y1, y2, y3, w), 0.5 * b1 + 0.25 * b2 + 0.25 * b3, 1e-12);
}

TEST(MultiTaskLoss, ShapeMismatchAndBadWeights) {
  const Matrix a = {{0, 0}}, b = {{0, 0, 0}};
  EXPECT_THROW(multitask_loss(a, a, a, b, a, a), DimensionError);
  EXPECT_THROW(multitask_loss(a, a, a, a, a, a, {0.5, 0.5, 0.5}), ConfigError);
  EXPECT_NEAR(MultiTaskWeights{}.l1 + MultiTaskWeights{}.l2 + MultiTaskWeights{}.l3, 1.0, 1e-9);
}

class Fixture : public ::testing::Test {
 protected:
  void SetUp() override { tax = std::make_shared<const ValueTaxonomy>(toy::taxonomy()); }
  std::shared_ptr<const ValueTaxonomy> tax;
};

using EntailmentAggregation = Fixture;

TEST_F(EntailmentAggregation, AllBelowThresholdIsAllZero) {
  const std::vector<double> probs(tax->descriptor_count(), 0.49);
  const auto p = aggregate_entailment(probs, *tax, tax->target_l2());
  for (int d : p.decisions) EXPECT_EQ(d, 0);
}

TEST_F(EntailmentAggregation, SingleConfidentDescriptorSelectsItsCategory) {
  std::vector<double> probs(tax->descriptor_count(), 0.1);
  probs[5] = 0.9;
  const auto p = aggregate_entailment(probs, *tax, tax->target_l2());
  const int l2 = tax->l2_of_descriptor(5);
  for (size_t i = 0; i < p.labels.size(); ++i) EXPECT_EQ(p.decisions[i], p.labels[i] == tax->l2_name(l2) ? 1 : 0);
}

TEST_F(EntailmentAggregation, MatchesBruteForceMaxOverChildren) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> probs(tax->descriptor_count());
    for (auto& p : probs) p = nn::uniform01(rng);
    const auto got = aggregate_entailment(probs, *tax, tax->target_l2());
    for (size_t i = 0; i < got.labels.size(); ++i) {
      bool any = false;
      for (int d = 0; d < tax->descriptor_count(); ++d)
        if (tax->l2_name(tax->l2_of_descriptor(d)) == got.labels[i] && probs[d] >= 0.5) any = true;
      EXPECT_EQ(got.decisions[i], any ? 1 : 0);
    }
  }
}

ValuePrediction six_class(const std::vector<int>& decisions) {
  ValuePrediction p;
  p.labels = top_value_categories();
  for (int d : decisions) {
    p.decisions.push_back(d);
    p.probabilities.push_back(d ? 0.8 : 0.2);
  }
  return p;
}

TEST(ValueEnsemble, MajorityDefinition) {
  auto vote = [](int a, int b, int c) {
    return majority_vote({six_class({a, 0, 0, 0, 0, 0}), six_class({b, 0, 0, 0, 0, 0}), six_class({c, 0, 0, 0, 0, 0})},
                         2)
        .decisions[0];
  };
  EXPECT_EQ(vote(1, 1, 0), 1);
  EXPECT_EQ(vote(1, 0, 0), 0);
  EXPECT_EQ(vote(0, 0, 0), 0);
}

TEST(ValueEnsemble, ExhaustiveAgainstVoteCountAndMonotone) {
  for (int pattern = 0; pattern < (1 << 18); pattern += 37) {
    std::vector<std::vector<int>> member(3, std::vector<int>(6));
    for (int m = 0; m < 3; ++m)
      for (int c = 0; c < 6; ++c) member[m][c] = (pattern >> (m * 6 + c)) & 1;
    const auto out = majority_vote({six_class(member[0]), six_class(member[1]), six_class(member[2])}, 2);
    for (int c = 0; c < 6; ++c) {
      const int count = member[0][c] + member[1][c] + member[2][c];
      EXPECT_EQ(out.decisions[c], count >= 2 ? 1 : 0);
      for (int m = 0; m < 3; ++m) {
        if (member[m][c]) continue;
        auto flipped = member;
        flipped[m][c] = 1;
        const auto after = majority_vote({six_class(flipped[0]), six_class(flipped[1]), six_class(flipped[2])}, 2);
        EXPECT_GE(after.decisions[c], out.decisions[c]);
      }
    }
  }
}

class StubPredictor : public ValuePredictor {
 public:
  StubPredictor(ValuePrediction p, bool trained) : p_(std::move(p)), trained_(trained) {}
  ValuePrediction predict(const std::string&) const override { return p_; }
  bool trained() const override { return trained_; }
  std::string kind() const override { return "stub"; }

 private:
  ValuePrediction p_;
  bool trained_;
};

TEST(ValueEnsemble, UntrainedMemberIsAStateError) {
  StubPredictor a(six_class({1, 0, 0, 0, 0, 0}), true), b(six_class({1, 0, 0, 0, 0, 0}), true),
      c(six_class({0, 0, 0, 0, 0, 0}), false);
  EXPECT_THROW(ensemble_predict("x", {&a, &b, &c}), StateError);
  StubPredictor c2(six_class({0, 0, 0, 0, 0, 1}), true);
  EXPECT_EQ(ensemble_predict("x", {&a, &b, &c2}).decisions, (std::vector<int>{1, 0, 0, 0, 0, 0}));
}

nn::EncoderSpec toy_spec() { return nn::EncoderSpec::parse("post-norm:dim=32,layers=1,heads=4,hidden=64,max_len=32"); }

nn::TrainingConfig toy_config(long steps, std::uint64_t seed = 1) {
  nn::TrainingConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 1000;
  cfg.patience = 1000;
  cfg.max_steps = steps;
  cfg.seed = seed;
  return cfg;
}

std::vector<std::string> texts_of(const std::vector<toy::ToyArgument>& items) {
  std::vector<std::string> out;
  for (const auto& t : items) out.push_back(t.argument.text);
  return out;
}

using SimilarityTraining = Fixture;

TEST_F(SimilarityTraining, DescriptorEmbeddingsClusterByValue) {
  auto vocab = build_value_vocabulary(*tax, {});
  DescriptorEmbedder embedder(tax, vocab, toy_spec(), 3);
  const auto quads = sample_quadruples(*tax, {.total = 160, .seed = 4});
  embedder.train(quads, toy_config(200));
  const auto& c = embedder.centroids();
  ASSERT_EQ(static_cast<int>(c.size()), tax->descriptor_count());
  double within = 0, cross = 0;
  int nw = 0, nc = 0;
  for (int i = 0; i < tax->descriptor_count(); ++i)
    for (int j = i + 1; j < tax->descriptor_count(); ++j) {
      if (tax->l1_of_descriptor(i) == tax->l1_of_descriptor(j)) {
        within += cosine(c[i], c[j]);
        ++nw;
      } else if (tax->l2_of_descriptor(i) != tax->l2_of_descriptor(j)) {
        cross += cosine(c[i], c[j]);
        ++nc;
      }
    }
  EXPECT_GT(within / nw, cross / nc);
  for (const auto& v : c) {
    double n = 0;
    for (float x : v) n += x * x;
    EXPECT_NEAR(n, 1.0, 1e-5);
  }
  EXPECT_THROW(embedder.train(quads, toy_config(1)), StateError);
}

TEST_F(SimilarityTraining, DeterministicForFixedSeed) {
  auto vocab = build_value_vocabulary(*tax, {});
  const auto quads = sample_quadruples(*tax, {.total = 40, .seed = 4});
  DescriptorEmbedder a(tax, vocab, toy_spec(), 3), b(tax, vocab, toy_spec(), 3);
  a.train(quads, toy_config(20));
  b.train(quads, toy_config(20));
  EXPECT_EQ(a.centroids(), b.centroids());
}

TEST_F(SimilarityTraining, ArgumentEmbedderRecoversPlantedDescriptor) {
  const auto train_items = toy::value_arguments(*tax, 160, 21);
  const auto val_items = toy::value_arguments(*tax, 40, 22);
  const auto test_items = toy::value_arguments(*tax, 60, 23);
  auto texts = texts_of(train_items);
  auto vocab = build_value_vocabulary(*tax, texts);
  DescriptorEmbedder desc(tax, vocab, toy_spec(), 3);
  // Centroids come from the untrained encoder. On a two-category taxonomy
  // the unclamped quadruple objective drives each category to one point
  // (cosine ~1 between siblings), which leaves nothing to rank within it.
  desc.freeze();
  const auto centroids = desc.centroids();

  ArgumentEmbedder arg(vocab, toy_spec(), toy_spec().dim, 5);
  arg.initialize_encoder(desc);
  // The generic pairs only contrast against other categories. Here the
  // planted descriptor is the single positive and every other descriptor a
  // negative, so that top-1 is well defined.
  auto focused = [&](const std::vector<toy::ToyArgument>& items) {
    std::vector<SimilarityPair> out;
    for (const auto& t : items)
      for (int d = 0; d < tax->descriptor_count(); ++d)
        out.push_back({t.argument.text, d, d == t.descriptor ? 1 : 0});
    return out;
  };
  auto cfg = toy_config(1500);
  cfg.learning_rate = 1e-3;
  arg.train(focused(train_items), focused(val_items), centroids, cfg);
  EXPECT_EQ(desc.centroids(), centroids) << "centroids must stay frozen";

  SimilarityModel model(tax, centroids, arg);
  int top1 = 0, category = 0;
  for (const auto& t : test_items) {
    const auto [best, sim] = model.best_descriptor(model.embed(t.argument.text));
    top1 += best == t.descriptor;
    category += model.predict(t.argument.text).positive_labels() == std::set<std::string>{t.argument.l2_labels[0]};
  }
  EXPECT_GE(top1, 0.9 * test_items.size());
  EXPECT_GE(category, 0.9 * test_items.size());
}

TEST_F(SimilarityTraining, PredictionIsSingleLabelAndScaleInvariant) {
  auto vocab = build_value_vocabulary(*tax, {});
  DescriptorEmbedder desc(tax, vocab, toy_spec(), 3);
  desc.freeze();
  ArgumentEmbedder arg(vocab, toy_spec(), toy_spec().dim, 5);
  arg.mark_trained();
  SimilarityModel model(tax, desc.centroids(), arg);
  for (int d = 0; d < tax->descriptor_count(); ++d) {
    const auto& c = desc.centroids()[d];
    const auto p = model.predict_embedding(c);
    EXPECT_EQ(p.positive_labels(), std::set<std::string>{tax->l2_name(tax->l2_of_descriptor(d))});
    Vector scaled = c;
    for (auto& x : scaled) x *= 7.5f;
    EXPECT_EQ(model.predict_embedding(scaled).decisions, p.decisions);
  }
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Vector v(toy_spec().dim);
    for (auto& x : v) x = static_cast<float>(nn::uniform(rng, -1, 1));
    const auto p = model.predict_embedding(v);
    EXPECT_EQ(std::count(p.decisions.begin(), p.decisions.end(), 1), 1);
  }
}

TEST(ArgumentEmbedderLoss, IdenticalEmbeddingHasZeroPositiveLoss) {
  const Vector c = {0.3f, -0.4f, 0.5f};
  const nn::Tensor e(1, 3, c, true);
  EXPECT_NEAR(ArgumentEmbedder::pair_loss(e, c, 1).item(), 0.0, 1e-6);
}

TEST_F(Fixture, UntrainedModelsRaiseStateErrors) {
  auto vocab = build_value_vocabulary(*tax, {});
  MultiLevelClassifier cls(tax, vocab, toy_spec(), 1);
  EntailmentModel ent(tax, vocab, toy_spec(), 1);
  ArgumentEmbedder arg(vocab, toy_spec(), toy_spec().dim, 5);
  DescriptorEmbedder desc(tax, vocab, toy_spec(), 3);
  EXPECT_THROW(cls.predict("x"), StateError);
  EXPECT_THROW(ent.predict("x"), StateError);
  EXPECT_THROW(desc.centroids(), StateError);
  desc.freeze();
  SimilarityModel sim(tax, desc.centroids(), arg);
  EXPECT_THROW(sim.predict("x"), StateError);
  ArgumentEmbedder wrong(vocab, toy_spec(), 7, 5);
  EXPECT_THROW(wrong.train({{"a", 0, 1}}, {{"a", 0, 1}}, desc.centroids(), toy_config(1)), ConfigError);
}

std::vector<std::vector<int>> one_hot_gold(const ValueTaxonomy& tax, const std::vector<toy::ToyArgument>& items) {
  std::vector<std::vector<int>> gold;
  for (const auto& t : items) {
    std::vector<int> row;
    for (int l2 : tax.target_l2()) row.push_back(tax.l2_name(l2) == t.argument.l2_labels[0] ? 1 : 0);
    gold.push_back(row);
  }
  return gold;
}

TEST_F(Fixture, ClassifierLearnsPlantedSignalAndRoundTrips) {
  const auto train_items = toy::value_arguments(*tax, 200, 31);
  const auto val_items = toy::value_arguments(*tax, 40, 32);
  const auto test_items = toy::value_arguments(*tax, 60, 33);
  MultiLevelClassifier cls(tax, build_value_vocabulary(*tax, texts_of(train_items)), toy_spec(), 2);
  cls.train(toy::arguments_only(train_items), toy::arguments_only(val_items), toy_config(300));
  std::vector<std::vector<int>> predicted;
  for (const auto& t : test_items) predicted.push_back(cls.predict(t.argument.text).decisions);
  EXPECT_GE(eval::macro_f1(one_hot_gold(*tax, test_items), predicted), 0.9);

  const auto dir = std::filesystem::temp_directory_path() / "cspeech_values_test" / "cls";
  cls.save(dir);
  const auto loaded = MultiLevelClassifier::load(dir, tax);
  EXPECT_EQ(loaded.l2_probabilities("promoting imagination"), cls.l2_probabilities("promoting imagination"));
  auto other = std::make_shared<const ValueTaxonomy>(
      ValueTaxonomy::from_json(nlohmann::ordered_json::parse(R"({"l3":["a"],"l2":{"b":"a"},"l1":{"c":"b"},
      "descriptors":{"d":"c"}})")));
  EXPECT_THROW(MultiLevelClassifier::load(dir, other), ConfigError);
}

TEST_F(Fixture, EntailmentLearnsPlantedSignal) {
  const auto train_items = toy::value_arguments(*tax, 120, 41);
  const auto val_items = toy::value_arguments(*tax, 20, 42);
  const auto test_items = toy::value_arguments(*tax, 60, 43);
  EntailmentModel ent(tax, build_value_vocabulary(*tax, texts_of(train_items)), toy_spec(), 2);
  const auto pairs = build_entailment_pairs(toy::arguments_only(train_items), *tax, {.seed = 44});
  const auto val_pairs = build_entailment_pairs(toy::arguments_only(val_items), *tax, {.seed = 45});
  ent.train(pairs, val_pairs, toy_config(300));
  std::vector<std::vector<int>> predicted;
  for (const auto& t : test_items) predicted.push_back(ent.predict(t.argument.text).decisions);
  EXPECT_GE(eval::macro_f1(one_hot_gold(*tax, test_items), predicted), 0.9);
}

}  // namespace
}  // namespace cspeech::values
