#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "match/errors.hpp"
#include "match/sphere_embed.hpp"
#include "match/synthetic.hpp"
#include "temp_dir.hpp"

namespace {

using namespace match;
using namespace match::sphere;
using Vec = std::vector<double>;

Corpus synthetic_corpus(std::size_t docs, std::uint64_t seed) {
  auto data = generate_synthetic({.num_documents = docs}, seed);
  auto vocab = build_vocabulary(data.corpus, 1, &data.hierarchy);
  return resolve(data.corpus, vocab, &data.hierarchy);
}

std::vector<std::size_t> all_docs(const Corpus& c) {
  std::vector<std::size_t> out(c.documents.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

TEST(MarginTerm, SeparatedPairIsZero) {
  EXPECT_DOUBLE_EQ(margin_term(Vec{1, 0}, Vec{1, 0}, Vec{-1, 0}, 0.3), 0.0);
}

TEST(MarginTerm, ForcedArithmetic) {
  EXPECT_NEAR(margin_term(Vec{1, 0}, Vec{0, 1}, Vec{1, 0}, 0.3), 1.3, 1e-15);
}

TEST(MarginTerm, EqualPositiveAndNegativeGiveGamma) {
  const Vec a{0.6, 0.8}, p{0.8, -0.6};
  EXPECT_NEAR(margin_term(a, p, p, 0.3), 0.3, 1e-15);
}

TEST(MarginTerm, DimensionMismatch) {
  EXPECT_THROW(margin_term(Vec{1, 0}, Vec{1, 0, 0}, Vec{1, 0}, 0.3), ShapeError);
}

TEST(Riemannian, ProjectionExamples) {
  EXPECT_EQ(riemannian_project(Vec{1, 0}, Vec{2, 3}), (Vec{0, 3}));
  EXPECT_EQ(riemannian_project(Vec{0, 1}, Vec{1, 1}), (Vec{1, 0}));
  const Vec e{0.6, 0.8};
  for (double v : riemannian_project(e, Vec{1.5, 2.0})) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Riemannian, NonUnitPointRejected) {
  EXPECT_THROW(riemannian_project(Vec{2, 0}, Vec{1, 1}), ArgumentError);
}

TEST(Riemannian, TangencyOnRandomPairs) {
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    Vec e(16), g(16);
    for (auto& x : e) x = rng.normal();
    const double n = norm(e);
    for (auto& x : e) x /= n;
    for (auto& x : g) x = 10 * rng.normal();
    EXPECT_LE(std::abs(dot(e, riemannian_project(e, g))), 1e-9);
  }
}

TEST(Retract, ZeroGradientKeepsPoint) {
  const Vec e{0.6, 0.8};
  auto out = retract(e, Vec{0, 0}, 0.5);
  EXPECT_NEAR(out[0], 0.6, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
}

TEST(Retract, UnitStepExample) {
  // Descent moves against the gradient, so a gradient of (0,-1) is a step of (0,1).
  auto out = retract(Vec{1, 0}, Vec{0, -1}, 1.0);
  EXPECT_NEAR(out[0], 0.70710678, 1e-8);
  EXPECT_NEAR(out[1], 0.70710678, 1e-8);
  auto literal = retract(Vec{1, 0}, Vec{0, 1}, 1.0, /*ascend=*/true);
  EXPECT_NEAR(literal[1], 0.70710678, 1e-8);
}

TEST(Retract, OutputIsUnitAndDegenerateIsReported) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    Vec e(8), g(8);
    for (auto& x : e) x = rng.normal();
    const double n = norm(e);
    for (auto& x : e) x /= n;
    for (auto& x : g) x = rng.normal();
    auto out = retract(e, riemannian_project(e, g), 0.01 + rng.uniform01());
    EXPECT_LE(std::abs(norm(out) - 1.0), 1e-12);
  }
  EXPECT_THROW(retract(Vec{1, 0}, Vec{1, 0}, 1.0), DegenerateStepError);
  EXPECT_THROW(retract(Vec{1, 0}, Vec{0, 1}, 0.0), ArgumentError);
}

EmbeddingSpace two_d_space() {
  EmbeddingSpace s;
  s.dim = 2;
  s.documents = EmbeddingTable(1, 2);
  s.labels = EmbeddingTable(2, 2);
  s.words = EmbeddingTable(1, 2);
  s.contexts = EmbeddingTable(1, 2);
  s.documents.row(0)[0] = 1;
  s.labels.row(0)[0] = 1;  // positive (1,0)
  s.labels.row(1)[1] = 1;  // negative (0,1)
  return s;
}

TEST(Gradients, ActiveHinge) {
  auto s = two_d_space();
  s.documents.row(0)[0] = std::sqrt(0.5);
  s.documents.row(0)[1] = std::sqrt(0.5);
  TrainingSample sample{Part::kDocLabel, 0, 0, 0, 0, 1};
  auto g = euclidean_gradients(sample, 0.3, s);
  ASSERT_TRUE(g.active);
  EXPECT_EQ(g.vectors[0].gradient, (Vec{-1, 1}));
  EXPECT_EQ(g.vectors[1].gradient, (Vec{-std::sqrt(0.5), -std::sqrt(0.5)}));
  EXPECT_EQ(g.vectors[2].gradient, (Vec{std::sqrt(0.5), std::sqrt(0.5)}));
}

TEST(Gradients, InactiveHingeGivesZerosAndNoUpdate) {
  auto s = two_d_space();
  TrainingSample sample{Part::kDocLabel, 0, 0, 0, 0, 1};
  auto g = euclidean_gradients(sample, 0.3, s);
  EXPECT_FALSE(g.active);
  for (const auto& v : g.vectors) EXPECT_EQ(v.gradient, (Vec{0, 0}));
  const auto before = s;
  apply_sample(sample, 0.3, 0.1, s);
  EXPECT_EQ(s, before);
}

TEST(Gradients, OneStepDescentDoesNotIncreaseHinge) {
  Rng rng(17);
  const Vocabulary vocab = [] {
    auto v = Vocabulary::with_types({"venue"});
    for (int i = 0; i < 6; ++i) v.metadata[0].intern("v" + std::to_string(i));
    v.labels.intern("a");
    v.labels.intern("b");
    return v;
  }();
  for (int trial = 0; trial < 200; ++trial) {
    auto space = EmbeddingSpace::random(vocab, 3, 8, rng);
    TrainingSample s{Part::kDocMeta, 1, 0, 1, 2, 5};
    const double before = euclidean_gradients(s, 0.3, space).loss;
    apply_sample(s, 0.3, 1e-3, space);
    const double after = euclidean_gradients(s, 0.3, space).loss;
    EXPECT_LE(after, before + 1e-12);
  }
}

TEST(Sampler, ContextWindowMembership) {
  std::vector<std::size_t> words{11, 12, 13, 14, 15};
  auto ctx = context_window(words, 2, 2);
  std::sort(ctx.begin(), ctx.end());
  EXPECT_EQ(ctx, (std::vector<std::size_t>{11, 12, 14, 15}));
  EXPECT_EQ(context_window(words, 0, 1), std::vector<std::size_t>{12});
}

Corpus tiny_corpus(const std::vector<std::vector<std::string>>& labels_per_doc,
                   std::size_t venues = 3) {
  RawCorpus raw;
  raw.metadata_types = {"venue"};
  for (std::size_t i = 0; i < labels_per_doc.size(); ++i) {
    RawDocument d;
    d.id = "d" + std::to_string(i);
    d.words = {"alpha", "beta", "gamma"};
    d.metadata = {{0, "v" + std::to_string(i % venues)}};
    d.labels = labels_per_doc[i];
    raw.documents.push_back(d);
  }
  auto vocab = build_vocabulary(raw, 1);
  return resolve(raw, vocab);
}

TEST(Sampler, LabelNegativeNeedsAComplement) {
  Corpus c = tiny_corpus({{"x", "y"}, {"x", "y"}});
  auto docs = all_docs(c);
  PairSampler sampler(c, docs, 2);
  Rng rng(1);
  EXPECT_THROW(sampler.sample(Part::kDocLabel, rng), SamplingError);
}

TEST(Sampler, MetadataNegativesAreUniform) {
  // Venue table: UNK plus v0..v9; the positive is excluded, UNK never drawn.
  Corpus c = tiny_corpus({{"x"}, {"y"}, {"x"}, {"y"}, {"x"}, {"y"}, {"x"}, {"y"}, {"x"}, {"y"}},
                         10);
  auto docs = all_docs(c);
  PairSampler sampler(c, docs, 2);
  Rng rng(99);
  const std::size_t positive = c.documents[0].metadata[0].instance;
  std::map<std::size_t, double> counts;
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) counts[sampler.sample_metadata_negative(0, positive, rng)] += 1;
  EXPECT_FALSE(counts.contains(positive));
  EXPECT_FALSE(counts.contains(Vocabulary::kUnk));
  ASSERT_EQ(counts.size(), 9u);
  const double expected = kDraws / 9.0;
  double stat = 0;
  for (const auto& [id, n] : counts) stat += (n - expected) * (n - expected) / expected;
  boost::math::chi_squared dist(8);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, stat)), 0.01);
}

TEST(Sampler, PositivesComeFromTheDocument) {
  Corpus c = synthetic_corpus(60, 3);
  auto docs = all_docs(c);
  PairSampler sampler(c, docs, 3);
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    for (std::size_t p = 0; p < kNumParts; ++p) {
      auto s = sampler.sample(Part(p), rng);
      const auto& d = c.documents[s.document];
      switch (s.part) {
        case Part::kDocMeta:
          EXPECT_NE(std::find(d.metadata.begin(), d.metadata.end(),
                              MetadataToken{s.meta_type, s.positive}),
                    d.metadata.end());
          EXPECT_NE(s.negative, s.positive);
          break;
        case Part::kDocLabel:
          EXPECT_TRUE(std::binary_search(d.labels.begin(), d.labels.end(), s.positive));
          EXPECT_FALSE(std::binary_search(d.labels.begin(), d.labels.end(), s.negative));
          break;
        case Part::kDocWord:
          EXPECT_NE(std::find(d.words.begin(), d.words.end(), s.positive), d.words.end());
          EXPECT_NE(s.negative, s.positive);
          break;
        case Part::kWordContext:
          EXPECT_NE(std::find(d.words.begin(), d.words.end(), s.positive), d.words.end());
          EXPECT_NE(std::find(d.words.begin(), d.words.end(), s.anchor), d.words.end());
          break;
      }
    }
  }
}

TEST(Schedule, LinearDecayIsMonotone) {
  PretrainConfig cfg;
  cfg.learning_rate = 0.2;
  double prev = learning_rate_at(cfg, 0, 100);
  EXPECT_DOUBLE_EQ(prev, 0.2);
  for (std::size_t t = 1; t <= 100; ++t) {
    const double a = learning_rate_at(cfg, t, 100);
    EXPECT_LE(a, prev);
    prev = a;
  }
  EXPECT_NEAR(prev, 0.02, 1e-15);
}

TEST(Pretrain, ConfigValidation) {
  PretrainConfig cfg;
  cfg.gamma = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Pretrain, DocumentWithEveryLabelFailsBeforeTraining) {
  Corpus c = tiny_corpus({{"x", "y"}, {"x"}, {"y"}});
  auto docs = all_docs(c);
  EXPECT_THROW(pretrain(c, docs, {.dim = 4}), ConfigError);
}

TEST(Pretrain, ToyVenueAffinity) {
  // d0 always carries v1 and never v2.
  RawCorpus raw;
  raw.metadata_types = {"venue"};
  for (int i = 0; i < 12; ++i) {
    RawDocument d;
    d.id = "d" + std::to_string(i);
    d.words = {"w" + std::to_string(i % 3), "w" + std::to_string((i + 1) % 3), "common"};
    d.metadata = {{0, i == 0 ? "v1" : "v" + std::to_string(1 + i % 3)}};
    d.labels = {i % 2 == 0 ? "even" : "odd"};
    raw.documents.push_back(d);
  }
  Corpus c = resolve(raw, build_vocabulary(raw, 1));
  auto docs = all_docs(c);
  auto result = pretrain(c, docs, {.dim = 8, .epochs = 5, .iterations_per_epoch = 4000, .seed = 3});
  const auto& s = result.space;
  const auto v1 = *c.vocabulary.metadata[0].find("v1");
  const auto v2 = *c.vocabulary.metadata[0].find("v2");
  EXPECT_GT(dot(s.documents.row(0), s.metadata[0].row(v1)),
            dot(s.documents.row(0), s.metadata[0].row(v2)));
  EXPECT_LE(s.max_norm_deviation(), 1e-6);
}

TEST(Pretrain, NormsStayUnitAndLossFalls) {
  double first = 0, last = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    Corpus c = synthetic_corpus(300, seed);
    auto docs = all_docs(c);
    double worst = 0;
    auto result = pretrain(c, docs, {.dim = 16, .epochs = 5, .seed = seed},
                           [&](std::size_t, const EpochStats&, const EmbeddingSpace& space) {
                             worst = std::max(worst, space.max_norm_deviation());
                           });
    EXPECT_LE(worst, 1e-6);
    ASSERT_EQ(result.history.size(), 5u);
    first += result.history.front().total_mean();
    last += result.history.back().total_mean();
  }
  EXPECT_LT(last, first);
}

TEST(Pretrain, DeterministicGivenSeed) {
  Corpus c = synthetic_corpus(80, 4);
  auto docs = all_docs(c);
  PretrainConfig cfg{.dim = 8, .epochs = 2, .seed = 11};
  EXPECT_EQ(pretrain(c, docs, cfg).space, pretrain(c, docs, cfg).space);
}

TEST(Pretrain, DisabledMetadataTypeIsUntouched) {
  Corpus c = synthetic_corpus(80, 4);
  auto docs = all_docs(c);
  PretrainConfig cfg{.dim = 8, .epochs = 1, .seed = 2};
  cfg.metadata_enabled = {true, false, true};
  auto trained = pretrain(c, docs, cfg);
  Rng init = Rng(cfg.seed).fork(1);
  auto initial = EmbeddingSpace::random(c.vocabulary, c.documents.size(), 8, init);
  EXPECT_EQ(trained.space.metadata[1], initial.metadata[1]);
  EXPECT_NE(trained.space.metadata[0], initial.metadata[0]);
}

TEST(EmbeddingSpace, TextRoundTripIsExact) {
  Corpus c = synthetic_corpus(30, 2);
  Rng rng(1);
  auto space = EmbeddingSpace::random(c.vocabulary, c.documents.size(), 5, rng);
  match::testing::TempDir dir;
  space.save(dir / "emb.txt");
  EXPECT_EQ(EmbeddingSpace::load(dir / "emb.txt"), space);
}

}  // namespace
