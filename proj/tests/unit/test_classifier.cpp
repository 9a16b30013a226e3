#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "match/classifier.hpp"
#include "match/errors.hpp"
#include "match/synthetic.hpp"
#include "temp_dir.hpp"

namespace {

using namespace match;
using ad::Tensor;

Tensor row(std::initializer_list<double> values) {
  Tensor t(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) t(0, i++) = v;
  return t;
}

// Labels: 0 a, 1 b, 2 a1, 3 a2, 4 b1, 5 ab (child of both a and b).
LabelHierarchy dag() {
  std::vector<std::pair<std::string, std::string>> edges{
      {"a1", "a"}, {"a2", "a"}, {"b1", "b"}, {"ab", "a"}, {"ab", "b"}};
  IdTable labels;
  for (const char* l : {"a", "b", "a1", "a2", "b1", "ab"}) labels.intern(l);
  return LabelHierarchy::from_edges(edges, &labels);
}

struct TinyWorld {
  Vocabulary vocab;
  std::vector<Document> docs;
  LabelHierarchy hierarchy = dag();
  Model model;
};

TinyWorld tiny_world(std::uint64_t seed) {
  TinyWorld w;
  w.vocab = Vocabulary::with_types({"venue"});
  for (const char* word : {"x", "y", "z", "u"}) w.vocab.words.intern(word);
  for (const char* v : {"v1", "v2"}) w.vocab.metadata[0].intern(v);
  w.vocab.labels = w.hierarchy.labels();
  w.docs.push_back({"d0", {2, 3, 4}, {{0, 1}}, {0, 2}});
  w.docs.push_back({"d1", {5, 3}, {{0, 2}}, {0, 1, 5}});
  w.model.config.dim = 8;
  w.model.config.layers = 2;
  w.model.config.heads = 2;
  w.model.config.cls_tokens = 2;
  w.model.config.max_length = 16;
  w.model.config.dropout = 0.1;
  Rng rng(seed);
  w.model.encoder = encoder::EncoderParams::initialize(w.model.config, w.vocab, nullptr, rng);
  w.model.head = PredictionHead::random(w.model.config.output_dim(), 6, rng);
  return w;
}

std::vector<const Document*> batch_of(const TinyWorld& w) {
  return {&w.docs[0], &w.docs[1]};
}

TEST(Head, ZeroWeightsGiveOneHalf) {
  PredictionHead head;
  head.weights = ad::Parameter("w", Tensor::Zero(4, 5));
  head.bias = ad::Parameter("b", Tensor::Zero(1, 5));
  ad::Tape tape;
  Tensor reps(2, 4);
  reps << 1, -2, 3, 0.5, 7, 7, 7, 7;
  const Tensor p = predict_probabilities(tape.constant(reps), head).value();
  EXPECT_EQ(p.rows(), 2);
  EXPECT_EQ(p.cols(), 5);
  EXPECT_TRUE((p.array() == 0.5).all());
}

TEST(Head, ProbabilityMonotoneInLogit) {
  Rng rng(1);
  auto head = PredictionHead::random(3, 4, rng);
  ad::Tape tape;
  const Tensor reps = row({0.3, -0.2, 1.0});
  const double before = predict_probabilities(tape.constant(reps), head).value()(0, 2);
  head.bias.value(0, 2) += 0.01;
  const double after = predict_probabilities(tape.constant(reps), head).value()(0, 2);
  EXPECT_GT(after, before);
}

TEST(Bce, UniformPredictionCostsLn2PerLabel) {
  ad::Tape tape;
  Tensor p = Tensor::Constant(3, 4, 0.5);
  Tensor y = Tensor::Zero(3, 4);
  y(0, 1) = y(2, 3) = y(1, 0) = 1;
  EXPECT_NEAR(bce_loss(tape.constant(p), y).scalar(), 4 * std::log(2.0), 1e-12);
}

TEST(Bce, PerfectPredictionIsNearZero) {
  ad::Tape tape;
  Tensor y(1, 3);
  y << 1, 0, 1;
  const double loss = bce_loss(tape.constant(y), y).scalar();
  EXPECT_LE(loss, 3 * std::abs(std::log(1 - 1e-7)) + 1e-15);
  EXPECT_GE(loss, 0.0);
}

TEST(Bce, ClampKeepsLossFinite) {
  ad::Tape tape;
  EXPECT_NEAR(bce_loss(tape.constant(row({1e-7})), row({1.0})).scalar(), -std::log(1e-7), 1e-9);
  EXPECT_NEAR(bce_loss(tape.constant(row({0.0})), row({1.0})).scalar(), -std::log(1e-7), 1e-9);
}

TEST(ParameterRegularizer, Examples) {
  IdTable labels;
  labels.intern("p");
  labels.intern("c");
  std::vector<std::pair<std::string, std::string>> edge{{"c", "p"}};
  auto h = LabelHierarchy::from_edges(edge, &labels);
  ad::Tape tape;
  Tensor w(2, 2);
  w << 1, 1, 2, 2;  // columns are labels
  EXPECT_EQ(parameter_regularizer(tape.constant(w), h).scalar(), 0.0);
  w.col(1) = w.col(0) + Tensor::Ones(2, 1);
  EXPECT_DOUBLE_EQ(parameter_regularizer(tape.constant(w), h).scalar(), 1.0);
  // Swapping child and parent columns leaves the value unchanged.
  Tensor swapped = w;
  swapped.col(0) = w.col(1);
  swapped.col(1) = w.col(0);
  EXPECT_DOUBLE_EQ(parameter_regularizer(tape.constant(swapped), h).scalar(), 1.0);
}

TEST(ParameterRegularizer, RootsAndEmptyHierarchy) {
  IdTable labels;
  labels.intern("r1");
  labels.intern("r2");
  auto flat = LabelHierarchy::from_edges({}, &labels);
  ad::Tape tape;
  Rng rng(2);
  Tensor w(3, 2);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  EXPECT_EQ(parameter_regularizer(tape.constant(w), flat).scalar(), 0.0);
  EXPECT_EQ(output_regularizer(tape.constant(row({0.9, 0.1})), flat).scalar(), 0.0);
}

TEST(OutputRegularizer, Examples) {
  IdTable labels;
  labels.intern("p");
  labels.intern("c");
  std::vector<std::pair<std::string, std::string>> edge{{"c", "p"}};
  auto h = LabelHierarchy::from_edges(edge, &labels);
  ad::Tape tape;
  EXPECT_NEAR(output_regularizer(tape.constant(row({0.5, 0.7})), h).scalar(), 0.2, 1e-15);
  EXPECT_EQ(output_regularizer(tape.constant(row({0.7, 0.5})), h).scalar(), 0.0);

  IdTable three;
  for (const char* l : {"p1", "p2", "c"}) three.intern(l);
  std::vector<std::pair<std::string, std::string>> edges{{"c", "p1"}, {"c", "p2"}};
  auto d = LabelHierarchy::from_edges(edges, &three);
  EXPECT_NEAR(output_regularizer(tape.constant(row({0.6, 0.9, 0.8})), d).scalar(), 0.2, 1e-15);
}

TEST(OutputRegularizer, IsABatchMean) {
  IdTable labels;
  labels.intern("p");
  labels.intern("c");
  std::vector<std::pair<std::string, std::string>> edge{{"c", "p"}};
  auto h = LabelHierarchy::from_edges(edge, &labels);
  Tensor p(2, 2);
  p << 0.5, 0.7, 0.9, 0.1;
  ad::Tape tape;
  EXPECT_NEAR(output_regularizer(tape.constant(p), h).scalar(), 0.1, 1e-15);
}

TEST(Objective, LinearInLambdas) {
  auto w = tiny_world(3);
  auto batch = batch_of(w);
  TrainConfig base;
  base.lambda_param = 0;
  base.lambda_output = 0;
  ad::Tape tape;
  auto zero = total_objective(tape, w.model, batch, w.hierarchy, base);
  EXPECT_EQ(zero.total.scalar(), zero.bce.scalar());
  ASSERT_GT(zero.parameter.scalar(), 0.0);
  ASSERT_GT(zero.output.scalar(), 0.0);

  TrainConfig cfg = base;
  cfg.lambda_param = 0.37;
  cfg.lambda_output = 2.5;
  auto full = total_objective(tape, w.model, batch, w.hierarchy, cfg);
  EXPECT_NEAR(full.total.scalar() - zero.total.scalar(),
              0.37 * zero.parameter.scalar() + 2.5 * zero.output.scalar(), 1e-12);

  double prev = zero.total.scalar();
  for (double l : {0.01, 0.1, 1.0, 10.0}) {
    cfg.lambda_param = l;
    cfg.lambda_output = l;
    const double j = total_objective(tape, w.model, batch, w.hierarchy, cfg).total.scalar();
    EXPECT_GE(j, prev);
    prev = j;
  }
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {4, 5, 6}) {
    auto w = tiny_world(seed);
    auto batch = batch_of(w);
    TrainConfig cfg;
    cfg.lambda_param = 0.5;
    cfg.lambda_output = 1.0;
    auto f = [&](ad::Tape& tape) {
      return total_objective(tape, w.model, batch, w.hierarchy, cfg).total;
    };
    auto params = w.model.parameters();
    const auto r = ad::grad_check(
        f, params, {.max_coordinates_per_parameter = 10, .seed = seed, .magnitude_floor = 1e-4});
    EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_parameter << " seed " << seed;
  }
}

TEST(Targets, MultiHotRows) {
  auto w = tiny_world(1);
  auto batch = batch_of(w);
  const Tensor y = label_targets(batch, 6);
  Tensor expected = Tensor::Zero(2, 6);
  expected(0, 0) = expected(0, 2) = 1;
  expected(1, 0) = expected(1, 1) = expected(1, 5) = 1;
  EXPECT_EQ(y, expected);
}

TEST(TopK, Examples) {
  const std::vector<double> p{0.1, 0.9, 0.5};
  EXPECT_EQ(top_k_labels(p, 2), (std::vector<LabelId>{1, 2}));
  const std::vector<double> flat(5, 0.3);
  EXPECT_EQ(top_k_labels(flat, 3), (std::vector<LabelId>{0, 1, 2}));
  EXPECT_EQ(top_k_labels(p, 8), (std::vector<LabelId>{1, 2, 0}));
}

TEST(TopK, InvariantUnderIncreasingTransforms) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(12), q(12);
    for (auto& x : p) x = std::round(rng.uniform01() * 20) / 20;  // forces ties
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = std::exp(3 * p[i]) - 4;
    EXPECT_EQ(top_k_labels(p, 5), top_k_labels(q, 5));
  }
}

TEST(Analysis, InversionRateAndEdgeDistance) {
  auto h = dag();
  // 5 edges per document.
  std::vector<std::vector<double>> preds{{0.9, 0.1, 0.95, 0.1, 0.05, 0.5},
                                         {0.5, 0.5, 0.4, 0.4, 0.4, 0.4}};
  EXPECT_DOUBLE_EQ(inversion_rate(preds, h), 2.0 / 10.0);
  PredictionHead head;
  head.weights = ad::Parameter("w", Tensor::Zero(2, 6));
  head.bias = ad::Parameter("b", Tensor::Zero(1, 6));
  head.weights.value(0, 2) = 3;  // a1 vs a
  head.weights.value(1, 4) = 4;  // b1 vs b
  EXPECT_DOUBLE_EQ(mean_edge_weight_distance(head, h), (3.0 + 4.0) / 5.0);
}

TEST(Model, SaveLoadPreservesPredictions) {
  auto w = tiny_world(8);
  match::testing::TempDir dir;
  w.model.save(dir / "model.ckpt", {{"run.note", "x"}});
  Model back = Model::load(dir / "model.ckpt");
  EXPECT_EQ(predict(back, w.docs[1]), predict(w.model, w.docs[1]));
}

Corpus planted_corpus(std::size_t docs, std::uint64_t seed, LabelHierarchy* hierarchy) {
  auto data = generate_synthetic(
      {.branching = {3, 2}, .num_documents = docs, .word_noise = 0.0}, seed);
  auto vocab = build_vocabulary(data.corpus, 1, &data.hierarchy);
  *hierarchy = data.hierarchy;
  return resolve(data.corpus, vocab, &data.hierarchy);
}

TEST(Training, PlantedCorpusIsLearned) {
  LabelHierarchy h;
  Corpus corpus = planted_corpus(200, 3, &h);
  std::vector<std::size_t> train(corpus.documents.size());
  std::iota(train.begin(), train.end(), 0);
  encoder::EncoderConfig enc;
  enc.dim = 16;
  enc.heads = 2;
  enc.layers = 1;
  enc.cls_tokens = 2;
  enc.max_length = 32;
  TrainConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 16;
  cfg.epochs = 20;
  cfg.patience = 0;
  cfg.seed = 1;
  auto result = train_classifier(corpus, train, {}, h, enc, cfg, nullptr);
  EXPECT_LE(result.history.size(), 20u);
  const auto report = evaluate_model(result.model, corpus, train);
  EXPECT_GE(report.p1, 0.95);
}

TEST(Training, DeterministicGivenSeed) {
  LabelHierarchy h;
  Corpus corpus = planted_corpus(60, 4, &h);
  std::vector<std::size_t> train(40), val(20);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), 40);
  encoder::EncoderConfig enc;
  enc.dim = 8;
  enc.layers = 1;
  enc.cls_tokens = 2;
  enc.max_length = 24;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.seed = 9;
  auto a = train_classifier(corpus, train, val, h, enc, cfg, nullptr);
  auto b = train_classifier(corpus, train, val, h, enc, cfg, nullptr);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].validation, b.history[i].validation);
  }
  EXPECT_EQ(a.model.head.weights.value, b.model.head.weights.value);
}

TEST(Training, EarlyStoppingKeepsBestEpoch) {
  LabelHierarchy h;
  Corpus corpus = planted_corpus(60, 5, &h);
  std::vector<std::size_t> train(40), val(20);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), 40);
  encoder::EncoderConfig enc;
  enc.dim = 8;
  enc.layers = 1;
  enc.cls_tokens = 2;
  enc.max_length = 24;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 12;
  cfg.patience = 2;
  cfg.seed = 2;
  auto r = train_classifier(corpus, train, val, h, enc, cfg, nullptr);
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& e : r.history) {
    ASSERT_TRUE(e.has_validation);
    if (e.validation.ndcg3 > best) {
      best = e.validation.ndcg3;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_LE(r.history.size(), best_epoch + cfg.patience);
  EXPECT_EQ(evaluate_model(r.model, corpus, val).ndcg3, best);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda_param = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.clamp = 0.6;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
